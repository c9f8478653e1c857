//! Scene-structured dialogue corpora: domain types, loading, gold clusters,
//! label inventories, statistics and a synthetic generator.

mod inventory;
mod loader;
mod stats;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use inventory::{build_inventories, CharacterInventory, SpeakerInventory, OTHER_LABEL, UNK_SPEAKER};
pub use loader::{load_corpus, load_split_file, write_canonical, CanonicalFile};
pub use stats::{corpus_stats, CorpusStats, SplitStats};
pub use synth::{generate_synthetic_corpus, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" | "trn" | "training" => Ok(Split::Train),
            "dev" | "development" | "valid" | "validation" => Ok(Split::Dev),
            "test" | "tst" => Ok(Split::Test),
            other => Err(Error::UnknownSplit(other.to_string())),
        }
    }
}

/// Documents grouped by split. Iteration order is train, dev, test.
pub type Corpus = BTreeMap<Split, Vec<SceneDocument>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker_ids: Vec<String>,
    pub sentences: Vec<Vec<String>>,
    pub utterance_index: usize,
}

impl Utterance {
    pub fn primary_speaker(&self) -> &str {
        &self.speaker_ids[0]
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub mention_index: usize,
    pub utterance_index: usize,
    pub sentence_index: usize,
    /// Inclusive token offsets within the sentence.
    pub token_start: usize,
    pub token_end: usize,
    pub speaker_id: String,
    /// For plural mentions this is the first annotated label; all labels are
    /// kept in `labels`.
    pub gold_character: Option<String>,
    pub labels: Vec<String>,
    pub is_singular: bool,
}

impl Mention {
    fn order_key(&self) -> (usize, usize, usize, usize) {
        (
            self.utterance_index,
            self.sentence_index,
            self.token_start,
            self.token_end,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub scene_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_id: Option<String>,
    pub utterances: Vec<Utterance>,
    pub mentions: Vec<Mention>,
}

impl SceneDocument {
    /// Builds a document, sorting mentions into document order and
    /// validating offsets.
    pub fn new(
        scene_id: impl Into<String>,
        episode_id: Option<String>,
        utterances: Vec<Utterance>,
        mut mentions: Vec<Mention>,
    ) -> Result<Self> {
        mentions.sort_by_key(Mention::order_key);
        for (i, m) in mentions.iter_mut().enumerate() {
            m.mention_index = i;
        }
        let doc = SceneDocument {
            scene_id: scene_id.into(),
            episode_id,
            utterances,
            mentions,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |message: String| Error::Validation {
            scene: self.scene_id.clone(),
            message,
        };
        for (u, utt) in self.utterances.iter().enumerate() {
            if utt.speaker_ids.is_empty() {
                return Err(err(format!("utterance {u} has no speaker")));
            }
        }
        let mut prev = None;
        for (i, m) in self.mentions.iter().enumerate() {
            if m.mention_index != i {
                return Err(err(format!("mention {i} carries index {}", m.mention_index)));
            }
            let key = m.order_key();
            if prev.is_some_and(|p| p > key) {
                return Err(err(format!("mention {i} is out of document order")));
            }
            prev = Some(key);
            if m.token_start > m.token_end {
                return Err(err(format!(
                    "mention {i} has start {} > end {}",
                    m.token_start, m.token_end
                )));
            }
            let utt = self.utterances.get(m.utterance_index).ok_or_else(|| {
                err(format!("mention {i} references missing utterance {}", m.utterance_index))
            })?;
            let sent = utt.sentences.get(m.sentence_index).ok_or_else(|| {
                err(format!(
                    "mention {i} references missing sentence {} of utterance {}",
                    m.sentence_index, m.utterance_index
                ))
            })?;
            if m.token_end >= sent.len() {
                return Err(err(format!(
                    "mention {i} span [{}, {}] lies outside a sentence of {} tokens",
                    m.token_start,
                    m.token_end,
                    sent.len()
                )));
            }
        }
        Ok(())
    }

    pub fn num_mentions(&self) -> usize {
        self.mentions.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.utterances.iter().map(Utterance::token_count).sum()
    }

    /// Offset of every (utterance, sentence) into the flattened token stream.
    pub fn sentence_offsets(&self) -> Vec<Vec<usize>> {
        let mut offset = 0;
        self.utterances
            .iter()
            .map(|u| {
                u.sentences
                    .iter()
                    .map(|s| {
                        let start = offset;
                        offset += s.len();
                        start
                    })
                    .collect()
            })
            .collect()
    }

    /// Flattened (document-level) token positions of every mention's endpoints.
    pub fn mention_token_positions(&self) -> Vec<(usize, usize)> {
        let offsets = self.sentence_offsets();
        self.mentions
            .iter()
            .map(|m| {
                let base = offsets[m.utterance_index][m.sentence_index];
                (base + m.token_start, base + m.token_end)
            })
            .collect()
    }

    pub fn mention_text(&self, index: usize) -> String {
        let m = &self.mentions[index];
        self.utterances[m.utterance_index].sentences[m.sentence_index]
            [m.token_start..=m.token_end]
            .join(" ")
    }

    /// Drops plural mentions, keeping document order.
    pub fn singular_only(mut self) -> Self {
        self.mentions.retain(|m| m.is_singular);
        for (i, m) in self.mentions.iter_mut().enumerate() {
            m.mention_index = i;
        }
        self
    }

    pub fn gold_labels(&self) -> Result<Vec<&str>> {
        self.mentions
            .iter()
            .map(|m| {
                m.gold_character.as_deref().ok_or_else(|| Error::MissingLabel {
                    scene: self.scene_id.clone(),
                    mention: m.mention_index,
                })
            })
            .collect()
    }
}

/// A partition of the mention indices `0..num_mentions` of one document.
///
/// Clusters are kept in canonical form: members ascending, clusters ordered
/// by their smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    num_mentions: usize,
    clusters: Vec<Vec<usize>>,
}

impl Clustering {
    pub fn new(num_mentions: usize, clusters: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; num_mentions];
        for cluster in &clusters {
            if cluster.is_empty() {
                return Err(Error::InvalidArgument("empty cluster".into()));
            }
            for &m in cluster {
                if m >= num_mentions {
                    return Err(Error::InvalidArgument(format!(
                        "mention {m} outside 0..{num_mentions}"
                    )));
                }
                if std::mem::replace(&mut seen[m], true) {
                    return Err(Error::InvalidArgument(format!(
                        "mention {m} appears in two clusters"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "mention {missing} is not covered by any cluster"
            )));
        }
        Ok(Self::canonical(num_mentions, clusters))
    }

    /// Groups mentions by equal key; the first occurrence of a key opens a cluster.
    pub fn from_keys<K: Ord>(keys: &[K]) -> Self {
        let mut by_key: BTreeMap<&K, usize> = BTreeMap::new();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            let c = *by_key.entry(k).or_insert_with(|| {
                clusters.push(Vec::new());
                clusters.len() - 1
            });
            clusters[c].push(i);
        }
        Self::canonical(keys.len(), clusters)
    }

    pub fn singletons(num_mentions: usize) -> Self {
        Self {
            num_mentions,
            clusters: (0..num_mentions).map(|i| vec![i]).collect(),
        }
    }

    fn canonical(num_mentions: usize, mut clusters: Vec<Vec<usize>>) -> Self {
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.sort_unstable_by_key(|c| c[0]);
        Self {
            num_mentions,
            clusters,
        }
    }

    pub fn num_mentions(&self) -> usize {
        self.num_mentions
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    /// Cluster index of each mention.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_mentions];
        for (c, members) in self.clusters.iter().enumerate() {
            for &m in members {
                out[m] = c;
            }
        }
        out
    }
}

/// Gold clusters: mentions sharing a gold character label corefer.
pub fn derive_gold_clusters(doc: &SceneDocument) -> Result<Clustering> {
    let labels = doc.gold_labels()?;
    Ok(Clustering::from_keys(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn doc_with_labels(labels: &[&str]) -> SceneDocument {
        let tokens: Vec<String> = labels.iter().map(|l| l.to_lowercase()).collect();
        let mentions = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Mention {
                mention_index: i,
                utterance_index: 0,
                sentence_index: 0,
                token_start: i,
                token_end: i,
                speaker_id: "S".into(),
                gold_character: Some(l.to_string()),
                labels: vec![l.to_string()],
                is_singular: true,
            })
            .collect();
        SceneDocument::new(
            "scene",
            None,
            vec![Utterance {
                speaker_ids: vec!["S".into()],
                sentences: vec![tokens],
                utterance_index: 0,
            }],
            mentions,
        )
        .unwrap()
    }

    #[test]
    fn gold_clusters_group_equal_labels() {
        let c = derive_gold_clusters(&doc_with_labels(&["A", "B", "A", "C"])).unwrap();
        assert_eq!(c.clusters(), &[vec![0, 2], vec![1], vec![3]]);
        let c = derive_gold_clusters(&doc_with_labels(&["A"; 5])).unwrap();
        assert_eq!(c.clusters(), &[vec![0, 1, 2, 3, 4]]);
        let c = derive_gold_clusters(&doc_with_labels(&["A", "B", "C", "D"])).unwrap();
        assert_eq!(c, Clustering::singletons(4));
    }

    #[test]
    fn missing_label_is_an_error() {
        let mut doc = doc_with_labels(&["A", "B"]);
        doc.mentions[1].gold_character = None;
        assert!(matches!(
            derive_gold_clusters(&doc),
            Err(Error::MissingLabel { mention: 1, .. })
        ));
    }

    #[test]
    fn clustering_rejects_invalid_partitions() {
        assert!(Clustering::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Clustering::new(3, vec![vec![0, 1]]).is_err());
        assert!(Clustering::new(3, vec![vec![0, 1, 2], vec![]]).is_err());
        let c = Clustering::new(3, vec![vec![2, 0], vec![1]]).unwrap();
        assert_eq!(c.clusters(), &[vec![0, 2], vec![1]]);
    }

    #[test]
    fn mentions_sorted_into_document_order() {
        let mut doc = doc_with_labels(&["A", "B", "C"]);
        let mut mentions = doc.mentions.clone();
        mentions.reverse();
        doc = SceneDocument::new("s", None, doc.utterances, mentions).unwrap();
        let starts: Vec<_> = doc.mentions.iter().map(|m| m.token_start).collect();
        assert_eq!(starts, vec![0, 1, 2]);
        assert_eq!(doc.mentions[2].mention_index, 2);
    }

    #[test]
    fn out_of_range_offsets_rejected() {
        let doc = doc_with_labels(&["A", "B"]);
        let mut mentions = doc.mentions.clone();
        mentions[1].token_end = 7;
        let err = SceneDocument::new("s", None, doc.utterances, mentions).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn split_names() {
        assert_eq!("trn".parse::<Split>().unwrap(), Split::Train);
        assert_eq!("TST".parse::<Split>().unwrap(), Split::Test);
        assert!(matches!("holdout".parse::<Split>(), Err(Error::UnknownSplit(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gold_clusters_reproduce_label_equivalence(labels in proptest::collection::vec(0u8..5, 1..30)) {
                let names: Vec<String> = labels.iter().map(|l| format!("C{l}")).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                let doc = doc_with_labels(&refs);
                let c = derive_gold_clusters(&doc).unwrap();
                let assign = c.assignment();
                for i in 0..labels.len() {
                    for j in 0..labels.len() {
                        prop_assert_eq!(assign[i] == assign[j], labels[i] == labels[j]);
                    }
                }
                // every cluster is label-pure
                for cluster in c.clusters() {
                    prop_assert!(cluster.iter().all(|&m| labels[m] == labels[cluster[0]]));
                }
            }
        }
    }
}
