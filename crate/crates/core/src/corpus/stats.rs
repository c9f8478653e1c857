use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Corpus, SceneDocument, Split};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub episodes: usize,
    pub scenes: usize,
    pub utterances: usize,
    pub speakers: usize,
    pub mentions: usize,
    pub entities: usize,
}

/// Per-split counts plus a totals row. Totals count distinct episodes,
/// speakers and entities over the union of splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub splits: Vec<(Split, SplitStats)>,
    pub total: SplitStats,
}

#[derive(Default)]
struct Acc {
    episodes: BTreeSet<String>,
    speakers: BTreeSet<String>,
    entities: BTreeSet<String>,
    scenes: usize,
    utterances: usize,
    mentions: usize,
}

impl Acc {
    fn add(&mut self, doc: &SceneDocument) {
        self.episodes.insert(episode_of(doc));
        self.scenes += 1;
        self.utterances += doc.utterances.len();
        for u in &doc.utterances {
            self.speakers.extend(u.speaker_ids.iter().cloned());
        }
        self.mentions += doc.mentions.len();
        for m in &doc.mentions {
            self.entities.extend(m.labels.iter().cloned());
        }
    }

    fn finish(&self) -> SplitStats {
        SplitStats {
            episodes: self.episodes.len(),
            scenes: self.scenes,
            utterances: self.utterances,
            speakers: self.speakers.len(),
            mentions: self.mentions,
            entities: self.entities.len(),
        }
    }
}

/// Explicit episode id, else the scene id minus its trailing `_cNN` part.
fn episode_of(doc: &SceneDocument) -> String {
    if let Some(e) = &doc.episode_id {
        return e.clone();
    }
    match doc.scene_id.rsplit_once('_') {
        Some((head, _)) => head.to_string(),
        None => doc.scene_id.clone(),
    }
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut total = Acc::default();
    let splits = corpus
        .iter()
        .map(|(split, docs)| {
            let mut acc = Acc::default();
            for d in docs {
                acc.add(d);
                total.add(d);
            }
            (*split, acc.finish())
        })
        .collect();
    CorpusStats {
        splits,
        total: total.finish(),
    }
}

impl CorpusStats {
    pub fn split(&self, split: Split) -> Option<&SplitStats> {
        self.splits.iter().find(|(s, _)| *s == split).map(|(_, s)| s)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Dataset | Episodes | Scenes | Utterances | Speakers | Mentions | Entities |\n\
             |---|---:|---:|---:|---:|---:|---:|\n",
        );
        let mut row = |name: &str, s: &SplitStats| {
            let _ = writeln!(
                out,
                "| {name} | {} | {} | {} | {} | {} | {} |",
                s.episodes, s.scenes, s.utterances, s.speakers, s.mentions, s.entities
            );
        };
        for (split, s) in &self.splits {
            row(&split.as_str().to_uppercase(), s);
        }
        row("Total", &self.total);
        out
    }
}
