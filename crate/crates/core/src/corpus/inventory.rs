use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SceneDocument;
use crate::error::{Error, Result};

pub const OTHER_LABEL: &str = "#OTHER#";
pub const UNK_SPEAKER: &str = "#UNK#";

/// Character classes for linking.
///
/// Classes are ordered by descending training frequency (ties by name), with
/// the OTHER class last, so class 0 is always the training majority.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterInventory {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
    train_counts: BTreeMap<String, usize>,
}

impl CharacterInventory {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn other_index(&self) -> usize {
        self.labels.len() - 1
    }

    /// Class of a gold label; unseen or rare characters map to OTHER.
    pub fn index_of(&self, label: &str) -> usize {
        self.index
            .get(label)
            .copied()
            .unwrap_or_else(|| self.other_index())
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn train_count(&self, label: &str) -> usize {
        self.train_counts.get(label).copied().unwrap_or(0)
    }

    /// Gold class index of every mention of a document.
    pub fn gold_classes(&self, doc: &SceneDocument) -> Result<Vec<usize>> {
        Ok(doc
            .gold_labels()?
            .into_iter()
            .map(|l| self.index_of(l))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerInventory {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl SpeakerInventory {
    pub const UNK_INDEX: usize = 0;

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, speaker: &str) -> usize {
        self.index.get(speaker).copied().unwrap_or(Self::UNK_INDEX)
    }

    pub fn contains(&self, speaker: &str) -> bool {
        self.index.contains_key(speaker)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }
}

/// Builds the linking label space and the speaker table index from the
/// training split. Characters with fewer than `min_mentions` training
/// mentions collapse into OTHER.
pub fn build_inventories(
    train_docs: &[SceneDocument],
    min_mentions: usize,
) -> Result<(CharacterInventory, SpeakerInventory)> {
    if train_docs.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut speakers: BTreeMap<String, ()> = BTreeMap::new();
    for doc in train_docs {
        for m in &doc.mentions {
            if let Some(label) = &m.gold_character {
                *counts.entry(label.clone()).or_default() += 1;
            }
        }
        for u in &doc.utterances {
            for s in &u.speaker_ids {
                speakers.insert(s.clone(), ());
            }
        }
    }

    let mut kept: Vec<(&String, usize)> = counts
        .iter()
        .filter(|(label, &c)| c >= min_mentions && label.as_str() != OTHER_LABEL)
        .map(|(l, &c)| (l, c))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut labels: Vec<String> = kept.into_iter().map(|(l, _)| l.clone()).collect();
    labels.push(OTHER_LABEL.to_string());
    let index = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.as_str() != OTHER_LABEL)
        .map(|(i, l)| (l.clone(), i))
        .collect();
    let characters = CharacterInventory {
        labels,
        index,
        train_counts: counts,
    };

    let mut names = vec![UNK_SPEAKER.to_string()];
    names.extend(speakers.into_keys().filter(|s| s != UNK_SPEAKER));
    let index = names
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, n)| (n.clone(), i))
        .collect();
    Ok((characters, SpeakerInventory { names, index }))
}
