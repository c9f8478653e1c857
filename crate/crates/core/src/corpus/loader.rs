//! Corpus file readers.
//!
//! Two layouts are accepted and detected from top-level keys:
//!
//! * canonical: `{"documents": [{"scene_id", "utterances": [{"speakers",
//!   "sentences", "mentions": [{"sentence", "start", "end", "labels"}]}]}]}`
//!   with inclusive `end`;
//! * the released character-identification layout: seasons/episodes/scenes
//!   with per-sentence `character_entities` of the form
//!   `[begin, end, label, ...]` where `end` is exclusive.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Corpus, Mention, SceneDocument, Split, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalFile {
    pub documents: Vec<CanonicalDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalDocument {
    pub scene_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_id: Option<String>,
    pub utterances: Vec<CanonicalUtterance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalUtterance {
    pub speakers: Vec<String>,
    pub sentences: Vec<Vec<String>>,
    #[serde(default)]
    pub mentions: Vec<CanonicalMention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalMention {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub labels: Vec<String>,
}

impl CanonicalFile {
    pub fn from_documents(docs: &[SceneDocument]) -> Self {
        let documents = docs
            .iter()
            .map(|doc| {
                let mut utterances: Vec<CanonicalUtterance> = doc
                    .utterances
                    .iter()
                    .map(|u| CanonicalUtterance {
                        speakers: u.speaker_ids.clone(),
                        sentences: u.sentences.clone(),
                        mentions: Vec::new(),
                    })
                    .collect();
                for m in &doc.mentions {
                    utterances[m.utterance_index].mentions.push(CanonicalMention {
                        sentence: m.sentence_index,
                        start: m.token_start,
                        end: m.token_end,
                        labels: m.labels.clone(),
                    });
                }
                CanonicalDocument {
                    scene_id: doc.scene_id.clone(),
                    episode_id: doc.episode_id.clone(),
                    utterances,
                }
            })
            .collect();
        CanonicalFile { documents }
    }
}

struct RawMention {
    utterance: usize,
    sentence: usize,
    start: usize,
    end: usize,
    labels: Vec<String>,
}

fn build_document(
    scene_id: String,
    episode_id: Option<String>,
    utterances: Vec<Utterance>,
    raw: Vec<RawMention>,
    singular_only: bool,
) -> Result<SceneDocument> {
    let mut mentions = Vec::with_capacity(raw.len());
    for r in raw {
        if r.labels.is_empty() {
            return Err(Error::Validation {
                scene: scene_id,
                message: format!(
                    "mention at utterance {} sentence {} [{}, {}] has no label",
                    r.utterance, r.sentence, r.start, r.end
                ),
            });
        }
        let is_singular = r.labels.len() == 1;
        if singular_only && !is_singular {
            continue;
        }
        let speaker_id = utterances
            .get(r.utterance)
            .and_then(|u| u.speaker_ids.first())
            .cloned()
            .unwrap_or_default();
        mentions.push(Mention {
            mention_index: 0,
            utterance_index: r.utterance,
            sentence_index: r.sentence,
            token_start: r.start,
            token_end: r.end,
            speaker_id,
            gold_character: Some(r.labels[0].clone()),
            labels: r.labels,
            is_singular,
        });
    }
    SceneDocument::new(scene_id, episode_id, utterances, mentions)
}

fn parse_canonical(file: CanonicalFile, singular_only: bool) -> Result<Vec<SceneDocument>> {
    file.documents
        .into_iter()
        .map(|d| {
            let mut raw = Vec::new();
            let utterances = d
                .utterances
                .into_iter()
                .enumerate()
                .map(|(u, cu)| {
                    raw.extend(cu.mentions.into_iter().map(|m| RawMention {
                        utterance: u,
                        sentence: m.sentence,
                        start: m.start,
                        end: m.end,
                        labels: m.labels,
                    }));
                    Utterance {
                        speaker_ids: cu.speakers,
                        sentences: cu.sentences,
                        utterance_index: u,
                    }
                })
                .collect();
            build_document(d.scene_id, d.episode_id, utterances, raw, singular_only)
        })
        .collect()
}

/// Placeholder for released utterances that list no speaker.
const UNKNOWN_SPEAKER: &str = "#UNKNOWN#";

struct ReleasedEpisode {
    episode_id: String,
    scenes: Vec<SceneDocument>,
}

fn parse_released(
    value: &Value,
    file: &str,
    singular_only: bool,
) -> Result<Vec<ReleasedEpisode>> {
    let perr = |record: &str, message: &str| Error::Parse {
        file: file.to_string(),
        record: record.to_string(),
        message: message.to_string(),
    };
    // Accept a season object, an array of seasons, or an array of episodes.
    let mut episodes: Vec<&Value> = Vec::new();
    match value {
        Value::Array(items) => {
            for item in items {
                collect_episodes(item, &mut episodes).map_err(|m| perr("<root>", m))?;
            }
        }
        other => collect_episodes(other, &mut episodes).map_err(|m| perr("<root>", m))?,
    }

    let mut out = Vec::new();
    for (e_idx, ep) in episodes.into_iter().enumerate() {
        let episode_id = ep
            .get("episode_id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("episode_{e_idx}"));
        let scenes = ep
            .get("scenes")
            .and_then(Value::as_array)
            .ok_or_else(|| perr(&episode_id, "missing `scenes` array"))?;
        let mut docs = Vec::with_capacity(scenes.len());
        for (s_idx, scene) in scenes.iter().enumerate() {
            let scene_id = scene
                .get("scene_id")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("{episode_id}_c{s_idx:02}"));
            docs.push(parse_released_scene(scene, &scene_id, &episode_id, file, singular_only)?);
        }
        out.push(ReleasedEpisode {
            episode_id,
            scenes: docs,
        });
    }
    Ok(out)
}

fn parse_released_scene(
    scene: &Value,
    scene_id: &str,
    episode_id: &str,
    file: &str,
    singular_only: bool,
) -> Result<SceneDocument> {
    let perr = |record: String, message: &str| Error::Parse {
        file: file.to_string(),
        record,
        message: message.to_string(),
    };
    let utts = scene
        .get("utterances")
        .and_then(Value::as_array)
        .ok_or_else(|| perr(scene_id.to_string(), "missing `utterances` array"))?;
    let mut utterances = Vec::with_capacity(utts.len());
    let mut raw = Vec::new();
    for (u, utt) in utts.iter().enumerate() {
        let record = utt
            .get("utterance_id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("{scene_id}/u{u}"));
        let mut speakers: Vec<String> = match utt.get("speakers") {
            Some(Value::Array(a)) => a
                .iter()
                .map(|s| {
                    s.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| perr(record.clone(), "speaker is not a string"))
                })
                .collect::<Result<_>>()?,
            Some(Value::String(s)) => vec![s.clone()],
            None | Some(Value::Null) => Vec::new(),
            Some(_) => return Err(perr(record, "`speakers` must be an array")),
        };
        if speakers.is_empty() {
            speakers.push(UNKNOWN_SPEAKER.to_string());
        }
        let sentences: Vec<Vec<String>> = match utt.get("tokens") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| perr(record.clone(), &format!("bad `tokens`: {e}")))?,
            None => Vec::new(),
        };
        if let Some(ents) = utt.get("character_entities") {
            let ents = ents
                .as_array()
                .ok_or_else(|| perr(record.clone(), "`character_entities` must be an array"))?;
            for (s, sent_ents) in ents.iter().enumerate() {
                let sent_ents = sent_ents
                    .as_array()
                    .ok_or_else(|| perr(record.clone(), "sentence entities must be an array"))?;
                for ent in sent_ents {
                    raw.push(parse_released_entity(ent, u, s, &record, file)?);
                }
            }
        }
        utterances.push(Utterance {
            speaker_ids: speakers,
            sentences,
            utterance_index: u,
        });
    }
    build_document(
        scene_id.to_string(),
        Some(episode_id.to_string()),
        utterances,
        raw,
        singular_only,
    )
}

fn parse_released_entity(
    ent: &Value,
    utterance: usize,
    sentence: usize,
    record: &str,
    file: &str,
) -> Result<RawMention> {
    let perr = |message: String| Error::Parse {
        file: file.to_string(),
        record: record.to_string(),
        message,
    };
    let items = ent
        .as_array()
        .ok_or_else(|| perr(format!("entity {ent} is not an array")))?;
    if items.len() < 3 {
        return Err(perr(format!("entity {ent} needs [begin, end, label, ...]")));
    }
    let begin = items[0]
        .as_u64()
        .ok_or_else(|| perr(format!("entity {ent} has a non-integer begin")))? as usize;
    let end_exclusive = items[1]
        .as_u64()
        .ok_or_else(|| perr(format!("entity {ent} has a non-integer end")))? as usize;
    if end_exclusive <= begin {
        return Err(perr(format!("entity {ent} has an empty span")));
    }
    let labels = items[2..]
        .iter()
        .map(|l| {
            l.as_str()
                .map(str::to_string)
                .ok_or_else(|| perr(format!("entity {ent} has a non-string label")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RawMention {
        utterance,
        sentence,
        start: begin,
        end: end_exclusive - 1,
        labels,
    })
}

fn collect_episodes<'a>(v: &'a Value, out: &mut Vec<&'a Value>) -> Result<(), &'static str> {
    if let Some(eps) = v.get("episodes") {
        out.extend(eps.as_array().ok_or("`episodes` must be an array")?);
    } else if v.get("scenes").is_some() {
        out.push(v);
    } else {
        return Err("expected `episodes` or `scenes`");
    }
    Ok(())
}

/// Episode-number split used when a released season file carries no split
/// marker: episodes 1-19 train, 20-21 dev, the rest test.
fn split_for_episode(episode_id: &str) -> Option<Split> {
    let num: usize = episode_id
        .rsplit(['e', 'E'])
        .next()?
        .trim_start_matches('0')
        .parse()
        .ok()?;
    Some(match num {
        0..=19 => Split::Train,
        20 | 21 => Split::Dev,
        _ => Split::Test,
    })
}

fn split_from_file_name(path: &Path) -> Option<Split> {
    let stem = path.file_stem()?.to_str()?;
    stem.split(['-', '_', '.'])
        .rev()
        .find_map(|part| part.parse::<Split>().ok())
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        record: format!("line {}", e.line()),
        message: e.to_string(),
    })
}

fn is_canonical(value: &Value) -> bool {
    value.get("documents").is_some()
}

/// Loads one file holding a single split (either layout).
pub fn load_split_file(path: &Path, singular_only: bool) -> Result<Vec<SceneDocument>> {
    let value = read_json(path)?;
    parse_value(value, path, singular_only)
}

fn parse_value(value: Value, path: &Path, singular_only: bool) -> Result<Vec<SceneDocument>> {
    let file = path.display().to_string();
    if is_canonical(&value) {
        let parsed: CanonicalFile = serde_json::from_value(value).map_err(|e| Error::Parse {
            file: file.clone(),
            record: "documents".into(),
            message: e.to_string(),
        })?;
        parse_canonical(parsed, singular_only)
    } else {
        Ok(parse_released(&value, &file, singular_only)?
            .into_iter()
            .flat_map(|e| e.scenes)
            .collect())
    }
}

/// Loads a corpus from a directory of split files or a single file.
///
/// Files whose name carries a split marker (`train`, `trn`, `dev`, `tst`,
/// ...) populate that split. Released season files without a marker are
/// split by episode number. Anything else is an unknown split.
pub fn load_corpus(path: &Path, singular_only: bool) -> Result<Corpus> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };

    let mut corpus = Corpus::new();
    for file in files {
        let value = read_json(&file)?;
        if let Some(split) = split_from_file_name(&file) {
            let docs = parse_value(value, &file, singular_only)?;
            corpus.entry(split).or_default().extend(docs);
        } else if is_canonical(&value) {
            let stem = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            return Err(Error::UnknownSplit(stem));
        } else {
            let name = file.display().to_string();
            for ep in parse_released(&value, &name, singular_only)? {
                let split = split_for_episode(&ep.episode_id)
                    .ok_or_else(|| Error::UnknownSplit(ep.episode_id.clone()))?;
                corpus.entry(split).or_default().extend(ep.scenes);
            }
        }
    }
    Ok(corpus)
}

/// Writes each split as `<dir>/<split>.json` in the canonical layout.
pub fn write_canonical(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (split, docs) in corpus {
        let path = dir.join(format!("{split}.json"));
        let text = serde_json::to_string_pretty(&CanonicalFile::from_documents(docs))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
