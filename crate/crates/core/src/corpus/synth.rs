//! Templated two-party scenes for desk-scale experiments.
//!
//! Each scene opens with the two speakers greeting each other by name.
//! Later utterances refer to the speakers and to one or two third parties.
//! Pronouns (`I`, `you`, `he`, `she`) are only used for a character who has
//! already been named in the scene, and `he`/`she` only for a third party
//! whose gender is unique in the scene, so every pronoun is resolvable by
//! looking at the other mentions of the scene.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Mention, SceneDocument, Split, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub scenes: usize,
    pub characters: usize,
    pub utterances_per_scene: usize,
    /// Probability of using a pronoun when one is admissible.
    pub pronoun_ratio: f64,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub scenes_per_episode: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            scenes: 20,
            characters: 5,
            utterances_per_scene: 8,
            pronoun_ratio: 0.5,
            dev_fraction: 0.15,
            test_fraction: 0.15,
            scenes_per_episode: 5,
        }
    }
}

const NAMES: [&str; 16] = [
    "Alice", "Bob", "Carol", "Dave", "Erin", "Frank", "Grace", "Henry", "Iris", "Jack", "Kate",
    "Liam", "Mona", "Nate", "Olga", "Paul",
];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Gender {
    Female,
    Male,
}

struct Character {
    name: String,
    gender: Gender,
}

fn cast(n: usize) -> Vec<Character> {
    (0..n)
        .map(|i| Character {
            name: NAMES
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("Person{i}")),
            gender: if i % 2 == 0 { Gender::Female } else { Gender::Male },
        })
        .collect()
}

// `{}` marks the mention slot(s).
const SINGLE: [&[&str]; 6] = [
    &["{}", "went", "to", "the", "cafe", "."],
    &["look", ",", "{}", "is", "here", "."],
    &["what", "about", "{}", "?"],
    &["{}", "bought", "coffee", "."],
    &["honestly", ",", "{}", "was", "late", "."],
    &["so", "{}", "called", "yesterday", "."],
];
const DOUBLE: [&[&str]; 3] = [
    &["{}", "told", "{}", "about", "the", "party", "."],
    &["{}", "met", "{}", "downtown", "."],
    &["{}", "owes", "{}", "money", "."],
];

struct SceneBuilder<'a> {
    chars: &'a [Character],
    utterances: Vec<Utterance>,
    mentions: Vec<Mention>,
    named: Vec<bool>,
}

impl SceneBuilder<'_> {
    fn push(&mut self, speaker: usize, template: &[&str], referents: &[(usize, String)]) {
        let u = self.utterances.len();
        let mut tokens = Vec::new();
        let mut slots = referents.iter();
        for &tok in template {
            if tok == "{}" {
                let (who, form) = slots.next().expect("template slot without referent");
                let i = tokens.len();
                tokens.push(form.clone());
                let label = self.chars[*who].name.clone();
                self.mentions.push(Mention {
                    mention_index: 0,
                    utterance_index: u,
                    sentence_index: 0,
                    token_start: i,
                    token_end: i,
                    speaker_id: self.chars[speaker].name.clone(),
                    gold_character: Some(label.clone()),
                    labels: vec![label],
                    is_singular: true,
                });
                if form == &self.chars[*who].name {
                    self.named[*who] = true;
                }
            } else {
                tokens.push(tok.to_string());
            }
        }
        self.utterances.push(Utterance {
            speaker_ids: vec![self.chars[speaker].name.clone()],
            sentences: vec![tokens],
            utterance_index: u,
        });
    }
}

fn scene(
    spec: &SynthSpec,
    chars: &[Character],
    rng: &mut ChaCha8Rng,
    scene_id: String,
    episode_id: String,
) -> Result<SceneDocument> {
    let mut order: Vec<usize> = (0..chars.len()).collect();
    order.shuffle(rng);
    let (a, b) = (order[0], order[1]);
    let n_topics = match chars.len() - 2 {
        0 => 0,
        1 => 1,
        _ => rng.random_range(1..=2),
    };
    let topics: Vec<usize> = order[2..2 + n_topics].to_vec();
    let in_scene: Vec<usize> = order[..2 + n_topics].to_vec();
    let unique_gender = |c: usize| {
        in_scene
            .iter()
            .filter(|&&o| chars[o].gender == chars[c].gender)
            .count()
            == 1
    };

    let mut sb = SceneBuilder {
        chars,
        utterances: Vec::new(),
        mentions: Vec::new(),
        named: vec![false; chars.len()],
    };
    sb.push(a, &["hi", "{}", "!"], &[(b, chars[b].name.clone())]);
    if spec.utterances_per_scene > 1 {
        sb.push(b, &["hey", "{}", "."], &[(a, chars[a].name.clone())]);
    }
    for u in 2..spec.utterances_per_scene {
        let (speaker, addressee) = if u % 2 == 0 { (a, b) } else { (b, a) };
        let mut pool = vec![speaker, addressee];
        pool.extend(&topics);
        pool.extend(&topics);
        let first = *pool.choose(rng).expect("nonempty pool");
        let referents: Vec<usize> = if rng.random_bool(0.3) {
            let second = *pool
                .iter()
                .filter(|&&p| p != first)
                .collect::<Vec<_>>()
                .choose(rng)
                .expect("at least two characters in scene");
            vec![first, *second]
        } else {
            vec![first]
        };
        let forms: Vec<(usize, String)> = referents
            .iter()
            .map(|&who| {
                let pronoun = if !sb.named[who] {
                    None
                } else if who == speaker {
                    Some("I")
                } else if who == addressee {
                    Some("you")
                } else if unique_gender(who) {
                    Some(match chars[who].gender {
                        Gender::Female => "she",
                        Gender::Male => "he",
                    })
                } else {
                    None
                };
                let use_pronoun = pronoun.is_some() && rng.random_bool(spec.pronoun_ratio);
                let form = match pronoun {
                    Some(p) if use_pronoun => p.to_string(),
                    _ => chars[who].name.clone(),
                };
                (who, form)
            })
            .collect();
        let template: &[&str] = if forms.len() == 2 {
            DOUBLE.choose(rng).expect("templates")
        } else {
            SINGLE.choose(rng).expect("templates")
        };
        sb.push(speaker, template, &forms);
    }
    SceneDocument::new(scene_id, Some(episode_id), sb.utterances, sb.mentions)
}

/// Deterministic synthetic corpus; split sizes follow the spec fractions.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<Corpus> {
    if spec.scenes == 0 || spec.utterances_per_scene == 0 || spec.scenes_per_episode == 0 {
        return Err(Error::InvalidArgument(
            "scenes, utterances_per_scene and scenes_per_episode must be positive".into(),
        ));
    }
    if spec.characters < 2 {
        return Err(Error::InvalidArgument(
            "at least two characters are needed for a dialogue".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.pronoun_ratio)
        || spec.dev_fraction < 0.0
        || spec.test_fraction < 0.0
        || spec.dev_fraction + spec.test_fraction >= 1.0
    {
        return Err(Error::InvalidArgument(
            "pronoun_ratio must lie in [0, 1] and split fractions must leave a training split"
                .into(),
        ));
    }
    let chars = cast(spec.characters);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_dev = (spec.scenes as f64 * spec.dev_fraction).round() as usize;
    let n_test = (spec.scenes as f64 * spec.test_fraction).round() as usize;
    let n_train = spec.scenes.saturating_sub(n_dev + n_test).max(1);

    let mut corpus = Corpus::new();
    for s in 0..spec.scenes {
        let episode = s / spec.scenes_per_episode;
        let episode_id = format!("synth_e{:02}", episode + 1);
        let scene_id = format!("{episode_id}_c{:02}", s % spec.scenes_per_episode + 1);
        let doc = scene(spec, &chars, &mut rng, scene_id, episode_id)?;
        let split = if s < n_train {
            Split::Train
        } else if s < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
        corpus.entry(split).or_default().push(doc);
    }
    for split in Split::ALL {
        corpus.entry(split).or_default();
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{derive_gold_clusters, CanonicalFile};

    const PRONOUNS: [&str; 4] = ["I", "you", "he", "she"];

    #[test]
    fn fixed_seed_is_byte_identical() {
        let spec = SynthSpec::default();
        let dump = |c: &Corpus| {
            c.values()
                .map(|docs| serde_json::to_string(&CanonicalFile::from_documents(docs)).unwrap())
                .collect::<Vec<_>>()
        };
        let a = generate_synthetic_corpus(&spec, 7).unwrap();
        let b = generate_synthetic_corpus(&spec, 7).unwrap();
        assert_eq!(dump(&a), dump(&b));
        let c = generate_synthetic_corpus(&spec, 8).unwrap();
        assert_ne!(dump(&a), dump(&c));
    }

    #[test]
    fn split_sizes() {
        let corpus = generate_synthetic_corpus(&SynthSpec::default(), 1).unwrap();
        assert_eq!(corpus[&Split::Train].len(), 14);
        assert_eq!(corpus[&Split::Dev].len(), 3);
        assert_eq!(corpus[&Split::Test].len(), 3);
    }

    #[test]
    fn zero_pronoun_ratio_yields_only_names() {
        let spec = SynthSpec {
            pronoun_ratio: 0.0,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec, 3).unwrap();
        for doc in corpus.values().flatten() {
            for m in &doc.mentions {
                assert_eq!(Some(doc.mention_text(m.mention_index)), m.gold_character);
            }
        }
    }

    #[test]
    fn every_pronoun_corefers_with_a_named_mention() {
        let corpus = generate_synthetic_corpus(&SynthSpec::default(), 7).unwrap();
        let mut pronouns = 0;
        for doc in corpus.values().flatten() {
            let clusters = derive_gold_clusters(doc).unwrap();
            for cluster in clusters.clusters() {
                let texts: Vec<String> = cluster.iter().map(|&m| doc.mention_text(m)).collect();
                let has_pronoun = texts.iter().any(|t| PRONOUNS.contains(&t.as_str()));
                let has_name = texts.iter().any(|t| !PRONOUNS.contains(&t.as_str()));
                pronouns += texts.iter().filter(|t| PRONOUNS.contains(&t.as_str())).count();
                assert!(!has_pronoun || has_name, "{}: {texts:?}", doc.scene_id);
            }
            // the earliest mention of every character is its name
            for cluster in clusters.clusters() {
                assert!(!PRONOUNS.contains(&doc.mention_text(cluster[0]).as_str()));
            }
        }
        assert!(pronouns > 20, "generator produced only {pronouns} pronouns");
    }

    #[test]
    fn third_person_pronouns_are_gender_unique() {
        let corpus = generate_synthetic_corpus(&SynthSpec::default(), 11).unwrap();
        let chars = cast(5);
        for doc in corpus.values().flatten() {
            let present: Vec<&str> = doc
                .mentions
                .iter()
                .filter_map(|m| m.gold_character.as_deref())
                .collect();
            for m in &doc.mentions {
                let text = doc.mention_text(m.mention_index);
                if text == "he" || text == "she" {
                    let g = chars
                        .iter()
                        .find(|c| Some(c.name.as_str()) == m.gold_character.as_deref())
                        .unwrap()
                        .gender;
                    let same: std::collections::BTreeSet<&str> = present
                        .iter()
                        .copied()
                        .filter(|p| chars.iter().any(|c| c.name == *p && c.gender == g))
                        .collect();
                    assert_eq!(same.len(), 1, "{}", doc.scene_id);
                }
            }
        }
    }

    #[test]
    fn invalid_counts_rejected() {
        for spec in [
            SynthSpec { scenes: 0, ..SynthSpec::default() },
            SynthSpec { characters: 1, ..SynthSpec::default() },
            SynthSpec { utterances_per_scene: 0, ..SynthSpec::default() },
        ] {
            assert!(generate_synthetic_corpus(&spec, 0).is_err());
        }
    }
}
