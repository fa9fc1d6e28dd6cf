//! Word lists for social groups and target concepts.
//!
//! Lexicon files are UTF-8 JSON:
//!
//! ```json
//! {"groups":  [{"name": "female", "words": ["she", "her"]}, ...],
//!  "targets": [{"name": "nurse",  "words": ["nurse"]}, ...]}
//! ```
//!
//! Words are trimmed and lowercased on load. Group word lists must be
//! pairwise disjoint.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-empty, duplicate-free list of lowercase words. Keeps file order.
#[derive(Debug, Clone)]
pub struct WordList {
    words: Vec<String>,
    index: HashSet<String>,
}

impl WordList {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut list = Vec::new();
        let mut index = HashSet::new();
        for raw in words {
            let word = raw.as_ref().trim().to_lowercase();
            if word.is_empty() {
                return Err(Error::EmptyList("word list contains an empty word".into()));
            }
            if !index.insert(word.clone()) {
                return Err(Error::parse_msg(format!("duplicate word {word:?}")));
            }
            list.push(word);
        }
        if list.is_empty() {
            return Err(Error::EmptyList("word list has no words".into()));
        }
        Ok(WordList { words: list, index })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains(word)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl PartialEq for WordList {
    fn eq(&self, other: &Self) -> bool {
        self.words == other.words
    }
}

impl Eq for WordList {}

impl Serialize for WordList {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.words.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WordList {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let words = Vec::<String>::deserialize(deserializer)?;
        WordList::new(words).map_err(serde::de::Error::custom)
    }
}

/// Number of words `perturb_wordlist` removes for a given fraction.
///
/// The product is nudged down by 1e-9 before rounding up so that, e.g.,
/// `0.1 * 30` removes 3 words rather than 4.
pub fn removal_count(len: usize, fraction: f64) -> usize {
    let raw = fraction * len as f64 - 1e-9;
    if raw <= 0.0 {
        0
    } else {
        raw.ceil() as usize
    }
}

/// Removes `⌈fraction·|list|⌉` words chosen uniformly at random.
pub fn perturb_wordlist(list: &WordList, fraction: f64, seed: u64) -> Result<WordList> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "perturbation fraction {fraction} must lie in (0, 1)"
        )));
    }
    let remove = removal_count(list.len(), fraction);
    if remove == 0 {
        return Err(Error::Precondition(format!(
            "fraction {fraction} removes no words from a list of {}",
            list.len()
        )));
    }
    if remove >= list.len() {
        return Err(Error::WouldEmpty {
            remove,
            len: list.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dropped: HashSet<usize> = sample(&mut rng, list.len(), remove).into_iter().collect();
    WordList::new(
        list.words
            .iter()
            .enumerate()
            .filter(|(i, _)| !dropped.contains(i))
            .map(|(_, w)| w),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub words: WordList,
}

/// Ordered social groups with pairwise-disjoint word lists.
#[derive(Debug, Clone)]
pub struct GroupSet {
    groups: Vec<Group>,
    owner: HashMap<String, usize>,
}

impl GroupSet {
    pub fn new(groups: Vec<Group>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::Arity(groups.len()));
        }
        let mut names = HashSet::new();
        let mut owner: HashMap<String, usize> = HashMap::new();
        for (j, group) in groups.iter().enumerate() {
            if !names.insert(group.name.as_str()) {
                return Err(Error::parse_msg(format!("duplicate group name {:?}", group.name)));
            }
            if group.name == "none" {
                return Err(Error::parse_msg("\"none\" is reserved and cannot name a group"));
            }
            for word in group.words.iter() {
                if let Some(&i) = owner.get(word) {
                    return Err(Error::Overlap {
                        word: word.to_string(),
                        first: groups[i].name.clone(),
                        second: group.name.clone(),
                    });
                }
                owner.insert(word.to_string(), j);
            }
        }
        Ok(GroupSet { groups, owner })
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    /// Group whose list contains `word`.
    pub fn group_of(&self, word: &str) -> Option<usize> {
        self.owner.get(word).copied()
    }

    /// Copy with group `j`'s word list replaced.
    pub fn with_list(&self, j: usize, words: WordList) -> Result<GroupSet> {
        let mut groups = self.groups.clone();
        groups[j].words = words;
        GroupSet::new(groups)
    }
}

impl PartialEq for GroupSet {
    fn eq(&self, other: &Self) -> bool {
        self.groups == other.groups
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetConcept {
    pub name: String,
    pub words: WordList,
}

impl TargetConcept {
    pub fn new(name: impl Into<String>, words: WordList) -> Self {
        TargetConcept {
            name: name.into(),
            words,
        }
    }

    /// A concept represented by a single word, named after it.
    pub fn single(word: &str) -> Result<Self> {
        let words = WordList::new([word])?;
        Ok(TargetConcept {
            name: words.words()[0].clone(),
            words,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub groups: GroupSet,
    pub targets: Vec<TargetConcept>,
}

#[derive(Serialize, Deserialize)]
struct LexiconFile {
    groups: Vec<Group>,
    #[serde(default)]
    targets: Vec<TargetConcept>,
}

impl Lexicon {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: LexiconFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        let groups = GroupSet::new(file.groups)?;
        let mut names = HashSet::new();
        for target in &file.targets {
            if !names.insert(target.name.as_str()) {
                return Err(Error::parse_msg(format!("duplicate target name {:?}", target.name)));
            }
        }
        Ok(Lexicon {
            groups,
            targets: file.targets,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = LexiconFile {
            groups: self.groups.groups.clone(),
            targets: self.targets.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn target(&self, name: &str) -> Option<&TargetConcept> {
        self.targets.iter().find(|t| t.name == name)
    }
}
