use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon: {0}")]
    Invalid(String),
    #[error("lexicon file: {0}")]
    Io(#[from] std::io::Error),
    #[error("lexicon file: {0}")]
    Parse(#[from] serde_json::Error),
}

pub const WOMAN: &str = "woman";
pub const MAN: &str = "man";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawLexicon {
    name_groups: BTreeMap<String, Vec<String>>,
    gendered_names: BTreeMap<String, Vec<String>>,
    paired_terms: Vec<(String, String)>,
}

/// Word lists for demographic substitutions.
///
/// `name_groups` maps a race/ethnicity group to first names, `gendered_names`
/// maps `woman`/`man` to first names, and `paired_terms` lists
/// (woman term, man term) pairs such as ("her", "his").
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawLexicon", into = "RawLexicon")]
pub struct FairnessLexicon {
    raw: RawLexicon,
    name_group: HashMap<String, String>,
    name_gender: HashMap<String, &'static str>,
    term_swap: HashMap<String, String>,
}

impl From<FairnessLexicon> for RawLexicon {
    fn from(l: FairnessLexicon) -> Self {
        l.raw
    }
}

impl TryFrom<RawLexicon> for FairnessLexicon {
    type Error = LexiconError;

    fn try_from(raw: RawLexicon) -> Result<Self, LexiconError> {
        let invalid = |m: String| LexiconError::Invalid(m);
        if raw.name_groups.len() < 2 {
            return Err(invalid("at least two name groups are required".into()));
        }
        let mut name_group = HashMap::new();
        for (group, names) in &raw.name_groups {
            if names.is_empty() {
                return Err(invalid(format!("name group `{group}` is empty")));
            }
            for n in names {
                if let Some(prev) = name_group.insert(n.to_lowercase(), group.clone()) {
                    if &prev != group {
                        return Err(invalid(format!("`{n}` is in groups `{prev}` and `{group}`")));
                    }
                }
            }
        }

        let mut name_gender = HashMap::new();
        for key in raw.gendered_names.keys() {
            if key != WOMAN && key != MAN {
                return Err(invalid(format!("unknown gender key `{key}`")));
            }
        }
        for gender in [WOMAN, MAN] {
            let names = raw
                .gendered_names
                .get(gender)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| invalid(format!("no `{gender}` names")))?;
            for n in names {
                if let Some(prev) = name_gender.insert(n.to_lowercase(), gender) {
                    if prev != gender {
                        return Err(invalid(format!("`{n}` is listed under both genders")));
                    }
                }
            }
        }

        let mut term_swap = HashMap::new();
        for (w, m) in &raw.paired_terms {
            let (w, m) = (w.to_lowercase(), m.to_lowercase());
            if w == m {
                return Err(invalid(format!("term `{w}` is paired with itself")));
            }
            for (a, b) in [(&w, &m), (&m, &w)] {
                if term_swap.insert(a.clone(), b.clone()).is_some() {
                    return Err(invalid(format!("term `{a}` appears in more than one pair")));
                }
            }
        }

        Ok(FairnessLexicon {
            raw,
            name_group,
            name_gender,
            term_swap,
        })
    }
}

impl FairnessLexicon {
    pub fn from_json(json: &str) -> Result<Self, LexiconError> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The lexicon bundled with the crate.
    pub fn bundled() -> Self {
        Self::from_json(crate::fixtures::LEXICON_JSON).expect("bundled lexicon is valid")
    }

    pub fn group_of(&self, word: &str) -> Option<&str> {
        self.name_group.get(&word.to_lowercase()).map(String::as_str)
    }

    pub fn gender_of(&self, word: &str) -> Option<&'static str> {
        self.name_gender.get(&word.to_lowercase()).copied()
    }

    pub fn paired_term(&self, word: &str) -> Option<&str> {
        self.term_swap.get(&word.to_lowercase()).map(String::as_str)
    }

    /// Every name not in `group`, in a stable order.
    pub fn names_outside_group(&self, group: &str) -> Vec<&str> {
        self.raw
            .name_groups
            .iter()
            .filter(|(g, _)| g.as_str() != group)
            .flat_map(|(_, names)| names.iter().map(String::as_str))
            .collect()
    }

    pub fn names_of_gender(&self, gender: &str) -> &[String] {
        self.raw
            .gendered_names
            .get(gender)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.raw.name_groups.keys().map(String::as_str)
    }
}
