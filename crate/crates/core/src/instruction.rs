//! Rule-based instruction parser.
//!
//! Turns a garment instruction such as `"belly-length blouse"` into the token
//! group whose attention maps make up the target region. Vocabulary and
//! coverage templates live in a JSON rule table (see `data/rules.json`);
//! the built-in table is used unless another one is loaded.
//!
//! Grammar, matched case-insensitively over whitespace-separated words:
//!
//! * a garment keyword anywhere (`blouse`, `skirt`, ...; a trailing plural
//!   `s` is tolerated),
//! * an optional length anchor written `<anchor>-length` or `<anchor> length`,
//! * an optional start override written `from <anchor>`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::anatomy::{anatomical_rank, is_fleshy_token, is_star_token, ARM_TOKENS};
use crate::error::{Error, Result};

const DEFAULT_RULES: &str = include_str!("../data/rules.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GarmentClass {
    BlouseShirt,
    Dress,
    PantsSkirt,
}

impl fmt::Display for GarmentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GarmentClass::BlouseShirt => "blouse_shirt",
            GarmentClass::Dress => "dress",
            GarmentClass::PantsSkirt => "pants_skirt",
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageTemplate {
    pub keywords: Vec<String>,
    pub start: String,
    pub default_end: String,
    pub include_arms: bool,
    pub include_legs: bool,
    /// Tokens eligible for this garment; the anchors pick a slice of them.
    pub zone: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuleTable {
    pub garments: BTreeMap<GarmentClass, CoverageTemplate>,
    /// Lower-case word to canonical anchor token.
    pub anchors: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Instruction {
    pub raw: String,
    pub garment_class: GarmentClass,
    /// The garment word as written, e.g. `"blouse"`.
    pub garment_noun: String,
    pub length_anchor: Option<String>,
    pub start_anchor: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TokenGroup {
    pub star_tokens: Vec<String>,
    pub fleshy_tokens: Vec<String>,
    pub clothes_tokens: Vec<String>,
    pub start_anchor: String,
    pub end_anchor: String,
    pub include_arms: bool,
    pub include_legs: bool,
}

impl TokenGroup {
    pub fn all_tokens(&self) -> impl Iterator<Item = &str> {
        self.star_tokens
            .iter()
            .chain(&self.fleshy_tokens)
            .chain(&self.clothes_tokens)
            .map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.all_tokens().any(|t| t.eq_ignore_ascii_case(name))
    }
}

impl RuleTable {
    /// The built-in table, parsed once.
    pub fn builtin() -> &'static RuleTable {
        static TABLE: OnceLock<RuleTable> = OnceLock::new();
        TABLE.get_or_init(|| RuleTable::from_json(DEFAULT_RULES).expect("built-in rule table is valid"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: RuleTable = serde_json::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        let valid = |t: &str| is_star_token(t) || is_fleshy_token(t);
        for (class, tpl) in &self.garments {
            for t in tpl.zone.iter().chain([&tpl.start, &tpl.default_end]) {
                if !valid(t) {
                    return Err(Error::Format(format!("{class}: unknown token {t:?} in rule table")));
                }
            }
            if anatomical_rank(&tpl.start).is_none() || anatomical_rank(&tpl.default_end).is_none() {
                return Err(Error::Format(format!("{class}: start and default_end need an anatomical rank")));
            }
        }
        for (word, token) in &self.anchors {
            if !valid(token) || anatomical_rank(token).is_none() {
                return Err(Error::Format(format!("anchor {word:?} maps to unusable token {token:?}")));
            }
        }
        Ok(())
    }

    fn anchor(&self, word: &str) -> Option<&str> {
        if let Some(t) = self.anchors.get(word) {
            return Some(t);
        }
        // "mid-thigh" falls back to its last part.
        word.rsplit('-').next().and_then(|w| self.anchors.get(w)).map(String::as_str)
    }

    fn garment(&self, word: &str) -> Option<GarmentClass> {
        let find = |w: &str| {
            self.garments
                .iter()
                .find(|(_, tpl)| tpl.keywords.iter().any(|k| k == w))
                .map(|(c, _)| *c)
        };
        find(word).or_else(|| word.strip_suffix('s').and_then(find))
    }

    pub fn parse(&self, raw: &str) -> Result<Instruction> {
        let lowered = raw.to_lowercase();
        let words: Vec<&str> = lowered
            .split(|c: char| !(c.is_alphanumeric() || c == '-'))
            .map(|w| w.trim_matches('-'))
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(Error::UnknownGarment(raw.to_string()));
        }

        let (garment_class, garment_noun) = words
            .iter()
            .find_map(|w| self.garment(w).map(|c| (c, w.to_string())))
            .ok_or_else(|| Error::UnknownGarment(raw.to_string()))?;

        let mut length_anchor = None;
        let mut start_anchor = None;
        for (k, w) in words.iter().enumerate() {
            let anchor_word = if let Some(prefix) = w.strip_suffix("-length") {
                Some(prefix)
            } else if *w == "length" && k > 0 {
                Some(words[k - 1])
            } else {
                None
            };
            if let Some(a) = anchor_word {
                let token = self.anchor(a).ok_or_else(|| Error::UnknownAnchor(a.to_string()))?;
                length_anchor = Some(token.to_string());
            }
            if *w == "from" {
                if let Some(next) = words.get(k + 1) {
                    let token = self.anchor(next).ok_or_else(|| Error::UnknownAnchor(next.to_string()))?;
                    start_anchor = Some(token.to_string());
                }
            }
        }

        Ok(Instruction {
            raw: raw.to_string(),
            garment_class,
            garment_noun,
            length_anchor,
            start_anchor,
        })
    }

    pub fn expand(&self, instr: &Instruction) -> Result<TokenGroup> {
        let tpl = self
            .garments
            .get(&instr.garment_class)
            .ok_or_else(|| Error::UnknownGarment(instr.garment_class.to_string()))?;
        let start = instr.start_anchor.clone().unwrap_or_else(|| tpl.start.clone());
        let end = instr.length_anchor.clone().unwrap_or_else(|| tpl.default_end.clone());
        let rank = |t: &str| anatomical_rank(t).ok_or_else(|| Error::UnknownAnchor(t.to_string()));
        let (lo, hi) = (rank(&start)?, rank(&end)?);
        if hi < lo {
            return Err(Error::InvalidRange(format!("{end} lies above {start}")));
        }
        let shoulder = anatomical_rank("Shoulder").expect("ranked");
        let (chest, belly) = (
            anatomical_rank("Chest").expect("ranked"),
            anatomical_rank("Belly").expect("ranked"),
        );

        let mut picked: Vec<(u8, usize, &str)> = Vec::new();
        for (order, token) in tpl.zone.iter().enumerate() {
            let t = token.as_str();
            let keep = if ARM_TOKENS.contains(&t) {
                tpl.include_arms && lo <= shoulder && shoulder <= hi
            } else {
                match anatomical_rank(t) {
                    Some(r) => lo <= r && r <= hi,
                    // Torso spans chest to belly.
                    None => lo <= chest && hi >= belly,
                }
            };
            if keep {
                picked.push((anatomical_rank(t).unwrap_or(u8::MAX), order, t));
            }
        }
        picked.sort();

        let mut star_tokens = Vec::new();
        let mut fleshy_tokens = Vec::new();
        for (_, _, t) in picked {
            // Hip is both a joint and a soft-tissue region; the joint wins.
            if is_star_token(t) {
                star_tokens.push(t.to_string());
            } else {
                fleshy_tokens.push(t.to_string());
            }
        }
        Ok(TokenGroup {
            star_tokens,
            fleshy_tokens,
            clothes_tokens: vec![instr.garment_noun.clone()],
            start_anchor: start,
            end_anchor: end,
            include_arms: tpl.include_arms,
            include_legs: tpl.include_legs,
        })
    }
}

/// Parses with the built-in rule table.
pub fn parse_instruction(raw: &str) -> Result<Instruction> {
    RuleTable::builtin().parse(raw)
}

/// Expands with the built-in rule table.
pub fn expand_to_token_group(instr: &Instruction) -> Result<TokenGroup> {
    RuleTable::builtin().expand(instr)
}
