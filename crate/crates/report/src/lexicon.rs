//! Header lexicon and canonical category map.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ReportError, Result};

pub const DEFAULT_LEXICON: &str = include_str!("../config/lexicon.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    ClinicalContext,
    EegFindings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    History,
    Indication,
    Medications,
    EegDescription,
    BackgroundActivity,
    EpileptiformAbnormalities,
    EventsSeizures,
    Impressions,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::History,
        Category::Indication,
        Category::Medications,
        Category::EegDescription,
        Category::BackgroundActivity,
        Category::EpileptiformAbnormalities,
        Category::EventsSeizures,
        Category::Impressions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::History => "history",
            Category::Indication => "indication",
            Category::Medications => "medications",
            Category::EegDescription => "eeg_description",
            Category::BackgroundActivity => "background_activity",
            Category::EpileptiformAbnormalities => "epileptiform_abnormalities",
            Category::EventsSeizures => "events_seizures",
            Category::Impressions => "impressions",
        }
    }

    pub fn partition(self) -> Partition {
        match self {
            Category::History | Category::Indication | Category::Medications => Partition::ClinicalContext,
            _ => Partition::EegFindings,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| format!("unknown category `{}`", s.trim()))
    }
}

impl FromStr for Partition {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "clinical_context" => Ok(Partition::ClinicalContext),
            "eeg_findings" => Ok(Partition::EegFindings),
            other => Err(format!("unknown partition `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconRule {
    /// Uppercase header text.
    pub header: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    rules: Vec<LexiconRule>,
}

impl Lexicon {
    /// Reads `HEADER → category | partition` lines; `->` also works as the
    /// arrow. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules: Vec<LexiconRule> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |detail: String| ReportError::Lexicon { line: i + 1, detail };
            let (header, rest) = line
                .split_once('→')
                .or_else(|| line.split_once("->"))
                .ok_or_else(|| err(format!("`{line}` has no canonical mapping")))?;
            let (cat, part) = rest.split_once('|').ok_or_else(|| err("expected `category | partition`".into()))?;
            let category: Category = cat.parse().map_err(err)?;
            let partition: Partition = part.parse().map_err(err)?;
            if category.partition() != partition {
                return Err(err(format!(
                    "category {category} belongs to {:?}, not {partition:?}",
                    category.partition()
                )));
            }
            let header = header.trim().to_uppercase();
            if header.is_empty() {
                return Err(err("empty header".into()));
            }
            if let Some(prev) = rules.iter().find(|r| r.header == header) {
                if prev.category != category {
                    return Err(err(format!("`{header}` mapped twice")));
                }
                continue;
            }
            rules.push(LexiconRule { header, category });
        }
        if rules.is_empty() {
            return Err(ReportError::EmptyLexicon);
        }
        Ok(Lexicon { rules })
    }

    pub fn rules(&self) -> &[LexiconRule] {
        &self.rules
    }

    pub fn rule(&self, id: usize) -> &LexiconRule {
        &self.rules[id]
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }
}
