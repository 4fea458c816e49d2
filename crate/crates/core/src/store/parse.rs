use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateMode {
    /// Drop every token found in the stop-word list.
    #[default]
    StripAdjectives,
    /// Normalize case and whitespace only.
    ExactMatch,
}

/// Template matcher turning a task description into its micro-skill name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillParser {
    pub mode: TemplateMode,
    pub stopwords: BTreeSet<String>,
}

impl Default for SkillParser {
    fn default() -> Self {
        Self::from_word_list(DEFAULT_STOPWORDS)
    }
}

impl SkillParser {
    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            mode: TemplateMode::StripAdjectives,
            stopwords: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// Parses a word-list file: one token per line, `#` comments.
    pub fn from_word_list(text: &str) -> Self {
        Self::with_stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn exact() -> Self {
        Self {
            mode: TemplateMode::ExactMatch,
            stopwords: BTreeSet::new(),
        }
    }

    pub fn parse(&self, description: &str) -> Result<String> {
        let lowered = description.trim().to_lowercase();
        let tokens = lowered
            .split_whitespace()
            .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()))
            .filter(|t| !t.is_empty())
            .filter(|t| self.mode == TemplateMode::ExactMatch || !self.stopwords.contains(*t));
        let skill = tokens.collect::<Vec<_>>().join(" ");
        if skill.is_empty() {
            return Err(Error::EmptyDescription);
        }
        Ok(skill)
    }
}

/// Micro-skill name using the default stop-word list.
pub fn parse_micro_skill(description: &str) -> Result<String> {
    SkillParser::default().parse(description)
}
