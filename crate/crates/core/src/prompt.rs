//! Prompt templates with `{{name}}` placeholders.

use std::path::Path;

use thiserror::Error;

pub const DEFAULT_PARSE_TEMPLATE: &str = include_str!("../prompts/parse.txt");
pub const DEFAULT_MATCH_TEMPLATE: &str = include_str!("../prompts/match.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template is missing the {{{{{0}}}}} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>, required: &[&'static str]) -> Result<Self, TemplateError> {
        let text = text.into();
        for name in required {
            if !text.contains(&format!("{{{{{name}}}}}")) {
                return Err(TemplateError::MissingPlaceholder(name));
            }
        }
        Ok(Self { text })
    }

    pub fn from_path(
        path: impl AsRef<Path>,
        required: &[&'static str],
    ) -> Result<Self, TemplateError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
        Self::new(text, required)
    }

    /// Substitute each `{{key}}`. Unknown placeholders are left alone.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        values.iter().fold(self.text.clone(), |acc, (key, value)| {
            acc.replace(&format!("{{{{{key}}}}}"), value)
        })
    }
}
