//! Prompt templates shipped as text assets.
//!
//! Templates use Python `str.format` conventions: `{name}` is a placeholder
//! and `{{` / `}}` are literal braces.

use std::collections::BTreeSet;

use thiserror::Error;

/// Bumped whenever any template text changes; part of every cache key.
pub const TEMPLATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template {template}: no value for placeholder {{{name}}}")]
    MissingValue { template: &'static str, name: String },
    #[error("template {template}: value given for unknown placeholder {name:?}")]
    UnknownPlaceholder { template: &'static str, name: String },
    #[error("template {template}: unbalanced brace at byte {offset}")]
    UnbalancedBrace { template: &'static str, offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptTemplate {
    TakeawayExtraction,
    TakeawayClassification,
    StandaloneStatements,
    RhetoricalRoles,
    ClaimExtraction,
    SupportRelation,
    Checkworthy,
    QueryExpansion,
    EvidenceStance,
}

impl PromptTemplate {
    pub const ALL: [PromptTemplate; 9] = [
        PromptTemplate::TakeawayExtraction,
        PromptTemplate::TakeawayClassification,
        PromptTemplate::StandaloneStatements,
        PromptTemplate::RhetoricalRoles,
        PromptTemplate::ClaimExtraction,
        PromptTemplate::SupportRelation,
        PromptTemplate::Checkworthy,
        PromptTemplate::QueryExpansion,
        PromptTemplate::EvidenceStance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptTemplate::TakeawayExtraction => "takeaway_extraction",
            PromptTemplate::TakeawayClassification => "takeaway_classification",
            PromptTemplate::StandaloneStatements => "standalone_statements",
            PromptTemplate::RhetoricalRoles => "rhetorical_roles",
            PromptTemplate::ClaimExtraction => "claim_extraction",
            PromptTemplate::SupportRelation => "support_relation",
            PromptTemplate::Checkworthy => "checkworthy",
            PromptTemplate::QueryExpansion => "query_expansion",
            PromptTemplate::EvidenceStance => "evidence_stance",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            PromptTemplate::TakeawayExtraction => {
                include_str!("../../assets/prompts/takeaway_extraction.txt")
            }
            PromptTemplate::TakeawayClassification => {
                include_str!("../../assets/prompts/takeaway_classification.txt")
            }
            PromptTemplate::StandaloneStatements => {
                include_str!("../../assets/prompts/standalone_statements.txt")
            }
            PromptTemplate::RhetoricalRoles => {
                include_str!("../../assets/prompts/rhetorical_roles.txt")
            }
            PromptTemplate::ClaimExtraction => {
                include_str!("../../assets/prompts/claim_extraction.txt")
            }
            PromptTemplate::SupportRelation => {
                include_str!("../../assets/prompts/support_relation.txt")
            }
            PromptTemplate::Checkworthy => include_str!("../../assets/prompts/checkworthy.txt"),
            PromptTemplate::QueryExpansion => {
                include_str!("../../assets/prompts/query_expansion.txt")
            }
            PromptTemplate::EvidenceStance => {
                include_str!("../../assets/prompts/evidence_stance.txt")
            }
        }
    }

    /// Placeholder names the template expects.
    pub fn placeholders(self) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        for piece in tokenize(self.source()).unwrap_or_default() {
            if let Piece::Placeholder(name) = piece {
                names.insert(name.to_string());
            }
        }
        names
    }

    /// Substitutes every placeholder. Each expected placeholder must be
    /// supplied exactly by `values`; extra keys are rejected too.
    pub fn render(self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let pieces = tokenize(self.source()).map_err(|offset| TemplateError::UnbalancedBrace {
            template: self.name(),
            offset,
        })?;
        let expected = self.placeholders();
        if let Some((name, _)) = values.iter().find(|(k, _)| !expected.contains(*k)) {
            return Err(TemplateError::UnknownPlaceholder {
                template: self.name(),
                name: name.to_string(),
            });
        }
        let mut out = String::with_capacity(self.source().len());
        for piece in pieces {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Brace(c) => out.push(c),
                Piece::Placeholder(name) => {
                    let value = values
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| TemplateError::MissingValue {
                            template: self.name(),
                            name: name.to_string(),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

enum Piece<'a> {
    Literal(&'a str),
    Brace(char),
    Placeholder(&'a str),
}

fn tokenize(src: &str) -> Result<Vec<Piece<'_>>, usize> {
    let bytes = src.as_bytes();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' | b'}' if bytes.get(i + 1) == Some(&bytes[i]) => {
                pieces.push(Piece::Literal(&src[start..i]));
                pieces.push(Piece::Brace(bytes[i] as char));
                i += 2;
                start = i;
            }
            b'{' => {
                let close = src[i + 1..].find('}').ok_or(i)? + i + 1;
                let name = &src[i + 1..close];
                if name.is_empty() || !name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
                {
                    return Err(i);
                }
                pieces.push(Piece::Literal(&src[start..i]));
                pieces.push(Piece::Placeholder(name));
                i = close + 1;
                start = i;
            }
            b'}' => return Err(i),
            _ => i += 1,
        }
    }
    pieces.push(Piece::Literal(&src[start..]));
    Ok(pieces)
}
