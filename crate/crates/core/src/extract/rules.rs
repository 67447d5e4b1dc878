use thiserror::Error;

use super::selector::{FieldExpr, SelectorError, SimpleSelector};
use crate::model::ExtractionRuleSet;

const DEFAULT_RULES: &str = include_str!("../../data/default_rules.toml");

pub const AD_FIELDS: [&str; 4] = ["name", "title", "url", "content"];
pub const RESULT_FIELDS: [&str; 3] = ["title", "url", "content"];
pub const STORY_FIELDS: [&str; 3] = ["title", "author", "url"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rule file: {0}")]
    Syntax(String),
    #[error("rule set version must be at least 1")]
    BadVersion,
    #[error("missing rule {0:?}")]
    MissingRule(String),
    #[error("unknown rule {0:?}")]
    UnknownRule(String),
    #[error("rule {key:?}: {source}")]
    Selector {
        key: String,
        #[source]
        source: SelectorError,
    },
}

impl ExtractionRuleSet {
    /// Parses the rule file (TOML).
    pub fn from_toml(text: &str) -> Result<Self, RuleError> {
        let rules: ExtractionRuleSet =
            toml::from_str(text).map_err(|e| RuleError::Syntax(e.to_string()))?;
        CompiledRules::compile(&rules)?;
        Ok(rules)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("rule sets serialise to TOML")
    }

    /// The bundled rule set matching the built-in mock engine's markup.
    pub fn bundled() -> Self {
        ExtractionRuleSet::from_toml(DEFAULT_RULES).expect("bundled rules are valid")
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        CompiledRules::compile(self).map(|_| ())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledField {
    pub selector: scraper::Selector,
    pub attribute: Option<String>,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledSection {
    pub container: scraper::Selector,
    /// In the order of the section's field list.
    pub fields: Vec<CompiledField>,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledRules {
    pub ads: CompiledSection,
    pub results: CompiledSection,
    pub stories: CompiledSection,
}

impl CompiledRules {
    pub fn compile(rules: &ExtractionRuleSet) -> Result<Self, RuleError> {
        if rules.version < 1 {
            return Err(RuleError::BadVersion);
        }
        for key in rules.rules.keys() {
            let known = [("ad", &AD_FIELDS[..]), ("result", &RESULT_FIELDS[..]), ("story", &STORY_FIELDS[..])]
                .iter()
                .any(|(prefix, fields)| {
                    key.strip_prefix(prefix)
                        .and_then(|r| r.strip_prefix('.'))
                        .is_some_and(|f| f == "container" || fields.contains(&f))
                });
            if !known {
                return Err(RuleError::UnknownRule(key.clone()));
            }
        }
        let section = |prefix: &str, fields: &[&str]| -> Result<CompiledSection, RuleError> {
            let get = |field: &str| {
                let key = format!("{prefix}.{field}");
                rules
                    .rules
                    .get(&key)
                    .map(|expr| (key.clone(), expr))
                    .ok_or(RuleError::MissingRule(key))
            };
            let (key, expr) = get("container")?;
            let container = SimpleSelector::parse(expr)
                .map_err(|source| RuleError::Selector { key, source })?
                .compile();
            let fields = fields
                .iter()
                .map(|f| {
                    let (key, expr) = get(f)?;
                    let parsed = FieldExpr::parse(expr)
                        .map_err(|source| RuleError::Selector { key, source })?;
                    Ok(CompiledField {
                        selector: parsed.selector.compile(),
                        attribute: parsed.attribute,
                    })
                })
                .collect::<Result<_, RuleError>>()?;
            Ok(CompiledSection { container, fields })
        };
        Ok(CompiledRules {
            ads: section("ad", &AD_FIELDS)?,
            results: section("result", &RESULT_FIELDS)?,
            stories: section("story", &STORY_FIELDS)?,
        })
    }
}
