//! Formula mini-language for model specification, e.g.
//!
//! ```text
//! long_workday ~ role + gender + live_alone + has_children + origin + age
//!                + gender:has_children, group = participant
//! ```

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Main(String),
    Interaction(String, String),
}

impl Term {
    /// Variables the term references.
    pub fn variables(&self) -> Vec<&str> {
        match self {
            Term::Main(v) => vec![v],
            Term::Interaction(a, b) => vec![a, b],
        }
    }

    pub fn label(&self) -> String {
        match self {
            Term::Main(v) => v.clone(),
            Term::Interaction(a, b) => format!("{a}:{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    pub terms: Vec<Term>,
    pub grouping: String,
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (formula_part, group_part) = s
            .rsplit_once(',')
            .ok_or_else(|| Error::Config(format!("formula {s:?} lacks ', group = <column>'")))?;
        let grouping = group_part
            .trim()
            .strip_prefix("group")
            .map(|rest| rest.trim_start())
            .and_then(|rest| rest.strip_prefix('='))
            .map(|g| g.trim().to_string())
            .filter(|g| !g.is_empty())
            .ok_or_else(|| Error::Config(format!("bad grouping clause in {s:?}")))?;

        let (response, rhs) = formula_part
            .split_once('~')
            .ok_or_else(|| Error::Config(format!("formula {s:?} lacks '~'")))?;
        let response = response.trim().to_string();
        if response.is_empty() {
            return Err(Error::Config("empty response in formula".into()));
        }

        // "y ~ 1" is the intercept-only model
        if rhs.trim() == "1" {
            return Ok(ModelSpec {
                response,
                terms: Vec::new(),
                grouping,
            });
        }

        let mut terms = Vec::new();
        for raw in rhs.split('+') {
            let raw = raw.trim();
            if raw.is_empty() {
                return Err(Error::Config(format!("empty term in formula {s:?}")));
            }
            if let Some((a, b)) = raw.split_once(':') {
                let (a, b) = (a.trim().to_string(), b.trim().to_string());
                if a.is_empty() || b.is_empty() {
                    return Err(Error::Config(format!("bad interaction {raw:?}")));
                }
                terms.push(Term::Interaction(a, b));
            } else {
                terms.push(Term::Main(raw.to_string()));
            }
        }
        if terms.is_empty() {
            return Err(Error::Config("formula has no terms".into()));
        }

        // Interactions must reference declared main effects.
        for term in &terms {
            if let Term::Interaction(a, b) = term {
                for var in [a, b] {
                    if !terms.iter().any(|t| matches!(t, Term::Main(m) if m == var)) {
                        return Err(Error::Config(format!(
                            "interaction references {var:?} which is not a declared main effect"
                        )));
                    }
                }
            }
        }

        Ok(ModelSpec {
            response,
            terms,
            grouping,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_formula() {
        let spec: ModelSpec =
            "long_workday ~ role + gender + has_children + gender:has_children, group = participant"
                .parse()
                .unwrap();
        assert_eq!(spec.response, "long_workday");
        assert_eq!(spec.grouping, "participant");
        assert_eq!(spec.terms.len(), 4);
        assert_eq!(
            spec.terms[3],
            Term::Interaction("gender".into(), "has_children".into())
        );
    }

    #[test]
    fn rejects_interaction_without_main_effect() {
        let res = "y ~ a + a:b, group = g".parse::<ModelSpec>();
        assert!(res.is_err());
    }

    #[test]
    fn rejects_missing_group_clause() {
        assert!("y ~ a + b".parse::<ModelSpec>().is_err());
        assert!("y ~ a, grp = g".parse::<ModelSpec>().is_err());
    }
}
