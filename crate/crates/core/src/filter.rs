//! Explicit cutoff filters over characterization attributes.
//!
//! A [`FilterSpec`] is a conjunction of clauses. Clauses can be written as
//! text (`lambda_max >= 250`, `anion in-set triflate,nonaflate`) or as
//! structured `{attribute, comparator, operand}` documents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::id::Id;
use crate::model::{derive_dataset, Characterization, Dataset, ModelError, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Comparator {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
    InSet,
    MatchesSubstring,
}

impl Comparator {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
            Comparator::InSet => "in-set",
            Comparator::MatchesSubstring => "matches-substring",
        }
    }

    fn is_ordering(self) -> bool {
        matches!(self, Comparator::Lt | Comparator::Le | Comparator::Ge | Comparator::Gt)
    }
}

impl FromStr for Comparator {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "<" => Comparator::Lt,
            "<=" => Comparator::Le,
            "=" | "==" => Comparator::Eq,
            ">=" => Comparator::Ge,
            ">" => Comparator::Gt,
            "in-set" => Comparator::InSet,
            "matches-substring" => Comparator::MatchesSubstring,
            other => return Err(ModelError::MalformedFilter(format!("unknown comparator {other:?}"))),
        })
    }
}

impl TryFrom<String> for Comparator {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Comparator> for String {
    fn from(c: Comparator) -> Self {
        c.as_str().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Bool(bool),
    Number(f64),
    Text(String),
    Set(Vec<Operand>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterClause {
    pub attribute: String,
    pub comparator: Comparator,
    pub operand: Operand,
}

impl FilterClause {
    pub fn new(attribute: impl Into<String>, comparator: Comparator, operand: Operand) -> Self {
        Self {
            attribute: attribute.into(),
            comparator,
            operand,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let malformed = |why: &str| Err(ModelError::MalformedFilter(format!("{}: {why}", self)));
        match (self.comparator, &self.operand) {
            (c, Operand::Number(v)) if c.is_ordering() || c == Comparator::Eq => {
                if v.is_finite() {
                    Ok(())
                } else {
                    malformed("operand is not finite")
                }
            }
            (c, _) if c.is_ordering() => malformed("ordering comparators need a numeric operand"),
            (Comparator::Eq, Operand::Set(_)) => malformed("'=' needs a single operand"),
            (Comparator::InSet, Operand::Set(items)) => {
                if items.iter().any(|i| matches!(i, Operand::Set(_))) {
                    malformed("nested sets are not allowed")
                } else {
                    Ok(())
                }
            }
            (Comparator::InSet, _) => malformed("in-set needs a list operand"),
            (Comparator::MatchesSubstring, Operand::Text(_)) => Ok(()),
            (Comparator::MatchesSubstring, _) => malformed("matches-substring needs a text operand"),
            _ => Ok(()),
        }
    }

    /// Evaluates the clause on one value; a type mismatch is an error.
    fn eval(&self, value: &Value) -> Result<bool, ModelError> {
        let mismatch =
            || ModelError::MalformedFilter(format!("{}: type mismatch with {:?} attribute", self, value.kind()));
        let scalar_eq = |op: &Operand| -> Result<bool, ModelError> {
            match (op, value) {
                (Operand::Number(a), Value::Numeric(b)) => Ok(a == b),
                (Operand::Text(a), Value::Categorical(b) | Value::Text(b)) => Ok(a == b),
                (Operand::Bool(a), Value::Boolean(b)) => Ok(a == b),
                _ => Err(mismatch()),
            }
        };
        match self.comparator {
            c if c.is_ordering() => {
                let (Operand::Number(rhs), Value::Numeric(lhs)) = (&self.operand, value) else {
                    return Err(mismatch());
                };
                Ok(match c {
                    Comparator::Lt => lhs < rhs,
                    Comparator::Le => lhs <= rhs,
                    Comparator::Ge => lhs >= rhs,
                    _ => lhs > rhs,
                })
            }
            Comparator::Eq => scalar_eq(&self.operand),
            Comparator::InSet => {
                let Operand::Set(items) = &self.operand else {
                    return Err(mismatch());
                };
                let mut hit = false;
                for item in items {
                    hit |= scalar_eq(item)?;
                }
                Ok(hit)
            }
            _ => {
                let (Operand::Text(needle), Some(hay)) = (&self.operand, value.as_str()) else {
                    return Err(mismatch());
                };
                Ok(hay.contains(needle.as_str()))
            }
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Bool(b) => write!(f, "{b}"),
            Operand::Number(v) => write!(f, "{v}"),
            Operand::Text(s) => write!(f, "{s}"),
            Operand::Set(items) => {
                let parts: Vec<String> = items.iter().map(|i| i.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

impl fmt::Display for FilterClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.attribute, self.comparator.as_str(), self.operand)
    }
}

fn parse_scalar(s: &str) -> Operand {
    match s {
        "true" => Operand::Bool(true),
        "false" => Operand::Bool(false),
        _ => s
            .parse::<f64>()
            .map(Operand::Number)
            .unwrap_or_else(|_| Operand::Text(s.to_string())),
    }
}

impl FromStr for FilterClause {
    type Err = ModelError;

    /// `<attribute> <comparator> <operand>`, whitespace separated. In-set
    /// operands are comma separated.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().splitn(3, char::is_whitespace);
        let (Some(attribute), Some(cmp), Some(rest)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ModelError::MalformedFilter(format!("cannot parse clause {s:?}")));
        };
        let comparator: Comparator = cmp.parse()?;
        let rest = rest.trim();
        let operand = match comparator {
            Comparator::InSet => Operand::Set(rest.split(',').map(|p| parse_scalar(p.trim())).collect()),
            Comparator::MatchesSubstring => Operand::Text(rest.to_string()),
            _ => parse_scalar(rest),
        };
        let clause = FilterClause::new(attribute, comparator, operand);
        clause.validate()?;
        Ok(clause)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FilterSpec {
    pub clauses: Vec<FilterClause>,
}

impl FilterSpec {
    pub fn new(clauses: Vec<FilterClause>) -> Result<Self, ModelError> {
        for c in &clauses {
            c.validate()?;
        }
        Ok(Self { clauses })
    }

    pub fn parse(lines: &[&str]) -> Result<Self, ModelError> {
        Self::new(lines.iter().map(|l| l.parse()).collect::<Result<_, _>>()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub dataset: Dataset,
    /// Members rejected by each clause (the first failing clause counts).
    pub excluded_by_clause: Vec<usize>,
    /// Members lacking an attribute some clause needs.
    pub excluded_missing: usize,
}

/// Keeps the members of `dataset` that satisfy every clause of `spec`.
///
/// Clauses are evaluated in order; a member lacking the attribute of the
/// first clause it reaches is counted as excluded-by-missing.
pub fn apply_filter<'a>(
    dataset: &Dataset,
    lookup: impl Fn(&Id) -> Option<&'a Characterization>,
    spec: &FilterSpec,
    operation: Id,
    id: Id,
    name: impl Into<String>,
) -> Result<FilterOutcome, ModelError> {
    for c in &spec.clauses {
        c.validate()?;
    }
    let mut kept = Vec::new();
    let mut excluded_by_clause = vec![0; spec.clauses.len()];
    let mut excluded_missing = 0;
    'members: for member in &dataset.member_ids {
        let ch = lookup(member).ok_or(ModelError::UnknownMember(*member))?;
        for (i, clause) in spec.clauses.iter().enumerate() {
            let Some(attr) = ch.get(&clause.attribute) else {
                excluded_missing += 1;
                continue 'members;
            };
            if !clause.eval(&attr.value)? {
                excluded_by_clause[i] += 1;
                continue 'members;
            }
        }
        kept.push(*member);
    }
    Ok(FilterOutcome {
        dataset: derive_dataset(dataset, &kept, operation, id, name)?,
        excluded_by_clause,
        excluded_missing,
    })
}
