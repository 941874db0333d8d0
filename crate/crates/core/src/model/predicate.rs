//! Small predicate language used for device constraints.
//!
//! Constraints are boolean expression trees over the properties of a single
//! object. Evaluation takes a slot lookup and yields `true`, `false`, or an
//! evaluation error when a referenced property is missing or operands have
//! incomparable types.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Ge => ord != Ordering::Less,
            CmpOp::Gt => ord == Ordering::Greater,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

/// Operand of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Prop(String),
    Const(Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum Predicate {
    Cmp {
        lhs: Operand,
        cmp: CmpOp,
        rhs: Operand,
    },
    And {
        args: Vec<Predicate>,
    },
    Or {
        args: Vec<Predicate>,
    },
    Not {
        arg: Box<Predicate>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("property `{0}` has no value")]
    MissingProperty(String),
    #[error("cannot compare {0} with {1}")]
    Incomparable(String, String),
}

impl Predicate {
    pub fn cmp(prop: &str, cmp: CmpOp, value: impl Into<Value>) -> Self {
        Predicate::Cmp {
            lhs: Operand::Prop(prop.to_string()),
            cmp,
            rhs: Operand::Const(value.into()),
        }
    }

    /// `lower <= prop <= upper`, the shape of every shipped range constraint.
    pub fn between(prop: &str, lower: i64, upper: i64) -> Self {
        Predicate::And {
            args: vec![
                Predicate::cmp(prop, CmpOp::Ge, lower),
                Predicate::cmp(prop, CmpOp::Le, upper),
            ],
        }
    }

    pub fn evaluate<'a, F>(&'a self, lookup: &F) -> Result<bool, EvalError>
    where
        F: Fn(&str) -> Option<&'a Value>,
    {
        match self {
            Predicate::Cmp { lhs, cmp, rhs } => {
                let l = resolve(lhs, lookup)?;
                let r = resolve(rhs, lookup)?;
                Ok(cmp.holds(compare(l, r)?))
            }
            Predicate::And { args } => {
                for a in args {
                    if !a.evaluate(lookup)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Predicate::Or { args } => {
                for a in args {
                    if a.evaluate(lookup)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Predicate::Not { arg } => Ok(!arg.evaluate(lookup)?),
        }
    }

    /// Names of all properties referenced anywhere in the tree.
    pub fn properties(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut BTreeSet<String>) {
        match self {
            Predicate::Cmp { lhs, rhs, .. } => {
                for o in [lhs, rhs] {
                    if let Operand::Prop(p) = o {
                        out.insert(p.clone());
                    }
                }
            }
            Predicate::And { args } | Predicate::Or { args } => {
                args.iter().for_each(|a| a.collect(out));
            }
            Predicate::Not { arg } => arg.collect(out),
        }
    }

    /// Closed integer interval `[lower, upper]` for `prop` when the predicate
    /// is a plain conjunction of constant bounds on it. Used by the request
    /// generator to draw values on either side of a constraint.
    pub fn integer_bounds(&self, prop: &str) -> Option<(Option<i64>, Option<i64>)> {
        let mut lower = None;
        let mut upper = None;
        if !self.fold_bounds(prop, &mut lower, &mut upper) {
            return None;
        }
        if lower.is_none() && upper.is_none() {
            return None;
        }
        Some((lower, upper))
    }

    fn fold_bounds(&self, prop: &str, lower: &mut Option<i64>, upper: &mut Option<i64>) -> bool {
        match self {
            Predicate::And { args } => args.iter().all(|a| a.fold_bounds(prop, lower, upper)),
            Predicate::Cmp {
                lhs: Operand::Prop(p),
                cmp,
                rhs: Operand::Const(c),
            } if p == prop => {
                let Some(v) = c.as_i64() else { return false };
                let (lo, hi) = match cmp {
                    CmpOp::Ge => (Some(v), None),
                    CmpOp::Gt => (Some(v + 1), None),
                    CmpOp::Le => (None, Some(v)),
                    CmpOp::Lt => (None, Some(v - 1)),
                    CmpOp::Eq => (Some(v), Some(v)),
                    CmpOp::Ne => return false,
                };
                if let Some(lo) = lo {
                    *lower = Some(lower.map_or(lo, |l: i64| l.max(lo)));
                }
                if let Some(hi) = hi {
                    *upper = Some(upper.map_or(hi, |u: i64| u.min(hi)));
                }
                true
            }
            _ => false,
        }
    }
}

impl std::fmt::Display for Predicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fn operand(o: &Operand) -> String {
            match o {
                Operand::Prop(p) => format!("self.{p}"),
                Operand::Const(v) => v.to_string(),
            }
        }
        match self {
            Predicate::Cmp { lhs, cmp, rhs } => {
                write!(f, "{} {} {}", operand(lhs), cmp.symbol(), operand(rhs))
            }
            Predicate::And { args } | Predicate::Or { args } => {
                let sep = if matches!(self, Predicate::And { .. }) {
                    " and "
                } else {
                    " or "
                };
                let parts: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                write!(f, "{}", parts.join(sep))
            }
            Predicate::Not { arg } => write!(f, "not ({arg})"),
        }
    }
}

fn resolve<'a, F>(o: &'a Operand, lookup: &F) -> Result<&'a Value, EvalError>
where
    F: Fn(&str) -> Option<&'a Value>,
{
    match o {
        Operand::Const(v) => Ok(v),
        Operand::Prop(p) => lookup(p).ok_or_else(|| EvalError::MissingProperty(p.clone())),
    }
}

fn compare(l: &Value, r: &Value) -> Result<Ordering, EvalError> {
    match (l, r) {
        (Value::Number(a), Value::Number(b)) => {
            if let (Some(a), Some(b)) = (a.as_i64(), b.as_i64()) {
                return Ok(a.cmp(&b));
            }
            let (a, b) = (
                a.as_f64().unwrap_or(f64::NAN),
                b.as_f64().unwrap_or(f64::NAN),
            );
            a.partial_cmp(&b)
                .ok_or_else(|| EvalError::Incomparable(l.to_string(), r.to_string()))
        }
        (Value::String(a), Value::String(b)) => Ok(a.cmp(b)),
        (Value::Bool(a), Value::Bool(b)) => Ok(a.cmp(b)),
        _ => Err(EvalError::Incomparable(l.to_string(), r.to_string())),
    }
}
