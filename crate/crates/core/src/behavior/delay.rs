//! Per-operation execution delays and their derivation from device logs.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Operation classes with their own delay distribution.
pub mod ops {
    pub const SETTINGS_UPDATE: &str = "settings-update";
    pub const PLAN_UPLOAD: &str = "plan-upload";
    pub const READ: &str = "read";
    pub const DELETE: &str = "delete";
    /// Request refused because its body failed validation.
    pub const REJECT: &str = "reject";
    /// Request refused because the device is dispensing or shut down.
    pub const BUSY: &str = "busy";
    pub const DISPENSE: &str = "dispense";
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpDelay {
    pub lower_ms: u64,
    pub upper_ms: u64,
    pub mean_ms: f64,
}

impl OpDelay {
    pub fn new(lower_ms: u64, upper_ms: u64, mean_ms: f64) -> Result<Self, DelayError> {
        let d = Self {
            lower_ms,
            upper_ms,
            mean_ms,
        };
        d.check()?;
        Ok(d)
    }

    /// Fixed delay.
    pub fn constant(ms: u64) -> Self {
        Self {
            lower_ms: ms,
            upper_ms: ms,
            mean_ms: ms as f64,
        }
    }

    fn check(&self) -> Result<(), DelayError> {
        let ordered = self.lower_ms as f64 <= self.mean_ms && self.mean_ms <= self.upper_ms as f64;
        if ordered {
            Ok(())
        } else {
            Err(DelayError::Unordered(*self))
        }
    }

    /// Uniform draw from `[lower_ms, upper_ms]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(self.lower_ms..=self.upper_ms)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DelayError {
    #[error("delay bounds must satisfy lower <= mean <= upper: {0:?}")]
    Unordered(OpDelay),
    #[error("execution log holds no records")]
    EmptyLog,
    #[error("malformed execution log record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("reading execution log: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DelayProfile {
    pub ops: BTreeMap<String, OpDelay>,
}

impl DelayProfile {
    pub fn get(&self, op: &str) -> Option<&OpDelay> {
        self.ops.get(op)
    }

    pub fn set(&mut self, op: &str, d: OpDelay) {
        self.ops.insert(op.to_string(), d);
    }

    /// Samples a delay for `op`; unknown operations take no time.
    pub fn sample<R: Rng + ?Sized>(&self, op: &str, rng: &mut R) -> u64 {
        self.ops.get(op).map_or(0, |d| d.sample(rng))
    }

    pub fn check(&self) -> Result<(), DelayError> {
        self.ops.values().try_for_each(OpDelay::check)
    }

    /// Shipped twin profile. Request handling takes 2.4 to 3 s; dispensing
    /// takes more than a minute.
    pub fn dispenser_default() -> Self {
        let mut p = Self::default();
        p.set(
            ops::SETTINGS_UPDATE,
            OpDelay {
                lower_ms: 2_400,
                upper_ms: 3_000,
                mean_ms: 2_750.0,
            },
        );
        p.set(
            ops::PLAN_UPLOAD,
            OpDelay {
                lower_ms: 2_400,
                upper_ms: 3_000,
                mean_ms: 2_750.0,
            },
        );
        p.set(
            ops::READ,
            OpDelay {
                lower_ms: 2_400,
                upper_ms: 3_000,
                mean_ms: 2_700.0,
            },
        );
        p.set(
            ops::DELETE,
            OpDelay {
                lower_ms: 2_400,
                upper_ms: 3_000,
                mean_ms: 2_700.0,
            },
        );
        p.set(
            ops::REJECT,
            OpDelay {
                lower_ms: 2_400,
                upper_ms: 3_000,
                mean_ms: 2_700.0,
            },
        );
        p.set(
            ops::BUSY,
            OpDelay {
                lower_ms: 100,
                upper_ms: 400,
                mean_ms: 250.0,
            },
        );
        p.set(
            ops::DISPENSE,
            OpDelay {
                lower_ms: 60_000,
                upper_ms: 80_000,
                mean_ms: 70_000.0,
            },
        );
        p
    }
}

/// One line of a device execution log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub operation: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Derives a delay profile from an execution log (one JSON record per line):
/// per operation the minimum, maximum and mean duration.
pub fn synchronize_from_logs<R: BufRead>(logs: R) -> Result<DelayProfile, DelayError> {
    let mut durations: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for (i, line) in logs.lines().enumerate() {
        let line = line.map_err(|e| DelayError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExecutionRecord =
            serde_json::from_str(&line).map_err(|e| DelayError::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?;
        if rec.end_ms < rec.start_ms {
            return Err(DelayError::MalformedRecord {
                line: i + 1,
                reason: "end_ms precedes start_ms".into(),
            });
        }
        durations
            .entry(rec.operation)
            .or_default()
            .push(rec.end_ms - rec.start_ms);
    }
    if durations.is_empty() {
        return Err(DelayError::EmptyLog);
    }
    let mut profile = DelayProfile::default();
    for (op, ds) in durations {
        let lower = *ds.iter().min().expect("non-empty");
        let upper = *ds.iter().max().expect("non-empty");
        let mean = ds.iter().map(|&d| d as f64).sum::<f64>() / ds.len() as f64;
        profile.set(
            &op,
            OpDelay {
                lower_ms: lower,
                upper_ms: upper,
                mean_ms: mean,
            },
        );
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn log(lines: &[(&str, u64, u64)]) -> String {
        lines
            .iter()
            .map(|(op, s, e)| format!(r#"{{"operation":"{op}","start_ms":{s},"end_ms":{e}}}"#))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn min_max_mean() {
        let text = log(&[
            ("dispense", 0, 60_000),
            ("dispense", 100_000, 170_000),
            ("dispense", 200_000, 280_000),
        ]);
        let p = synchronize_from_logs(text.as_bytes()).unwrap();
        assert_eq!(
            p.get("dispense"),
            Some(&OpDelay {
                lower_ms: 60_000,
                upper_ms: 80_000,
                mean_ms: 70_000.0
            })
        );
    }

    #[test]
    fn singleton() {
        let text = log(&[("settings-update", 1_000, 3_500)]);
        let p = synchronize_from_logs(text.as_bytes()).unwrap();
        assert_eq!(
            p.get("settings-update"),
            Some(&OpDelay {
                lower_ms: 2_500,
                upper_ms: 2_500,
                mean_ms: 2_500.0
            })
        );
    }

    #[test]
    fn errors() {
        assert_eq!(
            synchronize_from_logs("".as_bytes()),
            Err(DelayError::EmptyLog)
        );
        assert!(matches!(
            synchronize_from_logs("{oops".as_bytes()),
            Err(DelayError::MalformedRecord { line: 1, .. })
        ));
        let backwards = log(&[("x", 10, 5)]);
        assert!(matches!(
            synchronize_from_logs(backwards.as_bytes()),
            Err(DelayError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn shipped_profile() {
        let p = DelayProfile::dispenser_default();
        p.check().unwrap();
        let s = p.get(ops::SETTINGS_UPDATE).unwrap();
        assert_eq!((s.lower_ms, s.upper_ms, s.mean_ms), (2_400, 3_000, 2_750.0));
        assert!(p.get(ops::DISPENSE).unwrap().lower_ms >= 60_000);
    }

    #[test]
    fn samples_stay_in_bounds() {
        let d = OpDelay::new(2_400, 3_000, 2_700.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000)
            .map(|_| d.sample(&mut rng))
            .all(|x| (2_400..=3_000).contains(&x)));
        assert!(OpDelay::new(5, 1, 3.0).is_err());
    }
}
