//! Random request bodies: each property is drawn inside or outside its
//! allowed values.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::HarnessError;
use crate::api::{ApiMapping, Method, RequestRecord};
use crate::model::{ClassDef, DeviceSchema, PropertyDef, SemanticType};
use crate::util::derive_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Probability that one property value violates its constraint.
    pub invalid_rate: f64,
    /// Classes whose routes receive requests, picked uniformly.
    pub classes: Vec<String>,
    pub method: Method,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            invalid_rate: 0.2,
            classes: ["Setting", "Alarm", "Display", "DateAndTime"]
                .map(String::from)
                .to_vec(),
            method: Method::Post,
        }
    }
}

impl GeneratorConfig {
    pub fn check(&self) -> Result<(), HarnessError> {
        if !(0.0..=1.0).contains(&self.invalid_rate) {
            return Err(HarnessError::InvalidConfig(format!(
                "invalid_rate must lie in [0, 1], got {}",
                self.invalid_rate
            )));
        }
        if self.classes.is_empty() {
            return Err(HarnessError::InvalidConfig("no classes in scope".into()));
        }
        Ok(())
    }
}

/// Integer interval allowed by all single-property constraints on `prop`.
pub fn integer_interval(
    schema: &DeviceSchema,
    class: &ClassDef,
    prop: &str,
) -> (Option<i64>, Option<i64>) {
    let mut lo: Option<i64> = None;
    let mut hi: Option<i64> = None;
    for k in schema.constraints_for(class) {
        if let Some((l, h)) = k.predicate.integer_bounds(prop) {
            lo = match (lo, l) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            };
            hi = match (hi, h) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
        }
    }
    (lo, hi)
}

/// Draws one value for `prop`, valid or not.
pub fn draw_value(
    schema: &DeviceSchema,
    class: &ClassDef,
    prop: &PropertyDef,
    valid: bool,
    rng: &mut ChaCha8Rng,
) -> Value {
    match &prop.ty {
        SemanticType::Integer => {
            let (lo, hi) = integer_interval(schema, class, &prop.name);
            let (vlo, vhi) = match (lo, hi) {
                (Some(l), Some(h)) => (l, h),
                (Some(l), None) => (l, l + 20),
                (None, Some(h)) => (h - 20, h),
                (None, None) => (0, 20),
            };
            if valid {
                return json!(rng.gen_range(vlo..=vhi));
            }
            let span = (vhi - vlo).max(5);
            match (lo, hi) {
                (None, None) => json!(format!("{}", rng.gen_range(vlo..=vhi))),
                (Some(l), None) => json!(l - rng.gen_range(1..=span)),
                (None, Some(h)) => json!(h + rng.gen_range(1..=span)),
                (Some(l), Some(h)) => {
                    if rng.gen_bool(0.5) {
                        json!(l - rng.gen_range(1..=span))
                    } else {
                        json!(h + rng.gen_range(1..=span))
                    }
                }
            }
        }
        SemanticType::Boolean => {
            if valid {
                json!(rng.gen_bool(0.5))
            } else {
                json!(["yes", "no", "on"].choose(rng).copied())
            }
        }
        SemanticType::Text => {
            if valid {
                json!(format!("v{}", rng.gen_range(0..1000)))
            } else {
                json!(rng.gen_range(0..1000))
            }
        }
        SemanticType::Date => {
            if valid {
                json!(format!(
                    "2024-{:02}-{:02}",
                    rng.gen_range(1..=12),
                    rng.gen_range(1..=28)
                ))
            } else {
                json!(format!(
                    "2024-{:02}-{:02}",
                    rng.gen_range(13..=99),
                    rng.gen_range(32..=99)
                ))
            }
        }
        SemanticType::Time => {
            if valid {
                json!(format!(
                    "{:02}:{:02}",
                    rng.gen_range(0..24),
                    rng.gen_range(0..60)
                ))
            } else {
                json!(format!(
                    "{:02}:{:02}",
                    rng.gen_range(24..=99),
                    rng.gen_range(0..60)
                ))
            }
        }
        SemanticType::Enum(name) => {
            let literals = schema
                .enumeration(name)
                .map(|e| e.literals.clone())
                .unwrap_or_default();
            match literals.choose(rng) {
                Some(l) if valid => json!(l),
                _ => json!(format!("Not{name}{}", rng.gen_range(0..100))),
            }
        }
    }
}

/// Deterministic request stream. Each request targets one in-scope class
/// route and carries a value for every property of that class.
#[derive(Debug, Clone)]
pub struct RequestGenerator {
    config: GeneratorConfig,
    routes: Vec<(String, String)>,
    serial: String,
    rng: ChaCha8Rng,
    next_id: u64,
}

impl RequestGenerator {
    pub fn new(
        schema: &DeviceSchema,
        mapping: &ApiMapping,
        config: GeneratorConfig,
    ) -> Result<Self, HarnessError> {
        config.check()?;
        let mut routes = Vec::new();
        for c in &config.classes {
            let class = schema
                .class(c)
                .ok_or_else(|| HarnessError::InvalidConfig(format!("unknown class {c}")))?;
            let entry = mapping
                .entry_for_class(&class.name)
                .filter(|e| !e.dt_route.contains(crate::api::ELEMENT) && !e.many)
                .ok_or_else(|| {
                    HarnessError::InvalidConfig(format!("class {c} has no single-object route"))
                })?;
            routes.push((class.name.clone(), entry.dt_route.clone()));
        }
        let rng = derive_rng(config.seed, "requests");
        Ok(Self {
            config,
            routes,
            serial: mapping.serial.clone(),
            rng,
            next_id: 1,
        })
    }

    pub fn next(&mut self, schema: &DeviceSchema, sent_at: u64) -> RequestRecord {
        let (class, route) = self
            .routes
            .choose(&mut self.rng)
            .expect("routes checked non-empty")
            .clone();
        let def = schema.class(&class).expect("classes checked");
        let mut body = Map::new();
        for p in &def.properties {
            let valid = !self.rng.gen_bool(self.config.invalid_rate);
            body.insert(
                p.name.clone(),
                draw_value(schema, def, p, valid, &mut self.rng),
            );
        }
        let id = self.next_id;
        self.next_id += 1;
        RequestRecord {
            id,
            serial: self.serial.clone(),
            method: self.config.method,
            route,
            body: Value::Object(body),
            sent_at,
        }
    }
}

/// `generate_request` over a whole schedule of send times.
pub fn generate_requests(
    schema: &DeviceSchema,
    mapping: &ApiMapping,
    config: &GeneratorConfig,
    send_times: impl IntoIterator<Item = u64>,
) -> Result<Vec<RequestRecord>, HarnessError> {
    let mut g = RequestGenerator::new(schema, mapping, config.clone())?;
    Ok(send_times.into_iter().map(|t| g.next(schema, t)).collect())
}
