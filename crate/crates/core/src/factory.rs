//! Template generation (schema to JSON) and instance generation (filled JSON
//! to instance model), including fleets of uniquely serialized twins.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde_json::{json, Map, Value};

use crate::instance::{DeviceInstance, ObjectNode};
use crate::model::{validate_slots, ClassDef, DeviceSchema, ModelError, SemanticType, Violation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactoryError {
    #[error("input is not valid JSON: {0}")]
    Parse(String),
    #[error("input does not match the schema: {0}")]
    Structure(String),
    #[error("association {path} has {found} objects, multiplicity is {expected}")]
    Multiplicity {
        path: String,
        found: usize,
        expected: String,
    },
    #[error("{} constraint violation(s): {}", .0.len(), summarize(.0))]
    ConstraintViolation(Vec<Violation>),
    #[error("duplicate serial `{0}`")]
    DuplicateSerial(String),
    #[error("serial numbers must be non-empty")]
    EmptySerial,
}

fn summarize(v: &[Violation]) -> String {
    let ids: BTreeSet<_> = v.iter().map(|v| v.constraint.as_str()).collect();
    ids.into_iter().collect::<Vec<_>>().join(", ")
}

impl From<ModelError> for FactoryError {
    fn from(e: ModelError) -> Self {
        FactoryError::Structure(e.to_string())
    }
}

/// Key of the root object in templates and filled inputs, e.g. `device`.
pub fn root_key(schema: &DeviceSchema) -> String {
    to_snake(&schema.root_class)
}

fn to_snake(name: &str) -> String {
    let mut out = String::new();
    for (i, ch) in name.chars().enumerate() {
        if ch.is_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.extend(ch.to_lowercase());
        } else {
            out.push(ch);
        }
    }
    out
}

/// Generates the JSON input template for a schema.
///
/// Starts at the root class; every containment association becomes a nested
/// object, or an array holding one exemplar element when the association is
/// multi-valued. Leaves carry declared defaults (enum leaves carry their
/// default literal).
pub fn generate_template(schema: &DeviceSchema) -> Value {
    let mut root = Map::new();
    root.insert(
        root_key(schema),
        template_object(schema, schema.root(), &mut Vec::new()),
    );
    Value::Object(root)
}

fn template_object(schema: &DeviceSchema, class: &ClassDef, stack: &mut Vec<String>) -> Value {
    let mut obj = Map::new();
    for p in &class.properties {
        let leaf = match (&p.default, &p.ty) {
            (Some(d), _) => d.clone(),
            (None, SemanticType::Enum(e)) => {
                json!(schema.enumeration(e).map(|e| e.literals[0].clone()))
            }
            (None, _) => Value::Null,
        };
        obj.insert(p.name.clone(), leaf);
    }
    stack.push(class.name.clone());
    for a in class.associations.iter().filter(|a| a.containment) {
        let target = schema.class(&a.target).expect("checked schema");
        if stack.contains(&target.name) {
            // Recursive containment: stop at an empty collection.
            obj.insert(a.name.clone(), json!([]));
            continue;
        }
        let child = template_object(schema, target, stack);
        obj.insert(
            a.name.clone(),
            if a.multiplicity.is_many() {
                json!([child])
            } else {
                child
            },
        );
    }
    stack.pop();
    Value::Object(obj)
}

/// Sidecar document describing every template leaf: type, default, enum
/// literals and the constraints that apply to it. Keyed by dotted path.
pub fn template_doc(schema: &DeviceSchema) -> Value {
    let mut doc = Map::new();
    doc_object(
        schema,
        schema.root(),
        &root_key(schema),
        &mut doc,
        &mut Vec::new(),
    );
    Value::Object(doc)
}

fn doc_object(
    schema: &DeviceSchema,
    class: &ClassDef,
    path: &str,
    doc: &mut Map<String, Value>,
    stack: &mut Vec<String>,
) {
    for p in &class.properties {
        let constraints: Vec<Value> = schema
            .constraints_for(class)
            .filter(|k| k.predicate.properties().contains(&p.name))
            .map(|k| json!({"id": k.id, "rule": k.predicate.to_string(), "message": k.message}))
            .collect();
        let mut entry = json!({
            "class": class.name,
            "type": p.ty,
            "default": p.default,
            "constraints": constraints,
        });
        if let SemanticType::Enum(e) = &p.ty {
            entry["literals"] = json!(schema.enumeration(e).map(|e| &e.literals));
        }
        doc.insert(format!("{path}.{}", p.name), entry);
    }
    stack.push(class.name.clone());
    for a in class.associations.iter().filter(|a| a.containment) {
        let target = schema.class(&a.target).expect("checked schema");
        if stack.contains(&target.name) {
            continue;
        }
        let sub = if a.multiplicity.is_many() {
            format!("{path}.{}[]", a.name)
        } else {
            format!("{path}.{}", a.name)
        };
        doc.insert(
            sub.clone(),
            json!({"class": target.name, "multiplicity": a.multiplicity.to_string()}),
        );
        doc_object(schema, target, &sub, doc, stack);
    }
    stack.pop();
}

/// Parses `text` and materializes it; see [`instantiate`].
pub fn instantiate_str(
    schema: &DeviceSchema,
    text: &str,
    serial: &str,
) -> Result<DeviceInstance, FactoryError> {
    let v: Value = serde_json::from_str(text).map_err(|e| FactoryError::Parse(e.to_string()))?;
    instantiate(schema, &v, serial)
}

/// Materializes a filled template into a valid instance.
///
/// Works depth-first from the root object. Properties absent from the input
/// take their defaults, absent mandatory associations get default objects.
/// Every value is checked against the schema's constraints; any violation
/// aborts creation and all violations are reported together.
pub fn instantiate(
    schema: &DeviceSchema,
    filled: &Value,
    serial: &str,
) -> Result<DeviceInstance, FactoryError> {
    if serial.is_empty() {
        return Err(FactoryError::EmptySerial);
    }
    let key = root_key(schema);
    let body = filled
        .get(&key)
        .ok_or_else(|| FactoryError::Structure(format!("missing root object `{key}`")))?;
    let mut violations = Vec::new();
    let mut root = build_object(schema, schema.root(), body, &key, &mut violations)?;
    if schema.root().property("number").is_some() {
        root.slots.insert("number".to_string(), json!(serial));
    }
    if !violations.is_empty() {
        return Err(FactoryError::ConstraintViolation(violations));
    }
    Ok(DeviceInstance {
        serial: serial.to_string(),
        root,
    })
}

/// Builds one object (and its contained subtree) from JSON.
pub fn build_object(
    schema: &DeviceSchema,
    class: &ClassDef,
    input: &Value,
    path: &str,
    violations: &mut Vec<Violation>,
) -> Result<ObjectNode, FactoryError> {
    let empty = Map::new();
    let fields = match input {
        Value::Object(m) => m,
        Value::Null => &empty,
        other => {
            return Err(FactoryError::Structure(format!(
                "`{path}` must be an object, got {other}"
            )))
        }
    };
    for k in fields.keys() {
        if class.property(k).is_none() && class.association(k).is_none() {
            return Err(FactoryError::Structure(format!(
                "`{path}` has unknown field `{k}` for class {}",
                class.name
            )));
        }
    }
    let mut node = ObjectNode::new(&class.name);
    for p in &class.properties {
        let value = match (fields.get(&p.name), &p.default) {
            (Some(v), _) => v.clone(),
            (None, Some(d)) => d.clone(),
            (None, None) => {
                return Err(FactoryError::Structure(format!(
                    "`{path}.{}` is required",
                    p.name
                )));
            }
        };
        node.slots.insert(p.name.clone(), value);
    }
    let result = validate_slots(schema, class, &node.slots)?;
    violations.extend(result.violations.into_iter().map(|mut v| {
        v.path = path.to_string();
        v
    }));

    for a in &class.associations {
        let target = schema.class(&a.target).expect("checked schema");
        let items: Vec<&Value> = match fields.get(&a.name) {
            None if a.multiplicity.lower == 0 => Vec::new(),
            None => vec![&Value::Null; a.multiplicity.lower as usize],
            Some(Value::Array(xs)) if a.multiplicity.is_many() => xs.iter().collect(),
            Some(v) if !a.multiplicity.is_many() && v.is_object() => vec![v],
            Some(v) => {
                let want = if a.multiplicity.is_many() {
                    "an array"
                } else {
                    "an object"
                };
                return Err(FactoryError::Structure(format!(
                    "`{path}.{}` must be {want}, got {v}",
                    a.name
                )));
            }
        };
        if !a.multiplicity.admits(items.len()) {
            return Err(FactoryError::Multiplicity {
                path: format!("{path}.{}", a.name),
                found: items.len(),
                expected: a.multiplicity.to_string(),
            });
        }
        let mut kids = Vec::with_capacity(items.len());
        for (i, item) in items.into_iter().enumerate() {
            let sub = if a.multiplicity.is_many() {
                format!("{path}.{}[{i}]", a.name)
            } else {
                format!("{path}.{}", a.name)
            };
            kids.push(build_object(schema, target, item, &sub, violations)?);
        }
        node.children.insert(a.name.clone(), kids);
    }
    Ok(node)
}

/// A set of independently owned twins and how long creating them took.
#[derive(Debug, Clone)]
pub struct Fleet {
    pub instances: Vec<DeviceInstance>,
    pub creation_time: Duration,
}

/// Serial numbers `"1"..="n"`.
pub fn sequential_serials(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

/// Creates one instance per serial from the same filled input.
pub fn create_fleet(
    schema: &DeviceSchema,
    filled: &Value,
    serials: &[String],
) -> Result<Fleet, FactoryError> {
    let started = Instant::now();
    let mut seen = BTreeSet::new();
    for s in serials {
        if s.is_empty() {
            return Err(FactoryError::EmptySerial);
        }
        if !seen.insert(s.as_str()) {
            return Err(FactoryError::DuplicateSerial(s.clone()));
        }
    }
    let Some(first) = serials.first() else {
        return Ok(Fleet {
            instances: Vec::new(),
            creation_time: started.elapsed(),
        });
    };
    let prototype = instantiate(schema, filled, first)?;
    let has_number = schema.root().property("number").is_some();
    let instances = serials
        .iter()
        .map(|s| {
            let mut inst = prototype.clone();
            inst.serial = s.clone();
            if has_number {
                inst.root.slots.insert("number".to_string(), json!(s));
            }
            inst
        })
        .collect();
    let creation_time = started.elapsed();
    log::info!(
        "created {} twins in {:.3}s",
        serials.len(),
        creation_time.as_secs_f64()
    );
    Ok(Fleet {
        instances,
        creation_time,
    })
}

/// Filled input used by examples and experiments: one 14-day plan with
/// intakes at 09:00, 13:00 and 19:00.
pub fn sample_filled_input(schema: &DeviceSchema) -> Value {
    let mut t = generate_template(schema);
    let key = root_key(schema);
    if let Some(plans) = t[&key]
        .get_mut("medication_plans")
        .and_then(Value::as_array_mut)
    {
        if let Some(plan) = plans.first_mut() {
            plan["period_days"] = json!(14);
            let line = plan["intake_times"][0]["medicine_lines"][0].clone();
            plan["intake_times"] = json!(["09:00", "13:00", "19:00"]
                .iter()
                .map(|t| json!({"time": t, "medicine_lines": [line.clone()]}))
                .collect::<Vec<_>>());
        }
    }
    t
}

/// Count of objects per class in an instance.
pub fn class_census(inst: &DeviceInstance) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    inst.root.walk(&mut Vec::new(), &mut |_, o| {
        *out.entry(o.class.clone()).or_insert(0) += 1
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_dispenser_schema, root_only_schema, validate_instance};

    #[test]
    fn template_key_paths() {
        let t = generate_template(&builtin_dispenser_schema());
        assert_eq!(t["device"]["settings"]["alarm"]["melody"], json!("M1"));
        assert_eq!(t["device"]["settings"]["display"]["brightness"], json!(3));
        assert_eq!(
            t["device"]["medication_plans"][0]["intake_times"][0]["medicine_lines"][0]["doses"],
            json!(1)
        );
    }

    #[test]
    fn root_only_template_is_flat() {
        let t = generate_template(&root_only_schema());
        let dev = t["device"].as_object().unwrap();
        assert!(dev.values().all(|v| !v.is_object() && !v.is_array()));
    }

    #[test]
    fn defaults_round_trip() {
        let s = builtin_dispenser_schema();
        let inst = instantiate(&s, &generate_template(&s), "1").unwrap();
        assert!(validate_instance(&s, &inst).unwrap().is_ok());
        assert_eq!(inst.root.slot_str("number"), Some("1"));
    }

    #[test]
    fn three_intake_times() {
        let s = builtin_dispenser_schema();
        let inst = instantiate(&s, &sample_filled_input(&s), "1").unwrap();
        let plan = &inst.medication_plans()[0];
        assert_eq!(plan.slot_i64("period_days"), Some(14));
        let times: Vec<_> = plan
            .children_of("intake_times")
            .iter()
            .map(|t| t.slot_str("time").unwrap())
            .collect();
        assert_eq!(times, ["09:00", "13:00", "19:00"]);
    }

    #[test]
    fn doses_ten_is_rejected() {
        let s = builtin_dispenser_schema();
        let mut t = generate_template(&s);
        t["device"]["medication_plans"][0]["intake_times"][0]["medicine_lines"][0]["doses"] =
            json!(10);
        match instantiate(&s, &t, "1") {
            Err(FactoryError::ConstraintViolation(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].constraint, "C2");
                assert_eq!(
                    v[0].path,
                    "device.medication_plans[0].intake_times[0].medicine_lines[0]"
                );
            }
            other => panic!("expected C2 violation, got {other:?}"),
        }
    }

    #[test]
    fn empty_plans_allowed() {
        let s = builtin_dispenser_schema();
        let mut t = generate_template(&s);
        t["device"]["medication_plans"] = json!([]);
        assert!(instantiate(&s, &t, "1")
            .unwrap()
            .medication_plans()
            .is_empty());
    }

    #[test]
    fn multiplicity_error() {
        let s = builtin_dispenser_schema();
        let mut t = generate_template(&s);
        t["device"]["medication_plans"][0]["intake_times"] = json!([]);
        assert!(matches!(
            instantiate(&s, &t, "1"),
            Err(FactoryError::Multiplicity { .. })
        ));
    }

    #[test]
    fn parse_and_structure_errors() {
        let s = builtin_dispenser_schema();
        assert!(matches!(
            instantiate_str(&s, "{not json", "1"),
            Err(FactoryError::Parse(_))
        ));
        assert!(matches!(
            instantiate_str(&s, r#"{"device": {"colour": 1}}"#, "1"),
            Err(FactoryError::Structure(_))
        ));
        assert!(matches!(
            instantiate(&s, &generate_template(&s), ""),
            Err(FactoryError::EmptySerial)
        ));
    }

    #[test]
    fn fleet_serials() {
        let s = builtin_dispenser_schema();
        let t = generate_template(&s);
        let one = create_fleet(&s, &t, &["100".to_string()]).unwrap();
        assert_eq!(one.instances[0].serial, "100");
        let dup = create_fleet(&s, &t, &["7".to_string(), "7".to_string()]);
        assert_eq!(dup.unwrap_err(), FactoryError::DuplicateSerial("7".into()));
    }

    #[test]
    fn doc_lists_ranges() {
        let doc = template_doc(&builtin_dispenser_schema());
        let e = &doc["device.medication_plans[].period_days"];
        assert_eq!(e["constraints"][0]["id"], json!("C1"));
        assert_eq!(
            doc["device.status"]["literals"].as_array().unwrap().len(),
            4
        );
    }
}
