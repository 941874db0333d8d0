use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::schema::{ClassDef, DeviceSchema, PropertyDef, SemanticType};
use super::ModelError;
use crate::instance::{DeviceInstance, ObjectNode};

/// Violation id used for values outside their semantic type.
pub const TYPE_VIOLATION: &str = "TYPE";
/// Violation id used for association cardinalities outside their bounds.
pub const MULTIPLICITY_VIOLATION: &str = "MULTIPLICITY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property: Option<String>,
    /// Location within the instance, e.g. `medication_plans[0]`.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn ok() -> Self {
        Self::default()
    }

    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .violations
            .iter()
            .map(|v| v.constraint.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn extend(&mut self, other: ValidationResult) {
        self.violations.extend(other.violations);
    }
}

/// Checks that `value` belongs to the property's semantic type.
pub fn type_violation(
    schema: &DeviceSchema,
    class: &ClassDef,
    prop: &PropertyDef,
    value: &Value,
) -> Option<Violation> {
    let ok = match &prop.ty {
        SemanticType::Integer => value.as_i64().is_some(),
        SemanticType::Boolean => value.is_boolean(),
        SemanticType::Text => value.is_string(),
        SemanticType::Date => value
            .as_str()
            .is_some_and(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()),
        SemanticType::Time => value
            .as_str()
            .is_some_and(|s| NaiveTime::parse_from_str(s, "%H:%M").is_ok()),
        SemanticType::Enum(name) => match (value.as_str(), schema.enumeration(name)) {
            (Some(s), Some(e)) => e.literals.iter().any(|l| l == s),
            _ => false,
        },
    };
    (!ok).then(|| Violation {
        constraint: TYPE_VIOLATION.to_string(),
        class: class.name.clone(),
        property: Some(prop.name.clone()),
        path: String::new(),
        message: format!("{value} is not a valid {:?}", prop.ty),
    })
}

/// Declared defaults of a class, as the baseline for single-value checks.
pub fn default_slots(class: &ClassDef) -> BTreeMap<String, Value> {
    class
        .properties
        .iter()
        .filter_map(|p| p.default.clone().map(|d| (p.name.clone(), d)))
        .collect()
}

fn resolve<'s>(
    schema: &'s DeviceSchema,
    class: &str,
    property: &str,
) -> Result<(&'s ClassDef, &'s PropertyDef), ModelError> {
    let c = schema
        .class(class)
        .ok_or_else(|| ModelError::UnknownClass(class.to_string()))?;
    let p = c
        .property(property)
        .ok_or_else(|| ModelError::UnknownProperty {
            class: c.name.clone(),
            property: property.to_string(),
        })?;
    Ok((c, p))
}

/// Validates a single property value; other properties referenced by the
/// same constraints take their declared defaults.
pub fn validate_value(
    schema: &DeviceSchema,
    class: &str,
    property: &str,
    value: &Value,
) -> Result<ValidationResult, ModelError> {
    let c = schema
        .class(class)
        .ok_or_else(|| ModelError::UnknownClass(class.to_string()))?;
    validate_value_in(schema, class, &default_slots(c), property, value)
}

/// Like [`validate_value`], with the other properties taking the values in
/// `current`.
pub fn validate_value_in(
    schema: &DeviceSchema,
    class: &str,
    current: &BTreeMap<String, Value>,
    property: &str,
    value: &Value,
) -> Result<ValidationResult, ModelError> {
    let (c, p) = resolve(schema, class, property)?;
    let mut result = ValidationResult::ok();
    if let Some(v) = type_violation(schema, c, p, value) {
        result.violations.push(v);
        return Ok(result);
    }
    let lookup = |name: &str| {
        if name == property {
            Some(value)
        } else {
            current.get(name)
        }
    };
    for k in schema.constraints_for(c) {
        if !k.predicate.properties().contains(property) {
            continue;
        }
        if !k.predicate.evaluate(&lookup).unwrap_or(false) {
            result.violations.push(Violation {
                constraint: k.id.clone(),
                class: c.name.clone(),
                property: Some(property.to_string()),
                path: String::new(),
                message: format!("{}: {}", k.message, k.predicate),
            });
        }
    }
    Ok(result)
}

/// Type and constraint checks of a full slot map for one object.
/// Unknown slot names are structural errors.
pub fn validate_slots(
    schema: &DeviceSchema,
    class: &ClassDef,
    slots: &BTreeMap<String, Value>,
) -> Result<ValidationResult, ModelError> {
    let mut result = ValidationResult::ok();
    for (name, value) in slots {
        let p = class
            .property(name)
            .ok_or_else(|| ModelError::UnknownProperty {
                class: class.name.clone(),
                property: name.clone(),
            })?;
        if let Some(v) = type_violation(schema, class, p, value) {
            result.violations.push(v);
        }
    }
    let lookup = |name: &str| slots.get(name);
    for k in schema.constraints_for(class) {
        let mentions_bad_type = result.violations.iter().any(|v| {
            v.property
                .as_ref()
                .is_some_and(|p| k.predicate.properties().contains(p))
        });
        if mentions_bad_type {
            // Already reported as a type error on the same property.
            continue;
        }
        if !k.predicate.evaluate(&lookup).unwrap_or(false) {
            result.violations.push(Violation {
                constraint: k.id.clone(),
                class: class.name.clone(),
                property: k.predicate.properties().into_iter().next(),
                path: String::new(),
                message: format!("{}: {}", k.message, k.predicate),
            });
        }
    }
    Ok(result)
}

/// Validates every object of an instance and aggregates the violations.
pub fn validate_instance(
    schema: &DeviceSchema,
    instance: &DeviceInstance,
) -> Result<ValidationResult, ModelError> {
    if schema.class(&instance.root.class).map(|c| c.name.as_str())
        != Some(schema.root().name.as_str())
    {
        return Err(ModelError::StructuralMismatch(format!(
            "root object has class {}",
            instance.root.class
        )));
    }
    let mut result = ValidationResult::ok();
    validate_object(schema, &instance.root, "", &mut result)?;
    Ok(result)
}

fn validate_object(
    schema: &DeviceSchema,
    obj: &ObjectNode,
    path: &str,
    out: &mut ValidationResult,
) -> Result<(), ModelError> {
    let class = schema.class(&obj.class).ok_or_else(|| {
        ModelError::StructuralMismatch(format!("unknown class {} at `{path}`", obj.class))
    })?;
    let slots = validate_slots(schema, class, &obj.slots)
        .map_err(|e| ModelError::StructuralMismatch(format!("{e} at `{path}`")))?;
    out.violations
        .extend(slots.violations.into_iter().map(|mut v| {
            v.path = path.to_string();
            v
        }));
    for name in obj.children.keys() {
        if class.association(name).is_none() {
            return Err(ModelError::StructuralMismatch(format!(
                "unknown association {}.{name} at `{path}`",
                class.name
            )));
        }
    }
    for assoc in &class.associations {
        let kids = obj.children_of(&assoc.name);
        if !assoc.multiplicity.admits(kids.len()) {
            out.violations.push(Violation {
                constraint: MULTIPLICITY_VIOLATION.to_string(),
                class: class.name.clone(),
                property: Some(assoc.name.clone()),
                path: path.to_string(),
                message: format!("{} objects, expected {}", kids.len(), assoc.multiplicity),
            });
        }
        let target = schema.class(&assoc.target).expect("checked schema");
        for (i, k) in kids.iter().enumerate() {
            if schema.class(&k.class).map(|c| c.name.as_str()) != Some(target.name.as_str()) {
                return Err(ModelError::StructuralMismatch(format!(
                    "{} object under {}.{}",
                    k.class, class.name, assoc.name
                )));
            }
            let sub = if path.is_empty() {
                format!("{}[{i}]", assoc.name)
            } else {
                format!("{path}.{}[{i}]", assoc.name)
            };
            validate_object(schema, k, &sub, out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_dispenser_schema;
    use serde_json::json;

    fn check(class: &str, prop: &str, v: Value) -> Vec<String> {
        let s = builtin_dispenser_schema();
        validate_value(&s, class, prop, &v)
            .unwrap()
            .ids()
            .into_iter()
            .map(String::from)
            .collect()
    }

    #[test]
    fn constraint_examples() {
        assert_eq!(check("MedicationPlan", "period_days", json!(0)), ["C1"]);
        assert!(check("MedicationLine", "doses", json!(9)).is_empty());
        assert_eq!(
            check("Setting", "early_access_to_medication", json!(301)),
            ["C3"]
        );
    }

    #[test]
    fn unknown_names() {
        let s = builtin_dispenser_schema();
        assert!(matches!(
            validate_value(&s, "Toaster", "x", &json!(1)),
            Err(ModelError::UnknownClass(_))
        ));
        assert!(matches!(
            validate_value(&s, "Display", "contrast", &json!(1)),
            Err(ModelError::UnknownProperty { .. })
        ));
    }

    #[test]
    fn type_errors() {
        assert_eq!(
            check("Display", "brightness", json!("bright")),
            [TYPE_VIOLATION]
        );
        assert_eq!(
            check("Setting", "language", json!("Klingon")),
            [TYPE_VIOLATION]
        );
        assert_eq!(
            check("IntakeTime", "time", json!("25:00")),
            [TYPE_VIOLATION]
        );
        assert_eq!(
            check("MedicationPlan", "first_dose_date", json!("2024-02-30")),
            [TYPE_VIOLATION]
        );
        assert!(check("IntakeTime", "time", json!("19:00")).is_empty());
    }

    #[test]
    fn structural_checks() {
        assert_eq!(check("Display", "brightness", json!(6)), ["S1"]);
        assert_eq!(check("Alarm", "repetitions", json!(-1)), ["S2"]);
        assert!(check("Alarm", "repetitions", json!(0)).is_empty());
    }
}
