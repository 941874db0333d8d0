use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::predicate::Predicate;
use super::ModelError;

/// Value domain of a property.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "name")]
pub enum SemanticType {
    Integer,
    Boolean,
    Text,
    /// ISO-8601 calendar date, `YYYY-MM-DD`.
    Date,
    /// Time of day, `HH:MM`.
    Time,
    Enum(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: SemanticType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

impl PropertyDef {
    pub fn new(name: &str, ty: SemanticType, default: impl Into<Value>) -> Self {
        Self {
            name: name.to_string(),
            ty,
            default: Some(default.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Multiplicity {
    pub lower: u32,
    /// `None` is unbounded (`*`).
    pub upper: Option<u32>,
}

impl Multiplicity {
    pub const ONE: Multiplicity = Multiplicity {
        lower: 1,
        upper: Some(1),
    };
    pub const MANY: Multiplicity = Multiplicity {
        lower: 0,
        upper: None,
    };
    pub const ONE_OR_MORE: Multiplicity = Multiplicity {
        lower: 1,
        upper: None,
    };

    pub fn admits(&self, n: usize) -> bool {
        n >= self.lower as usize && self.upper.map_or(true, |u| n <= u as usize)
    }

    /// Multi-valued associations are rendered as JSON arrays.
    pub fn is_many(&self) -> bool {
        self.upper.map_or(true, |u| u > 1)
    }
}

impl std::fmt::Display for Multiplicity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.upper {
            Some(u) => write!(f, "{}..{}", self.lower, u),
            None => write!(f, "{}..*", self.lower),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationDef {
    pub name: String,
    pub target: String,
    pub multiplicity: Multiplicity,
    pub containment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDef {
    pub name: String,
    /// Alternative names the class is addressable by.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    pub properties: Vec<PropertyDef>,
    #[serde(default)]
    pub associations: Vec<AssociationDef>,
}

impl ClassDef {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            aliases: Vec::new(),
            properties: Vec::new(),
            associations: Vec::new(),
        }
    }

    pub fn property(&self, name: &str) -> Option<&PropertyDef> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn association(&self, name: &str) -> Option<&AssociationDef> {
        self.associations.iter().find(|a| a.name == name)
    }

    fn answers_to(&self, name: &str) -> bool {
        self.name == name || self.aliases.iter().any(|a| a == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumDef {
    pub name: String,
    pub literals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDef {
    pub id: String,
    pub context: String,
    pub predicate: Predicate,
    pub message: String,
}

/// The structural model of a device family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSchema {
    pub root_class: String,
    pub classes: Vec<ClassDef>,
    pub enumerations: Vec<EnumDef>,
    pub constraints: Vec<ConstraintDef>,
}

impl DeviceSchema {
    /// Builds a schema and checks its well-formedness invariants.
    pub fn new(
        root_class: &str,
        classes: Vec<ClassDef>,
        enumerations: Vec<EnumDef>,
        constraints: Vec<ConstraintDef>,
    ) -> Result<Self, ModelError> {
        let schema = Self {
            root_class: root_class.to_string(),
            classes,
            enumerations,
            constraints,
        };
        schema.check()?;
        Ok(schema)
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.iter().find(|c| c.answers_to(name))
    }

    pub fn root(&self) -> &ClassDef {
        self.class(&self.root_class)
            .expect("checked at construction")
    }

    pub fn enumeration(&self, name: &str) -> Option<&EnumDef> {
        self.enumerations.iter().find(|e| e.name == name)
    }

    pub fn constraints_for<'a>(
        &'a self,
        class: &'a ClassDef,
    ) -> impl Iterator<Item = &'a ConstraintDef> {
        self.constraints
            .iter()
            .filter(move |c| class.answers_to(&c.context))
    }

    /// Registers an additional constraint after construction.
    pub fn register_constraint(&mut self, constraint: ConstraintDef) -> Result<(), ModelError> {
        self.check_constraint(&constraint)?;
        if self.constraints.iter().any(|c| c.id == constraint.id) {
            return Err(ModelError::InvalidSchema(format!(
                "duplicate constraint id {}",
                constraint.id
            )));
        }
        self.constraints.push(constraint);
        Ok(())
    }

    fn check(&self) -> Result<(), ModelError> {
        let invalid = |m: String| Err(ModelError::InvalidSchema(m));
        let mut names = BTreeSet::new();
        for c in &self.classes {
            for n in std::iter::once(&c.name).chain(&c.aliases) {
                if !names.insert(n.as_str()) {
                    return invalid(format!("class name {n} declared twice"));
                }
            }
        }
        let roots = self
            .classes
            .iter()
            .filter(|c| c.answers_to(&self.root_class))
            .count();
        if roots != 1 {
            return invalid(format!(
                "expected exactly one root class {}, found {roots}",
                self.root_class
            ));
        }
        for e in &self.enumerations {
            let unique: BTreeSet<_> = e.literals.iter().collect();
            if e.literals.is_empty() || unique.len() != e.literals.len() {
                return invalid(format!(
                    "enumeration {} needs unique, non-empty literals",
                    e.name
                ));
            }
        }
        for c in &self.classes {
            let mut props = BTreeSet::new();
            for p in &c.properties {
                if !props.insert(&p.name) {
                    return invalid(format!("{}.{} declared twice", c.name, p.name));
                }
                if let SemanticType::Enum(e) = &p.ty {
                    if self.enumeration(e).is_none() {
                        return invalid(format!(
                            "{}.{} uses unknown enumeration {e}",
                            c.name, p.name
                        ));
                    }
                }
            }
            for a in &c.associations {
                if self.class(&a.target).is_none() {
                    return invalid(format!(
                        "association {}.{} targets unknown class {}",
                        c.name, a.name, a.target
                    ));
                }
                if let Some(u) = a.multiplicity.upper {
                    if u < a.multiplicity.lower {
                        return invalid(format!(
                            "association {}.{} has upper < lower",
                            c.name, a.name
                        ));
                    }
                }
                if props.contains(&a.name) {
                    return invalid(format!(
                        "{}.{} is both property and association",
                        c.name, a.name
                    ));
                }
            }
        }
        for k in &self.constraints {
            self.check_constraint(k)?;
        }
        Ok(())
    }

    fn check_constraint(&self, k: &ConstraintDef) -> Result<(), ModelError> {
        let class = self.class(&k.context).ok_or_else(|| {
            ModelError::InvalidSchema(format!(
                "constraint {} has unknown context {}",
                k.id, k.context
            ))
        })?;
        for p in k.predicate.properties() {
            if class.property(&p).is_none() {
                return Err(ModelError::InvalidSchema(format!(
                    "constraint {} references unknown property {}.{p}",
                    k.id, class.name
                )));
            }
        }
        Ok(())
    }
}
