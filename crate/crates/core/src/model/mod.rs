//! Device domain model: classes, properties, associations, enumerations and
//! constraints, plus value and instance validation.
//!
//! The schema serializes to a JSON document with the top-level keys
//! `root_class`, `classes`, `enumerations` and `constraints`. Constraint
//! predicates are tagged trees (`{"op": "and", "args": [...]}`,
//! `{"op": "cmp", "lhs": {"prop": "doses"}, "cmp": "ge", "rhs": {"const": 0}}`).

mod builtin;
pub mod predicate;
mod schema;
mod validate;

pub use builtin::{builtin_dispenser_schema, root_only_schema};
pub use predicate::{CmpOp, Operand, Predicate};
pub use schema::{
    AssociationDef, ClassDef, ConstraintDef, DeviceSchema, EnumDef, Multiplicity, PropertyDef,
    SemanticType,
};
pub use validate::{
    default_slots, type_violation, validate_instance, validate_slots, validate_value,
    validate_value_in, ValidationResult, Violation, MULTIPLICITY_VIOLATION, TYPE_VIOLATION,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("class `{class}` has no property `{property}`")]
    UnknownProperty { class: String, property: String },
    #[error("instance does not match schema: {0}")]
    StructuralMismatch(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
}
