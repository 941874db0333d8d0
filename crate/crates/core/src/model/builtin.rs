//! The shipped medicine-dispenser domain model.

use super::predicate::{CmpOp, Predicate};
use super::schema::{
    AssociationDef, ClassDef, ConstraintDef, DeviceSchema, EnumDef, Multiplicity, PropertyDef,
    SemanticType,
};

use SemanticType::{Boolean, Date, Integer, Text, Time};

fn class(name: &str, properties: Vec<PropertyDef>, associations: Vec<AssociationDef>) -> ClassDef {
    ClassDef {
        name: name.to_string(),
        aliases: Vec::new(),
        properties,
        associations,
    }
}

fn contains(name: &str, target: &str, multiplicity: Multiplicity) -> AssociationDef {
    AssociationDef {
        name: name.to_string(),
        target: target.to_string(),
        multiplicity,
        containment: true,
    }
}

fn enumeration(name: &str, literals: &[&str]) -> EnumDef {
    EnumDef {
        name: name.to_string(),
        literals: literals.iter().map(|s| s.to_string()).collect(),
    }
}

fn constraint(id: &str, context: &str, predicate: Predicate, message: &str) -> ConstraintDef {
    ConstraintDef {
        id: id.to_string(),
        context: context.to_string(),
        predicate,
        message: message.to_string(),
    }
}

fn en(name: &str) -> SemanticType {
    SemanticType::Enum(name.to_string())
}

/// Schema of a smart medicine dispenser with constraints C1-C3 and the
/// structural range checks S1-S3 registered. Every default lies inside
/// every constraint.
pub fn builtin_dispenser_schema() -> DeviceSchema {
    let mut medication_line = class(
        "MedicationLine",
        vec![
            PropertyDef::new("medicine", Text, "Paracetamol 500mg"),
            PropertyDef::new("doses", Integer, 1),
            PropertyDef::new("current_roll", Integer, 28),
            PropertyDef::new("next_roll", Integer, 28),
        ],
        vec![],
    );
    medication_line.aliases.push("MedicineLine".to_string());

    let classes = vec![
        class(
            "Device",
            vec![
                PropertyDef::new("type", Text, "Karie"),
                PropertyDef::new("status", en("DeviceStatus"), "Good"),
                PropertyDef::new("number", Text, ""),
                PropertyDef::new("location", Text, "Oslo"),
                PropertyDef::new("note", Text, ""),
            ],
            vec![
                contains("cartridge", "Cartridge", Multiplicity::ONE),
                contains("medication_plans", "MedicationPlan", Multiplicity::MANY),
                contains("settings", "Setting", Multiplicity::ONE),
            ],
        ),
        class(
            "Cartridge",
            vec![PropertyDef::new("is_empty", Boolean, false)],
            vec![],
        ),
        class(
            "MedicationPlan",
            vec![
                PropertyDef::new("id", Text, "plan-1"),
                PropertyDef::new("first_dose_date", Date, "2024-01-01"),
                PropertyDef::new("period_days", Integer, 14),
            ],
            vec![contains(
                "intake_times",
                "IntakeTime",
                Multiplicity::ONE_OR_MORE,
            )],
        ),
        class(
            "IntakeTime",
            vec![PropertyDef::new("time", Time, "09:00")],
            vec![contains(
                "medicine_lines",
                "MedicationLine",
                Multiplicity::MANY,
            )],
        ),
        medication_line,
        class(
            "Setting",
            vec![
                PropertyDef::new("early_access_to_medication", Integer, 30),
                PropertyDef::new("language", en("Language"), "English"),
                PropertyDef::new("connection", en("ConnectionType"), "Wifi"),
            ],
            vec![
                contains("date_and_time", "DateAndTime", Multiplicity::ONE),
                contains("display", "Display", Multiplicity::ONE),
                contains("alarm", "Alarm", Multiplicity::ONE),
            ],
        ),
        class(
            "DateAndTime",
            vec![
                PropertyDef::new("time_zone", Text, "Europe/Oslo"),
                PropertyDef::new("use_24_hour", Boolean, true),
                PropertyDef::new("automatic", Boolean, true),
            ],
            vec![],
        ),
        class(
            "Display",
            vec![
                PropertyDef::new("brightness", Integer, 3),
                PropertyDef::new("sleep_mode", Boolean, false),
                PropertyDef::new("auto_brightness", Boolean, false),
            ],
            vec![],
        ),
        class(
            "Alarm",
            vec![
                PropertyDef::new("silent_mode", Boolean, false),
                PropertyDef::new("melody", en("Melody"), "M1"),
                PropertyDef::new("repetitions", Integer, 3),
                PropertyDef::new("volume", Integer, 5),
            ],
            vec![],
        ),
    ];

    let enumerations = vec![
        enumeration("DeviceStatus", &["Good", "Test", "Defect", "Scrapped"]),
        enumeration(
            "Language",
            &["English", "Norwegian", "Swedish", "Danish", "German"],
        ),
        enumeration("ConnectionType", &["Cellular", "Wifi"]),
        enumeration("Melody", &["M1", "M2", "M3", "M4", "M5"]),
    ];

    let constraints = vec![
        constraint(
            "C1",
            "MedicationPlan",
            Predicate::between("period_days", 1, 28),
            "range for the number of days of a medication plan",
        ),
        constraint(
            "C2",
            "MedicationLine",
            Predicate::between("doses", 0, 9),
            "range of allowed medicine doses",
        ),
        constraint(
            "C3",
            "Setting",
            Predicate::between("early_access_to_medication", 1, 300),
            "range for early access to medication",
        ),
        constraint(
            "S1",
            "Display",
            Predicate::between("brightness", 1, 5),
            "display brightness level",
        ),
        constraint(
            "S2",
            "Alarm",
            Predicate::cmp("repetitions", CmpOp::Ge, 0),
            "alarm repetitions cannot be negative",
        ),
        constraint(
            "S3",
            "Alarm",
            Predicate::between("volume", 0, 10),
            "alarm volume level",
        ),
    ];

    DeviceSchema::new("Device", classes, enumerations, constraints)
        .expect("builtin schema is well-formed")
}

/// A schema holding only a root `Device` class, useful for degenerate cases.
pub fn root_only_schema() -> DeviceSchema {
    DeviceSchema::new(
        "Device",
        vec![class(
            "Device",
            vec![
                PropertyDef::new("number", Text, ""),
                PropertyDef::new("note", Text, ""),
            ],
            vec![],
        )],
        vec![],
        vec![],
    )
    .expect("root-only schema is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_and_plan_period() {
        let s = builtin_dispenser_schema();
        assert_eq!(s.root_class, "Device");
        assert!(s
            .class("MedicationPlan")
            .unwrap()
            .property("period_days")
            .is_some());
    }

    #[test]
    fn device_status_literals() {
        let s = builtin_dispenser_schema();
        assert_eq!(
            s.enumeration("DeviceStatus").unwrap().literals,
            ["Good", "Test", "Defect", "Scrapped"]
        );
        assert_eq!(s.enumeration("Language").unwrap().literals.len(), 5);
        assert_eq!(
            s.enumeration("ConnectionType").unwrap().literals,
            ["Cellular", "Wifi"]
        );
    }

    #[test]
    fn c2_context_is_medication_line() {
        let s = builtin_dispenser_schema();
        let c2 = s.constraints.iter().find(|c| c.id == "C2").unwrap();
        assert_eq!(c2.context, "MedicationLine");
        // Reachable under the alias too.
        assert_eq!(s.class("MedicineLine").unwrap().name, "MedicationLine");
    }

    #[test]
    fn ships_three_dosing_constraints() {
        let s = builtin_dispenser_schema();
        let ids: Vec<_> = s
            .constraints
            .iter()
            .map(|c| c.id.as_str())
            .filter(|i| i.starts_with('C'))
            .collect();
        assert_eq!(ids, ["C1", "C2", "C3"]);
    }
}
