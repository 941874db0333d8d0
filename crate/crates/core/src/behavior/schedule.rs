use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use super::clock::VirtualClock;
use crate::instance::DeviceInstance;

/// One scheduled intake of one plan on one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntakeRef {
    pub plan_id: String,
    /// Index of the intake time within its plan.
    pub intake: usize,
    pub day: u32,
    pub at_ms: u64,
}

/// All intakes of all plans that fall at or after the clock epoch, ordered
/// by time (ties by plan order, then intake order).
pub fn intake_schedule(instance: &DeviceInstance, clock: &VirtualClock) -> Vec<IntakeRef> {
    let mut out = Vec::new();
    for plan in instance.medication_plans() {
        let Some(first) = plan
            .slot_str("first_dose_date")
            .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
        else {
            continue;
        };
        let days = plan.slot_i64("period_days").unwrap_or(0).max(0) as u32;
        let plan_id = plan.slot_str("id").unwrap_or_default().to_string();
        for (i, it) in plan.children_of("intake_times").iter().enumerate() {
            let Some(time) = it
                .slot_str("time")
                .and_then(|t| NaiveTime::parse_from_str(t, "%H:%M").ok())
            else {
                continue;
            };
            for day in 0..days {
                let at = (first + chrono::Days::new(day as u64)).and_time(time);
                if let Some(at_ms) = clock.offset_of(at) {
                    out.push(IntakeRef {
                        plan_id: plan_id.clone(),
                        intake: i,
                        day,
                        at_ms,
                    });
                }
            }
        }
    }
    out.sort_by_key(|r| r.at_ms);
    out
}
