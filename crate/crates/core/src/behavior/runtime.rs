use std::sync::Arc;

use chrono::NaiveDateTime;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::clock::{default_epoch, VirtualClock};
use super::delay::{ops, DelayProfile};
use super::machine::{BehaviorSpec, Guard, State, Transition};
use super::schedule::{intake_schedule, IntakeRef};
use crate::instance::{DeviceInstance, ObjectNode};
use crate::util::derive_rng;

const MAX_HOPS_PER_INSTANT: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BehaviorError {
    #[error("twin is shut down")]
    AlreadyShutdown,
    #[error("entry action failed: {0}")]
    ActionFailure(String),
    #[error("dispense requires state Dispense, twin is in {0:?}")]
    NotDispensing(State),
    #[error("a dispense is already in progress")]
    DispenseInProgress,
    #[error("intake does not belong to a loaded plan: {0}")]
    NoActivePlan(String),
}

/// Entry of the append-only event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time_ms: u64,
    pub state: State,
    pub event: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionOutcome {
    pub from: State,
    pub state: State,
    pub trigger: String,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispenseResult {
    /// Doses are removed from the rolls when the window closes.
    Dispensing {
        doses: i64,
        completes_at_ms: u64,
    },
    EmptyCartridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Availability {
    Available,
    Dispensing,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PendingDispense {
    intake: IntakeRef,
    started_ms: u64,
    ends_at_ms: u64,
}

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    pub profile: DelayProfile,
    pub seed: u64,
    pub epoch: NaiveDateTime,
    /// How often an idle twin re-checks for a medication plan.
    pub poll_interval_ms: u64,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            profile: DelayProfile::dispenser_default(),
            seed: 0,
            epoch: default_epoch(),
            poll_interval_ms: 60_000,
        }
    }
}

/// A running twin: an instance model driven by the dispenser state machine
/// on its own virtual clock.
///
/// A runtime is a single-threaded actor. Callers hand it one event at a time
/// (a step, a clock advance, an API request); it may move between threads
/// between events.
#[derive(Debug, Clone)]
pub struct TwinRuntime {
    instance: DeviceInstance,
    state: State,
    clock: VirtualClock,
    profile: DelayProfile,
    spec: Arc<BehaviorSpec>,
    rng: ChaCha8Rng,
    log: Vec<Event>,
    next_unhandled_ms: u64,
    pending: Option<PendingDispense>,
    shutdown_requested: bool,
    poll_interval_ms: u64,
    dispensed_doses: i64,
}

impl TwinRuntime {
    pub fn new(instance: DeviceInstance, config: RuntimeConfig) -> Self {
        Self::with_spec(instance, config, Arc::new(BehaviorSpec::dispenser()))
    }

    pub fn with_spec(
        instance: DeviceInstance,
        config: RuntimeConfig,
        spec: Arc<BehaviorSpec>,
    ) -> Self {
        let rng = derive_rng(config.seed, &instance.serial);
        Self {
            state: spec.initial,
            clock: VirtualClock::new(config.epoch),
            profile: config.profile,
            spec,
            rng,
            log: Vec::new(),
            next_unhandled_ms: 0,
            pending: None,
            shutdown_requested: false,
            poll_interval_ms: config.poll_interval_ms.max(1),
            dispensed_doses: 0,
            instance,
        }
    }

    pub fn serial(&self) -> &str {
        &self.instance.serial
    }

    pub fn instance(&self) -> &DeviceInstance {
        &self.instance
    }

    /// Mutable access for request handling. Callers must check
    /// [`availability`](Self::availability) first.
    pub(crate) fn instance_mut(&mut self) -> &mut DeviceInstance {
        &mut self.instance
    }

    pub fn state(&self) -> State {
        self.state
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn clock(&self) -> &VirtualClock {
        &self.clock
    }

    pub fn profile(&self) -> &DelayProfile {
        &self.profile
    }

    pub fn event_log(&self) -> &[Event] {
        &self.log
    }

    /// Total doses removed from rolls by completed dispenses.
    pub fn dispensed_doses(&self) -> i64 {
        self.dispensed_doses
    }

    pub fn availability(&self) -> Availability {
        match (self.state, &self.pending) {
            (State::Shutdown, _) => Availability::Shutdown,
            (_, Some(p)) if self.clock.now_ms() < p.ends_at_ms => Availability::Dispensing,
            _ => Availability::Available,
        }
    }

    /// Dispense window currently open, as `(start, end)` virtual ms.
    pub fn busy_window(&self) -> Option<(u64, u64)> {
        self.pending.as_ref().map(|p| (p.started_ms, p.ends_at_ms))
    }

    pub fn sample_delay(&mut self, op: &str) -> u64 {
        self.profile.sample(op, &mut self.rng)
    }

    pub fn record(&mut self, event: &str, detail: Value) {
        self.log.push(Event {
            time_ms: self.clock.now_ms(),
            state: self.state,
            event: event.to_string(),
            detail,
        });
    }

    /// Event log as JSON lines.
    pub fn event_log_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }

    /// Fires the first enabled transition out of the current state.
    pub fn step(&mut self) -> Result<TransitionOutcome, BehaviorError> {
        if self.state == State::Shutdown {
            return Err(BehaviorError::AlreadyShutdown);
        }
        let spec = Arc::clone(&self.spec);
        let chosen = spec
            .outgoing(self.state)
            .find(|t| self.guard_holds(t.guard))
            .cloned();
        match chosen {
            Some(t) => self.fire(&t),
            None => {
                let mark = self.log.len();
                self.record("stay", Value::Null);
                Ok(TransitionOutcome {
                    from: self.state,
                    state: self.state,
                    trigger: String::new(),
                    events: self.log[mark..].to_vec(),
                })
            }
        }
    }

    fn fire(&mut self, t: &Transition) -> Result<TransitionOutcome, BehaviorError> {
        let mark = self.log.len();
        let from = self.state;
        if t.to == from {
            self.record("stay", json!({ "trigger": t.trigger }));
        } else {
            self.state = t.to;
            if let Some(action) = self.spec.entry_actions.get(&t.to).copied() {
                if let Err(e) = action(self, t) {
                    self.state = from;
                    self.record(
                        "action_failed",
                        json!({ "target": t.to, "trigger": t.trigger, "error": e.to_string() }),
                    );
                    return Err(e);
                }
            }
            if from == State::Dispense && t.to != State::Shutdown {
                self.finish_dispense();
            }
            self.record(
                "transition",
                json!({ "from": from, "to": t.to, "trigger": t.trigger }),
            );
        }
        Ok(TransitionOutcome {
            from,
            state: self.state,
            trigger: t.trigger.clone(),
            events: self.log[mark..].to_vec(),
        })
    }

    fn guard_holds(&self, g: Guard) -> bool {
        let now = self.clock.now_ms();
        match g {
            Guard::Always => true,
            Guard::ShutdownRequested => self.shutdown_requested,
            Guard::HasActivePlan => {
                let from = now.max(self.next_unhandled_ms);
                self.schedule().iter().any(|i| i.at_ms >= from)
            }
            Guard::PlanCompleted => !self
                .schedule()
                .iter()
                .any(|i| i.at_ms >= self.next_unhandled_ms),
            Guard::IntakeDue => self
                .schedule()
                .iter()
                .any(|i| i.at_ms >= self.next_unhandled_ms && i.at_ms <= now),
            Guard::DispenseFinished => self.pending.as_ref().map_or(true, |p| now >= p.ends_at_ms),
        }
    }

    fn schedule(&self) -> Vec<IntakeRef> {
        intake_schedule(&self.instance, &self.clock)
    }

    /// Starts dispensing the doses of `intake`.
    ///
    /// An empty cartridge produces a notice and leaves the instance
    /// untouched. Otherwise the twin is busy for a sampled dispense delay and
    /// the doses leave the rolls when that window closes.
    pub fn dispense(&mut self, intake: &IntakeRef) -> Result<DispenseResult, BehaviorError> {
        if self.state != State::Dispense {
            return Err(BehaviorError::NotDispensing(self.state));
        }
        if self.pending.is_some() {
            return Err(BehaviorError::DispenseInProgress);
        }
        let lines = medicine_lines(&self.instance, intake).ok_or_else(|| {
            BehaviorError::NoActivePlan(format!("{}#{}", intake.plan_id, intake.intake))
        })?;
        if self.instance.cartridge_empty() {
            self.record(
                "empty_cartridge",
                json!({ "plan_id": intake.plan_id, "intake": intake.intake, "day": intake.day }),
            );
            return Ok(DispenseResult::EmptyCartridge);
        }
        let doses: i64 = lines.iter().map(line_take).sum();
        let now = self.clock.now_ms();
        let ends_at_ms = now + self.profile.sample(ops::DISPENSE, &mut self.rng);
        self.pending = Some(PendingDispense {
            intake: intake.clone(),
            started_ms: now,
            ends_at_ms,
        });
        self.record(
            "dispense_started",
            json!({ "plan_id": intake.plan_id, "intake": intake.intake, "day": intake.day, "doses": doses, "until_ms": ends_at_ms }),
        );
        Ok(DispenseResult::Dispensing {
            doses,
            completes_at_ms: ends_at_ms,
        })
    }

    fn finish_dispense(&mut self) {
        let Some(p) = self.pending.take() else { return };
        let mut doses = 0;
        if let Some(lines) = medicine_lines_mut(&mut self.instance, &p.intake) {
            for line in lines {
                let take = line_take(line);
                let roll = line.slot_i64("current_roll").unwrap_or(0);
                line.slots
                    .insert("current_roll".to_string(), json!(roll - take));
                doses += take;
            }
        }
        self.dispensed_doses += doses;
        self.record(
            "dispense_completed",
            json!({ "plan_id": p.intake.plan_id, "intake": p.intake.intake, "day": p.intake.day, "doses": doses }),
        );
    }

    /// Advances virtual time to `deadline_ms`, stepping the machine at every
    /// instant where something can change. Returns the events produced.
    pub fn run_until(&mut self, deadline_ms: u64) -> Vec<Event> {
        let mark = self.log.len();
        if deadline_ms < self.clock.now_ms() {
            return Vec::new();
        }
        // Bounds state changes within one instant so a cyclic spec cannot spin.
        let mut hops = 0;
        while self.state != State::Shutdown {
            let now = self.clock.now_ms();
            let wake = match self.step() {
                Ok(out) if out.from != out.state && hops < MAX_HOPS_PER_INSTANT => {
                    hops += 1;
                    continue;
                }
                Ok(_) if hops >= MAX_HOPS_PER_INSTANT => now + self.poll_interval_ms,
                Ok(_) => self.next_wake().max(now + 1),
                Err(_) => now + self.poll_interval_ms,
            };
            if wake > deadline_ms {
                break;
            }
            hops = 0;
            self.clock.advance_to(wake);
        }
        self.clock.advance_to(deadline_ms);
        self.log[mark..].to_vec()
    }

    fn next_wake(&self) -> u64 {
        let now = self.clock.now_ms();
        match self.state {
            State::Dispense => self.pending.as_ref().map_or(now, |p| p.ends_at_ms),
            State::CheckMedicationPlan => self
                .schedule()
                .iter()
                .map(|i| i.at_ms)
                .find(|&at| at >= self.next_unhandled_ms)
                .unwrap_or(now + self.poll_interval_ms),
            _ => now + self.poll_interval_ms,
        }
    }

    /// Moves the twin to Shutdown from any state. A dispense in progress is
    /// aborted without touching the rolls. Idempotent.
    pub fn shutdown(&mut self) {
        if self.state == State::Shutdown {
            return;
        }
        self.shutdown_requested = true;
        let spec = Arc::clone(&self.spec);
        let t = spec
            .outgoing(self.state)
            .find(|t| t.to == State::Shutdown)
            .cloned()
            .unwrap_or(Transition {
                from: self.state,
                to: State::Shutdown,
                guard: Guard::Always,
                trigger: "shutdown".into(),
            });
        if self.fire(&t).is_err() {
            self.state = State::Shutdown;
        }
    }
}

fn line_take(line: &ObjectNode) -> i64 {
    let doses = line.slot_i64("doses").unwrap_or(0).max(0);
    let roll = line.slot_i64("current_roll").unwrap_or(0).max(0);
    doses.min(roll)
}

fn find_plan<'a>(instance: &'a DeviceInstance, plan_id: &str) -> Option<&'a ObjectNode> {
    instance
        .medication_plans()
        .iter()
        .find(|p| p.slot_str("id") == Some(plan_id))
}

fn medicine_lines<'a>(
    instance: &'a DeviceInstance,
    intake: &IntakeRef,
) -> Option<&'a [ObjectNode]> {
    let plan = find_plan(instance, &intake.plan_id)?;
    Some(
        plan.children_of("intake_times")
            .get(intake.intake)?
            .children_of("medicine_lines"),
    )
}

fn medicine_lines_mut<'a>(
    instance: &'a mut DeviceInstance,
    intake: &IntakeRef,
) -> Option<&'a mut Vec<ObjectNode>> {
    let plan = instance
        .root
        .children
        .get_mut("medication_plans")?
        .iter_mut()
        .find(|p| p.slot_str("id") == Some(intake.plan_id.as_str()))?;
    plan.children
        .get_mut("intake_times")?
        .get_mut(intake.intake)?
        .children
        .get_mut("medicine_lines")
}

/// Entry actions of the dispenser machine.
pub(crate) mod actions {
    use super::*;

    pub fn enter_check(rt: &mut TwinRuntime, t: &Transition) -> Result<(), BehaviorError> {
        if t.from == State::LoadMedicationPlan {
            // Intakes that passed before the plan was loaded are not served.
            rt.next_unhandled_ms = rt.next_unhandled_ms.max(rt.clock.now_ms());
        }
        Ok(())
    }

    pub fn enter_dispense(rt: &mut TwinRuntime, _t: &Transition) -> Result<(), BehaviorError> {
        let now = rt.clock.now_ms();
        let mut due: Vec<IntakeRef> = rt
            .schedule()
            .into_iter()
            .filter(|i| i.at_ms >= rt.next_unhandled_ms && i.at_ms <= now)
            .collect();
        let Some(current) = due.pop() else {
            return Err(BehaviorError::NoActivePlan("no intake is due".into()));
        };
        // Dispenses are serialized; intakes overtaken by a later one are missed.
        for missed in due {
            rt.record("missed_intake", json!({ "plan_id": missed.plan_id, "intake": missed.intake, "day": missed.day, "at_ms": missed.at_ms }));
        }
        rt.next_unhandled_ms = current.at_ms + 1;
        rt.dispense(&current).map(|_| ())
    }

    pub fn enter_shutdown(rt: &mut TwinRuntime, _t: &Transition) -> Result<(), BehaviorError> {
        if let Some(p) = rt.pending.take() {
            rt.record("dispense_aborted", json!({ "plan_id": p.intake.plan_id, "intake": p.intake.intake, "day": p.intake.day }));
        }
        Ok(())
    }
}
