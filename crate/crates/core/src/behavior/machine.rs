//! Dispenser state machine definition.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::runtime::{BehaviorError, TwinRuntime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum State {
    Setup,
    LoadMedicationPlan,
    CheckMedicationPlan,
    Dispense,
    Shutdown,
}

impl State {
    pub const ALL: [State; 5] = [
        State::Setup,
        State::LoadMedicationPlan,
        State::CheckMedicationPlan,
        State::Dispense,
        State::Shutdown,
    ];
}

/// Conditions a transition can wait on. Evaluated against the runtime at the
/// current virtual time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Guard {
    Always,
    ShutdownRequested,
    /// Some loaded plan still has an intake at or after the current time.
    HasActivePlan,
    /// No plan has an intake left to serve.
    PlanCompleted,
    /// An unserved intake time has been reached.
    IntakeDue,
    /// The running dispense window, if any, has elapsed.
    DispenseFinished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: State,
    pub to: State,
    pub guard: Guard,
    pub trigger: String,
}

/// Entry action of a state. Runs when the state is entered through a
/// transition from a different state.
pub type EntryAction = fn(&mut TwinRuntime, &Transition) -> Result<(), BehaviorError>;

#[derive(Clone)]
pub struct BehaviorSpec {
    pub initial: State,
    pub final_states: BTreeSet<State>,
    /// Guards are tried in declaration order; the first satisfied one fires.
    pub transitions: Vec<Transition>,
    pub entry_actions: BTreeMap<State, EntryAction>,
}

impl std::fmt::Debug for BehaviorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BehaviorSpec")
            .field("initial", &self.initial)
            .field("final_states", &self.final_states)
            .field("transitions", &self.transitions)
            .field(
                "entry_actions",
                &self.entry_actions.keys().collect::<Vec<_>>(),
            )
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("state {0:?} cannot reach Shutdown")]
    ShutdownUnreachable(State),
    #[error("non-final state {0:?} has no outgoing transition")]
    Dead(State),
    #[error("initial state must not be final")]
    FinalInitial,
}

fn t(from: State, to: State, guard: Guard, trigger: &str) -> Transition {
    Transition {
        from,
        to,
        guard,
        trigger: trigger.to_string(),
    }
}

impl BehaviorSpec {
    /// The medicine dispenser machine: set up, load a plan (polling until
    /// one is available), wait for intake times, dispense, return to
    /// checking, go back to loading when the plan is done. Shutdown is
    /// possible from every state.
    pub fn dispenser() -> Self {
        use Guard::*;
        use State::*;
        let mut transitions: Vec<Transition> =
            [Setup, LoadMedicationPlan, CheckMedicationPlan, Dispense]
                .into_iter()
                .map(|s| t(s, Shutdown, ShutdownRequested, "shutdown"))
                .collect();
        transitions.extend([
            t(Setup, LoadMedicationPlan, Always, "setup_complete"),
            t(
                LoadMedicationPlan,
                CheckMedicationPlan,
                HasActivePlan,
                "plan_loaded",
            ),
            t(LoadMedicationPlan, LoadMedicationPlan, Always, "poll_plan"),
            t(
                CheckMedicationPlan,
                LoadMedicationPlan,
                PlanCompleted,
                "plan_completed",
            ),
            t(CheckMedicationPlan, Dispense, IntakeDue, "intake_time"),
            t(
                CheckMedicationPlan,
                CheckMedicationPlan,
                Always,
                "wait_for_intake",
            ),
            t(
                Dispense,
                CheckMedicationPlan,
                DispenseFinished,
                "dispense_finished",
            ),
            t(Dispense, Dispense, Always, "dispensing"),
        ]);
        let mut entry_actions: BTreeMap<State, EntryAction> = BTreeMap::new();
        entry_actions.insert(CheckMedicationPlan, super::runtime::actions::enter_check);
        entry_actions.insert(Dispense, super::runtime::actions::enter_dispense);
        entry_actions.insert(Shutdown, super::runtime::actions::enter_shutdown);
        Self {
            initial: Setup,
            final_states: BTreeSet::from([Shutdown]),
            transitions,
            entry_actions,
        }
    }

    pub fn outgoing(&self, from: State) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(move |t| t.from == from)
    }

    pub fn states(&self) -> BTreeSet<State> {
        let mut s: BTreeSet<State> = self
            .transitions
            .iter()
            .flat_map(|t| [t.from, t.to])
            .collect();
        s.insert(self.initial);
        s
    }

    /// Checks the structural invariants of the machine.
    pub fn check(&self) -> Result<(), SpecError> {
        if self.final_states.contains(&self.initial) {
            return Err(SpecError::FinalInitial);
        }
        for s in self.states() {
            if self.final_states.contains(&s) {
                continue;
            }
            if self.outgoing(s).next().is_none() {
                return Err(SpecError::Dead(s));
            }
            if !self.reaches(s, State::Shutdown) {
                return Err(SpecError::ShutdownUnreachable(s));
            }
        }
        Ok(())
    }

    fn reaches(&self, from: State, target: State) -> bool {
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(s) = queue.pop_front() {
            if s == target {
                return true;
            }
            for t in self.outgoing(s) {
                if seen.insert(t.to) {
                    queue.push_back(t.to);
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispenser_machine_is_well_formed() {
        let m = BehaviorSpec::dispenser();
        m.check().unwrap();
        assert_eq!(m.initial, State::Setup);
        assert_eq!(m.states().len(), 5);
        for s in State::ALL.iter().filter(|s| **s != State::Shutdown) {
            assert!(m
                .outgoing(*s)
                .any(|t| t.to == State::Shutdown && t.guard == Guard::ShutdownRequested));
        }
    }

    #[test]
    fn dead_state_detected() {
        let mut m = BehaviorSpec::dispenser();
        m.transitions.retain(|t| t.from != State::Dispense);
        // Dispense is still a target but has no way out.
        assert_eq!(m.check(), Err(SpecError::Dead(State::Dispense)));
    }

    #[test]
    fn shutdown_reachability_detected() {
        let mut m = BehaviorSpec::dispenser();
        m.transitions
            .retain(|t| !(t.from == State::Dispense && t.to == State::Shutdown));
        m.transitions
            .retain(|t| !(t.from == State::Dispense && t.to == State::CheckMedicationPlan));
        assert_eq!(
            m.check(),
            Err(SpecError::ShutdownUnreachable(State::Dispense))
        );
    }
}
