//! Reference device: answers the vendor routes the way the physical
//! dispenser does, with its own latencies, a fixed dispense busy window and
//! two injectable anomalies.
//!
//! * `quirk_rate`: an update whose body mixes valid and invalid fields is
//!   partially applied and acknowledged with 200.
//! * `unavailable_rate`: a request the device would accept is answered 503
//!   without being applied.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::api::{
    self, generate_routes, ApiError, ApiMapping, Backend, RequestRecord, ResponseRecord, OK,
    UNAVAILABLE,
};
use crate::behavior::{
    default_epoch, ops, DelayError, DelayProfile, OpDelay, RuntimeConfig, TwinRuntime,
};
use crate::instance::DeviceInstance;
use crate::model::DeviceSchema;
use crate::util::derive_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmulatorConfig {
    /// Response latency per operation class.
    pub latency: DelayProfile,
    pub quirk_rate: f64,
    pub unavailable_rate: f64,
    pub dispense_busy_ms: u64,
    pub seed: u64,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        Self {
            latency: DelayProfile::dispenser_default(),
            quirk_rate: 0.08,
            unavailable_rate: 0.08,
            dispense_busy_ms: 70_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmulatorError {
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("{name} must lie in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error(transparent)]
    Api(#[from] ApiError),
}

impl EmulatorConfig {
    pub fn check(&self) -> Result<(), EmulatorError> {
        self.latency.check()?;
        for (name, value) in [
            ("quirk_rate", self.quirk_rate),
            ("unavailable_rate", self.unavailable_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(EmulatorError::Probability { name, value });
            }
        }
        Ok(())
    }
}

/// One emulated device. Its state is a private copy of the instance; it
/// never shares anything with a twin.
#[derive(Debug, Clone)]
pub struct Emulator {
    config: EmulatorConfig,
    runtime: TwinRuntime,
    mapping: ApiMapping,
    schema: Arc<DeviceSchema>,
    rng: ChaCha8Rng,
}

impl Emulator {
    pub fn new(
        instance: DeviceInstance,
        schema: Arc<DeviceSchema>,
        config: EmulatorConfig,
    ) -> Result<Self, EmulatorError> {
        config.check()?;
        let mapping = generate_routes(&schema, &instance.serial)?;
        let mut profile = DelayProfile::dispenser_default();
        profile.set(ops::DISPENSE, OpDelay::constant(config.dispense_busy_ms));
        let rng = derive_rng(config.seed, &format!("emulator/{}", instance.serial));
        let runtime = TwinRuntime::new(
            instance,
            RuntimeConfig {
                profile,
                seed: config.seed,
                epoch: default_epoch(),
                ..Default::default()
            },
        );
        Ok(Self {
            config,
            runtime,
            mapping,
            schema,
            rng,
        })
    }

    pub fn serial(&self) -> &str {
        self.runtime.serial()
    }

    pub fn config(&self) -> &EmulatorConfig {
        &self.config
    }

    pub fn mapping(&self) -> &ApiMapping {
        &self.mapping
    }

    pub fn runtime(&self) -> &TwinRuntime {
        &self.runtime
    }

    pub fn runtime_mut(&mut self) -> &mut TwinRuntime {
        &mut self.runtime
    }

    /// Handles a request addressed to a vendor route (`/karie/{serial}/...`).
    pub fn emulate(&mut self, req: &RequestRecord) -> Result<ResponseRecord, ApiError> {
        let route = self.mapping.resolve_device(&req.route)?;
        if req.sent_at > self.runtime.now_ms() {
            self.runtime.run_until(req.sent_at);
        }
        let unavailable =
            self.config.unavailable_rate > 0.0 && self.rng.gen_bool(self.config.unavailable_rate);
        let backup = unavailable.then(|| self.runtime.instance().clone());
        let (rng, quirk_rate) = (&mut self.rng, self.config.quirk_rate);
        let mut partial = || quirk_rate > 0.0 && rng.gen_bool(quirk_rate);
        let mut applied = api::apply(
            &self.schema,
            &self.mapping,
            &route,
            req.method,
            &req.body,
            &mut self.runtime,
            &mut partial,
        );
        if let Some(before) = backup {
            if applied.status == OK {
                // Same latency class as the accepted request would have had.
                *self.runtime.instance_mut() = before;
                applied.status = UNAVAILABLE;
                applied.payload =
                    Err(serde_json::json!({ "message": "device temporarily unavailable" }));
            }
        }
        let latency = self.config.latency.sample(applied.op, &mut self.rng);
        Ok(ResponseRecord::new(
            req.id,
            applied.status,
            latency,
            applied.payload,
        ))
    }
}

impl Backend for Emulator {
    fn serial(&self) -> &str {
        Emulator::serial(self)
    }

    fn handle(&mut self, req: &RequestRecord) -> Result<ResponseRecord, ApiError> {
        self.emulate(req)
    }
}
