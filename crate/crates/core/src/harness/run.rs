//! Request forking, rate-limited runs and batch replays.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::generator::{generate_requests, GeneratorConfig};
use super::trace::{read_jsonl, write_jsonl, Trace, TraceRecord};
use super::HarnessError;
use crate::api::{
    generate_routes, ApiError, ApiMapping, HttpClient, RequestRecord, ResponseRecord, Twin,
    UNAVAILABLE,
};
use crate::behavior::{RuntimeConfig, TwinRuntime, WallPacer};
use crate::emulator::{Emulator, EmulatorConfig};
use crate::factory::{create_fleet, instantiate, sequential_serials};
use crate::model::DeviceSchema;

/// Run durations the experiments are defined for, in virtual hours.
pub const STANDARD_HOURS: [u32; 6] = [1, 2, 4, 6, 8, 10];
pub const STANDARD_RATES: [u32; 2] = [20, 30];
pub const BATCH_SIZES: [usize; 10] = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100];

/// Something that answers requests: a twin, the emulator, or a remote
/// server.
pub trait Endpoint {
    fn send(&mut self, req: &RequestRecord) -> Result<ResponseRecord, ApiError>;
}

impl Endpoint for Twin {
    fn send(&mut self, req: &RequestRecord) -> Result<ResponseRecord, ApiError> {
        self.handle(req)
    }
}

impl Endpoint for Emulator {
    /// Takes twin routes and re-addresses them to the vendor routes.
    fn send(&mut self, req: &RequestRecord) -> Result<ResponseRecord, ApiError> {
        let route = self.mapping().to_device_route(&req.route)?;
        self.emulate(&RequestRecord {
            route,
            ..req.clone()
        })
    }
}

/// Remote device reached over HTTP. With a mapping, twin routes are
/// rewritten to vendor routes before sending.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    pub client: HttpClient,
    pub base_url: String,
    pub vendor_mapping: Option<ApiMapping>,
}

impl Endpoint for HttpEndpoint {
    fn send(&mut self, req: &RequestRecord) -> Result<ResponseRecord, ApiError> {
        let route = match &self.vendor_mapping {
            Some(m) => m.to_device_route(&req.route)?,
            None => req.route.clone(),
        };
        self.client.send(&self.base_url, &route, req)
    }
}

fn record(req: &RequestRecord, result: Result<ResponseRecord, ApiError>) -> TraceRecord {
    match result {
        Ok(r) => TraceRecord::from(&r),
        Err(e) => {
            log::warn!("request {} to {}: {e}", req.id, req.route);
            TraceRecord {
                id: req.id,
                response_time_ms: 0,
                status_code: UNAVAILABLE,
                synthetic: true,
            }
        }
    }
}

/// Sends the same request to both endpoints and records both answers. A
/// failed exchange becomes a synthetic 503 flagged in the record.
pub fn fork_and_record(
    req: &RequestRecord,
    twin: &mut dyn Endpoint,
    device: &mut dyn Endpoint,
) -> (TraceRecord, TraceRecord) {
    let a = record(req, twin.send(req));
    let b = record(req, device.send(req));
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub hours: u32,
    /// Requests per minute.
    pub rate: u32,
}

impl RunPlan {
    /// Standard plan: 30 requests per minute up to four hours, 20 beyond.
    pub fn standard(hours: u32) -> Result<Self, HarnessError> {
        let rate = if hours <= 4 { 30 } else { 20 };
        Self::new(hours, rate, false)
    }

    pub fn new(hours: u32, rate: u32, allow_nonstandard: bool) -> Result<Self, HarnessError> {
        if hours == 0 || rate == 0 {
            return Err(HarnessError::InvalidPlan(
                "hours and rate must be positive".into(),
            ));
        }
        if !allow_nonstandard && !STANDARD_HOURS.contains(&hours) {
            return Err(HarnessError::InvalidPlan(format!(
                "{hours} h is not one of {STANDARD_HOURS:?}"
            )));
        }
        if !allow_nonstandard && !STANDARD_RATES.contains(&rate) {
            return Err(HarnessError::InvalidPlan(format!(
                "{rate}/min is not one of {STANDARD_RATES:?}"
            )));
        }
        Ok(Self { hours, rate })
    }

    pub fn total_requests(&self) -> usize {
        (self.hours * 60 * self.rate) as usize
    }

    pub fn gap_ms(&self) -> u64 {
        60_000 / self.rate as u64
    }

    pub fn send_times(&self) -> impl Iterator<Item = u64> {
        let gap = self.gap_ms();
        (0..self.total_requests() as u64).map(move |i| i * gap)
    }
}

/// Client-side limiter in virtual time: slots at least `gap_ms` apart,
/// optionally paced against the wall clock.
#[derive(Debug)]
pub struct RateLimiter {
    gap_ms: u64,
    next_ms: u64,
    pacer: Option<WallPacer>,
}

impl RateLimiter {
    pub fn new(rate_per_min: u32, acceleration: Option<f64>) -> Self {
        Self {
            gap_ms: 60_000 / rate_per_min.max(1) as u64,
            next_ms: 0,
            pacer: acceleration.map(WallPacer::new),
        }
    }

    /// Virtual send time of the next request.
    pub fn acquire(&mut self) -> u64 {
        let t = self.next_ms;
        self.next_ms += self.gap_ms;
        if let Some(p) = &self.pacer {
            p.sleep_until(t);
        }
        t
    }
}

/// A paired run: the request corpus and both traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub plan: RunPlan,
    pub corpus: Vec<RequestRecord>,
    pub twin: Trace,
    pub emulator: Trace,
}

/// Issues `plan.rate` requests per virtual minute for `plan.hours`, each
/// forked to both endpoints. `acceleration` paces sends against the wall
/// clock; `None` runs as fast as possible.
pub fn run(
    schema: &DeviceSchema,
    mapping: &ApiMapping,
    plan: &RunPlan,
    generator: &GeneratorConfig,
    twin: &mut dyn Endpoint,
    device: &mut dyn Endpoint,
    acceleration: Option<f64>,
) -> Result<RunOutput, HarnessError> {
    let mut limiter = RateLimiter::new(plan.rate, acceleration);
    let corpus = generate_requests(schema, mapping, generator, plan.send_times())?;
    let (mut a, mut b) = (Trace::default(), Trace::default());
    for req in &corpus {
        let mut req = req.clone();
        req.sent_at = limiter.acquire();
        let (x, y) = fork_and_record(&req, twin, device);
        a.push(x);
        b.push(y);
    }
    Ok(RunOutput {
        plan: plan.clone(),
        corpus,
        twin: a,
        emulator: b,
    })
}

/// Everything needed to build a twin and an emulator from one filled
/// template.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub schema: Arc<DeviceSchema>,
    pub filled: Value,
    pub serial: String,
    pub runtime: RuntimeConfig,
    pub emulator: EmulatorConfig,
    pub generator: GeneratorConfig,
}

impl Experiment {
    /// Seeds the twin, the emulator and the generator from one seed.
    pub fn new(schema: Arc<DeviceSchema>, filled: Value, seed: u64) -> Self {
        Self {
            schema,
            filled,
            serial: "100".to_string(),
            runtime: RuntimeConfig {
                seed,
                ..Default::default()
            },
            emulator: EmulatorConfig {
                seed,
                ..Default::default()
            },
            generator: GeneratorConfig {
                seed,
                ..Default::default()
            },
        }
    }

    pub fn twin(&self, serial: &str) -> Result<Twin, HarnessError> {
        let inst = instantiate(&self.schema, &self.filled, serial)?;
        Ok(Twin::new(
            TwinRuntime::new(inst, self.runtime.clone()),
            Arc::clone(&self.schema),
        )?)
    }

    pub fn emulator(&self) -> Result<Emulator, HarnessError> {
        let inst = instantiate(&self.schema, &self.filled, &self.serial)?;
        Ok(Emulator::new(
            inst,
            Arc::clone(&self.schema),
            self.emulator.clone(),
        )?)
    }

    pub fn mapping(&self) -> Result<ApiMapping, HarnessError> {
        Ok(generate_routes(&self.schema, &self.serial)?)
    }

    /// One paired run against an in-process twin and emulator.
    pub fn run(&self, plan: &RunPlan) -> Result<RunOutput, HarnessError> {
        let mut twin = self.twin(&self.serial)?;
        let mut emu = self.emulator()?;
        run(
            &self.schema,
            &self.mapping()?,
            plan,
            &self.generator,
            &mut twin,
            &mut emu,
            None,
        )
    }

    /// Replays `corpus` against a fresh fleet of `size` twins in parallel.
    /// Each twin receives the corpus addressed to its own serial.
    pub fn replay_fleet(
        &self,
        corpus: &[RequestRecord],
        size: usize,
    ) -> Result<Vec<(String, Trace)>, HarnessError> {
        let fleet = create_fleet(&self.schema, &self.filled, &sequential_serials(size))?;
        let mut twins = fleet
            .instances
            .into_iter()
            .map(|inst| {
                Twin::new(
                    TwinRuntime::new(inst, self.runtime.clone()),
                    Arc::clone(&self.schema),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(twins
            .par_iter_mut()
            .map(|twin| {
                let serial = twin.serial().to_string();
                let trace = replay(corpus.iter().map(|r| retarget(r, &serial)), twin);
                (serial, trace)
            })
            .collect())
    }

    /// Batch mode: one fleet replay per size.
    pub fn batch(
        &self,
        corpus: &[RequestRecord],
        sizes: &[usize],
    ) -> Result<Vec<BatchRun>, HarnessError> {
        sizes
            .iter()
            .map(|&size| {
                Ok(BatchRun {
                    size,
                    traces: self.replay_fleet(corpus, size)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRun {
    pub size: usize,
    pub traces: Vec<(String, Trace)>,
}

/// Sends every request in order and records the answers.
pub fn replay(
    requests: impl IntoIterator<Item = RequestRecord>,
    endpoint: &mut dyn Endpoint,
) -> Trace {
    let mut t = Trace::default();
    for req in requests {
        let r = endpoint.send(&req);
        t.push(record(&req, r));
    }
    t
}

/// Readdresses a twin request to another serial.
pub fn retarget(req: &RequestRecord, serial: &str) -> RequestRecord {
    let mut segs: Vec<&str> = req.route.split('/').collect();
    // ["", "devices", serial, ...]
    if segs.len() > 2 {
        segs[2] = serial;
    }
    RequestRecord {
        serial: serial.to_string(),
        route: segs.join("/"),
        ..req.clone()
    }
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const TWIN_TRACE_FILE: &str = "twin.jsonl";
pub const EMULATOR_TRACE_FILE: &str = "emulator.jsonl";
pub const META_FILE: &str = "meta.json";

impl RunOutput {
    /// Writes the corpus, both traces and the plan into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        write_jsonl(&dir.join(CORPUS_FILE), &self.corpus)?;
        self.twin.write_jsonl(&dir.join(TWIN_TRACE_FILE))?;
        self.emulator.write_jsonl(&dir.join(EMULATOR_TRACE_FILE))?;
        let meta = serde_json::to_string_pretty(&self.plan)
            .map_err(|e| HarnessError::Parse(e.to_string()))?;
        std::fs::write(dir.join(META_FILE), meta + "\n").map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let meta = std::fs::read_to_string(dir.join(META_FILE))
            .map_err(|e| HarnessError::Io(format!("{}: {e}", dir.join(META_FILE).display())))?;
        let plan = serde_json::from_str(&meta).map_err(|e| HarnessError::Parse(e.to_string()))?;
        let out = Self {
            plan,
            corpus: read_jsonl(&dir.join(CORPUS_FILE))?,
            twin: Trace::read_jsonl(&dir.join(TWIN_TRACE_FILE))?,
            emulator: Trace::read_jsonl(&dir.join(EMULATOR_TRACE_FILE))?,
        };
        if out
            .twin
            .records
            .iter()
            .map(|r| r.id)
            .ne(out.emulator.records.iter().map(|r| r.id))
        {
            return Err(HarnessError::Parse(format!(
                "{}: traces are not paired",
                dir.display()
            )));
        }
        Ok(out)
    }
}
