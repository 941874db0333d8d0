use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use dtwin_core::api::{serve, Backend, HttpClient, ServerOptions, Twin};
use dtwin_core::behavior::{RuntimeConfig, TwinRuntime};
use dtwin_core::emulator::{Emulator, EmulatorConfig};
use dtwin_core::factory::{
    create_fleet, generate_template, instantiate, instantiate_str, sample_filled_input,
    sequential_serials, template_doc,
};
use dtwin_core::fidelity::{batch_report, report, AlignmentConfig, RunPair};
use dtwin_core::harness::{
    run, Endpoint, Experiment, GeneratorConfig, HttpEndpoint, RunOutput, RunPlan, Trace,
};
use dtwin_core::{builtin_dispenser_schema, DeviceSchema};

use crate::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        let kind = match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Runtime(_) => "runtime",
        };
        json!({ "error": kind, "message": self.to_string() })
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(v).map_err(runtime)?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Settings read from `--config`; every section is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    emulator: Option<EmulatorConfig>,
    generator: Option<GeneratorConfig>,
    alignment: Option<AlignmentConfig>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn filled_input(schema: &DeviceSchema, input: Option<&Path>) -> Result<Value, CliError> {
    match input {
        Some(p) => serde_json::from_str(&read(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
        None => Ok(sample_filled_input(schema)),
    }
}

fn positive(name: &str, n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage(format!("--{name} must be at least 1")));
    }
    Ok(())
}

fn probability(name: &str, p: Option<f64>) -> Result<(), CliError> {
    match p {
        Some(p) if !(0.0..=1.0).contains(&p) => Err(CliError::Usage(format!(
            "--{name} must lie in [0, 1], got {p}"
        ))),
        _ => Ok(()),
    }
}

fn acceleration(a: f64) -> Result<f64, CliError> {
    if !(a > 0.0) {
        return Err(CliError::Usage(format!(
            "--acceleration must be positive, got {a}"
        )));
    }
    Ok(a)
}

pub fn execute(cli: Cli) -> Result<Value, CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    let schema = Arc::new(builtin_dispenser_schema());
    match cli.command {
        Command::Schema { out } => match out {
            Some(path) => {
                write_json(&path, &*schema)?;
                Ok(json!({ "schema": path }))
            }
            None => serde_json::to_value(&*schema).map_err(runtime),
        },
        Command::Template { out } => {
            write_json(&out, &generate_template(&schema))?;
            let doc = out.with_extension("doc.json");
            write_json(&doc, &template_doc(&schema))?;
            Ok(json!({ "template": out, "doc": doc }))
        }
        Command::Fleet { input, count, out } => fleet(&schema, &input, count, &out),
        Command::Serve {
            input,
            count,
            bind,
            seed,
            acceleration: accel,
        } => {
            positive("count", count)?;
            let accel = acceleration(accel)?;
            let filled = filled_input(&schema, Some(&input))?;
            let fleet =
                create_fleet(&schema, &filled, &sequential_serials(count)).map_err(runtime)?;
            let backends = fleet
                .instances
                .into_iter()
                .map(|inst| {
                    let rt = TwinRuntime::new(
                        inst,
                        RuntimeConfig {
                            seed,
                            ..Default::default()
                        },
                    );
                    Twin::new(rt, Arc::clone(&schema)).map(|t| Box::new(t) as Box<dyn Backend>)
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(runtime)?;
            let server = serve(
                backends,
                &bind,
                ServerOptions {
                    acceleration: accel,
                },
            )
            .map_err(runtime)?;
            println!(
                "{}",
                json!({ "listening": server.base_url(), "twins": count })
            );
            server.wait();
            Ok(json!({ "stopped": true }))
        }
        Command::Emulate {
            input,
            serial,
            bind,
            seed,
            quirk_rate,
            unavailable_rate,
            acceleration: accel,
        } => {
            probability("quirk-rate", quirk_rate)?;
            probability("unavailable-rate", unavailable_rate)?;
            let accel = acceleration(accel)?;
            let mut ecfg = cfg.emulator.unwrap_or_default();
            ecfg.seed = seed.unwrap_or(ecfg.seed);
            ecfg.quirk_rate = quirk_rate.unwrap_or(ecfg.quirk_rate);
            ecfg.unavailable_rate = unavailable_rate.unwrap_or(ecfg.unavailable_rate);
            let filled = filled_input(&schema, Some(&input))?;
            let inst = instantiate(&schema, &filled, &serial).map_err(runtime)?;
            let emu = Emulator::new(inst, Arc::clone(&schema), ecfg).map_err(runtime)?;
            let server = serve(
                vec![Box::new(emu)],
                &bind,
                ServerOptions {
                    acceleration: accel,
                },
            )
            .map_err(runtime)?;
            println!(
                "{}",
                json!({ "listening": server.base_url(), "serial": serial })
            );
            server.wait();
            Ok(json!({ "stopped": true }))
        }
        Command::Run {
            input,
            hours,
            rate,
            seed,
            invalid_rate,
            allow_nonstandard,
            serial,
            twin_url,
            device_url,
            acceleration: accel,
            out,
        } => {
            probability("invalid-rate", invalid_rate)?;
            let accel = accel.map(acceleration).transpose()?;
            let plan = match rate {
                Some(r) => RunPlan::new(hours, r, allow_nonstandard),
                None => RunPlan::standard(hours),
            }
            .map_err(|e| CliError::Usage(e.to_string()))?;
            let mut e = experiment(&schema, input.as_deref(), seed, &cfg)?;
            e.serial = serial;
            if let Some(r) = invalid_rate {
                e.generator.invalid_rate = r;
            }
            let output = match (twin_url, device_url) {
                (None, None) if accel.is_none() => e.run(&plan).map_err(runtime)?,
                (twin_url, device_url) => {
                    let mapping = e.mapping().map_err(runtime)?;
                    let client = HttpClient::new(Duration::from_secs(30));
                    let mut twin: Box<dyn Endpoint> = match twin_url {
                        Some(url) => Box::new(HttpEndpoint {
                            client: client.clone(),
                            base_url: url,
                            vendor_mapping: None,
                        }),
                        None => Box::new(e.twin(&e.serial).map_err(runtime)?),
                    };
                    let mut device: Box<dyn Endpoint> = match device_url {
                        Some(url) => Box::new(HttpEndpoint {
                            client,
                            base_url: url,
                            vendor_mapping: Some(mapping.clone()),
                        }),
                        None => Box::new(e.emulator().map_err(runtime)?),
                    };
                    run(
                        &schema,
                        &mapping,
                        &plan,
                        &e.generator,
                        twin.as_mut(),
                        device.as_mut(),
                        accel,
                    )
                    .map_err(runtime)?
                }
            };
            output.save(&out).map_err(runtime)?;
            Ok(json!({
                "out": out,
                "hours": plan.hours,
                "rate": plan.rate,
                "requests": output.corpus.len(),
                "partial": output.twin.is_partial() || output.emulator.is_partial(),
            }))
        }
        Command::Batch {
            corpus,
            sizes,
            input,
            seed,
            out,
        } => {
            if sizes.is_empty() {
                return Err(CliError::Usage("--sizes is empty".into()));
            }
            for &n in &sizes {
                positive("sizes", n)?;
            }
            let run_out = RunOutput::load(&corpus).map_err(runtime)?;
            let e = experiment(&schema, input.as_deref(), seed, &cfg)?;
            for &size in &sizes {
                let dir = out.join(format!("size-{size}"));
                std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                for (serial, trace) in e.replay_fleet(&run_out.corpus, size).map_err(runtime)? {
                    trace
                        .write_jsonl(&dir.join(format!("{serial}.jsonl")))
                        .map_err(runtime)?;
                }
                log::info!("replayed {} requests on {size} twins", run_out.corpus.len());
            }
            Ok(json!({ "out": out, "sizes": sizes, "requests": run_out.corpus.len() }))
        }
        Command::Fidelity {
            pairs,
            batch,
            tolerance_ms,
            out,
        } => {
            let mut acfg = cfg.alignment.unwrap_or_default();
            acfg.tolerance_ms = tolerance_ms.unwrap_or(acfg.tolerance_ms);
            acfg.check().map_err(|e| CliError::Usage(e.to_string()))?;
            fidelity(&pairs, batch.as_deref(), &acfg, out)
        }
    }
}

fn experiment(
    schema: &Arc<DeviceSchema>,
    input: Option<&Path>,
    seed: Option<u64>,
    cfg: &FileConfig,
) -> Result<Experiment, CliError> {
    let filled = filled_input(schema, input)?;
    let mut e = Experiment::new(Arc::clone(schema), filled, 0);
    if let Some(g) = &cfg.generator {
        e.generator = g.clone();
    }
    if let Some(em) = &cfg.emulator {
        e.emulator = em.clone();
    }
    if let Some(seed) = seed {
        e.runtime.seed = seed;
        e.generator.seed = seed;
        e.emulator.seed = seed;
    }
    e.generator
        .check()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    e.emulator
        .check()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    // Fail early on an input that does not instantiate.
    e.twin(&e.serial).map_err(runtime)?;
    Ok(e)
}

fn fleet(schema: &DeviceSchema, input: &Path, count: usize, out: &Path) -> Result<Value, CliError> {
    positive("count", count)?;
    let text = read(input)?;
    // Parse and validate once before copying the input `count` times.
    instantiate_str(schema, &text, "1").map_err(runtime)?;
    let filled: Value = serde_json::from_str(&text).map_err(runtime)?;
    let fleet = create_fleet(schema, &filled, &sequential_serials(count)).map_err(runtime)?;
    let ms = fleet.creation_time.as_secs_f64() * 1_000.0;
    log::info!("created {count} instances in {ms:.2} ms");
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    for inst in &fleet.instances {
        write_json(&out.join(format!("{}.json", inst.serial)), inst)?;
    }
    Ok(json!({ "out": out, "count": count, "creation_ms": ms }))
}

/// `size-N` subdirectories of a batch directory, ordered by `N`.
fn batch_dirs(dir: &Path) -> Result<Vec<(usize, PathBuf)>, CliError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let size = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("size-"))
            .and_then(|n| n.parse().ok());
        if let Some(size) = size {
            out.push((size, path));
        }
    }
    out.sort();
    Ok(out)
}

fn batch_traces(dir: &Path) -> Result<Vec<Trace>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|f| Trace::read_jsonl(f).map_err(runtime))
        .collect()
}

fn fidelity(
    pairs: &[PathBuf],
    batch: Option<&Path>,
    cfg: &AlignmentConfig,
    out: Option<PathBuf>,
) -> Result<Value, CliError> {
    let runs = pairs
        .iter()
        .map(|p| RunOutput::load(p).map_err(runtime))
        .collect::<Result<Vec<_>, _>>()?;
    let mut batches = Vec::new();
    if let Some(dir) = batch {
        let device = &runs[0].emulator;
        for (size, sub) in batch_dirs(dir)? {
            let traces = batch_traces(&sub)?;
            batches.push(batch_report(size, device, &traces, cfg).map_err(runtime)?);
        }
        if batches.is_empty() {
            return Err(CliError::Usage(format!(
                "{}: no size-N directories",
                dir.display()
            )));
        }
    }
    let paired: Vec<RunPair<'_>> = runs
        .iter()
        .map(|r| RunPair {
            plan: &r.plan,
            twin: &r.twin,
            device: &r.emulator,
        })
        .collect();
    let rep = report(&paired, batches, cfg).map_err(runtime)?;
    let out = out.unwrap_or_else(|| pairs[0].clone());
    rep.write(&out).map_err(runtime)?;
    Ok(json!({
        "out": out,
        "similarity_time_pct": rep.mean.similarity_time_pct,
        "similarity_status_pct": rep.mean.similarity_status_pct,
        "runs": rep.runs,
        "batches": rep.batches,
    }))
}
