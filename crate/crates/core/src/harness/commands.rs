//! The command-line subcommands as library functions.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{run_scenario, ScenarioFile, ScenarioKind};
use crate::community::{read_event_log, write_event_log, CommunityConfig, CommunityState, Intervention};
use crate::error::{Error, Result};
use crate::inference::{fit_gibbs, heldout_log_loss, FitConfig, FitResult};
use crate::predictive::PredictiveRecord;
use crate::speaker::MemberId;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

/// Simulation document: a community plus the run plan.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub community: CommunityConfig,
    /// Total steps of the run.
    pub steps: u64,
    /// Declarations keyed by absolute step.
    pub interventions: Vec<Intervention>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        text: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Advances `c` to `target` steps, applying each intervention before the
/// step it names. Interventions at the run's final step apply only once the
/// run reaches it, so split runs match uninterrupted ones.
pub fn advance(c: &mut CommunityState<f64>, target: u64, total: u64, interventions: &[Intervention]) -> Result<()> {
    if let Some(bad) = interventions.iter().find(|i| i.step > total) {
        return Err(Error::Validation(format!(
            "intervention scheduled at step {} but the run has {total} steps",
            bad.step
        )));
    }
    if target > total {
        return Err(Error::Validation(format!("cannot run to step {target}: the run has {total} steps")));
    }
    // a state already at the final step has had its final declarations
    let finish = target == total && (c.steps() < target || c.clock() == 0);
    for k in c.steps()..=target {
        for i in interventions.iter().filter(|i| i.step == k && (k < target || finish)) {
            let forms: Vec<_> = i.forms.iter().map(|d| (d.form.clone(), d.weight)).collect();
            c.declare(i.declarer, &forms)?;
        }
        if k < target {
            c.step()?;
        }
    }
    Ok(())
}

pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    /// Stop after this many total steps instead of the configured count.
    pub until: Option<u64>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// Writes the event log and a snapshot into `out`.
pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let plan: SimulateConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => SimulateConfig::default(),
    };
    let mut c = match &args.resume {
        Some(snap) => {
            let c = CommunityState::<f64>::load_snapshot(open(snap)?)?;
            let expected = CommunityConfig {
                seed: c.config().seed,
                ..plan.community.clone()
            };
            if args.config.is_some() && *c.config() != expected {
                return Err(Error::Validation("snapshot community does not match the config".into()));
            }
            c
        }
        None => {
            let mut cfg = plan.community.clone();
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            CommunityState::new(cfg)?
        }
    };
    let target = args.until.unwrap_or(plan.steps);
    let total = plan.steps.max(target);
    advance(&mut c, target, total, &plan.interventions)?;

    fs::create_dir_all(&args.out)?;
    let mut events = create(&args.out.join(EVENTS_FILE))?;
    write_event_log(c.log(), &mut events)?;
    events.flush()?;
    let mut snap = create(&args.out.join(SNAPSHOT_FILE))?;
    c.save_snapshot(&mut snap)?;
    snap.flush()?;
    Ok(())
}

pub struct FitArgs {
    pub events: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let mut cfg: FitConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => FitConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let log = read_event_log(open(&args.events)?)?;
    let result = fit_gibbs::<f64>(&log, &cfg)?;
    let mut out = create(&args.out)?;
    result.write(&mut out)?;
    out.flush()?;
    Ok(())
}

fn emit<W: Write>(out: Option<&Path>, stdout: W, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            let mut f = create(p)?;
            f.write_all(text.as_bytes())?;
            f.flush()?;
        }
        None => {
            let mut w = stdout;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
    }
    Ok(())
}

pub struct PredictArgs {
    pub fit: PathBuf,
    pub speaker: u32,
    pub referent: u32,
    pub out: Option<PathBuf>,
}

/// Prints the averaged predictive for a pair, as JSON.
pub fn predict<W: Write>(args: &PredictArgs, stdout: W) -> Result<()> {
    let fit = FitResult::<f64>::read(open(&args.fit)?)?;
    let pred = fit.predict_next(MemberId(args.speaker), MemberId(args.referent));
    let text = serde_json::to_string_pretty(&PredictiveRecord::from(&pred)).map_err(std::io::Error::from)? + "\n";
    emit(args.out.as_deref(), stdout, &text)
}

pub struct EvalArgs {
    pub fit: PathBuf,
    pub heldout: PathBuf,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub heldout_loss: f64,
    pub events: usize,
}

pub fn eval<W: Write>(args: &EvalArgs, stdout: W) -> Result<()> {
    let fit = FitResult::<f64>::read(open(&args.fit)?)?;
    let heldout = read_event_log(open(&args.heldout)?)?;
    let report = EvalReport {
        heldout_loss: heldout_log_loss(&fit, &heldout)?,
        events: heldout.iter().filter(|r| r.as_reference().is_some()).count(),
    };
    let text = serde_json::to_string_pretty(&report).map_err(std::io::Error::from)? + "\n";
    emit(args.out.as_deref(), stdout, &text)
}

pub struct ScenarioArgs {
    pub name: Option<ScenarioKind>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replicates: Option<u32>,
    pub out: Option<PathBuf>,
}

/// Runs a scenario and writes its metrics as CSV.
pub fn scenario<W: Write>(args: &ScenarioArgs, stdout: W) -> Result<()> {
    let file: ScenarioFile = match &args.config {
        Some(p) => read_toml(p)?,
        None => ScenarioFile::default(),
    };
    let mut sc = file.resolve(args.name)?;
    if let Some(seed) = args.seed {
        sc.base_seed = seed;
    }
    if let Some(n) = args.replicates {
        sc.replicates = n;
    }
    let table = run_scenario(&sc)?;
    let mut bytes = Vec::new();
    table.write_csv(&mut bytes)?;
    emit(args.out.as_deref(), stdout, std::str::from_utf8(&bytes).expect("CSV is UTF-8"))
}
