//! Scenario runner: one scenario per capability of the model, each producing
//! a table of metrics per replicate, step and member.
//!
//! Measurements at step `m` are taken after the declarations scheduled at
//! `m` and before step `m` produces anything.

pub mod commands;
mod metrics;

pub use metrics::{format_sig6, lower_median, Metric, MetricRow, MetricValue, MetricsTable, CSV_HEADER};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::community::{CommunityConfig, CommunityState, DeclaredForm, LogRecord, MemberGroup, StepPlan};
use crate::error::{Error, Result};
use crate::inference::{fit_gibbs, heldout_log_loss, FitConfig, Revision};
use crate::lexicon::{forms, BaseMeasure, Form};
use crate::predictive::{total_variation, Predictive};
use crate::speaker::{MemberId, Preset, SpeakerProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "E1-novel-form")]
    NovelForm,
    #[serde(rename = "E2-mixture")]
    Mixture,
    #[serde(rename = "E3-revision")]
    Revision,
    #[serde(rename = "E4-community-contrast")]
    CommunityContrast,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::NovelForm,
        ScenarioKind::Mixture,
        ScenarioKind::Revision,
        ScenarioKind::CommunityContrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::NovelForm => "E1-novel-form",
            ScenarioKind::Mixture => "E2-mixture",
            ScenarioKind::Revision => "E3-revision",
            ScenarioKind::CommunityContrast => "E4-community-contrast",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    /// Accepts the full name or its `E1`..`E4` prefix, in any case.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == lower || k.name()[..2].to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::Parse {
                text: s.to_string(),
                reason: "expected one of E1-novel-form, E2-mixture, E3-revision, E4-community-contrast".into(),
            })
    }
}

/// One community of a contrast run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub members: Vec<MemberGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeldoutSpec {
    /// Final steps whose events about the measured referent are held out.
    pub window_steps: u64,
    pub fit: FitConfig,
}

impl Default for HeldoutSpec {
    fn default() -> Self {
        HeldoutSpec {
            window_steps: 40,
            fit: FitConfig {
                sweeps: 30,
                thin: 5,
                ..FitConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub community: CommunityConfig,
    pub measured_referent: MemberId,
    pub replicates: u32,
    pub base_seed: u64,
    pub measure_every: u64,
    /// Schedule-driven steps before the declaration (E1, E2, E4).
    pub warmup_steps: u64,
    /// Steps after the declaration.
    pub post_steps: u64,
    pub declared: Vec<DeclaredForm>,
    /// Forms declared at step 0 before the history (E3).
    pub initial: Vec<DeclaredForm>,
    /// Steps, one reference to the measured referent each, between the
    /// initial declaration and the change (E3).
    pub history: u64,
    pub adoption_threshold: f64,
    pub variants: Vec<Variant>,
    pub heldout: Option<HeldoutSpec>,
}

fn declared(pairs: &[(Form, f64)]) -> Vec<DeclaredForm> {
    pairs
        .iter()
        .map(|(form, weight)| DeclaredForm {
            form: form.clone(),
            weight: *weight,
        })
        .collect()
}

fn pairs(d: &[DeclaredForm]) -> Vec<(Form, f64)> {
    d.iter().map(|d| (d.form.clone(), d.weight)).collect()
}

impl Scenario {
    /// The default setup for each scenario.
    pub fn preset(kind: ScenarioKind) -> Self {
        let mixed = CommunityConfig::with_members(vec![
            MemberGroup::preset(Preset::Rigid, 3),
            MemberGroup::preset(Preset::Flexible, 3),
        ]);
        let mut sc = Scenario {
            kind,
            community: mixed,
            measured_referent: MemberId(0),
            replicates: 5,
            base_seed: 0,
            measure_every: 10,
            warmup_steps: 50,
            post_steps: 100,
            declared: declared(&[(forms::xe(), 1.0)]),
            initial: Vec::new(),
            history: 0,
            adoption_threshold: 0.8,
            variants: Vec::new(),
            heldout: None,
        };
        match kind {
            ScenarioKind::NovelForm => {}
            ScenarioKind::Mixture => {
                sc.community.authoritative_self_reference = true;
                sc.declared = declared(&[(forms::he(), 0.5), (forms::they(), 0.5)]);
                sc.post_steps = 200;
                sc.measure_every = 20;
                sc.replicates = 20;
            }
            ScenarioKind::Revision => {
                sc.community = CommunityConfig::with_members(vec![
                    MemberGroup::profile(SpeakerProfile::flexible().with_revision(0.0, 5.0), 3),
                    MemberGroup::preset(Preset::Rigid, 3),
                ]);
                sc.initial = declared(&[(forms::she(), 1.0)]);
                sc.declared = declared(&[(forms::they(), 1.0)]);
                sc.history = 100;
                sc.post_steps = 50;
            }
            ScenarioKind::CommunityContrast => {
                sc.community = CommunityConfig::default();
                sc.variants = vec![
                    Variant {
                        label: "flexible".into(),
                        members: vec![MemberGroup::preset(Preset::Flexible, 5)],
                    },
                    Variant {
                        label: "rigid".into(),
                        members: vec![MemberGroup::preset(Preset::Rigid, 5)],
                    },
                ];
                sc.post_steps = 300;
                sc.measure_every = 1;
                sc.replicates = 20;
                sc.heldout = Some(HeldoutSpec::default());
            }
        }
        sc
    }

    fn variant_configs(&self) -> Vec<(String, CommunityConfig)> {
        if self.kind == ScenarioKind::CommunityContrast {
            self.variants
                .iter()
                .map(|v| {
                    let cfg = CommunityConfig {
                        members: v.members.clone(),
                        ..self.community.clone()
                    };
                    (v.label.clone(), cfg)
                })
                .collect()
        } else {
            vec![(String::new(), self.community.clone())]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        if self.measure_every == 0 {
            return Err(Error::config("measure_every", "must be at least 1"));
        }
        if !(self.adoption_threshold > 0.0 && self.adoption_threshold <= 1.0) {
            return Err(Error::config("adoption_threshold", "must lie in (0, 1]"));
        }
        if self.declared.is_empty() {
            return Err(Error::config("declared", "a scenario needs declared forms"));
        }
        if self.kind == ScenarioKind::CommunityContrast && self.variants.len() < 2 {
            return Err(Error::config("variants", "a contrast needs at least 2 communities"));
        }
        for (_, cfg) in self.variant_configs() {
            cfg.validate()?;
            let n = cfg.resolve_members()?.len();
            if self.measured_referent.0 as usize >= n {
                return Err(Error::config(
                    "measured_referent",
                    format!("member {} does not exist in a community of {n}", self.measured_referent.0),
                ));
            }
        }
        let base = BaseMeasure::<f64>::new(self.community.lexicon.clone())?;
        for d in self.declared.iter().chain(&self.initial) {
            if !(d.weight > 0.0 && d.weight.is_finite()) {
                return Err(Error::config("declared", format!("weight for {} must be positive", d.form)));
            }
        }
        match self.kind {
            ScenarioKind::NovelForm => {
                let novel: Vec<&DeclaredForm> = self.declared.iter().filter(|d| !base.is_seed(&d.form)).collect();
                if novel.is_empty() {
                    return Err(Error::Validation(
                        "E1-novel-form needs a declared form outside the seed inventory".into(),
                    ));
                }
                if let Some(d) = novel.iter().find(|d| base.score(&d.form) == 0.0) {
                    return Err(Error::config(
                        "community.lexicon.novelty_mass",
                        format!(
                            "declared novel form `{}` has zero base mass; with novelty_mass 0 no unseen form can be introduced",
                            d.form
                        ),
                    ));
                }
            }
            ScenarioKind::Mixture if self.declared.len() < 2 => {
                return Err(Error::Validation("E2-mixture needs at least two declared forms".into()));
            }
            ScenarioKind::Revision if self.initial.is_empty() => {
                return Err(Error::Validation("E3-revision needs initial declared forms".into()));
            }
            _ => {}
        }
        if let Some(h) = &self.heldout {
            h.fit.validate()?;
            if h.window_steps == 0 || h.window_steps > self.post_steps {
                return Err(Error::config("heldout.window_steps", "must lie in [1, post_steps]"));
            }
        }
        Ok(())
    }
}

/// Seed of replicate `r`; replicates of one scenario never share a stream.
pub fn replicate_seed(base_seed: u64, replicate: u32) -> u64 {
    base_seed.wrapping_add(u64::from(replicate).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Predictive mass outside the licensed forms.
pub fn misgendering_rate(pred: &Predictive<f64>, licensed: &[(Form, f64)], base: &BaseMeasure<f64>) -> f64 {
    let forms: Vec<Form> = licensed.iter().map(|(f, _)| f.clone()).collect();
    (1.0 - pred.mass_on(&forms, base)).clamp(0.0, 1.0)
}

/// Total variation between the predictive restricted to the declared forms
/// and the declared mixture.
pub fn tv_to_declared(pred: &Predictive<f64>, declared: &[(Form, f64)], base: &BaseMeasure<f64>) -> Result<f64> {
    let forms: Vec<Form> = declared.iter().map(|(f, _)| f.clone()).collect();
    let restricted = pred.restricted(&forms, base)?;
    let total: f64 = declared.iter().map(|(_, w)| w).sum();
    let target: Vec<f64> = declared.iter().map(|(_, w)| w / total).collect();
    Ok(total_variation(&restricted, &target))
}

struct Run<'a> {
    sc: &'a Scenario,
    replicate: u32,
    table: MetricsTable,
}

impl Run<'_> {
    fn measure(&mut self, c: &CommunityState<f64>, label: &str, declared_forms: &[(Form, f64)]) -> Result<()> {
        let t = self.sc.measured_referent;
        let base = c.hierarchy().base();
        let step = c.steps();
        for m in c.member_ids() {
            let pred = c.predictive(m, t)?;
            let name = member_label(label, c.name(m).unwrap_or_default());
            if let Some(licensed) = c.licensed_forms(t) {
                let rate = misgendering_rate(&pred, licensed, base);
                self.table
                    .record(self.replicate, step, &name, Metric::MisgenderingRate, MetricValue::Number(rate))?;
            }
            match self.sc.kind {
                ScenarioKind::NovelForm => {
                    let forms: Vec<Form> = declared_forms.iter().map(|(f, _)| f.clone()).collect();
                    let mass = pred.mass_on(&forms, base).clamp(0.0, 1.0);
                    self.table
                        .record(self.replicate, step, &name, Metric::DeclaredMass, MetricValue::Number(mass))?;
                }
                ScenarioKind::Mixture => {
                    let tv = tv_to_declared(&pred, declared_forms, base)?;
                    self.table
                        .record(self.replicate, step, &name, Metric::TvToDeclared, MetricValue::Number(tv))?;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn member_label(community: &str, member: &str) -> String {
    if community.is_empty() {
        member.to_string()
    } else {
        format!("{community}/{member}")
    }
}

/// Tracks, per member, the first step at which the measured referent's
/// predictive puts at least `threshold` on the declared forms.
struct Adoption {
    declared_at: u64,
    first: Vec<Option<u64>>,
}

impl Adoption {
    fn observe(&mut self, c: &CommunityState<f64>, t: MemberId, forms: &[Form], threshold: f64) -> Result<()> {
        for m in c.member_ids() {
            let slot = &mut self.first[m.0 as usize];
            if slot.is_none() && c.predictive(m, t)?.mass_on(forms, c.hierarchy().base()) >= threshold {
                *slot = Some(c.steps() - self.declared_at);
            }
        }
        Ok(())
    }

    fn values(&self) -> Vec<MetricValue> {
        self.first
            .iter()
            .map(|s| s.map_or(MetricValue::Never, |k| MetricValue::Number(k as f64)))
            .collect()
    }
}

fn run_replicate(sc: &Scenario, replicate: u32) -> Result<MetricsTable> {
    let seed = replicate_seed(sc.base_seed, replicate);
    let mut run = Run {
        sc,
        replicate,
        table: MetricsTable::new(),
    };
    let t = sc.measured_referent;
    let declared_pairs = pairs(&sc.declared);
    let declared_forms: Vec<Form> = declared_pairs.iter().map(|(f, _)| f.clone()).collect();
    let due = |step: u64, end: u64| step % sc.measure_every == 0 || step == end;

    match sc.kind {
        ScenarioKind::NovelForm | ScenarioKind::Mixture => {
            let mut c = CommunityState::<f64>::new(CommunityConfig {
                seed,
                ..sc.community.clone()
            })?;
            let end = sc.warmup_steps + sc.post_steps;
            let mut adoption = Adoption {
                declared_at: sc.warmup_steps,
                first: vec![None; c.len()],
            };
            for step in 0..=end {
                if step == sc.warmup_steps {
                    c.declare(t, &declared_pairs)?;
                }
                if step >= sc.warmup_steps && sc.kind == ScenarioKind::NovelForm {
                    adoption.observe(&c, t, &declared_forms, sc.adoption_threshold)?;
                }
                if due(step, end) {
                    run.measure(&c, "", &declared_pairs)?;
                }
                if step == end {
                    break;
                }
                if sc.kind == ScenarioKind::Mixture && step >= sc.warmup_steps {
                    c.step_with(StepPlan {
                        speaker: Some(t),
                        referent: Some(t),
                        refs: Some(1),
                    })?;
                } else {
                    c.step()?;
                }
            }
            if sc.kind == ScenarioKind::NovelForm {
                for (m, v) in c.member_ids().zip(adoption.values()) {
                    run.table
                        .record(replicate, end, c.name(m).unwrap_or_default(), Metric::StepsToAdoption, v)?;
                }
            }
        }
        ScenarioKind::Revision => {
            let mut c = CommunityState::<f64>::new(CommunityConfig {
                seed,
                ..sc.community.clone()
            })?;
            let change = sc.history;
            let end = change + sc.post_steps;
            for step in 0..=end {
                if step == 0 {
                    c.declare(t, &pairs(&sc.initial))?;
                }
                if step == change {
                    c.declare(t, &declared_pairs)?;
                }
                if due(step, end) || step == change {
                    run.measure(&c, "", &declared_pairs)?;
                }
                if step == end {
                    break;
                }
                let plan = if step < change {
                    StepPlan {
                        referent: Some(t),
                        refs: Some(1),
                        ..StepPlan::default()
                    }
                } else {
                    StepPlan::default()
                };
                c.step_with(plan)?;
            }
        }
        ScenarioKind::CommunityContrast => {
            let end = sc.warmup_steps + sc.post_steps;
            let mut first_log: Option<(Vec<LogRecord>, usize)> = None;
            for (label, cfg) in sc.variant_configs() {
                let mut c = CommunityState::<f64>::new(CommunityConfig { seed, ..cfg })?;
                let mut adoption = Adoption {
                    declared_at: sc.warmup_steps,
                    first: vec![None; c.len()],
                };
                let mut split = 0;
                for step in 0..=end {
                    if step == sc.warmup_steps {
                        c.declare(t, &declared_pairs)?;
                    }
                    if step >= sc.warmup_steps {
                        adoption.observe(&c, t, &declared_forms, sc.adoption_threshold)?;
                    }
                    if let Some(h) = &sc.heldout {
                        if step == end - h.window_steps {
                            split = c.log().len();
                        }
                    }
                    if step == end {
                        break;
                    }
                    c.step()?;
                }
                let values = adoption.values();
                for (m, v) in c.member_ids().zip(&values) {
                    let name = member_label(&label, c.name(m).unwrap_or_default());
                    run.table.record(replicate, end, &name, Metric::StepsToAdoption, *v)?;
                }
                let median = lower_median(&values).expect("communities have members");
                run.table.record(replicate, end, &label, Metric::StepsToAdoption, median)?;
                if first_log.is_none() {
                    first_log = Some((c.log().to_vec(), split));
                }
            }
            if let (Some(h), Some((log, split))) = (&sc.heldout, first_log) {
                let (train, rest) = log.split_at(split);
                let heldout: Vec<LogRecord> = rest
                    .iter()
                    .filter(|r| r.as_reference().is_some_and(|e| e.referent == t))
                    .cloned()
                    .collect();
                if !heldout.is_empty() {
                    for (label, cfg) in sc.variant_configs() {
                        let profile = cfg.resolve_members()?[0].1;
                        let fit_cfg = FitConfig {
                            seed,
                            lexicon: cfg.lexicon.clone(),
                            revision: Some(Revision {
                                retention: profile.retention,
                                declaration_weight: profile.declaration_weight,
                            }),
                            members: Some(cfg.resolve_members()?.len() as u32),
                            ..h.fit.clone()
                        };
                        let fit = fit_gibbs::<f64>(train, &fit_cfg)?;
                        let loss = heldout_log_loss(&fit, &heldout)?;
                        run.table
                            .record(replicate, end, &label, Metric::HeldoutLoss, MetricValue::Number(loss))?;
                    }
                }
            }
        }
    }
    Ok(run.table)
}

/// Runs every replicate (in parallel) and merges their rows in replicate
/// order.
pub fn run_scenario(sc: &Scenario) -> Result<MetricsTable> {
    sc.validate()?;
    let n = sc.replicates as usize;
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(n);
    let mut results: Vec<Option<Result<MetricsTable>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..n)
                        .step_by(workers)
                        .map(|r| (r, run_replicate(sc, r as u32)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (r, res) in h.join().expect("replicate worker panicked") {
                results[r] = Some(res);
            }
        }
    });
    let mut table = MetricsTable::new();
    for res in results {
        table.extend(res.expect("every replicate ran")?);
    }
    table.sort();
    Ok(table)
}

/// Scenario document as written by users: every field but the name is
/// optional and falls back to the scenario's preset.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<ScenarioKind>,
    pub community: Option<CommunityConfig>,
    pub measured_referent: Option<MemberId>,
    pub replicates: Option<u32>,
    pub base_seed: Option<u64>,
    pub measure_every: Option<u64>,
    pub warmup_steps: Option<u64>,
    pub post_steps: Option<u64>,
    pub declared: Option<Vec<DeclaredForm>>,
    pub initial: Option<Vec<DeclaredForm>>,
    pub history: Option<u64>,
    pub adoption_threshold: Option<f64>,
    pub variants: Option<Vec<Variant>>,
    pub heldout: Option<HeldoutSpec>,
}

impl ScenarioFile {
    /// Resolves against the preset of `kind` (or of the file's own name).
    pub fn resolve(self, kind: Option<ScenarioKind>) -> Result<Scenario> {
        let kind = match (kind, self.name) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Validation(format!("scenario `{a}` does not match config for `{b}`")))
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(Error::config("name", "no scenario named")),
        };
        let mut sc = Scenario::preset(kind);
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { sc.$f = v; } )* };
        }
        take!(
            community,
            measured_referent,
            replicates,
            base_seed,
            measure_every,
            warmup_steps,
            post_steps,
            declared,
            initial,
            history,
            adoption_threshold,
            variants
        );
        if self.heldout.is_some() {
            sc.heldout = self.heldout;
        }
        Ok(sc)
    }
}
