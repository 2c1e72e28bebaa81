//! Community model: every member is a speaker, a referent and an observer.
//!
//! The hierarchy is base → community restaurant → each member's general
//! restaurant → that member's restaurant for each referent. A step picks a
//! speaker and a referent, produces a short discourse from the speaker's own
//! priors, and broadcasts every event to all members in id order.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::crp::{sample_predictive, Hierarchy, RestaurantId, RestaurantRecord};
use crate::error::{Error, Result};
use crate::lexicon::{Form, LexiconConfig};
use crate::predictive::Predictive;
use crate::scalar::{categorical, uniform, Scalar};
use crate::speaker::{
    default_topic_slots, validate_declaration, DeclarationStatus, MemberId, ObserveMode, Preset,
    ReferenceEvent, SpeakerProfile, SpeakerRecord, SpeakerState,
};
use crate::SimRng;

pub const SNAPSHOT_FORMAT: &str = "pronoun-franchise/snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemberGroup {
    pub count: u32,
    pub preset: Option<Preset>,
    /// Overrides the preset when given.
    pub profile: Option<SpeakerProfile>,
    /// Display name; numbered when `count > 1`.
    pub name: Option<String>,
}

impl Default for MemberGroup {
    fn default() -> Self {
        MemberGroup {
            count: 1,
            preset: None,
            profile: None,
            name: None,
        }
    }
}

impl MemberGroup {
    pub fn preset(preset: Preset, count: u32) -> Self {
        MemberGroup {
            count,
            preset: Some(preset),
            ..MemberGroup::default()
        }
    }

    pub fn profile(profile: SpeakerProfile, count: u32) -> Self {
        MemberGroup {
            count,
            profile: Some(profile),
            ..MemberGroup::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RefsPerDiscourse {
    Fixed { count: u32 },
    /// Geometric on {1, 2, ...} with the given mean.
    Geometric { mean: f64 },
}

impl RefsPerDiscourse {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match *self {
            RefsPerDiscourse::Fixed { count } => count,
            RefsPerDiscourse::Geometric { mean } => {
                let stop = 1.0 / mean;
                let mut n = 1;
                while uniform::<f64, R>(rng) >= stop {
                    n += 1;
                }
                n
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    /// Relative speaker weights per member; uniform when absent.
    pub speaker_weights: Option<Vec<f64>>,
    /// Relative referent weights per member; uniform when absent.
    pub referent_weights: Option<Vec<f64>>,
    pub refs_per_discourse: RefsPerDiscourse,
    /// Seatings per observation of a self-reference.
    pub self_weight: u32,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            speaker_weights: None,
            referent_weights: None,
            refs_per_discourse: RefsPerDiscourse::Geometric { mean: 3.0 },
            self_weight: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommunityConfig {
    pub members: Vec<MemberGroup>,
    pub community_alpha: f64,
    pub lexicon: LexiconConfig,
    pub schedule: Schedule,
    pub observe_mode: ObserveMode,
    /// A member who has declared draws self-references from the declared
    /// mixture rather than from their own restaurant.
    pub authoritative_self_reference: bool,
    pub topic_slots: Vec<[f64; 5]>,
    pub seed: u64,
}

impl Default for CommunityConfig {
    fn default() -> Self {
        CommunityConfig {
            members: vec![
                MemberGroup::preset(Preset::Rigid, 2),
                MemberGroup::preset(Preset::Flexible, 2),
            ],
            community_alpha: 1.0,
            lexicon: LexiconConfig::default(),
            schedule: Schedule::default(),
            observe_mode: ObserveMode::Referent,
            authoritative_self_reference: false,
            topic_slots: default_topic_slots(),
            seed: 0,
        }
    }
}

fn check_weights(field: &str, weights: &[f64], expected: usize) -> Result<()> {
    if weights.len() != expected {
        return Err(Error::config(
            field,
            format!("expected {expected} entries, found {}", weights.len()),
        ));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::config(field, "weights must be non-negative with a positive sum"));
    }
    Ok(())
}

impl CommunityConfig {
    pub fn with_members(members: Vec<MemberGroup>) -> Self {
        CommunityConfig {
            members,
            ..CommunityConfig::default()
        }
    }

    /// Expands member groups into (name, profile) pairs in id order.
    pub fn resolve_members(&self) -> Result<Vec<(String, SpeakerProfile)>> {
        let mut out = Vec::new();
        for (g, group) in self.members.iter().enumerate() {
            let profile = match (group.profile, group.preset) {
                (Some(p), _) => p,
                (None, Some(preset)) => preset.profile(),
                (None, None) => SpeakerProfile::default(),
            };
            profile.validate(&format!("members[{g}].profile"))?;
            for k in 0..group.count {
                let name = match &group.name {
                    Some(n) if group.count == 1 => n.clone(),
                    Some(n) => format!("{n}{k}"),
                    None => format!("m{}", out.len()),
                };
                out.push((name, profile));
            }
        }
        let mut names: Vec<&String> = out.iter().map(|(n, _)| n).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config("members", format!("duplicate member name `{}`", w[0])));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let members = self.resolve_members()?;
        if members.len() < 2 {
            return Err(Error::config(
                "members",
                format!("a community needs at least 2 members, found {}", members.len()),
            ));
        }
        if !(self.community_alpha > 0.0 && self.community_alpha.is_finite()) {
            return Err(Error::config("community_alpha", "must be positive"));
        }
        self.lexicon.validate()?;
        if let Some(w) = &self.schedule.speaker_weights {
            check_weights("schedule.speaker_weights", w, members.len())?;
        }
        if let Some(w) = &self.schedule.referent_weights {
            check_weights("schedule.referent_weights", w, members.len())?;
        }
        match self.schedule.refs_per_discourse {
            RefsPerDiscourse::Fixed { count } if count == 0 => {
                return Err(Error::config("schedule.refs_per_discourse.count", "must be at least 1"))
            }
            RefsPerDiscourse::Geometric { mean } if !(mean >= 1.0 && mean.is_finite()) => {
                return Err(Error::config("schedule.refs_per_discourse.mean", "must be at least 1"))
            }
            _ => {}
        }
        for (i, slots) in self.topic_slots.iter().enumerate() {
            check_weights(&format!("topic_slots[{i}]"), slots, 5)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclaredForm {
    pub form: Form,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclarationEvent {
    pub timestamp: u64,
    pub declarer: MemberId,
    pub forms: Vec<DeclaredForm>,
}

impl DeclarationEvent {
    pub fn pairs(&self) -> Vec<(Form, f64)> {
        self.forms.iter().map(|d| (d.form.clone(), d.weight)).collect()
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LogRecord {
    Reference(ReferenceEvent),
    Declaration(DeclarationEvent),
}

impl LogRecord {
    pub fn timestamp(&self) -> u64 {
        match self {
            LogRecord::Reference(e) => e.timestamp,
            LogRecord::Declaration(d) => d.timestamp,
        }
    }

    pub fn as_reference(&self) -> Option<&ReferenceEvent> {
        match self {
            LogRecord::Reference(e) => Some(e),
            LogRecord::Declaration(_) => None,
        }
    }
}

/// A declaration scheduled before a given step of [`CommunityState::run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub step: u64,
    pub declarer: MemberId,
    pub forms: Vec<DeclaredForm>,
}

impl Intervention {
    pub fn new(step: u64, declarer: MemberId, forms: &[(Form, f64)]) -> Self {
        Intervention {
            step,
            declarer,
            forms: forms
                .iter()
                .map(|(form, weight)| DeclaredForm {
                    form: form.clone(),
                    weight: *weight,
                })
                .collect(),
        }
    }
}

/// Overrides for a single step; `None` fields are sampled from the schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepPlan {
    pub speaker: Option<MemberId>,
    pub referent: Option<MemberId>,
    pub refs: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct CommunityState<T> {
    config: CommunityConfig,
    hierarchy: Hierarchy<T>,
    community: RestaurantId,
    members: Vec<SpeakerState>,
    names: Vec<String>,
    clock: u64,
    steps: u64,
    log: Vec<LogRecord>,
    declarations: BTreeMap<MemberId, Vec<(Form, f64)>>,
    rng: SimRng,
}

impl<T: Scalar> PartialEq for CommunityState<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.hierarchy == other.hierarchy
            && self.community == other.community
            && self.members == other.members
            && self.names == other.names
            && self.clock == other.clock
            && self.steps == other.steps
            && self.log == other.log
            && self.declarations == other.declarations
            && self.rng == other.rng
    }
}

impl<T: Scalar> CommunityState<T> {
    pub fn new(config: CommunityConfig) -> Result<Self> {
        config.validate()?;
        let members_cfg = config.resolve_members()?;
        let mut hierarchy = Hierarchy::new(config.lexicon.clone())?;
        let community = hierarchy.add_restaurant(None, T::of(config.community_alpha), "community")?;
        let mut members = Vec::with_capacity(members_cfg.len());
        let mut names = Vec::with_capacity(members_cfg.len());
        for (i, (name, profile)) in members_cfg.into_iter().enumerate() {
            members.push(SpeakerState::new(
                &mut hierarchy,
                MemberId(i as u32),
                profile,
                Some(community),
                config.observe_mode,
            )?);
            names.push(name);
        }
        let n = members.len() as u32;
        for m in members.iter_mut() {
            for t in 0..n {
                m.register_referent(&mut hierarchy, MemberId(t))?;
            }
        }
        let rng = SimRng::seed_from_u64(config.seed);
        Ok(CommunityState {
            config,
            hierarchy,
            community,
            members,
            names,
            clock: 0,
            steps: 0,
            log: Vec::new(),
            declarations: BTreeMap::new(),
            rng,
        })
    }

    pub fn config(&self) -> &CommunityConfig {
        &self.config
    }

    pub fn hierarchy(&self) -> &Hierarchy<T> {
        &self.hierarchy
    }

    pub fn community_restaurant(&self) -> RestaurantId {
        self.community
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_ids(&self) -> impl Iterator<Item = MemberId> {
        (0..self.members.len() as u32).map(MemberId)
    }

    pub fn member(&self, id: MemberId) -> Result<&SpeakerState> {
        self.members
            .get(id.0 as usize)
            .ok_or_else(|| Error::InvalidInput(format!("unknown member {}", id.0)))
    }

    pub fn name(&self, id: MemberId) -> Option<&str> {
        self.names.get(id.0 as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    /// Most recent self-declaration of `referent`.
    pub fn licensed_forms(&self, referent: MemberId) -> Option<&[(Form, f64)]> {
        self.declarations.get(&referent).map(Vec::as_slice)
    }

    /// Member `observer`'s predictive for `referent`.
    pub fn predictive(&self, observer: MemberId, referent: MemberId) -> Result<Predictive<T>> {
        Ok(self.member(observer)?.referent_predictive(&self.hierarchy, referent))
    }

    pub fn general_predictive(&self, observer: MemberId) -> Result<Predictive<T>> {
        Ok(self.member(observer)?.general_predictive(&self.hierarchy))
    }

    fn pick_member(&mut self, weights: Option<&Vec<f64>>) -> MemberId {
        let n = self.members.len();
        let i = match weights {
            Some(w) => categorical(w, &mut self.rng).unwrap_or(0),
            None => self.rng.gen_range(0..n),
        };
        MemberId(i as u32)
    }

    /// One discourse drawn from the schedule.
    pub fn step(&mut self) -> Result<Vec<ReferenceEvent>> {
        self.step_with(StepPlan::default())
    }

    pub fn step_with(&mut self, plan: StepPlan) -> Result<Vec<ReferenceEvent>> {
        for id in [plan.speaker, plan.referent].into_iter().flatten() {
            self.member(id)?;
        }
        let speaker = match plan.speaker {
            Some(s) => s,
            None => {
                let w = self.config.schedule.speaker_weights.clone();
                self.pick_member(w.as_ref())
            }
        };
        let referent = match plan.referent {
            Some(t) => t,
            None => {
                let w = self.config.schedule.referent_weights.clone();
                self.pick_member(w.as_ref())
            }
        };
        let refs = match plan.refs {
            Some(0) => return Err(Error::InvalidInput("a step needs at least one reference".into())),
            Some(n) => n,
            None => self.config.schedule.refs_per_discourse.sample(&mut self.rng),
        };

        let s = speaker.0 as usize;
        let mut ctx = self.members[s].begin_discourse(&mut self.rng);
        let mut events = Vec::with_capacity(refs as usize);
        for _ in 0..refs {
            let slot = ctx.sample_slot(&self.config.topic_slots, &mut self.rng);
            let timestamp = self.clock;
            let name = self.names[referent.0 as usize].as_str();
            let declared = self
                .declarations
                .get(&referent)
                .filter(|_| self.config.authoritative_self_reference && speaker == referent);
            let event = match declared {
                Some(mixture) => {
                    let weights: Vec<f64> = mixture.iter().map(|(_, w)| *w).collect();
                    self.members[s].produce_with(referent, Some(name), &mut ctx, slot, timestamp, &mut self.rng, |rng| {
                        let i = categorical(&weights, rng).expect("declared weights are positive");
                        Ok(mixture[i].0.clone())
                    })?
                }
                None => self.members[s].produce_reference(
                    &self.hierarchy,
                    referent,
                    Some(name),
                    &mut ctx,
                    slot,
                    timestamp,
                    &mut self.rng,
                )?,
            };
            self.clock += 1;
            self.broadcast(&event)?;
            self.log.push(LogRecord::Reference(event.clone()));
            events.push(event);
        }
        self.steps += 1;
        Ok(events)
    }

    /// Every member observes `event`, in id order.
    fn broadcast(&mut self, event: &ReferenceEvent) -> Result<()> {
        let times = if event.speaker == event.referent {
            self.config.schedule.self_weight
        } else {
            1
        };
        for m in self.members.iter_mut() {
            m.observe_weighted(&mut self.hierarchy, event, times, &mut self.rng)?;
        }
        Ok(())
    }

    /// `referent` declares their forms. Every member revises with their own
    /// (ρ, w); the declarer resets their own restaurant for themselves.
    pub fn declare(&mut self, referent: MemberId, declared: &[(Form, f64)]) -> Result<DeclarationStatus> {
        self.member(referent)?;
        if declared.is_empty() {
            return Ok(DeclarationStatus::EmptyIgnored);
        }
        validate_declaration(declared)?;
        let record = DeclarationEvent {
            timestamp: self.clock,
            declarer: referent,
            forms: declared
                .iter()
                .map(|(form, weight)| DeclaredForm {
                    form: form.clone(),
                    weight: *weight,
                })
                .collect(),
        };
        self.clock += 1;
        for m in self.members.iter_mut() {
            if m.id() == referent {
                let w = m.profile().declaration_weight.max(1.0);
                m.apply_revision(&mut self.hierarchy, referent, 0.0, w, declared, &mut self.rng)?;
            } else {
                m.receive_declaration(&mut self.hierarchy, referent, declared, &mut self.rng)?;
            }
        }
        self.declarations.insert(referent, declared.to_vec());
        self.log.push(LogRecord::Declaration(record));
        Ok(DeclarationStatus::Applied)
    }

    /// Runs `steps` steps, applying each intervention before the step it
    /// names (step `steps` means after the last one). Returns the full log.
    pub fn run(&mut self, steps: u64, interventions: &[Intervention]) -> Result<&[LogRecord]> {
        if let Some(bad) = interventions.iter().find(|i| i.step > steps) {
            return Err(Error::Validation(format!(
                "intervention scheduled at step {} but the run has {steps} steps",
                bad.step
            )));
        }
        for i in interventions {
            self.member(i.declarer)?;
        }
        let mut schedule: Vec<&Intervention> = interventions.iter().collect();
        schedule.sort_by_key(|i| i.step);
        let mut next = 0;
        for k in 0..=steps {
            while next < schedule.len() && schedule[next].step == k {
                let i = schedule[next];
                let forms: Vec<(Form, f64)> = i.forms.iter().map(|d| (d.form.clone(), d.weight)).collect();
                self.declare(i.declarer, &forms)?;
                next += 1;
            }
            if k < steps {
                self.step()?;
            }
        }
        Ok(&self.log)
    }

    /// Rebuilds a community by re-executing `log` from a fresh state built
    /// from `config`. The log must come from schedule-driven steps and
    /// declarations; any divergence is a validation error.
    pub fn replay(config: CommunityConfig, log: &[LogRecord]) -> Result<Self> {
        let mut c = CommunityState::new(config)?;
        let mut i = 0;
        while i < log.len() {
            match &log[i] {
                LogRecord::Declaration(d) => {
                    c.declare(d.declarer, &d.pairs())?;
                    if c.log.last() != Some(&log[i]) {
                        return Err(Error::Validation(format!(
                            "replay diverged at declaration with timestamp {}",
                            d.timestamp
                        )));
                    }
                    i += 1;
                }
                LogRecord::Reference(_) => {
                    let events = c.step()?;
                    for e in events {
                        match log.get(i) {
                            Some(LogRecord::Reference(orig)) if *orig == e => i += 1,
                            _ => {
                                return Err(Error::Validation(format!(
                                    "replay diverged at timestamp {}",
                                    e.timestamp
                                )))
                            }
                        }
                    }
                }
            }
        }
        Ok(c)
    }

    pub fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            config: self.config.clone(),
            clock: self.clock,
            steps: self.steps,
            rng: self.rng.clone(),
            community: self.community,
            names: self.names.clone(),
            members: self.members.iter().map(SpeakerState::to_record).collect(),
            restaurants: self.hierarchy.to_records(),
            declarations: self
                .declarations
                .iter()
                .map(|(t, forms)| DeclarationRecord {
                    declarer: *t,
                    forms: forms
                        .iter()
                        .map(|(form, weight)| DeclaredForm {
                            form: form.clone(),
                            weight: *weight,
                        })
                        .collect(),
                })
                .collect(),
            log: self.log.clone(),
        }
    }

    pub fn from_snapshot(snap: Snapshot) -> Result<Self> {
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::Corrupt(format!("unknown document format `{}`", snap.format)));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Version {
                found: snap.version,
                expected: SNAPSHOT_VERSION,
            });
        }
        snap.config.validate()?;
        let hierarchy = Hierarchy::from_records(snap.config.lexicon.clone(), &snap.restaurants)?;
        if snap.community.0 as usize >= hierarchy.len() || snap.members.len() != snap.names.len() {
            return Err(Error::Corrupt("member table does not match the hierarchy".into()));
        }
        let members = snap
            .members
            .into_iter()
            .enumerate()
            .map(|(i, rec)| {
                if rec.id.0 as usize != i {
                    return Err(Error::Corrupt(format!("member record {i} has id {}", rec.id.0)));
                }
                SpeakerState::from_record(rec, &hierarchy)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CommunityState {
            config: snap.config,
            hierarchy,
            community: snap.community,
            members,
            names: snap.names,
            clock: snap.clock,
            steps: snap.steps,
            log: snap.log,
            declarations: snap
                .declarations
                .into_iter()
                .map(|d| {
                    let forms = d.forms.into_iter().map(|f| (f.form, f.weight)).collect();
                    (d.declarer, forms)
                })
                .collect(),
            rng: snap.rng,
        })
    }

    pub fn save_snapshot<W: Write>(&self, out: W) -> Result<()> {
        write_snapshot(&self.to_snapshot(), out)
    }

    pub fn load_snapshot<R: std::io::Read>(input: R) -> Result<Self> {
        CommunityState::from_snapshot(read_snapshot(input)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclarationRecord {
    pub declarer: MemberId,
    pub forms: Vec<DeclaredForm>,
}

/// Versioned document holding the whole community state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub config: CommunityConfig,
    pub clock: u64,
    pub steps: u64,
    pub rng: SimRng,
    pub community: RestaurantId,
    pub names: Vec<String>,
    pub members: Vec<SpeakerRecord>,
    pub restaurants: Vec<RestaurantRecord>,
    pub declarations: Vec<DeclarationRecord>,
    pub log: Vec<LogRecord>,
}

pub fn write_snapshot<W: Write>(snap: &Snapshot, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, snap).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_snapshot<R: std::io::Read>(mut input: R) -> Result<Snapshot> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    #[derive(Deserialize)]
    struct Header {
        format: Option<String>,
        version: Option<u64>,
    }
    let header: Header =
        serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("snapshot is not valid JSON: {e}")))?;
    match header.format.as_deref() {
        Some(SNAPSHOT_FORMAT) => {}
        Some(other) => return Err(Error::Corrupt(format!("unknown document format `{other}`"))),
        None => return Err(Error::Corrupt("snapshot has no format header".into())),
    }
    match header.version {
        Some(v) if v == u64::from(SNAPSHOT_VERSION) => {}
        Some(v) => {
            return Err(Error::Version {
                found: v as u32,
                expected: SNAPSHOT_VERSION,
            })
        }
        None => return Err(Error::Corrupt("snapshot has no version".into())),
    }
    serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("snapshot body: {e}")))
}

/// Writes one canonical record per line.
pub fn write_event_log<W: Write>(records: &[LogRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a line-delimited log and checks that timestamps strictly increase.
pub fn read_event_log<R: BufRead>(input: R) -> Result<Vec<LogRecord>> {
    let mut out: Vec<LogRecord> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Validation(format!("event log line {}: {e}", i + 1)))?;
        if let Some(prev) = out.last() {
            if rec.timestamp() <= prev.timestamp() {
                return Err(Error::Validation(format!(
                    "event log line {}: timestamp {} does not follow {}",
                    i + 1,
                    rec.timestamp(),
                    prev.timestamp()
                )));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Samples a form for `referent` from `observer`'s predictive without
/// touching any state.
pub fn probe_draw<T: Scalar, R: Rng + ?Sized>(
    c: &CommunityState<T>,
    observer: MemberId,
    referent: MemberId,
    rng: &mut R,
) -> Result<Form> {
    let pred = c.predictive(observer, referent)?;
    sample_predictive(&pred, c.hierarchy.base(), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::forms::*;

    fn community(members: Vec<MemberGroup>, seed: u64) -> CommunityState<f64> {
        let cfg = CommunityConfig {
            seed,
            ..CommunityConfig::with_members(members)
        };
        CommunityState::new(cfg).unwrap()
    }

    fn snapshot_bytes(c: &CommunityState<f64>) -> Vec<u8> {
        let mut out = Vec::new();
        c.save_snapshot(&mut out).unwrap();
        out
    }

    // Recomputes a predictive from raw restaurant counts.
    fn recursion_oracle(h: &Hierarchy<f64>, r: RestaurantId, form: &Form) -> f64 {
        let rest = h.restaurant(r);
        let parent = match rest.parent() {
            Some(p) => recursion_oracle(h, p, form),
            None => h.base().score(form),
        };
        if rest.is_empty() {
            return parent;
        }
        let a = rest.concentration();
        (f64::from(rest.count(form)) + a * parent) / (f64::from(rest.total_customers()) + a)
    }

    #[test]
    fn empty_community_predicts_base() {
        let c = community(vec![MemberGroup::preset(Preset::Rigid, 2)], 1);
        let base = Predictive::of_base(c.hierarchy().base());
        for m in c.member_ids() {
            let p = c.general_predictive(m).unwrap();
            for (f, g) in &base.masses {
                assert!((p.mass(f) - g).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ten_members_have_four_level_chains() {
        let c = community(vec![MemberGroup::preset(Preset::Rigid, 5), MemberGroup::preset(Preset::Flexible, 5)], 3);
        c.hierarchy().audit().unwrap();
        for m in c.member_ids() {
            let s = c.member(m).unwrap();
            assert_eq!(c.hierarchy().restaurant(s.general()).parent(), Some(c.community_restaurant()));
            for (_, r) in s.referents() {
                assert_eq!(c.hierarchy().restaurant(r).depth(), 4);
            }
            assert_eq!(s.referents().count(), 10);
        }
    }

    #[test]
    fn same_seed_same_snapshot() {
        let run = || {
            let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 3)], 42);
            c.run(40, &[]).unwrap();
            snapshot_bytes(&c)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn self_reference_reaches_every_observer() {
        let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 4)], 5);
        let t = MemberId(2);
        let events = c
            .step_with(StepPlan {
                speaker: Some(t),
                referent: Some(t),
                refs: Some(1),
            })
            .unwrap();
        assert_eq!(events.len(), 1);
        for m in c.member_ids() {
            let r = c.member(m).unwrap().referent_restaurant(t).unwrap();
            assert_eq!(c.hierarchy().restaurant(r).count(&events[0].form), 1);
        }
    }

    #[test]
    fn fixed_schedule_emits_one_event_per_step() {
        let mut cfg = CommunityConfig::with_members(vec![MemberGroup::preset(Preset::Flexible, 3)]);
        cfg.schedule.refs_per_discourse = RefsPerDiscourse::Fixed { count: 1 };
        let mut c = CommunityState::<f64>::new(cfg).unwrap();
        for _ in 0..20 {
            assert_eq!(c.step().unwrap().len(), 1);
        }
        assert_eq!(c.log().len(), 20);
    }

    #[test]
    fn general_predictives_converge() {
        let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 4)], 2024);
        c.run(500, &[]).unwrap();
        c.hierarchy().audit().unwrap();
        let seeds = [he(), she(), they()];
        let preds: Vec<Predictive<f64>> = c.member_ids().map(|m| c.general_predictive(m).unwrap()).collect();
        for (m, p) in c.member_ids().zip(&preds) {
            let general = c.member(m).unwrap().general();
            for f in &seeds {
                assert!((p.mass(f) - recursion_oracle(c.hierarchy(), general, f)).abs() < 1e-12);
            }
        }
        for p in &preds {
            for q in &preds {
                for f in &seeds {
                    assert!((p.mass(f) - q.mass(f)).abs() <= 0.15, "{f}: {} vs {}", p.mass(f), q.mass(f));
                }
            }
        }
    }

    #[test]
    fn full_reset_declaration_sets_argmax_everywhere() {
        let flexible = SpeakerProfile::flexible().with_revision(0.0, 5.0);
        let mut c = community(vec![MemberGroup::profile(flexible, 4)], 8);
        c.run(30, &[]).unwrap();
        let t = MemberId(1);
        c.declare(t, &[(ze(), 1.0)]).unwrap();
        for m in c.member_ids() {
            assert_eq!(c.predictive(m, t).unwrap().argmax(), Some(&ze()));
        }
        assert_eq!(c.licensed_forms(t), Some(&[(ze(), 1.0)][..]));
        assert!(matches!(c.log().last(), Some(LogRecord::Declaration(d)) if d.declarer == t));
    }

    #[test]
    fn identity_profile_ignores_declaration() {
        let identity = SpeakerProfile::rigid().with_revision(1.0, 0.0);
        let mut c = community(
            vec![MemberGroup::profile(identity, 1), MemberGroup::preset(Preset::Flexible, 3)],
            9,
        );
        c.run(30, &[]).unwrap();
        let t = MemberId(2);
        let before: Vec<Predictive<f64>> = c.member_ids().map(|m| c.predictive(m, t).unwrap()).collect();
        let own = |c: &CommunityState<f64>| {
            let sp = c.member(MemberId(0)).unwrap();
            let r = sp.referent_restaurant(t).unwrap();
            let h = c.hierarchy();
            (h.restaurant(sp.general()).dish_counts(), h.restaurant(r).dish_counts())
        };
        let own_before = own(&c);
        let community_before = c.hierarchy().to_records()[c.community_restaurant().0 as usize].clone();
        c.declare(t, &[(they(), 1.0)]).unwrap();
        assert_eq!(own(&c), own_before);
        // the only change member 0 sees comes through the shared community level
        let mut records = c.hierarchy().to_records();
        records[c.community_restaurant().0 as usize] = community_before;
        let masked = Hierarchy::<f64>::from_records_unaudited(c.config().lexicon.clone(), &records).unwrap();
        assert_eq!(c.member(MemberId(0)).unwrap().referent_predictive(&masked, t), before[0]);
        for m in 1..4 {
            let after = c.predictive(MemberId(m), t).unwrap();
            assert!(after.mass(&they()) > before[m as usize].mass(&they()));
        }
    }

    #[test]
    fn unknown_member_is_rejected() {
        let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 2)], 1);
        assert!(matches!(c.declare(MemberId(7), &[(he(), 1.0)]), Err(Error::InvalidInput(_))));
        assert_eq!(c.declare(MemberId(0), &[]).unwrap(), DeclarationStatus::EmptyIgnored);
        assert!(c.log().is_empty());
    }

    #[test]
    fn zero_steps_changes_nothing() {
        let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 3)], 4);
        let fresh = c.clone();
        assert!(c.run(0, &[]).unwrap().is_empty());
        assert_eq!(c, fresh);
    }

    #[test]
    fn replay_reconstructs_state() {
        for seed in [1, 77, 9001] {
            let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 2), MemberGroup::preset(Preset::Flexible, 2)], seed);
            let interventions = [
                Intervention::new(0, MemberId(1), &[(they(), 1.0)]),
                Intervention::new(25, MemberId(3), &[(xe(), 2.0), (she(), 1.0)]),
                Intervention::new(60, MemberId(0), &[(he(), 1.0)]),
            ];
            c.run(60, &interventions).unwrap();
            let mut text = Vec::new();
            write_event_log(c.log(), &mut text).unwrap();
            let log = read_event_log(&text[..]).unwrap();
            let replayed = CommunityState::<f64>::replay(c.config().clone(), &log).unwrap();
            assert_eq!(snapshot_bytes(&replayed), snapshot_bytes(&c));
        }
    }

    #[test]
    fn tampered_log_diverges() {
        let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 3)], 12);
        c.run(10, &[]).unwrap();
        let mut log = c.log().to_vec();
        if let LogRecord::Reference(e) = &mut log[3] {
            e.form = if e.form == ze() { xe() } else { ze() };
        }
        assert!(matches!(
            CommunityState::<f64>::replay(c.config().clone(), &log),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn step_zero_intervention_precedes_production() {
        let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 3)], 6);
        let log = c.run(5, &[Intervention::new(0, MemberId(0), &[(she(), 1.0)])]).unwrap();
        assert!(matches!(&log[0], LogRecord::Declaration(d) if d.timestamp == 0));
        assert!(log[1..].iter().all(|r| r.as_reference().is_some()));
        assert!(log.windows(2).all(|w| w[0].timestamp() < w[1].timestamp()));
    }

    #[test]
    fn late_intervention_is_a_validation_error() {
        let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 3)], 6);
        let err = c.run(5, &[Intervention::new(6, MemberId(0), &[(she(), 1.0)])]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(c.log().is_empty());
    }

    #[test]
    fn broadcast_is_complete() {
        let mut c = community(vec![MemberGroup::preset(Preset::Flexible, 5)], 31);
        for _ in 0..50 {
            let before: u64 = c.members.iter().map(SpeakerState::witnessed_count).sum();
            let n = c.step().unwrap().len() as u64;
            let after: u64 = c.members.iter().map(SpeakerState::witnessed_count).sum();
            assert_eq!(after - before, 5 * n);
        }
    }

    #[test]
    fn production_reads_only_the_speakers_chain() {
        let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 4)], 17);
        c.run(80, &[]).unwrap();
        let s = MemberId(1);
        let keep: Vec<RestaurantId> = {
            let sp = c.member(s).unwrap();
            let mut v = vec![c.community_restaurant(), sp.general()];
            v.extend(sp.referents().map(|(_, r)| r));
            v
        };
        let mut records = c.hierarchy().to_records();
        for rec in records.iter_mut() {
            if !keep.contains(&RestaurantId(rec.id)) {
                rec.tables.clear();
            }
        }
        let masked = Hierarchy::<f64>::from_records_unaudited(c.config().lexicon.clone(), &records).unwrap();
        for t in c.member_ids() {
            let sp = c.member(s).unwrap();
            assert_eq!(sp.referent_predictive(&masked, t), sp.referent_predictive(c.hierarchy(), t));
        }
    }

    #[test]
    fn declared_novel_form_propagates() {
        let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 2), MemberGroup::preset(Preset::Flexible, 2)], 23);
        c.run(20, &[]).unwrap();
        let t = MemberId(0);
        c.declare(t, &[(xe(), 1.0)]).unwrap();
        c.step_with(StepPlan {
            speaker: Some(MemberId(2)),
            referent: Some(t),
            refs: Some(1),
        })
        .unwrap();
        for m in c.member_ids() {
            let p = c.predictive(m, t).unwrap();
            assert!(p.contains(&xe()) && p.mass(&xe()) > 0.0);
        }
    }

    #[test]
    fn authoritative_self_reference_uses_declared_mixture() {
        let mut cfg = CommunityConfig::with_members(vec![MemberGroup::preset(Preset::Rigid, 2)]);
        cfg.authoritative_self_reference = true;
        let mut c = CommunityState::<f64>::new(cfg).unwrap();
        let t = MemberId(0);
        c.declare(t, &[(ze(), 1.0)]).unwrap();
        for _ in 0..20 {
            let ev = c
                .step_with(StepPlan {
                    speaker: Some(t),
                    referent: Some(t),
                    refs: Some(2),
                })
                .unwrap();
            assert!(ev.iter().all(|e| e.form == ze()));
        }
    }

    #[test]
    fn snapshot_round_trip_and_rejections() {
        let mut c = community(vec![MemberGroup::preset(Preset::Flexible, 3)], 19);
        c.run(25, &[Intervention::new(10, MemberId(2), &[(they(), 1.0)])]).unwrap();
        let bytes = snapshot_bytes(&c);
        let mut loaded = CommunityState::<f64>::load_snapshot(&bytes[..]).unwrap();
        assert_eq!(loaded, c);
        // the rng state is part of the snapshot
        assert_eq!(loaded.step().unwrap(), c.clone().step().unwrap());

        let text = String::from_utf8(bytes.clone()).unwrap();
        let bumped = text.replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(matches!(
            CommunityState::<f64>::load_snapshot(bumped.as_bytes()),
            Err(Error::Version { found: 9, expected: 1 })
        ));
        assert!(matches!(
            CommunityState::<f64>::load_snapshot(&bytes[..bytes.len() / 2]),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn event_log_rejects_non_increasing_timestamps() {
        let mut c = community(vec![MemberGroup::preset(Preset::Rigid, 2)], 3);
        c.run(3, &[]).unwrap();
        let mut log = c.log().to_vec();
        log.swap(0, 1);
        let mut text = Vec::new();
        write_event_log(&log, &mut text).unwrap();
        let err = read_event_log(&text[..]).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let first = String::from_utf8(text).unwrap();
        assert!(first.starts_with("{\"type\":\"reference\""));
    }

    #[test]
    fn config_errors_name_fields() {
        let one = CommunityConfig::with_members(vec![MemberGroup::preset(Preset::Rigid, 1)]);
        assert!(CommunityState::<f64>::new(one).unwrap_err().to_string().contains("members"));
        let mut bad = CommunityConfig::default();
        bad.schedule.speaker_weights = Some(vec![1.0, 1.0]);
        assert!(CommunityState::<f64>::new(bad)
            .unwrap_err()
            .to_string()
            .contains("schedule.speaker_weights"));
        let mut alpha = CommunityConfig::default();
        alpha.community_alpha = 0.0;
        assert!(CommunityState::<f64>::new(alpha).unwrap_err().to_string().contains("community_alpha"));
    }

    #[test]
    fn config_toml_round_trip() {
        let text = r#"
            community_alpha = 2.0
            seed = 11
            [[members]]
            count = 2
            preset = "rigid"
            [[members]]
            name = "sam"
            preset = "flexible"
            [schedule.refs_per_discourse]
            kind = "fixed"
            count = 2
        "#;
        let cfg: CommunityConfig = toml::from_str(text).unwrap();
        let c = CommunityState::<f64>::new(cfg.clone()).unwrap();
        assert_eq!(c.names(), ["m0", "m1", "sam"]);
        let back: CommunityConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
