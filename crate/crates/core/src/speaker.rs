//! Single-speaker model: a general prior over forms, one child restaurant
//! per referent, a topic CRP per speaker, and the within-discourse
//! stickiness that lets a speaker keep (or vary) a form across utterances.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crp::{sample_predictive, Hierarchy, RestaurantId};
use crate::error::{Error, Result};
use crate::lexicon::{Form, FormKind, GrammaticalSlot};
use crate::predictive::Predictive;
use crate::scalar::{categorical, uniform, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemberId(pub u32);

impl std::fmt::Display for MemberId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeakerProfile {
    pub alpha_general: f64,
    pub alpha_referent: f64,
    /// κ: chance of repeating the previous form for a referent within a
    /// discourse.
    pub stickiness: f64,
    /// ρ: fraction of a referent's evidence kept when a declaration arrives.
    pub retention: f64,
    /// w: pseudo-observations seated per declaration.
    pub declaration_weight: f64,
    pub alpha_topic: f64,
}

impl Default for SpeakerProfile {
    fn default() -> Self {
        SpeakerProfile::rigid()
    }
}

impl SpeakerProfile {
    pub fn rigid() -> Self {
        SpeakerProfile {
            alpha_general: 1.0,
            alpha_referent: 0.5,
            stickiness: 0.8,
            retention: 0.9,
            declaration_weight: 1.0,
            alpha_topic: 1.0,
        }
    }

    pub fn flexible() -> Self {
        SpeakerProfile {
            retention: 0.1,
            declaration_weight: 5.0,
            ..SpeakerProfile::rigid()
        }
    }

    pub fn with_revision(mut self, retention: f64, declaration_weight: f64) -> Self {
        self.retention = retention;
        self.declaration_weight = declaration_weight;
        self
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let positive = [
            ("alpha_general", self.alpha_general),
            ("alpha_referent", self.alpha_referent),
            ("alpha_topic", self.alpha_topic),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(
                    format!("{field}.{name}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        for (name, v) in [("stickiness", self.stickiness), ("retention", self.retention)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(
                    format!("{field}.{name}"),
                    format!("must lie in [0, 1], got {v}"),
                ));
            }
        }
        if !(self.declaration_weight >= 0.0 && self.declaration_weight.is_finite()) {
            return Err(Error::config(
                format!("{field}.declaration_weight"),
                format!("must be non-negative, got {}", self.declaration_weight),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Rigid,
    Flexible,
}

impl Preset {
    pub fn profile(self) -> SpeakerProfile {
        match self {
            Preset::Rigid => SpeakerProfile::rigid(),
            Preset::Flexible => SpeakerProfile::flexible(),
        }
    }
}

/// Where witnessed usages are seated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObserveMode {
    /// Into the observer's restaurant for the referent (and upward from there).
    #[default]
    Referent,
    /// Straight into the observer's general restaurant.
    GeneralOnly,
}

/// CRP over topic labels; every table is its own topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCrp {
    pub alpha: f64,
    pub counts: Vec<u32>,
}

impl TopicCrp {
    pub fn new(alpha: f64) -> Self {
        TopicCrp {
            alpha,
            counts: Vec::new(),
        }
    }

    /// Samples a topic label without seating; `counts.len()` means a new one.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let mut weights: Vec<f64> = self.counts.iter().map(|&c| f64::from(c)).collect();
        weights.push(self.alpha);
        categorical(&weights, rng).unwrap_or(self.counts.len()) as u32
    }

    pub fn seat(&mut self, topic: u32) {
        match self.counts.get_mut(topic as usize) {
            Some(c) => *c += 1,
            None => self.counts.push(1),
        }
    }
}

/// Slot distribution for each topic label (label `k` uses entry `k % len`).
pub fn default_topic_slots() -> Vec<[f64; 5]> {
    vec![
        [0.45, 0.25, 0.15, 0.05, 0.10],
        [0.25, 0.40, 0.20, 0.05, 0.10],
        [0.35, 0.15, 0.35, 0.10, 0.05],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscourseContext {
    pub discourse: u64,
    pub topic: u32,
    /// Previous form per referent in this discourse only.
    pub last_form: BTreeMap<MemberId, Form>,
    pub interaction: u32,
}

impl DiscourseContext {
    pub fn sample_slot<R: Rng + ?Sized>(&self, topic_slots: &[[f64; 5]], rng: &mut R) -> GrammaticalSlot {
        if topic_slots.is_empty() {
            return GrammaticalSlot::Subject;
        }
        let weights = &topic_slots[self.topic as usize % topic_slots.len()];
        let i = categorical(weights, rng).unwrap_or(0);
        GrammaticalSlot::ALL[i]
    }
}

/// One produced reference; the unit of the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEvent {
    pub timestamp: u64,
    pub speaker: MemberId,
    pub referent: MemberId,
    pub discourse: u64,
    pub interaction: u32,
    pub slot: GrammaticalSlot,
    pub form: Form,
    pub surface: String,
}

impl ReferenceEvent {
    pub fn is_consistent(&self, referent_name: &str) -> bool {
        self.surface == self.form.realize(self.slot, referent_name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclarationStatus {
    Applied,
    /// Empty declaration list: nothing changed.
    EmptyIgnored,
}

/// `round(w·weight)`, at least one whenever both are positive.
pub fn pseudo_count(declaration_weight: f64, weight: f64) -> u32 {
    if declaration_weight > 0.0 && weight > 0.0 {
        ((declaration_weight * weight).round() as u32).max(1)
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerState {
    id: MemberId,
    profile: SpeakerProfile,
    general: RestaurantId,
    per_referent: BTreeMap<MemberId, RestaurantId>,
    topics: TopicCrp,
    witnessed: u64,
    discourses: u64,
    observe_mode: ObserveMode,
}

impl SpeakerState {
    /// Adds the speaker's general restaurant under `parent` (the community
    /// restaurant, or the base measure when `None`).
    pub fn new<T: Scalar>(
        h: &mut Hierarchy<T>,
        id: MemberId,
        profile: SpeakerProfile,
        parent: Option<RestaurantId>,
        observe_mode: ObserveMode,
    ) -> Result<Self> {
        profile.validate(&format!("member[{}]", id.0))?;
        let general = h.add_restaurant(parent, T::of(profile.alpha_general), format!("general:{}", id.0))?;
        Ok(SpeakerState {
            id,
            profile,
            general,
            per_referent: BTreeMap::new(),
            topics: TopicCrp::new(profile.alpha_topic),
            witnessed: 0,
            discourses: 0,
            observe_mode,
        })
    }

    pub fn id(&self) -> MemberId {
        self.id
    }

    pub fn profile(&self) -> &SpeakerProfile {
        &self.profile
    }

    pub fn general(&self) -> RestaurantId {
        self.general
    }

    pub fn referent_restaurant(&self, referent: MemberId) -> Option<RestaurantId> {
        self.per_referent.get(&referent).copied()
    }

    pub fn referents(&self) -> impl Iterator<Item = (MemberId, RestaurantId)> + '_ {
        self.per_referent.iter().map(|(m, r)| (*m, *r))
    }

    pub fn topics(&self) -> &TopicCrp {
        &self.topics
    }

    pub fn witnessed_count(&self) -> u64 {
        self.witnessed
    }

    pub fn observe_mode(&self) -> ObserveMode {
        self.observe_mode
    }

    /// Creates the restaurant for `referent` if it does not exist yet.
    pub fn register_referent<T: Scalar>(&mut self, h: &mut Hierarchy<T>, referent: MemberId) -> Result<RestaurantId> {
        self.ensure_referent(h, referent)
    }

    fn ensure_referent<T: Scalar>(&mut self, h: &mut Hierarchy<T>, referent: MemberId) -> Result<RestaurantId> {
        if let Some(r) = self.per_referent.get(&referent) {
            return Ok(*r);
        }
        let r = h.add_restaurant(
            Some(self.general),
            T::of(self.profile.alpha_referent),
            format!("referent:{}:{}", self.id.0, referent.0),
        )?;
        self.per_referent.insert(referent, r);
        Ok(r)
    }

    /// Samples and seats the topic for a new discourse.
    pub fn begin_discourse<R: Rng + ?Sized>(&mut self, rng: &mut R) -> DiscourseContext {
        let topic = self.topics.sample(rng);
        self.topics.seat(topic);
        let discourse = self.discourses;
        self.discourses += 1;
        DiscourseContext {
            discourse,
            topic,
            last_form: BTreeMap::new(),
            interaction: 0,
        }
    }

    /// Predictive for `referent`; the general predictive if this speaker has
    /// no evidence about them yet.
    pub fn referent_predictive<T: Scalar>(&self, h: &Hierarchy<T>, referent: MemberId) -> Predictive<T> {
        h.predictive(self.referent_restaurant(referent).unwrap_or(self.general))
    }

    pub fn general_predictive<T: Scalar>(&self, h: &Hierarchy<T>) -> Predictive<T> {
        h.predictive(self.general)
    }

    /// Produces one reference. Production never changes the hierarchy: the
    /// speaker's evidence is updated when it observes its own event.
    #[allow(clippy::too_many_arguments)]
    pub fn produce_reference<T: Scalar, R: Rng + ?Sized>(
        &self,
        h: &Hierarchy<T>,
        referent: MemberId,
        referent_name: Option<&str>,
        ctx: &mut DiscourseContext,
        slot: GrammaticalSlot,
        timestamp: u64,
        rng: &mut R,
    ) -> Result<ReferenceEvent> {
        self.produce_with(referent, referent_name, ctx, slot, timestamp, rng, |rng| {
            let pred = self.referent_predictive(h, referent);
            sample_predictive(&pred, h.base(), rng)
        })
    }

    /// Like [`produce_reference`](Self::produce_reference) but fresh draws
    /// come from `draw` instead of the referent predictive.
    #[allow(clippy::too_many_arguments)]
    pub fn produce_with<R: Rng + ?Sized>(
        &self,
        referent: MemberId,
        referent_name: Option<&str>,
        ctx: &mut DiscourseContext,
        slot: GrammaticalSlot,
        timestamp: u64,
        rng: &mut R,
        draw: impl FnOnce(&mut R) -> Result<Form>,
    ) -> Result<ReferenceEvent> {
        let form = match ctx.last_form.get(&referent) {
            Some(prev) if uniform::<f64, R>(rng) < self.profile.stickiness => prev.clone(),
            _ => draw(rng)?,
        };
        let surface = match (form.kind(), referent_name) {
            (FormKind::NoPronoun, None) => {
                return Err(Error::config(
                    format!("names[{}]", referent.0),
                    "referent has no name to realize a no-pronoun reference",
                ))
            }
            (_, name) => form.realize(slot, name.unwrap_or("")),
        };
        ctx.last_form.insert(referent, form.clone());
        let interaction = ctx.interaction;
        ctx.interaction += 1;
        Ok(ReferenceEvent {
            timestamp,
            speaker: self.id,
            referent,
            discourse: ctx.discourse,
            interaction,
            slot,
            form,
            surface,
        })
    }

    /// Seats a witnessed usage. No deduplication: every call counts.
    pub fn observe<T: Scalar, R: Rng + ?Sized>(
        &mut self,
        h: &mut Hierarchy<T>,
        event: &ReferenceEvent,
        rng: &mut R,
    ) -> Result<()> {
        self.observe_weighted(h, event, 1, rng)
    }

    /// Observes one event, seating it `times` times.
    pub fn observe_weighted<T: Scalar, R: Rng + ?Sized>(
        &mut self,
        h: &mut Hierarchy<T>,
        event: &ReferenceEvent,
        times: u32,
        rng: &mut R,
    ) -> Result<()> {
        let r = match self.observe_mode {
            ObserveMode::Referent => self.ensure_referent(h, event.referent)?,
            ObserveMode::GeneralOnly => self.general,
        };
        for _ in 0..times {
            h.seat(r, &event.form, rng)?;
        }
        self.witnessed += 1;
        Ok(())
    }

    /// Applies a referent's declaration with this speaker's own (ρ, w).
    pub fn receive_declaration<T: Scalar, R: Rng + ?Sized>(
        &mut self,
        h: &mut Hierarchy<T>,
        referent: MemberId,
        declared: &[(Form, f64)],
        rng: &mut R,
    ) -> Result<DeclarationStatus> {
        let (retention, weight) = (self.profile.retention, self.profile.declaration_weight);
        self.apply_revision(h, referent, retention, weight, declared, rng)
    }

    /// Keeps `retention` of the referent restaurant's evidence (per table,
    /// removing `⌈(1−ρ)·occupancy⌉`) then seats `round(w·weight)` pseudo
    /// customers per declared form.
    pub fn apply_revision<T: Scalar, R: Rng + ?Sized>(
        &mut self,
        h: &mut Hierarchy<T>,
        referent: MemberId,
        retention: f64,
        declaration_weight: f64,
        declared: &[(Form, f64)],
        rng: &mut R,
    ) -> Result<DeclarationStatus> {
        if declared.is_empty() {
            return Ok(DeclarationStatus::EmptyIgnored);
        }
        let total = validate_declaration(declared)?;
        let r = self.ensure_referent(h, referent)?;
        h.thin(r, retention)?;
        for (form, weight) in declared {
            for _ in 0..pseudo_count(declaration_weight, weight / total) {
                h.seat(r, form, rng)?;
            }
        }
        Ok(DeclarationStatus::Applied)
    }

    pub(crate) fn to_record(&self) -> SpeakerRecord {
        SpeakerRecord {
            id: self.id,
            profile: self.profile,
            general: self.general,
            per_referent: self.per_referent.iter().map(|(m, r)| (*m, *r)).collect(),
            topics: self.topics.clone(),
            witnessed: self.witnessed,
            discourses: self.discourses,
            observe_mode: self.observe_mode,
        }
    }

    pub(crate) fn from_record<T: Scalar>(rec: SpeakerRecord, h: &Hierarchy<T>) -> Result<Self> {
        let check = |r: RestaurantId, what: &str| {
            if r.0 as usize >= h.len() {
                Err(Error::Corrupt(format!("{what} restaurant {} missing", r.0)))
            } else {
                Ok(())
            }
        };
        check(rec.general, "general")?;
        for (_, r) in &rec.per_referent {
            check(*r, "referent")?;
            if h.restaurant(*r).parent() != Some(rec.general) {
                return Err(Error::Corrupt(format!(
                    "referent restaurant {} of member {} is not under its general restaurant",
                    r.0, rec.id.0
                )));
            }
        }
        Ok(SpeakerState {
            id: rec.id,
            profile: rec.profile,
            general: rec.general,
            per_referent: rec.per_referent.into_iter().collect(),
            topics: rec.topics,
            witnessed: rec.witnessed,
            discourses: rec.discourses,
            observe_mode: rec.observe_mode,
        })
    }
}

/// Checks declaration weights and returns their total.
pub(crate) fn validate_declaration(declared: &[(Form, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for (form, w) in declared {
        if !(*w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "declared weight for {form} must be positive, got {w}"
            )));
        }
        total += w;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerRecord {
    pub id: MemberId,
    pub profile: SpeakerProfile,
    pub general: RestaurantId,
    pub per_referent: Vec<(MemberId, RestaurantId)>,
    pub topics: TopicCrp,
    pub witnessed: u64,
    pub discourses: u64,
    pub observe_mode: ObserveMode,
}
