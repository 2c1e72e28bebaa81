//! Fitting the franchise to an observed event log.
//!
//! Observations are the reference events of a log, each seated in the
//! restaurant of its (speaker, referent) pair. Declarations optionally
//! revise the evidence the way the community model does.

mod exact;
mod gibbs;
mod result;

pub use exact::{enumerate_arrangements, exact_marginal, Arrangement, EXACT_EVENT_LIMIT};
pub use gibbs::fit_gibbs;
pub use result::{
    heldout_log_loss, Diagnostics, FitDocument, FitResult, PairPredictive, SeatingSummary, SpeakerPredictive,
    FIT_FORMAT, FIT_VERSION,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::community::LogRecord;
use crate::crp::removal_count;
use crate::error::{Error, Result};
use crate::lexicon::{Form, LexiconConfig};
use crate::speaker::{pseudo_count, validate_declaration, MemberId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// One restaurant shared by every pair.
    Flat,
    /// Speaker general restaurants at the root, pair restaurants below.
    Speakers,
    /// A community restaurant above the speaker general restaurants.
    #[default]
    Community,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Alphas {
    pub community: f64,
    pub general: f64,
    pub referent: f64,
}

impl Default for Alphas {
    fn default() -> Self {
        Alphas {
            community: 1.0,
            general: 1.0,
            referent: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub retention: f64,
    pub declaration_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub sweeps: u32,
    /// Defaults to a fifth of the sweeps.
    pub burn_in: Option<u32>,
    pub thin: u32,
    pub seed: u64,
    pub shape: Shape,
    pub alphas: Alphas,
    pub lexicon: LexiconConfig,
    /// When set, declarations in the log thin and re-seed pair evidence.
    pub revision: Option<Revision>,
    /// Size of the member universe; inferred from the log when absent.
    pub members: Option<u32>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            sweeps: 200,
            burn_in: None,
            thin: 10,
            seed: 0,
            shape: Shape::default(),
            alphas: Alphas::default(),
            lexicon: LexiconConfig::default(),
            revision: None,
            members: None,
        }
    }
}

impl FitConfig {
    pub fn burn_in(&self) -> u32 {
        self.burn_in.unwrap_or(self.sweeps / 5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::config("thin", "must be at least 1"));
        }
        if self.sweeps > 0 && self.burn_in() >= self.sweeps {
            return Err(Error::config(
                "burn_in",
                format!("must be below sweeps ({}), got {}", self.sweeps, self.burn_in()),
            ));
        }
        if self.sweeps == 0 && self.burn_in() > 0 {
            return Err(Error::config("burn_in", "must be 0 when sweeps is 0"));
        }
        for (field, a) in [
            ("alphas.community", self.alphas.community),
            ("alphas.general", self.alphas.general),
            ("alphas.referent", self.alphas.referent),
        ] {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::config(field, format!("must be positive, got {a}")));
            }
        }
        if let Some(rev) = &self.revision {
            if !(0.0..=1.0).contains(&rev.retention) {
                return Err(Error::config("revision.retention", "must lie in [0, 1]"));
            }
            if !(rev.declaration_weight >= 0.0 && rev.declaration_weight.is_finite()) {
                return Err(Error::config("revision.declaration_weight", "must be non-negative"));
            }
        }
        self.lexicon.validate()
    }
}

/// One node of the fitted hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Node {
    pub parent: Option<usize>,
    pub alpha: f64,
    pub label: String,
}

/// Restaurant tree and the observations seated in it, built from a log.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub nodes: Vec<Node>,
    pub community: Option<usize>,
    pub generals: BTreeMap<MemberId, usize>,
    pub pairs: BTreeMap<(MemberId, MemberId), usize>,
    /// (node, form) in seating order.
    pub observations: Vec<(usize, Form)>,
}

/// Checks ids and timestamps and returns the member universe size.
pub(crate) fn check_log(log: &[LogRecord], members: Option<u32>) -> Result<u32> {
    let mut seen = 0u32;
    let mut prev: Option<u64> = None;
    for rec in log {
        let ts = rec.timestamp();
        if prev.is_some_and(|p| ts <= p) {
            return Err(Error::Validation(format!(
                "timestamp {ts} does not follow {}",
                prev.unwrap_or_default()
            )));
        }
        prev = Some(ts);
        let ids = match rec {
            LogRecord::Reference(e) => vec![e.speaker, e.referent],
            LogRecord::Declaration(d) => {
                validate_declaration(&d.pairs()).map_err(|e| Error::Validation(e.to_string()))?;
                vec![d.declarer]
            }
        };
        for id in ids {
            if let Some(n) = members {
                if id.0 >= n {
                    return Err(Error::Validation(format!(
                        "event at timestamp {ts} names member {} outside the universe of {n}",
                        id.0
                    )));
                }
            }
            seen = seen.max(id.0 + 1);
        }
    }
    Ok(members.unwrap_or(seen))
}

impl Layout {
    pub(crate) fn build(log: &[LogRecord], cfg: &FitConfig) -> Result<Layout> {
        let universe = check_log(log, cfg.members)?;
        let mut speakers: Vec<MemberId> = Vec::new();
        let mut pairs: Vec<(MemberId, MemberId)> = Vec::new();
        for rec in log {
            match rec {
                LogRecord::Reference(e) => {
                    speakers.push(e.speaker);
                    pairs.push((e.speaker, e.referent));
                }
                LogRecord::Declaration(d) if cfg.revision.is_some() => {
                    for s in 0..universe {
                        speakers.push(MemberId(s));
                        pairs.push((MemberId(s), d.declarer));
                    }
                }
                LogRecord::Declaration(_) => {}
            }
        }
        speakers.sort();
        speakers.dedup();
        pairs.sort();
        pairs.dedup();

        let mut nodes = Vec::new();
        let mut layout = Layout {
            nodes: Vec::new(),
            community: None,
            generals: BTreeMap::new(),
            pairs: BTreeMap::new(),
            observations: Vec::new(),
        };
        match cfg.shape {
            Shape::Flat => {
                nodes.push(Node {
                    parent: None,
                    alpha: cfg.alphas.community,
                    label: "flat".into(),
                });
                layout.community = Some(0);
                for p in &pairs {
                    layout.pairs.insert(*p, 0);
                }
            }
            Shape::Speakers | Shape::Community => {
                let root = if cfg.shape == Shape::Community {
                    nodes.push(Node {
                        parent: None,
                        alpha: cfg.alphas.community,
                        label: "community".into(),
                    });
                    layout.community = Some(0);
                    Some(0)
                } else {
                    None
                };
                for s in &speakers {
                    layout.generals.insert(*s, nodes.len());
                    nodes.push(Node {
                        parent: root,
                        alpha: cfg.alphas.general,
                        label: format!("general:{}", s.0),
                    });
                }
                for (s, t) in &pairs {
                    layout.pairs.insert((*s, *t), nodes.len());
                    nodes.push(Node {
                        parent: Some(layout.generals[s]),
                        alpha: cfg.alphas.referent,
                        label: format!("pair:{}:{}", s.0, t.0),
                    });
                }
            }
        }
        layout.nodes = nodes;

        // Active observations per pair node, oldest first; None marks removed.
        let mut obs: Vec<Option<(usize, Form)>> = Vec::new();
        for rec in log {
            match rec {
                LogRecord::Reference(e) => {
                    obs.push(Some((layout.pairs[&(e.speaker, e.referent)], e.form.clone())));
                }
                LogRecord::Declaration(d) => {
                    let Some(rev) = cfg.revision else { continue };
                    let declared = d.pairs();
                    let total: f64 = declared.iter().map(|(_, w)| w).sum();
                    for s in 0..universe {
                        let s = MemberId(s);
                        let (retention, w) = if s == d.declarer {
                            (0.0, rev.declaration_weight.max(1.0))
                        } else {
                            (rev.retention, rev.declaration_weight)
                        };
                        let node = layout.pairs[&(s, d.declarer)];
                        thin_oldest(&mut obs, node, retention);
                        for (form, weight) in &declared {
                            for _ in 0..pseudo_count(w, weight / total) {
                                obs.push(Some((node, form.clone())));
                            }
                        }
                    }
                }
            }
        }
        layout.observations = obs.into_iter().flatten().collect();
        Ok(layout)
    }

    pub(crate) fn depth(&self, mut i: usize) -> usize {
        let mut d = 1;
        while let Some(p) = self.nodes[i].parent {
            d += 1;
            i = p;
        }
        d
    }
}

/// Drops the oldest `⌈(1−ρ)·count⌉` observations of each form at `node`.
fn thin_oldest(obs: &mut [Option<(usize, Form)>], node: usize, retention: f64) {
    let mut counts: BTreeMap<Form, u32> = BTreeMap::new();
    for (n, f) in obs.iter().flatten() {
        if *n == node {
            *counts.entry(f.clone()).or_default() += 1;
        }
    }
    let mut to_remove: BTreeMap<Form, u32> =
        counts.into_iter().map(|(f, c)| (f, removal_count(retention, c))).collect();
    for slot in obs.iter_mut() {
        let Some((n, f)) = slot else { continue };
        if *n != node {
            continue;
        }
        if let Some(k) = to_remove.get_mut(f) {
            if *k > 0 {
                *k -= 1;
                *slot = None;
            }
        }
    }
}
