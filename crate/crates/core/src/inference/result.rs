use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{check_log, FitConfig};
use crate::community::LogRecord;
use crate::error::{Error, Result};
use crate::lexicon::{BaseMeasure, Form};
use crate::predictive::{Predictive, PredictiveRecord};
use crate::scalar::Scalar;
use crate::speaker::MemberId;

pub const FIT_FORMAT: &str = "pronoun-franchise/fit";
pub const FIT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeatingSummary {
    pub sweep: u32,
    pub log_joint: f64,
    pub table_counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sweeps_performed: u32,
    pub observations: u64,
    /// Gibbs seating moves are always accepted.
    pub acceptance_rate: f64,
    /// Largest gap between the incremental and recomputed log joint.
    pub max_log_joint_drift: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub(crate) config: FitConfig,
    pub(crate) base: BaseMeasure<T>,
    pub(crate) labels: Vec<String>,
    pub(crate) pairs: BTreeMap<(MemberId, MemberId), Predictive<T>>,
    pub(crate) generals: BTreeMap<MemberId, Predictive<T>>,
    pub(crate) community: Option<Predictive<T>>,
    pub(crate) samples: Vec<SeatingSummary>,
    pub(crate) trace: Vec<f64>,
    pub(crate) diagnostics: Diagnostics,
}

impl<T: Scalar> FitResult<T> {
    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn base(&self) -> &BaseMeasure<T> {
        &self.base
    }

    /// Restaurant labels, in the order used by [`SeatingSummary::table_counts`].
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn pairs(&self) -> &BTreeMap<(MemberId, MemberId), Predictive<T>> {
        &self.pairs
    }

    pub fn pair(&self, speaker: MemberId, referent: MemberId) -> Option<&Predictive<T>> {
        self.pairs.get(&(speaker, referent))
    }

    pub fn general(&self, speaker: MemberId) -> Option<&Predictive<T>> {
        self.generals.get(&speaker)
    }

    pub fn community(&self) -> Option<&Predictive<T>> {
        self.community.as_ref()
    }

    pub fn samples(&self) -> &[SeatingSummary] {
        &self.samples
    }

    /// Log joint after initialization and after every sweep.
    pub fn log_joint_trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    /// Averaged predictive for the pair, falling back to the speaker's
    /// general restaurant, then the community, then the base measure.
    pub fn predict_next(&self, speaker: MemberId, referent: MemberId) -> Predictive<T> {
        self.pair(speaker, referent)
            .or_else(|| self.general(speaker))
            .or(self.community.as_ref())
            .cloned()
            .unwrap_or_else(|| Predictive::of_base(&self.base))
    }

    pub fn to_document(&self) -> FitDocument {
        FitDocument {
            format: FIT_FORMAT.to_string(),
            version: FIT_VERSION,
            config: self.config.clone(),
            labels: self.labels.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|((s, t), p)| PairPredictive {
                    speaker: *s,
                    referent: *t,
                    predictive: p.into(),
                })
                .collect(),
            generals: self
                .generals
                .iter()
                .map(|(s, p)| SpeakerPredictive {
                    speaker: *s,
                    predictive: p.into(),
                })
                .collect(),
            community: self.community.as_ref().map(PredictiveRecord::from),
            log_joint_trace: self.trace.clone(),
            samples: self.samples.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn from_document(doc: FitDocument) -> Result<Self> {
        if doc.format != FIT_FORMAT {
            return Err(Error::Corrupt(format!("unknown document format `{}`", doc.format)));
        }
        if doc.version != FIT_VERSION {
            return Err(Error::Version {
                found: doc.version,
                expected: FIT_VERSION,
            });
        }
        let base = BaseMeasure::new(doc.config.lexicon.clone())?;
        let mut pairs = BTreeMap::new();
        for p in &doc.pairs {
            if pairs.insert((p.speaker, p.referent), p.predictive.to_predictive()?).is_some() {
                return Err(Error::Corrupt(format!("duplicate pair ({}, {})", p.speaker, p.referent)));
            }
        }
        let mut generals = BTreeMap::new();
        for g in &doc.generals {
            if generals.insert(g.speaker, g.predictive.to_predictive()?).is_some() {
                return Err(Error::Corrupt(format!("duplicate speaker {}", g.speaker)));
            }
        }
        Ok(FitResult {
            community: doc.community.as_ref().map(PredictiveRecord::to_predictive).transpose()?,
            config: doc.config,
            base,
            labels: doc.labels,
            pairs,
            generals,
            samples: doc.samples,
            trace: doc.log_joint_trace,
            diagnostics: doc.diagnostics,
        })
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.to_document()).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        #[derive(Deserialize)]
        struct Header {
            format: Option<String>,
            version: Option<u32>,
        }
        let header: Header =
            serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("fit result is not valid JSON: {e}")))?;
        if header.format.as_deref() != Some(FIT_FORMAT) {
            return Err(Error::Corrupt("missing or unknown fit result format".into()));
        }
        if let Some(v) = header.version.filter(|v| *v != FIT_VERSION) {
            return Err(Error::Version {
                found: v,
                expected: FIT_VERSION,
            });
        }
        let doc: FitDocument =
            serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("fit result body: {e}")))?;
        FitResult::from_document(doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPredictive {
    pub speaker: MemberId,
    pub referent: MemberId,
    pub predictive: PredictiveRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerPredictive {
    pub speaker: MemberId,
    pub predictive: PredictiveRecord,
}

/// Exported fit: per-pair predictive tables in sorted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub format: String,
    pub version: u32,
    pub config: FitConfig,
    pub labels: Vec<String>,
    pub pairs: Vec<PairPredictive>,
    pub generals: Vec<SpeakerPredictive>,
    pub community: Option<PredictiveRecord>,
    pub log_joint_trace: Vec<f64>,
    pub samples: Vec<SeatingSummary>,
    pub diagnostics: Diagnostics,
}

/// Mean of `−ln P(form | speaker, referent)` over the reference events of
/// `heldout`.
pub fn heldout_log_loss<T: Scalar>(fit: &FitResult<T>, heldout: &[LogRecord]) -> Result<T> {
    check_log(heldout, fit.config.members)?;
    let mut total = T::zero();
    let mut n = 0u64;
    for e in heldout.iter().filter_map(LogRecord::as_reference) {
        let p = fit.predict_next(e.speaker, e.referent).prob(&e.form, &fit.base);
        if p <= T::zero() {
            return Err(Error::InfiniteLoss(infinite_loss_message(&e.form, e.speaker, e.referent, fit)));
        }
        total = total - p.ln();
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidInput("held-out log has no reference events".into()));
    }
    Ok(total / T::of_count(n))
}

fn infinite_loss_message<T: Scalar>(form: &Form, s: MemberId, t: MemberId, fit: &FitResult<T>) -> String {
    if fit.base.config().novelty_mass == 0.0 {
        format!(
            "form `{form}` (speaker {s}, referent {t}) has zero probability: it was never observed \
             and novelty_mass is 0, so the base measure gives unseen forms no mass"
        )
    } else {
        format!("form `{form}` (speaker {s}, referent {t}) has zero probability under the base measure")
    }
}
