use std::collections::BTreeMap;

use rand::SeedableRng;

use super::result::{Diagnostics, FitResult, SeatingSummary};
use super::{FitConfig, Layout, Shape};
use crate::community::LogRecord;
use crate::crp::{Hierarchy, RestaurantId};
use crate::error::{Error, Result};
use crate::predictive::Predictive;
use crate::scalar::Scalar;
use crate::SimRng;

/// Running mean of predictives that share one support.
struct Mean<T> {
    value: Option<Predictive<T>>,
    k: u32,
}

impl<T: Scalar> Mean<T> {
    fn new() -> Self {
        Mean { value: None, k: 0 }
    }

    fn add(&mut self, x: Predictive<T>) -> Result<()> {
        self.k += 1;
        let Some(m) = &mut self.value else {
            self.value = Some(x);
            return Ok(());
        };
        if m.masses.len() != x.masses.len() || m.masses.iter().zip(&x.masses).any(|(a, b)| a.0 != b.0) {
            return Err(Error::Consistency("predictive support changed between samples".into()));
        }
        let k = T::of_count(u64::from(self.k));
        let step = |m: &mut T, x: T| *m = *m + (x - *m) / k;
        for (a, b) in m.masses.iter_mut().zip(&x.masses) {
            step(&mut a.1, b.1);
        }
        step(&mut m.residual, x.residual);
        step(&mut m.novel_scale, x.novel_scale);
        Ok(())
    }
}

/// Collapsed Gibbs over seatings: every sweep unseats and reseats each
/// observation from its conditional. Concentrations stay fixed.
pub fn fit_gibbs<T: Scalar>(log: &[LogRecord], cfg: &FitConfig) -> Result<FitResult<T>> {
    cfg.validate()?;
    let layout = Layout::build(log, cfg)?;
    let mut h = Hierarchy::<T>::new(cfg.lexicon.clone())?;
    let mut ids: Vec<RestaurantId> = Vec::with_capacity(layout.nodes.len());
    for n in &layout.nodes {
        let id = h.add_restaurant(n.parent.map(|p| ids[p]), T::of(n.alpha), n.label.clone())?;
        ids.push(id);
    }

    let mut rng = SimRng::seed_from_u64(cfg.seed);
    let mut log_joint = T::zero();
    let mut records = Vec::with_capacity(layout.observations.len());
    for (node, form) in &layout.observations {
        let s = h.seat(ids[*node], form, &mut rng)?;
        log_joint = log_joint + s.log_prob;
        records.push(s.record);
    }

    let sweeps = if records.is_empty() { 0 } else { cfg.sweeps };
    let burn_in = cfg.burn_in();
    let mut trace = vec![log_joint.as_f64()];
    let mut samples = Vec::new();
    let mut max_drift = 0.0f64;
    let mut means: Vec<Mean<T>> = ids.iter().map(|_| Mean::new()).collect();
    let summarize = |h: &Hierarchy<T>, sweep: u32, lj: T| SeatingSummary {
        sweep,
        log_joint: lj.as_f64(),
        table_counts: ids.iter().map(|r| h.restaurant(*r).table_count()).collect(),
    };

    for k in 1..=sweeps {
        for rec in records.iter_mut() {
            let down = h.unseat(rec)?;
            let (r, dish) = (rec.restaurant(), rec.dish().clone());
            let s = h.seat(r, &dish, &mut rng)?;
            log_joint = log_joint - down + s.log_prob;
            *rec = s.record;
        }
        let exact = h.log_joint();
        let drift = (log_joint - exact).abs().as_f64();
        if !drift.is_finite() && log_joint != exact {
            return Err(Error::Consistency(format!("log joint is not finite after sweep {k}")));
        }
        if drift.is_finite() {
            max_drift = max_drift.max(drift);
        }
        log_joint = exact;
        trace.push(log_joint.as_f64());
        if k > burn_in && (k - burn_in) % cfg.thin == 0 {
            samples.push(summarize(&h, k, log_joint));
            for (m, r) in means.iter_mut().zip(&ids) {
                m.add(h.predictive(*r))?;
            }
        }
    }
    if samples.is_empty() {
        samples.push(summarize(&h, sweeps, log_joint));
        for (m, r) in means.iter_mut().zip(&ids) {
            m.add(h.predictive(*r))?;
        }
    }

    let mut averaged: Vec<Option<Predictive<T>>> = means.into_iter().map(|m| m.value).collect();
    let take = |i: usize, averaged: &mut Vec<Option<Predictive<T>>>| {
        averaged[i].clone().expect("every restaurant has a sample")
    };
    let pairs: BTreeMap<_, _> = layout.pairs.iter().map(|(k, i)| (*k, take(*i, &mut averaged))).collect();
    let generals: BTreeMap<_, _> = layout.generals.iter().map(|(k, i)| (*k, take(*i, &mut averaged))).collect();
    let community = match cfg.shape {
        Shape::Speakers => None,
        Shape::Flat | Shape::Community => layout.community.map(|i| take(i, &mut averaged)),
    };

    Ok(FitResult {
        config: cfg.clone(),
        base: h.base().clone(),
        labels: layout.nodes.iter().map(|n| n.label.clone()).collect(),
        pairs,
        generals,
        community,
        samples,
        trace,
        diagnostics: Diagnostics {
            sweeps_performed: sweeps,
            observations: records.len() as u64,
            acceptance_rate: 1.0,
            max_log_joint_drift: max_drift,
        },
    })
}
