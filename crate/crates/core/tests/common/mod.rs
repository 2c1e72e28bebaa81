#![allow(dead_code)]

use std::collections::BTreeMap;

use pronoun_franchise::community::LogRecord;
use pronoun_franchise::inference::{enumerate_arrangements, Alphas, FitConfig, FitResult, Shape};
use pronoun_franchise::lexicon::{forms, Form, GrammaticalSlot, LexiconConfig};
use pronoun_franchise::speaker::{MemberId, ReferenceEvent};

pub fn reference(ts: u64, s: u32, t: u32, form: Form) -> LogRecord {
    LogRecord::Reference(ReferenceEvent {
        timestamp: ts,
        speaker: MemberId(s),
        referent: MemberId(t),
        discourse: ts,
        interaction: 0,
        slot: GrammaticalSlot::Subject,
        surface: form.realize(GrammaticalSlot::Subject, "x"),
        form,
    })
}

pub fn log_of(events: &[(u32, u32, Form)]) -> Vec<LogRecord> {
    events
        .iter()
        .enumerate()
        .map(|(i, (s, t, f))| reference(i as u64, *s, *t, f.clone()))
        .collect()
}

/// Enumerable fixtures: at most 5 events and at most 2 restaurant levels.
pub fn oracle_fixtures() -> Vec<(&'static str, Vec<LogRecord>, FitConfig)> {
    use forms::*;
    let two = LexiconConfig::with_seeds(&[(he(), 1.0), (she(), 1.0)]).with_novelty(0.0);
    let flat = |alpha: f64, lexicon: LexiconConfig| FitConfig {
        shape: Shape::Flat,
        alphas: Alphas {
            community: alpha,
            ..Alphas::default()
        },
        lexicon,
        ..FitConfig::default()
    };
    let speakers = FitConfig {
        shape: Shape::Speakers,
        alphas: Alphas {
            general: 1.0,
            referent: 0.5,
            ..Alphas::default()
        },
        ..FitConfig::default()
    };
    vec![
        (
            "one restaurant, 5 events, 2 forms, α=1",
            log_of(&[(0, 1, he()), (0, 1, she()), (0, 1, he()), (0, 1, he()), (0, 1, she())]),
            flat(1.0, two.clone()),
        ),
        (
            "one restaurant, 5 identical events, α=0.5",
            log_of(&vec![(0, 1, they()); 5]),
            flat(0.5, LexiconConfig::default()),
        ),
        (
            "speaker over two referents, 5 events",
            log_of(&[(0, 1, he()), (0, 1, he()), (0, 2, she()), (0, 1, she()), (0, 2, he())]),
            speakers.clone(),
        ),
        (
            "two speakers, 4 events",
            log_of(&[(0, 1, he()), (1, 0, she()), (0, 1, he()), (1, 0, she())]),
            speakers,
        ),
    ]
}

pub type TableDistributions = Vec<BTreeMap<u32, f64>>;

/// Exact posterior distribution of the table count in every restaurant.
pub fn exact_table_distributions(log: &[LogRecord], cfg: &FitConfig) -> TableDistributions {
    let mut classes: Vec<(f64, Vec<u32>)> = Vec::new();
    enumerate_arrangements::<f64, _>(log, cfg, |a| classes.push((a.log_weight, a.table_counts.to_vec()))).unwrap();
    let max = classes.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = classes.iter().map(|c| (c.0 - max).exp()).sum();
    let mut out: TableDistributions = vec![BTreeMap::new(); classes[0].1.len()];
    for (w, counts) in &classes {
        let p = (w - max).exp() / z;
        for (r, k) in counts.iter().enumerate() {
            *out[r].entry(*k).or_default() += p;
        }
    }
    out
}

/// Table-count frequencies across a fit's retained samples.
pub fn gibbs_table_distributions(fit: &FitResult<f64>) -> TableDistributions {
    let samples = fit.samples();
    let mut out: TableDistributions = vec![BTreeMap::new(); samples[0].table_counts.len()];
    for s in samples {
        for (r, k) in s.table_counts.iter().enumerate() {
            *out[r].entry(*k).or_default() += 1.0 / samples.len() as f64;
        }
    }
    out
}

pub fn max_gap(a: &TableDistributions, b: &TableDistributions) -> f64 {
    let mut gap = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        for k in x.keys().chain(y.keys()) {
            gap = gap.max((x.get(k).unwrap_or(&0.0) - y.get(k).unwrap_or(&0.0)).abs());
        }
    }
    gap
}

/// Gibbs configuration for oracle comparisons: 10^4 retained sweeps.
pub fn oracle_gibbs(cfg: &FitConfig, seed: u64) -> FitConfig {
    FitConfig {
        sweeps: 10_500,
        burn_in: Some(500),
        thin: 1,
        seed,
        ..cfg.clone()
    }
}
