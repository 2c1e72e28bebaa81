//! One PASS/FAIL line per acceptance criterion. Tolerances are pinned here.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};

use common::*;
use pronoun_franchise::community::{CommunityConfig, CommunityState, MemberGroup, StepPlan};
use pronoun_franchise::harness::{run_scenario, Metric, MetricValue, Scenario, ScenarioKind, Variant};
use pronoun_franchise::inference::{exact_marginal, fit_gibbs, Alphas, FitConfig, Shape};
use pronoun_franchise::lexicon::{forms, Form, LexiconConfig};
use pronoun_franchise::speaker::SpeakerProfile;
use pronoun_franchise::{Hierarchy, RestaurantId, SimRng};

const NORMALIZATION_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 0.02;
const TWO_EVENT_MARGINAL: f64 = 0.375;
const TWO_EVENT_TOL: f64 = 1e-15;
const ADOPTION_MASS: f64 = 0.8;
const MIXTURE_TV: f64 = 0.1;
const REVISION_RATE: f64 = 0.2;

fn report(name: &str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t < limit, format!("{:.1}s (limit {}s)", t.as_secs_f64(), limit.as_secs()))
}

fn random_lexicon(g: &mut SimRng) -> LexiconConfig {
    let pool = [forms::he(), forms::she(), forms::they(), forms::ze(), forms::xe()];
    let k = g.gen_range(1..=pool.len());
    let seeds: Vec<(Form, f64)> = pool[..k].iter().map(|f| (f.clone(), g.gen_range(0.1..2.0))).collect();
    let eta = if g.gen_bool(0.3) { 0.0 } else { g.gen_range(0.01..0.5) };
    LexiconConfig::with_seeds(&seeds).with_novelty(eta)
}

fn random_hierarchy(g: &mut SimRng) -> (Hierarchy<f64>, Vec<RestaurantId>, Vec<Form>) {
    let lexicon = random_lexicon(g);
    let dishes: Vec<Form> = lexicon
        .seed_forms
        .iter()
        .map(|s| s.form.clone())
        .chain((lexicon.novelty_mass > 0.0).then(|| Form::name("ada").unwrap()))
        .collect();
    let mut h = Hierarchy::<f64>::new(lexicon).unwrap();
    let mut ids = vec![h.add_restaurant(None, g.gen_range(0.1..5.0), "root").unwrap()];
    for i in 0..g.gen_range(0..6) {
        let parent = ids[g.gen_range(0..ids.len())];
        if h.restaurant(parent).depth() < 4 {
            ids.push(h.add_restaurant(Some(parent), g.gen_range(0.1..5.0), format!("r{i}")).unwrap());
        }
    }
    (h, ids, dishes)
}

#[test]
fn crp_crf_correctness() {
    let start = Instant::now();
    let mut g = SimRng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (mut h, ids, dishes) = random_hierarchy(&mut g);
        for _ in 0..g.gen_range(0..40) {
            let r = ids[g.gen_range(0..ids.len())];
            h.seat(r, &dishes[g.gen_range(0..dishes.len())], &mut g).unwrap();
        }
        for r in &ids {
            worst = worst.max((h.predictive(*r).total() - 1.0).abs());
        }
    }

    let mut inverse_ok = true;
    let mut audits = 0u32;
    let (mut h, ids, dishes) = {
        let mut g2 = SimRng::seed_from_u64(7);
        loop {
            let built = random_hierarchy(&mut g2);
            if built.1.len() >= 3 && built.2.len() >= 2 {
                break built;
            }
        }
    };
    let mut live = Vec::new();
    for i in 0..10_000 {
        let r = ids[g.gen_range(0..ids.len())];
        let dish = &dishes[g.gen_range(0..dishes.len())];
        let before = h.clone();
        let s = h.seat(r, dish, &mut g).unwrap();
        h.audit().unwrap();
        h.unseat(&s.record).unwrap();
        h.audit().unwrap();
        audits += 2;
        inverse_ok &= h == before;
        if i % 3 == 0 {
            live.push(h.seat(r, dish, &mut g).unwrap().record);
        } else if i % 3 == 1 && !live.is_empty() {
            let rec = live.swap_remove(g.gen_range(0..live.len()));
            h.unseat(&rec).unwrap();
        }
        h.audit().unwrap();
        audits += 1;
    }
    let (fast, time) = within(start, Duration::from_secs(60));
    report(
        "CRP/CRF correctness",
        worst <= NORMALIZATION_TOL && inverse_ok && fast,
        format!(
            "max |Σp−1| = {worst:.2e} (tol {NORMALIZATION_TOL:.0e}) over 1000 hierarchies; \
             seat/unseat inverse over 10^4 pairs: {inverse_ok}; {audits} audits passed; {time}"
        ),
    );
}

#[test]
fn oracle_equivalence() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (_, log, cfg) in oracle_fixtures() {
        let exact = exact_table_distributions(&log, &cfg);
        for seed in [11, 22, 33] {
            let fit = fit_gibbs::<f64>(&log, &oracle_gibbs(&cfg, seed)).unwrap();
            worst = worst.max(max_gap(&exact, &gibbs_table_distributions(&fit)));
        }
    }
    let two = FitConfig {
        shape: Shape::Flat,
        alphas: Alphas {
            community: 1.0,
            ..Alphas::default()
        },
        lexicon: LexiconConfig::with_seeds(&[(forms::he(), 1.0), (forms::she(), 1.0)]).with_novelty(0.0),
        ..FitConfig::default()
    };
    let log = log_of(&[(0, 1, forms::he()), (0, 1, forms::he())]);
    let marginal = exact_marginal::<f64>(&log, &two).unwrap().exp();
    let (fast, time) = within(start, Duration::from_secs(300));
    report(
        "Oracle equivalence",
        worst <= ORACLE_TOL && (marginal - TWO_EVENT_MARGINAL).abs() <= TWO_EVENT_TOL && fast,
        format!(
            "max Gibbs−exact gap in P(tables) = {worst:.4} (tol {ORACLE_TOL}) over {} fixtures × 3 seeds; \
             2-event marginal = {marginal:.17} (target {TWO_EVENT_MARGINAL}, tol {TWO_EVENT_TOL:.0e}); {time}",
            oracle_fixtures().len()
        ),
    );
}

#[test]
fn capability_novel_forms() {
    let xe = forms::xe();
    let mut sc = Scenario::preset(ScenarioKind::NovelForm);
    let reset = SpeakerProfile::flexible().with_revision(0.0, 5.0);

    // explicit mass everywhere one broadcast after the declaration
    let mut spread = true;
    for rep in 0..sc.replicates {
        let mut c = CommunityState::<f64>::new(CommunityConfig {
            seed: pronoun_franchise::harness::replicate_seed(sc.base_seed, rep),
            ..sc.community.clone()
        })
        .unwrap();
        for _ in 0..sc.warmup_steps {
            c.step().unwrap();
        }
        let t = sc.measured_referent;
        c.declare(t, &[(xe.clone(), 1.0)]).unwrap();
        c.step_with(StepPlan {
            referent: Some(t),
            refs: Some(1),
            ..StepPlan::default()
        })
        .unwrap();
        for m in c.member_ids() {
            let r = c.member(m).unwrap().referent_restaurant(t).unwrap();
            spread &= c.hierarchy().restaurant(r).count(&xe) > 0 && c.predictive(m, t).unwrap().mass(&xe) > 0.0;
        }
    }

    sc.community.members = vec![MemberGroup::profile(reset, 6)];
    let table = run_scenario(&sc).unwrap();
    let at_declaration: Vec<f64> = table
        .select(Metric::DeclaredMass)
        .filter(|r| r.step == sc.warmup_steps)
        .filter_map(|r| r.value.number())
        .collect();
    let least = at_declaration.iter().copied().fold(f64::INFINITY, f64::min);
    // count arithmetic: 5 pseudo-customers against α=0.5 give at least 5/5.5
    let floor = 5.0 / 5.5;
    report(
        "Capability 1 (novel forms)",
        spread && least >= ADOPTION_MASS && least >= floor - 1e-12,
        format!(
            "xe explicit in every member's restaurant after one broadcast: {spread}; \
             min declared mass at declaration (ρ=0, w=5) = {least:.4} ≥ {ADOPTION_MASS} (count bound {floor:.4}) \
             over {} member-replicates",
            at_declaration.len()
        ),
    );
}

#[test]
fn capability_mixtures() {
    let sc = Scenario::preset(ScenarioKind::Mixture);
    let flexible: Vec<String> = sc
        .community
        .resolve_members()
        .unwrap()
        .into_iter()
        .filter(|(_, p)| *p == SpeakerProfile::flexible())
        .map(|(n, _)| n)
        .collect();
    let table = run_scenario(&sc).unwrap();
    let end = sc.warmup_steps + 200;
    let tvs: Vec<f64> = table
        .select(Metric::TvToDeclared)
        .filter(|r| r.step == end && flexible.contains(&r.member))
        .filter_map(|r| r.value.number())
        .collect();
    let worst = tvs.iter().copied().fold(0.0, f64::max);
    report(
        "Capability 2 (mixtures)",
        tvs.len() == flexible.len() * 20 && worst <= MIXTURE_TV,
        format!(
            "max TV to 50/50 {{he, they}} after 200 observations = {worst:.4} (tol {MIXTURE_TV}) \
             over {} flexible member-replicates (20 replicates)",
            tvs.len()
        ),
    );
}

#[test]
fn capability_revision() {
    let mut details = Vec::new();
    let mut pass = true;
    for history in [10u64, 100, 1000] {
        let mut sc = Scenario::preset(ScenarioKind::Revision);
        sc.history = history;
        sc.post_steps = 10;
        let reset: Vec<String> = sc
            .community
            .resolve_members()
            .unwrap()
            .into_iter()
            .filter(|(_, p)| p.retention == 0.0)
            .map(|(n, _)| n)
            .collect();
        let table = run_scenario(&sc).unwrap();
        let rates: Vec<f64> = table
            .select(Metric::MisgenderingRate)
            .filter(|r| r.step == history && reset.contains(&r.member))
            .filter_map(|r| r.value.number())
            .collect();
        let worst = rates.iter().copied().fold(0.0, f64::max);
        pass &= rates.len() == reset.len() * sc.replicates as usize && worst <= REVISION_RATE;
        details.push(format!("history {history}: max {worst:.4}"));
    }
    report(
        "Capability 3 (revision)",
        pass,
        format!("ρ=0 misgendering_rate at first post-declaration measurement ≤ {REVISION_RATE}; {}", details.join(", ")),
    );
}

fn medians(table: &pronoun_franchise::harness::MetricsTable, label: &str, reps: u32) -> Vec<MetricValue> {
    (0..reps)
        .map(|rep| {
            table
                .select(Metric::StepsToAdoption)
                .find(|r| r.replicate == rep && r.member == label)
                .map(|r| r.value)
                .expect("median row per replicate")
        })
        .collect()
}

#[test]
fn capability_individual_variation() {
    let mut sc = Scenario::preset(ScenarioKind::CommunityContrast);
    sc.heldout = None;
    let table = run_scenario(&sc).unwrap();
    let flex = medians(&table, "flexible", sc.replicates);
    let rigid = medians(&table, "rigid", sc.replicates);
    let wins = flex.iter().zip(&rigid).filter(|(f, r)| f.total_cmp(r).is_le()).count();

    let by_rho = |rho: f64| Variant {
        label: format!("rho{rho}"),
        members: vec![MemberGroup::profile(SpeakerProfile::rigid().with_revision(rho, 1.0), 5)],
    };
    let mut mono = sc.clone();
    mono.variants = vec![by_rho(0.0), by_rho(0.5), by_rho(0.9)];
    let table = run_scenario(&mono).unwrap();
    let cols: Vec<Vec<MetricValue>> = ["rho0", "rho0.5", "rho0.9"]
        .iter()
        .map(|l| medians(&table, l, sc.replicates))
        .collect();
    let monotone = (0..sc.replicates as usize)
        .filter(|&i| cols[0][i].total_cmp(&cols[1][i]).is_le() && cols[1][i].total_cmp(&cols[2][i]).is_le())
        .count();
    let n = sc.replicates as usize;
    report(
        "Capability 4 (individual variation)",
        wins * 5 >= n * 4 && monotone * 2 > n,
        format!(
            "flexible median steps_to_adoption ≤ rigid in {wins}/{n} paired replicates (need ≥ 80%); \
             monotone in ρ ∈ {{0, 0.5, 0.9}} in {monotone}/{n} (need a majority)"
        ),
    );
}

fn cli(args: &[&str], dir: &Path) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_pronoun-franchise"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("sim.toml"),
        r#"
steps = 120
[community]
seed = 3
[[community.members]]
count = 3
preset = "rigid"
[[community.members]]
count = 3
preset = "flexible"
[[interventions]]
step = 60
declarer = 2
forms = [{ form = "ze/zir/zir/zirs/zirself", weight = 1.0 }]
"#,
    )
    .unwrap();
    cli(&["simulate", "--config", "sim.toml", "--out", "whole"], d);
    cli(&["simulate", "--config", "sim.toml", "--until", "60", "--out", "half"], d);
    cli(&["simulate", "--config", "sim.toml", "--resume", "half/snapshot.json", "--out", "resumed"], d);
    let read = |p: &str| std::fs::read(d.join(p)).unwrap();
    let snapshot_equal = read("whole/snapshot.json") == read("resumed/snapshot.json");
    let log_equal = read("whole/events.jsonl") == read("resumed/events.jsonl");

    let scenario = ["scenario", "E2", "--seed", "17", "--replicates", "3"];
    let a = cli(&scenario, d).stdout;
    let b = cli(&scenario, d).stdout;
    cli(&["scenario", "E3", "--seed", "5", "--replicates", "2", "--out", "e3a.csv"], d);
    cli(&["scenario", "E3", "--seed", "5", "--replicates", "2", "--out", "e3b.csv"], d);
    let csv_equal = a == b && !a.is_empty() && read("e3a.csv") == read("e3b.csv");
    report(
        "Reproducibility",
        snapshot_equal && log_equal && csv_equal,
        format!(
            "resumed snapshot byte-identical: {snapshot_equal}; event log identical: {log_equal}; \
             repeated scenario CSV byte-identical: {csv_equal}"
        ),
    );
}
