//! Referring forms and the open-vocabulary base measure.
//!
//! A [`Form`] is the dish served at every restaurant: a whole pronoun
//! paradigm, a chosen name, or an explicit preference for no pronoun. Forms
//! are identified by their canonical spec string, which is also their
//! interchange representation in event logs and snapshots:
//!
//! * `subj/obj/posdet/posind/refl` for a pronoun paradigm,
//! * `name:X` for a name,
//! * `none` for the no-pronoun preference.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{categorical, uniform, Scalar};

const NAME_PREFIX: &str = "name:";
const NONE_SPEC: &str = "none";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FormKind {
    PronounParadigm,
    Name,
    NoPronoun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrammaticalSlot {
    Subject,
    Object,
    PossDet,
    PossIndep,
    Reflexive,
}

impl GrammaticalSlot {
    pub const ALL: [GrammaticalSlot; 5] = [
        GrammaticalSlot::Subject,
        GrammaticalSlot::Object,
        GrammaticalSlot::PossDet,
        GrammaticalSlot::PossIndep,
        GrammaticalSlot::Reflexive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_possessive(self) -> bool {
        matches!(self, GrammaticalSlot::PossDet | GrammaticalSlot::PossIndep)
    }
}

/// A referring paradigm. Equality, ordering and hashing all go through the
/// canonical spec, so two forms are the same dish iff their kinds and cells
/// agree.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Form {
    spec: Arc<str>,
}

fn check_cell(cell: &str, paradigm: bool) -> std::result::Result<(), String> {
    if cell.is_empty() {
        return Err("empty segment".into());
    }
    if let Some(c) = cell.chars().find(|c| c.is_whitespace()) {
        return Err(format!("segment `{cell}` contains whitespace {c:?}"));
    }
    if cell.contains('/') {
        return Err(format!("segment `{cell}` contains `/`"));
    }
    if paradigm && cell.contains(':') {
        return Err(format!("paradigm segment `{cell}` contains `:`"));
    }
    Ok(())
}

impl Form {
    pub fn paradigm(cells: [&str; 5]) -> Result<Self> {
        for cell in cells {
            check_cell(cell, true).map_err(|reason| Error::InvalidInput(reason))?;
        }
        Ok(Form {
            spec: cells.join("/").into(),
        })
    }

    pub fn name(name: &str) -> Result<Self> {
        check_cell(name, false).map_err(Error::InvalidInput)?;
        Ok(Form {
            spec: format!("{NAME_PREFIX}{name}").into(),
        })
    }

    pub fn no_pronoun() -> Self {
        Form {
            spec: NONE_SPEC.into(),
        }
    }

    pub fn kind(&self) -> FormKind {
        if &*self.spec == NONE_SPEC {
            FormKind::NoPronoun
        } else if self.spec.starts_with(NAME_PREFIX) {
            FormKind::Name
        } else {
            FormKind::PronounParadigm
        }
    }

    /// Canonical spec string.
    pub fn spec(&self) -> &str {
        &self.spec
    }

    /// The surface cells: five for a paradigm, one for a name, none otherwise.
    pub fn cells(&self) -> Vec<&str> {
        match self.kind() {
            FormKind::PronounParadigm => self.spec.split('/').collect(),
            FormKind::Name => vec![&self.spec[NAME_PREFIX.len()..]],
            FormKind::NoPronoun => Vec::new(),
        }
    }

    /// Surface string for `slot`. Names and the no-pronoun preference take
    /// `'s` in possessive slots; `none` falls back to the referent's name.
    pub fn realize(&self, slot: GrammaticalSlot, referent_name: &str) -> String {
        let bare = match self.kind() {
            FormKind::PronounParadigm => {
                return self.spec.split('/').nth(slot.index()).unwrap().to_string();
            }
            FormKind::Name => &self.spec[NAME_PREFIX.len()..],
            FormKind::NoPronoun => referent_name,
        };
        if slot.is_possessive() {
            format!("{bare}'s")
        } else {
            bare.to_string()
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec)
    }
}

impl fmt::Debug for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Form({})", self.spec)
    }
}

/// Parses `a/b/c/d/e`, `name:X` or `none`.
pub fn parse_form_spec(text: &str) -> Result<Form> {
    let err = |reason: String| Error::Parse {
        text: text.to_string(),
        reason,
    };
    if text == NONE_SPEC {
        return Ok(Form::no_pronoun());
    }
    if let Some(name) = text.strip_prefix(NAME_PREFIX) {
        check_cell(name, false).map_err(|r| err(format!("name segment: {r}")))?;
        return Form::name(name);
    }
    let segments: Vec<&str> = text.split('/').collect();
    if segments.len() != 5 {
        return Err(err(format!(
            "expected 5 `/`-separated segments, found {}",
            segments.len()
        )));
    }
    for (i, seg) in segments.iter().enumerate() {
        check_cell(seg, true).map_err(|r| err(format!("segment {} (`{seg}`): {r}", i + 1)))?;
    }
    Form::paradigm([
        segments[0],
        segments[1],
        segments[2],
        segments[3],
        segments[4],
    ])
}

/// Canonical formatter; inverse of [`parse_form_spec`].
pub fn format_form_spec(form: &Form) -> String {
    form.spec.to_string()
}

impl FromStr for Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_form_spec(s)
    }
}

impl Serialize for Form {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.spec)
    }
}

impl<'de> Deserialize<'de> for Form {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_form_spec(&s).map_err(serde::de::Error::custom)
    }
}

/// Common English paradigms.
pub mod forms {
    use super::Form;

    pub fn he() -> Form {
        Form::paradigm(["he", "him", "his", "his", "himself"]).unwrap()
    }

    pub fn she() -> Form {
        Form::paradigm(["she", "her", "her", "hers", "herself"]).unwrap()
    }

    pub fn they() -> Form {
        Form::paradigm(["they", "them", "their", "theirs", "themself"]).unwrap()
    }

    pub fn ze() -> Form {
        Form::paradigm(["ze", "zir", "zir", "zirs", "zirself"]).unwrap()
    }

    pub fn xe() -> Form {
        Form::paradigm(["xe", "xem", "xyr", "xyrs", "xemself"]).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedForm {
    pub form: Form,
    pub weight: f64,
}

/// Probability that a novel form is a paradigm, a name, or `none`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KindWeights {
    pub paradigm: f64,
    pub name: f64,
    pub no_pronoun: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        KindWeights {
            paradigm: 0.45,
            name: 0.45,
            no_pronoun: 0.10,
        }
    }
}

impl KindWeights {
    /// All novelty mass on names.
    pub fn names_only() -> Self {
        KindWeights {
            paradigm: 0.0,
            name: 1.0,
            no_pronoun: 0.0,
        }
    }

    fn total(&self) -> f64 {
        self.paradigm + self.name + self.no_pronoun
    }

    fn get(&self, kind: FormKind) -> f64 {
        match kind {
            FormKind::PronounParadigm => self.paradigm,
            FormKind::Name => self.name,
            FormKind::NoPronoun => self.no_pronoun,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexiconConfig {
    pub seed_forms: Vec<SeedForm>,
    /// η: mass given to the character-level string model.
    pub novelty_mass: f64,
    pub alphabet: Vec<char>,
    /// p: probability that a cell continues after each character.
    pub length_continue_prob: f64,
    pub kind_weights: KindWeights,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig {
            seed_forms: vec![
                SeedForm {
                    form: forms::he(),
                    weight: 0.45,
                },
                SeedForm {
                    form: forms::she(),
                    weight: 0.45,
                },
                SeedForm {
                    form: forms::they(),
                    weight: 0.10,
                },
            ],
            novelty_mass: 0.05,
            alphabet: ('a'..='z').collect(),
            length_continue_prob: 0.3,
            kind_weights: KindWeights::default(),
        }
    }
}

impl LexiconConfig {
    pub fn with_seeds(seeds: &[(Form, f64)]) -> Self {
        LexiconConfig {
            seed_forms: seeds
                .iter()
                .map(|(form, weight)| SeedForm {
                    form: form.clone(),
                    weight: *weight,
                })
                .collect(),
            ..LexiconConfig::default()
        }
    }

    pub fn with_novelty(mut self, eta: f64) -> Self {
        self.novelty_mass = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.novelty_mass) {
            return Err(Error::config(
                "lexicon.novelty_mass",
                format!("must lie in [0, 1), got {}", self.novelty_mass),
            ));
        }
        if !(self.length_continue_prob > 0.0 && self.length_continue_prob < 1.0) {
            return Err(Error::config(
                "lexicon.length_continue_prob",
                format!("must lie in (0, 1), got {}", self.length_continue_prob),
            ));
        }
        let mut seen = BTreeSet::new();
        for seed in &self.seed_forms {
            if !(seed.weight > 0.0 && seed.weight.is_finite()) {
                return Err(Error::config(
                    "lexicon.seed_forms",
                    format!("weight of {} must be positive, got {}", seed.form, seed.weight),
                ));
            }
            if !seen.insert(seed.form.clone()) {
                return Err(Error::config(
                    "lexicon.seed_forms",
                    format!("duplicate seed form {}", seed.form),
                ));
            }
        }
        if self.seed_forms.is_empty() && self.novelty_mass == 0.0 {
            return Err(Error::config(
                "lexicon.seed_forms",
                "no seed forms and zero novelty mass leaves the base measure empty",
            ));
        }
        let kw = &self.kind_weights;
        if [kw.paradigm, kw.name, kw.no_pronoun]
            .iter()
            .any(|w| !(*w >= 0.0 && w.is_finite()))
            || kw.total() <= 0.0
        {
            return Err(Error::config(
                "lexicon.kind_weights",
                "weights must be non-negative with a positive total",
            ));
        }
        let distinct: BTreeSet<char> = self.alphabet.iter().copied().collect();
        if distinct.len() != self.alphabet.len() {
            return Err(Error::config("lexicon.alphabet", "duplicate characters"));
        }
        if let Some(c) = self.alphabet.iter().find(|c| c.is_whitespace() || **c == '/') {
            return Err(Error::config(
                "lexicon.alphabet",
                format!("character {c:?} cannot appear in a form"),
            ));
        }
        Ok(())
    }
}

/// The root distribution G0 over all forms: a finite weighted seed inventory
/// mixed with a character-level string model of mass η.
#[derive(Debug, Clone)]
pub struct BaseMeasure<T> {
    config: LexiconConfig,
    seeds: BTreeMap<Form, T>,
    alphabet: BTreeSet<char>,
}

impl<T: Scalar> BaseMeasure<T> {
    pub fn new(config: LexiconConfig) -> Result<Self> {
        config.validate()?;
        let total: f64 = config.seed_forms.iter().map(|s| s.weight).sum();
        let seeds = config
            .seed_forms
            .iter()
            .map(|s| (s.form.clone(), T::of(s.weight / total)))
            .collect();
        let alphabet = config.alphabet.iter().copied().collect();
        Ok(BaseMeasure {
            config,
            seeds,
            alphabet,
        })
    }

    pub fn config(&self) -> &LexiconConfig {
        &self.config
    }

    pub fn seed_forms(&self) -> impl Iterator<Item = &Form> {
        self.seeds.keys()
    }

    pub fn is_seed(&self, form: &Form) -> bool {
        self.seeds.contains_key(form)
    }

    /// Probability of one cell: geometric length term times uniform
    /// character choices. Zero if any character is outside the alphabet.
    pub fn cell_score(&self, cell: &str) -> T {
        let len = cell.chars().count();
        if len == 0 || self.alphabet.is_empty() || !cell.chars().all(|c| self.alphabet.contains(&c)) {
            return T::zero();
        }
        let p = T::of(self.config.length_continue_prob);
        let a = T::of_count(self.alphabet.len() as u64);
        let length_term = (T::one() - p) * p.powi(len as i32 - 1);
        length_term * a.recip().powi(len as i32)
    }

    /// Proper distribution over all forms: kind choice then independent cells.
    pub fn string_model(&self, form: &Form) -> T {
        let kw = &self.config.kind_weights;
        let kind = T::of(kw.get(form.kind()) / kw.total());
        form.cells()
            .into_iter()
            .fold(kind, |acc, cell| acc * self.cell_score(cell))
    }

    /// G0(form) = (1−η)·seed weight + η·string model.
    pub fn score(&self, form: &Form) -> T {
        let eta = T::of(self.config.novelty_mass);
        let seed = self.seeds.get(form).copied().unwrap_or_else(T::zero);
        let novel = if self.config.novelty_mass > 0.0 {
            eta * self.string_model(form)
        } else {
            T::zero()
        };
        (T::one() - eta) * seed + novel
    }

    /// Same as [`score`](Self::score) but rejects cells that violate the
    /// form invariants (only reachable for forms built outside this module).
    pub fn base_measure_score(&self, form: &Form) -> Result<T> {
        let paradigm = form.kind() == FormKind::PronounParadigm;
        for cell in form.cells() {
            check_cell(cell, paradigm).map_err(Error::InvalidInput)?;
        }
        Ok(self.score(form))
    }

    /// Samples a form from the string model, rejecting any form for which
    /// `exclude` holds. Used for the residual (unseen-form) mass.
    pub fn sample_novel<R: Rng + ?Sized>(&self, rng: &mut R, exclude: impl Fn(&Form) -> bool) -> Result<Form> {
        let kw = &self.config.kind_weights;
        let kind_weights = [T::of(kw.paradigm), T::of(kw.name), T::of(kw.no_pronoun)];
        if self.alphabet.is_empty() && kw.no_pronoun == 0.0 {
            return Err(Error::InvalidInput("string model has an empty alphabet".into()));
        }
        for _ in 0..10_000 {
            let kind = categorical(&kind_weights, rng).expect("kind weights validated");
            let form = match kind {
                0 => {
                    let cells: Vec<String> = (0..5).map(|_| self.sample_cell(rng)).collect();
                    Form::paradigm([&cells[0], &cells[1], &cells[2], &cells[3], &cells[4]])?
                }
                1 => Form::name(&self.sample_cell(rng))?,
                _ => Form::no_pronoun(),
            };
            if !exclude(&form) {
                return Ok(form);
            }
        }
        Err(Error::InvalidInput(
            "string model support exhausted by the explicit forms".into(),
        ))
    }

    fn sample_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> String {
        let p = self.config.length_continue_prob;
        let mut s = String::new();
        loop {
            let i = rng.gen_range(0..self.config.alphabet.len());
            s.push(self.config.alphabet[i]);
            if uniform::<f64, R>(rng) >= p {
                return s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use forms::*;
    use proptest::prelude::*;

    fn base(seeds: &[(Form, f64)], eta: f64) -> BaseMeasure<f64> {
        BaseMeasure::new(LexiconConfig::with_seeds(seeds).with_novelty(eta)).unwrap()
    }

    #[test]
    fn seed_weights_without_novelty() {
        let b = base(&[(he(), 0.5), (she(), 0.5)], 0.0);
        assert_eq!(b.score(&he()), 0.5);
        assert_eq!(b.score(&ze()), 0.0);
    }

    // Independent brute-force check: enumerate every string of length <= 3
    // and confirm the per-cell scores add up to the geometric mass 1 - p^3.
    #[test]
    fn cell_scores_match_geometric_mass() {
        let b = base(&[(he(), 1.0)], 0.05);
        let alphabet: Vec<char> = ('a'..='z').collect();
        let mut total = 0.0;
        let mut strings = vec![String::new()];
        for _ in 0..3 {
            let mut next = Vec::new();
            for s in &strings {
                for c in &alphabet {
                    let t = format!("{s}{c}");
                    total += b.cell_score(&t);
                    next.push(t);
                }
            }
            strings = next;
        }
        assert!((total - (1.0 - 0.3f64.powi(3))).abs() < 1e-12);
    }

    #[test]
    fn name_score_closed_form() {
        let mut cfg = LexiconConfig::with_seeds(&[(he(), 1.0)]).with_novelty(0.05);
        cfg.kind_weights = KindWeights::names_only();
        let b = BaseMeasure::<f64>::new(cfg).unwrap();
        let expected = 0.05 * (0.7 * 0.3f64.powi(2)) * (1.0f64 / 26.0).powi(3);
        let got = b.score(&Form::name("ada").unwrap());
        assert!((got - expected).abs() < 1e-18, "{got} vs {expected}");
    }

    #[test]
    fn out_of_alphabet_cells_score_zero() {
        let b = base(&[(he(), 1.0)], 0.05);
        assert_eq!(b.score(&Form::name("Ada").unwrap()), 0.0);
    }

    #[test]
    fn realize_cells() {
        assert_eq!(they().realize(GrammaticalSlot::Object, "Sam"), "them");
        assert_eq!(
            Form::name("Ada").unwrap().realize(GrammaticalSlot::PossDet, "Ada"),
            "Ada's"
        );
        assert_eq!(Form::no_pronoun().realize(GrammaticalSlot::Subject, "Sam"), "Sam");
        assert_eq!(
            Form::no_pronoun().realize(GrammaticalSlot::PossIndep, "Sam"),
            "Sam's"
        );
        assert_eq!(
            Form::name("Ada").unwrap().realize(GrammaticalSlot::Reflexive, "x"),
            "Ada"
        );
    }

    #[test]
    fn parse_examples() {
        let f = parse_form_spec("ze/zir/zir/zirs/zirself").unwrap();
        assert_eq!(f.kind(), FormKind::PronounParadigm);
        assert_eq!(f.cells(), vec!["ze", "zir", "zir", "zirs", "zirself"]);
        assert_eq!(parse_form_spec("name:Ada").unwrap(), Form::name("Ada").unwrap());
        assert_eq!(parse_form_spec("none").unwrap(), Form::no_pronoun());

        let err = parse_form_spec("he/him").unwrap_err().to_string();
        assert!(err.contains("found 2"), "{err}");
        let err = parse_form_spec("he//his/his/himself").unwrap_err().to_string();
        assert!(err.contains("segment 2"), "{err}");
        assert!(parse_form_spec("name:").is_err());
        assert!(parse_form_spec("name:a b").is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = LexiconConfig::default().with_novelty(1.0);
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        let mut cfg = LexiconConfig::default();
        cfg.seed_forms[0].weight = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sampled_novel_forms_avoid_exclusions() {
        use rand::SeedableRng;
        let b = base(&[(he(), 1.0)], 0.05);
        let mut rng = rand_pcg::Pcg64Mcg::seed_from_u64(9);
        for _ in 0..100 {
            let f = b.sample_novel(&mut rng, |f| *f == Form::no_pronoun()).unwrap();
            assert_ne!(f, Form::no_pronoun());
            assert!(b.score(&f) > 0.0);
        }
    }

    fn cell() -> impl Strategy<Value = String> {
        "[a-z]{1,6}"
    }

    fn form() -> impl Strategy<Value = Form> {
        prop_oneof![
            proptest::array::uniform5(cell())
                .prop_map(|c| Form::paradigm([&c[0], &c[1], &c[2], &c[3], &c[4]]).unwrap()),
            "[A-Za-z:.'-]{1,8}".prop_map(|n| Form::name(&n).unwrap()),
            Just(Form::no_pronoun()),
        ]
    }

    proptest! {
        #[test]
        fn parse_format_round_trip(f in form()) {
            let text = format_form_spec(&f);
            prop_assert_eq!(parse_form_spec(&text).unwrap(), f);
        }

        #[test]
        fn finite_sets_leave_novel_mass(fs in proptest::collection::btree_set(form(), 0..20)) {
            let b = base(&[(he(), 0.45), (she(), 0.45), (they(), 0.1)], 0.05);
            let mut all = fs.clone();
            all.extend([he(), she(), they()]);
            let total: f64 = all.iter().map(|f| b.score(f)).sum();
            prop_assert!(total < 1.0);

            let b0 = base(&[(he(), 0.45), (she(), 0.45), (they(), 0.1)], 0.0);
            let total0: f64 = all.iter().map(|f| b0.score(f)).sum();
            prop_assert!((total0 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn seed_order_is_irrelevant(f in form(), rot in 0usize..3) {
            let mut seeds = vec![(he(), 0.2), (she(), 0.3), (f.clone(), 0.5)];
            if seeds[..2].iter().any(|(s, _)| *s == f) {
                return Ok(());
            }
            let a = base(&seeds, 0.05);
            seeds.rotate_left(rot);
            let b = base(&seeds, 0.05);
            prop_assert!((a.score(&f) - b.score(&f)).abs() <= 1e-15);
            prop_assert!((a.score(&he()) - b.score(&he())).abs() <= 1e-15);
        }
    }
}
