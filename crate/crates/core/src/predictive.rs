use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{BaseMeasure, Form};
use crate::scalar::Scalar;

/// A restaurant's posterior predictive: explicit masses on a finite support
/// (sorted by canonical spec) plus the mass left for every other form.
///
/// Any form outside the support has probability `novel_scale · G0(form)`;
/// `residual` is that quantity summed over all unseen forms.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictive<T> {
    pub masses: Vec<(Form, T)>,
    pub residual: T,
    pub novel_scale: T,
}

impl<T: Scalar> Predictive<T> {
    /// G0 itself, with the seed forms as explicit support.
    pub fn of_base(base: &BaseMeasure<T>) -> Self {
        let masses: Vec<(Form, T)> = base
            .seed_forms()
            .map(|f| (f.clone(), base.score(f)))
            .collect();
        let explicit: T = masses.iter().map(|(_, m)| *m).sum();
        Predictive {
            masses,
            residual: (T::one() - explicit).max(T::zero()),
            novel_scale: T::one(),
        }
    }

    pub fn explicit_total(&self) -> T {
        self.masses.iter().map(|(_, m)| *m).sum()
    }

    pub fn total(&self) -> T {
        self.explicit_total() + self.residual
    }

    /// Explicit mass, zero when `form` is not in the support.
    pub fn mass(&self, form: &Form) -> T {
        self.masses
            .binary_search_by(|(f, _)| f.cmp(form))
            .map(|i| self.masses[i].1)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn contains(&self, form: &Form) -> bool {
        self.masses.binary_search_by(|(f, _)| f.cmp(form)).is_ok()
    }

    /// Probability of any form, falling back to the scaled base measure for
    /// forms outside the explicit support.
    pub fn prob(&self, form: &Form, base: &BaseMeasure<T>) -> T {
        match self.masses.binary_search_by(|(f, _)| f.cmp(form)) {
            Ok(i) => self.masses[i].1,
            Err(_) => self.novel_scale * base.score(form),
        }
    }

    pub fn support(&self) -> impl Iterator<Item = &Form> {
        self.masses.iter().map(|(f, _)| f)
    }

    /// Highest explicit mass; ties go to the earliest form in canonical order.
    pub fn argmax(&self) -> Option<&Form> {
        let mut best: Option<(&Form, T)> = None;
        for (f, m) in &self.masses {
            if best.map_or(true, |(_, b)| *m > b) {
                best = Some((f, *m));
            }
        }
        best.map(|(f, _)| f)
    }

    /// Total mass on `forms`.
    pub fn mass_on(&self, forms: &[Form], base: &BaseMeasure<T>) -> T {
        let unique: BTreeSet<&Form> = forms.iter().collect();
        unique.into_iter().map(|f| self.prob(f, base)).sum()
    }

    /// The distribution restricted to `forms` and renormalized. Errors when
    /// the restriction carries no mass.
    pub fn restricted(&self, forms: &[Form], base: &BaseMeasure<T>) -> Result<Vec<T>> {
        let raw: Vec<T> = forms.iter().map(|f| self.prob(f, base)).collect();
        let z: T = raw.iter().copied().sum();
        if z <= T::zero() {
            return Err(Error::InvalidInput(
                "restriction has zero predictive mass".into(),
            ));
        }
        Ok(raw.into_iter().map(|m| m / z).collect())
    }
}

/// Half the L1 distance between two distributions on the same index set.
pub fn total_variation<T: Scalar>(p: &[T], q: &[T]) -> T {
    debug_assert_eq!(p.len(), q.len());
    let l1: T = p.iter().zip(q).map(|(a, b)| (*a - *b).abs()).sum();
    l1 / T::of(2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassRecord {
    pub form: Form,
    pub p: f64,
}

/// Serialized form of a [`Predictive`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveRecord {
    pub masses: Vec<MassRecord>,
    pub residual: f64,
    pub novel_scale: f64,
}

impl<T: Scalar> From<&Predictive<T>> for PredictiveRecord {
    fn from(p: &Predictive<T>) -> Self {
        PredictiveRecord {
            masses: p
                .masses
                .iter()
                .map(|(form, m)| MassRecord {
                    form: form.clone(),
                    p: m.as_f64(),
                })
                .collect(),
            residual: p.residual.as_f64(),
            novel_scale: p.novel_scale.as_f64(),
        }
    }
}

impl PredictiveRecord {
    pub fn to_predictive<T: Scalar>(&self) -> Result<Predictive<T>> {
        let mut masses: Vec<(Form, T)> = self
            .masses
            .iter()
            .map(|r| (r.form.clone(), T::of(r.p)))
            .collect();
        let before = masses.len();
        masses.sort_by(|a, b| a.0.cmp(&b.0));
        masses.dedup_by(|a, b| a.0 == b.0);
        if masses.len() != before {
            return Err(Error::Corrupt("duplicate form in predictive table".into()));
        }
        Ok(Predictive {
            masses,
            residual: T::of(self.residual),
            novel_scale: T::of(self.novel_scale),
        })
    }
}
