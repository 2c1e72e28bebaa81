use std::collections::BTreeMap;

use super::{FitConfig, Layout};
use crate::community::LogRecord;
use crate::error::{Error, Result};
use crate::lexicon::{BaseMeasure, Form};
use crate::scalar::{ln_factorial_minus_one, ln_rising, Scalar};

/// Largest number of observations [`exact_marginal`] will enumerate.
pub const EXACT_EVENT_LIMIT: usize = 8;

/// A class of franchise seatings sharing the same table sizes everywhere.
#[derive(Debug, Clone, Copy)]
pub struct Arrangement<'a, T> {
    /// ln(number of labeled seatings in the class) + ln joint of each.
    pub log_weight: T,
    /// Tables per restaurant, indexed like the fit's restaurant labels.
    pub table_counts: &'a [u32],
}

fn ln_factorial<T: Scalar>(n: u32) -> T {
    ln_factorial_minus_one::<T>(n + 1)
}

/// Integer partitions of `n` into parts no larger than `max`, non-increasing.
fn partitions(n: u32, max: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if n == 0 {
        out.push(prefix.clone());
        return;
    }
    for part in (1..=n.min(max)).rev() {
        prefix.push(part);
        partitions(n - part, part, prefix, out);
        prefix.pop();
    }
}

/// ln of the number of set partitions of `Σλ` labeled items with block sizes λ.
fn ln_multiplicity<T: Scalar>(blocks: &[u32]) -> T {
    let n: u32 = blocks.iter().sum();
    let mut v = ln_factorial::<T>(n);
    for b in blocks {
        v = v - ln_factorial::<T>(*b);
    }
    let mut i = 0;
    while i < blocks.len() {
        let j = blocks[i..].iter().take_while(|b| **b == blocks[i]).count();
        v = v - ln_factorial::<T>(j as u32);
        i += j;
    }
    v
}

struct Enumerator<'a, T, F> {
    layout: &'a Layout,
    base: &'a BaseMeasure<T>,
    order: Vec<usize>,
    customers: Vec<BTreeMap<Form, u32>>,
    tables: Vec<u32>,
    cache: BTreeMap<u32, Vec<Vec<u32>>>,
    visit: F,
}

impl<T: Scalar, F: FnMut(Arrangement<'_, T>)> Enumerator<'_, T, F> {
    fn node(&mut self, pos: usize, acc: T) {
        if pos == self.order.len() {
            (self.visit)(Arrangement {
                log_weight: acc,
                table_counts: &self.tables,
            });
            return;
        }
        let i = self.order[pos];
        let dishes: Vec<(Form, u32)> = self.customers[i].iter().map(|(f, c)| (f.clone(), *c)).collect();
        let n: u32 = dishes.iter().map(|(_, c)| c).sum();
        if n == 0 {
            self.node(pos + 1, acc);
            return;
        }
        let a = T::of(self.layout.nodes[i].alpha);
        self.dish(pos, i, &dishes, 0, acc - ln_rising(a, n));
    }

    fn dish(&mut self, pos: usize, i: usize, dishes: &[(Form, u32)], d: usize, acc: T) {
        if d == dishes.len() {
            self.node(pos + 1, acc);
            return;
        }
        let (form, m) = &dishes[d];
        let shapes = self
            .cache
            .entry(*m)
            .or_insert_with(|| {
                let mut out = Vec::new();
                partitions(*m, *m, &mut Vec::new(), &mut out);
                out
            })
            .clone();
        let node = &self.layout.nodes[i];
        let ln_a = T::of(node.alpha).ln();
        let parent = node.parent;
        for blocks in &shapes {
            let k = blocks.len() as u32;
            let mut term = T::of_count(u64::from(k)) * ln_a + ln_multiplicity::<T>(blocks);
            for b in blocks {
                term = term + ln_factorial_minus_one::<T>(*b);
            }
            match parent {
                Some(p) => *self.customers[p].entry(form.clone()).or_default() += k,
                None => term = term + T::of_count(u64::from(k)) * self.base.score(form).ln(),
            }
            self.tables[i] += k;
            self.dish(pos, i, dishes, d + 1, acc + term);
            self.tables[i] -= k;
            if let Some(p) = parent {
                let c = self.customers[p].get_mut(form).expect("entry added above");
                *c -= k;
                if *c == 0 {
                    self.customers[p].remove(form);
                }
            }
        }
    }
}

/// Visits every seating class of the fitted hierarchy for `log`, children
/// before parents. Refuses instances above [`EXACT_EVENT_LIMIT`].
pub fn enumerate_arrangements<T: Scalar, F: FnMut(Arrangement<'_, T>)>(
    log: &[LogRecord],
    cfg: &FitConfig,
    visit: F,
) -> Result<()> {
    cfg.validate()?;
    let layout = Layout::build(log, cfg)?;
    if layout.observations.len() > EXACT_EVENT_LIMIT {
        return Err(Error::TooLarge {
            events: layout.observations.len(),
            limit: EXACT_EVENT_LIMIT,
        });
    }
    let base = BaseMeasure::<T>::new(cfg.lexicon.clone())?;
    let mut order: Vec<usize> = (0..layout.nodes.len()).collect();
    order.sort_by_key(|i| std::cmp::Reverse(layout.depth(*i)));
    let mut customers = vec![BTreeMap::new(); layout.nodes.len()];
    for (node, form) in &layout.observations {
        *customers[*node].entry(form.clone()).or_default() += 1;
    }
    let mut e = Enumerator {
        layout: &layout,
        base: &base,
        order,
        customers,
        tables: vec![0; layout.nodes.len()],
        cache: BTreeMap::new(),
        visit,
    };
    e.node(0, T::zero());
    Ok(())
}

/// Log marginal likelihood of the observed forms, summed over every
/// franchise seating.
pub fn exact_marginal<T: Scalar>(log: &[LogRecord], cfg: &FitConfig) -> Result<T> {
    let mut weights: Vec<T> = Vec::new();
    enumerate_arrangements::<T, _>(log, cfg, |a| weights.push(a.log_weight))?;
    let max = weights.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return Ok(max);
    }
    let sum: T = weights.iter().map(|w| (*w - max).exp()).sum();
    Ok(max + sum.ln())
}
