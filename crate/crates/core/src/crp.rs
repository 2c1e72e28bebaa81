//! Chinese Restaurant Franchise bookkeeping.
//!
//! Restaurants live in an arena ([`Hierarchy`]) and point at their parent
//! restaurant, or at the lexicon base measure when they are roots. Every
//! table at a child restaurant is one customer at its parent, and the
//! table remembers which parent table that customer sits at. Table state is
//! kept explicitly (not collapsed to per-dish counts) so that seatings can
//! be reversed exactly and the franchise can be audited.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{BaseMeasure, Form, LexiconConfig};
use crate::predictive::Predictive;
use crate::scalar::{categorical, ln_factorial_minus_one, ln_rising, Scalar};

/// Number of levels counting the base measure: base, community,
/// speaker-general, referent-specific.
pub const MAX_DEPTH: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RestaurantId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TableId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub id: TableId,
    /// Direct customers plus one per child table seated here.
    pub occupancy: u32,
    /// Customers seated directly (observations), not via a child table.
    pub direct: u32,
    pub parent_table: Option<TableId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct DishTables {
    tables: Vec<Table>,
    customers: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restaurant<T> {
    label: String,
    concentration: T,
    parent: Option<RestaurantId>,
    depth: u8,
    dishes: BTreeMap<Form, DishTables>,
    customers: u32,
    table_count: u32,
    next_table: u32,
}

impl<T: Scalar> Restaurant<T> {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn concentration(&self) -> T {
        self.concentration
    }

    pub fn parent(&self) -> Option<RestaurantId> {
        self.parent
    }

    /// Levels from the base measure (base = 1, a root restaurant = 2).
    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn total_customers(&self) -> u32 {
        self.customers
    }

    pub fn table_count(&self) -> u32 {
        self.table_count
    }

    pub fn is_empty(&self) -> bool {
        self.customers == 0
    }

    /// Customers eating `dish`, summed over its tables.
    pub fn count(&self, dish: &Form) -> u32 {
        self.dishes.get(dish).map_or(0, |d| d.customers)
    }

    pub fn tables_serving(&self, dish: &Form) -> &[Table] {
        self.dishes.get(dish).map_or(&[], |d| &d.tables)
    }

    /// Dishes in canonical order.
    pub fn dishes(&self) -> impl Iterator<Item = &Form> {
        self.dishes.keys()
    }

    /// Per-dish customer counts in canonical order.
    pub fn dish_counts(&self) -> Vec<(Form, u32)> {
        self.dishes
            .iter()
            .map(|(f, d)| (f.clone(), d.customers))
            .collect()
    }
}

/// Receipt for one seated customer: the table chain it occupies, from the
/// restaurant it entered up to the first table that already existed (or the
/// root restaurant's new table).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeatRecord {
    ticket: u64,
    dish: Form,
    hops: Vec<(RestaurantId, TableId)>,
    root_reached: bool,
}

impl SeatRecord {
    pub fn dish(&self) -> &Form {
        &self.dish
    }

    pub fn restaurant(&self) -> RestaurantId {
        self.hops[0].0
    }

    pub fn hops(&self) -> &[(RestaurantId, TableId)] {
        &self.hops
    }

    /// Number of tables this seating opened.
    pub fn new_tables(&self) -> usize {
        if self.root_reached {
            self.hops.len()
        } else {
            self.hops.len() - 1
        }
    }
}

/// A seating and the log of its conditional probability (table choice and,
/// for new tables, the dish drawn from the parent).
#[derive(Debug, Clone)]
pub struct Seating<T> {
    pub record: SeatRecord,
    pub log_prob: T,
}

#[derive(Debug, Clone)]
pub struct Hierarchy<T> {
    base: BaseMeasure<T>,
    restaurants: Vec<Restaurant<T>>,
    live: HashSet<u64>,
    next_ticket: u64,
}

impl<T: Scalar> PartialEq for Hierarchy<T> {
    fn eq(&self, other: &Self) -> bool {
        self.base.config() == other.base.config() && self.restaurants == other.restaurants
    }
}

impl<T: Scalar> Hierarchy<T> {
    pub fn new(lexicon: LexiconConfig) -> Result<Self> {
        Ok(Hierarchy {
            base: BaseMeasure::new(lexicon)?,
            restaurants: Vec::new(),
            live: HashSet::new(),
            next_ticket: 0,
        })
    }

    pub fn base(&self) -> &BaseMeasure<T> {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.restaurants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.restaurants.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = RestaurantId> {
        (0..self.restaurants.len() as u32).map(RestaurantId)
    }

    pub fn restaurant(&self, id: RestaurantId) -> &Restaurant<T> {
        &self.restaurants[id.0 as usize]
    }

    fn rest_mut(&mut self, id: RestaurantId) -> &mut Restaurant<T> {
        &mut self.restaurants[id.0 as usize]
    }

    pub fn add_restaurant(
        &mut self,
        parent: Option<RestaurantId>,
        concentration: T,
        label: impl Into<String>,
    ) -> Result<RestaurantId> {
        let label = label.into();
        if !(concentration > T::zero() && concentration.is_finite()) {
            return Err(Error::config(
                format!("concentration[{label}]"),
                format!("must be positive and finite, got {concentration}"),
            ));
        }
        let depth = match parent {
            None => 2,
            Some(p) => {
                if p.0 as usize >= self.restaurants.len() {
                    return Err(Error::InvalidInput(format!("unknown parent restaurant {}", p.0)));
                }
                self.restaurant(p).depth + 1
            }
        };
        if depth > MAX_DEPTH {
            return Err(Error::InvalidInput(format!(
                "restaurant `{label}` would sit at depth {depth} (max {MAX_DEPTH})"
            )));
        }
        let id = RestaurantId(self.restaurants.len() as u32);
        self.restaurants.push(Restaurant {
            label,
            concentration,
            parent,
            depth,
            dishes: BTreeMap::new(),
            customers: 0,
            table_count: 0,
            next_table: 0,
        });
        Ok(id)
    }

    /// `r` and its ancestors, leaf first.
    pub fn chain(&self, r: RestaurantId) -> Vec<RestaurantId> {
        let mut chain = vec![r];
        let mut cur = r;
        while let Some(p) = self.restaurant(cur).parent {
            chain.push(p);
            cur = p;
        }
        chain
    }

    /// `P_r(f)` by the franchise recursion down from the base measure.
    pub fn prob(&self, r: RestaurantId, dish: &Form) -> T {
        let chain = self.chain(r);
        self.parent_probs(&chain, dish)[0]
            .1
    }

    /// For each level of `chain` (leaf first) returns `(P_parent, P_self)`
    /// for `dish`.
    fn parent_probs(&self, chain: &[RestaurantId], dish: &Form) -> Vec<(T, T)> {
        let mut out = vec![(T::zero(), T::zero()); chain.len()];
        let mut above = self.base.score(dish);
        for (i, &r) in chain.iter().enumerate().rev() {
            let rest = self.restaurant(r);
            let n = T::of_count(u64::from(rest.customers));
            let c = T::of_count(u64::from(rest.count(dish)));
            let a = rest.concentration;
            let here = if rest.customers == 0 {
                above
            } else {
                (c + a * above) / (n + a)
            };
            out[i] = (above, here);
            above = here;
        }
        out
    }

    /// Posterior predictive of `r`. The explicit support is every dish along
    /// the ancestor chain plus the seed forms.
    pub fn predictive(&self, r: RestaurantId) -> Predictive<T> {
        let chain = self.chain(r);
        let mut support: BTreeSet<Form> = self.base.seed_forms().cloned().collect();
        for &c in &chain {
            support.extend(self.restaurant(c).dishes.keys().cloned());
        }
        let mut probs: Vec<(Form, T)> = support
            .into_iter()
            .map(|f| {
                let g = self.base.score(&f);
                (f, g)
            })
            .collect();
        let base_explicit: T = probs.iter().map(|(_, g)| *g).sum();
        let mut scale = T::one();
        for &c in chain.iter().rev() {
            let rest = self.restaurant(c);
            if rest.customers == 0 {
                continue;
            }
            let n = T::of_count(u64::from(rest.customers));
            let a = rest.concentration;
            for (f, p) in probs.iter_mut() {
                let count = T::of_count(u64::from(rest.count(f)));
                *p = (count + a * *p) / (n + a);
            }
            scale = scale * a / (n + a);
        }
        let residual = if self.base.config().novelty_mass > 0.0 {
            scale * (T::one() - base_explicit).max(T::zero())
        } else {
            T::zero()
        };
        Predictive {
            masses: probs,
            residual,
            novel_scale: scale,
        }
    }

    /// Seats one customer eating `dish` at `r`: an existing table with
    /// probability ∝ occupancy, a new table ∝ α·P_parent(dish); a new table
    /// sends one customer to the parent.
    pub fn seat<R: Rng + ?Sized>(
        &mut self,
        r: RestaurantId,
        dish: &Form,
        rng: &mut R,
    ) -> Result<Seating<T>> {
        let chain = self.chain(r);
        let probs = self.parent_probs(&chain, dish);
        let ticket = self.next_ticket;
        self.next_ticket += 1;

        let mut hops = Vec::with_capacity(chain.len());
        let mut log_prob = T::zero();
        let mut root_reached = false;
        for (level, &ri) in chain.iter().enumerate() {
            let direct = level == 0;
            let rest = self.restaurant(ri);
            let a = rest.concentration;
            let denom = T::of_count(u64::from(rest.customers)) + a;
            let tables = rest.tables_serving(dish);
            let mut weights: Vec<T> = tables
                .iter()
                .map(|t| T::of_count(u64::from(t.occupancy)))
                .collect();
            weights.push(a * probs[level].0);
            let pick = categorical(&weights, rng).unwrap_or(tables.len());

            let child = hops.last().copied();
            let rest = self.rest_mut(ri);
            let entry = rest.dishes.entry(dish.clone()).or_default();
            let table_id = if pick < entry.tables.len() {
                let t = &mut entry.tables[pick];
                log_prob = log_prob + (T::of_count(u64::from(t.occupancy)) / denom).ln();
                t.occupancy += 1;
                if direct {
                    t.direct += 1;
                }
                t.id
            } else {
                let id = TableId(rest.next_table);
                rest.next_table += 1;
                entry.tables.push(Table {
                    id,
                    occupancy: 1,
                    direct: u32::from(direct),
                    parent_table: None,
                });
                rest.table_count += 1;
                log_prob = log_prob + (a / denom).ln();
                id
            };
            entry.customers += 1;
            rest.customers += 1;
            if let Some((cr, ct)) = child {
                self.table_mut(cr, dish, ct)
                    .expect("child table just created")
                    .parent_table = Some(table_id);
            }
            hops.push((ri, table_id));
            if pick < weights.len() - 1 {
                break;
            }
            if level == chain.len() - 1 {
                root_reached = true;
                log_prob = log_prob + self.base.score(dish).ln();
            }
        }
        self.live.insert(ticket);
        Ok(Seating {
            record: SeatRecord {
                ticket,
                dish: dish.clone(),
                hops,
                root_reached,
            },
            log_prob,
        })
    }

    fn table_mut(&mut self, r: RestaurantId, dish: &Form, id: TableId) -> Option<&mut Table> {
        self.rest_mut(r)
            .dishes
            .get_mut(dish)?
            .tables
            .iter_mut()
            .find(|t| t.id == id)
    }

    fn table(&self, r: RestaurantId, dish: &Form, id: TableId) -> Option<&Table> {
        self.restaurant(r)
            .dishes
            .get(dish)?
            .tables
            .iter()
            .find(|t| t.id == id)
    }

    /// Removes one customer from a table, cascading to the parent when the
    /// table empties.
    fn remove_customer(
        &mut self,
        r: RestaurantId,
        dish: &Form,
        id: TableId,
        direct: bool,
    ) -> Result<()> {
        let rest = self.rest_mut(r);
        let entry = rest
            .dishes
            .get_mut(dish)
            .ok_or_else(|| Error::Consistency(format!("no tables serve {dish} at {}", r.0)))?;
        let idx = entry
            .tables
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| Error::Consistency(format!("table {} missing at {}", id.0, r.0)))?;
        let table = &mut entry.tables[idx];
        if direct {
            if table.direct == 0 {
                return Err(Error::Consistency(format!(
                    "table {} at {} has no direct customers",
                    id.0, r.0
                )));
            }
            table.direct -= 1;
        } else if table.occupancy <= table.direct {
            return Err(Error::Consistency(format!(
                "table {} at {} has no child-table customers",
                id.0, r.0
            )));
        }
        table.occupancy -= 1;
        entry.customers -= 1;
        rest.customers -= 1;
        if table.occupancy == 0 {
            let removed = entry.tables.remove(idx);
            if entry.tables.is_empty() {
                rest.dishes.remove(dish);
            }
            rest.table_count -= 1;
            if removed.id.0 + 1 == rest.next_table {
                rest.next_table -= 1;
            }
            if let Some(p) = rest.parent {
                let pt = removed.parent_table.ok_or_else(|| {
                    Error::Consistency(format!("table {} at {} has no parent table", id.0, r.0))
                })?;
                self.remove_customer(p, dish, pt, false)?;
            }
        }
        Ok(())
    }

    /// Reverses a seating. Returns the log conditional probability of that
    /// same seating, evaluated in the state after removal.
    pub fn unseat(&mut self, record: &SeatRecord) -> Result<T> {
        if !self.live.contains(&record.ticket) {
            return Err(Error::Consistency(format!(
                "seat record {} is stale or was already unseated",
                record.ticket
            )));
        }
        let (r0, t0) = record.hops[0];
        match self.table(r0, &record.dish, t0) {
            Some(t) if t.direct > 0 => {}
            _ => {
                return Err(Error::Consistency(format!(
                    "seat record {} does not match restaurant {}",
                    record.ticket, r0.0
                )))
            }
        }
        // The tables this removal empties, which may differ from the path
        // recorded at seating time once other customers have come and gone.
        let mut path = vec![(r0, t0)];
        loop {
            let (ri, ti) = path[path.len() - 1];
            let table = self.table(ri, &record.dish, ti).expect("path tables exist before removal");
            match (table.occupancy, self.restaurant(ri).parent, table.parent_table) {
                (1, Some(p), Some(pt)) => path.push((p, pt)),
                _ => break,
            }
        }
        self.remove_customer(r0, &record.dish, t0, true)?;
        self.live.remove(&record.ticket);

        let mut log_prob = T::zero();
        for (i, &(ri, ti)) in path.iter().enumerate() {
            let rest = self.restaurant(ri);
            let a = rest.concentration;
            let denom = T::of_count(u64::from(rest.customers)) + a;
            if let Some(t) = self.table(ri, &record.dish, ti) {
                log_prob = log_prob + (T::of_count(u64::from(t.occupancy)) / denom).ln();
                break;
            }
            log_prob = log_prob + (a / denom).ln();
            if i == path.len() - 1 && rest.parent.is_none() {
                log_prob = log_prob + self.base.score(&record.dish).ln();
            }
        }
        Ok(log_prob)
    }

    /// Removes up to `count` direct customers from one table.
    pub fn remove_direct(
        &mut self,
        r: RestaurantId,
        dish: &Form,
        table: TableId,
        count: u32,
    ) -> Result<()> {
        for _ in 0..count {
            self.remove_customer(r, dish, table, true)?;
        }
        Ok(())
    }

    /// Removes `⌈(1−retention)·occupancy⌉` direct customers from every table
    /// of `r`, in canonical dish order then table order.
    pub fn thin(&mut self, r: RestaurantId, retention: f64) -> Result<()> {
        let plan: Vec<(Form, TableId, u32)> = self
            .restaurant(r)
            .dishes
            .iter()
            .flat_map(|(f, d)| {
                d.tables.iter().map(move |t| {
                    let k = removal_count(retention, t.occupancy).min(t.direct);
                    (f.clone(), t.id, k)
                })
            })
            .collect();
        for (dish, table, k) in plan {
            self.remove_direct(r, &dish, table, k)?;
        }
        Ok(())
    }

    /// Samples a form from `predictive(r)` without seating it. Residual mass
    /// produces a fresh form from the string model.
    pub fn draw_probe<R: Rng + ?Sized>(&self, r: RestaurantId, rng: &mut R) -> Result<Form> {
        let pred = self.predictive(r);
        sample_predictive(&pred, &self.base, rng)
    }

    /// Samples from the predictive and seats the result.
    pub fn draw<R: Rng + ?Sized>(
        &mut self,
        r: RestaurantId,
        rng: &mut R,
    ) -> Result<(Form, Seating<T>)> {
        let form = self.draw_probe(r, rng)?;
        let seating = self.seat(r, &form, rng)?;
        Ok((form, seating))
    }

    /// Log joint probability of every seating decision and root dish draw.
    /// Exchangeable, so the value is the same for any seating order.
    pub fn log_joint(&self) -> T {
        let mut total = T::zero();
        for rest in &self.restaurants {
            if rest.customers == 0 {
                continue;
            }
            let a = rest.concentration;
            total = total + T::of_count(u64::from(rest.table_count)) * a.ln()
                - ln_rising(a, rest.customers);
            for (dish, d) in &rest.dishes {
                for t in &d.tables {
                    total = total + ln_factorial_minus_one::<T>(t.occupancy);
                }
                if rest.parent.is_none() {
                    total = total
                        + T::of_count(d.tables.len() as u64) * self.base.score(dish).ln();
                }
            }
        }
        total
    }

    /// Checks every bookkeeping invariant of the franchise.
    pub fn audit(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Consistency(msg));
        let mut child_refs: HashMap<(RestaurantId, &Form, TableId), u32> = HashMap::new();
        for (i, rest) in self.restaurants.iter().enumerate() {
            let id = RestaurantId(i as u32);
            match rest.parent {
                None if rest.depth != 2 => return fail(format!("root {i} at depth {}", rest.depth)),
                Some(p) if p.0 >= id.0 => return fail(format!("restaurant {i} has later parent {}", p.0)),
                Some(p) if self.restaurant(p).depth + 1 != rest.depth => {
                    return fail(format!("restaurant {i} depth mismatch"))
                }
                _ => {}
            }
            if rest.depth > MAX_DEPTH {
                return fail(format!("restaurant {i} deeper than {MAX_DEPTH}"));
            }
            let mut customers = 0;
            let mut tables = 0;
            let mut ids = HashSet::new();
            for (dish, d) in &rest.dishes {
                if d.tables.is_empty() {
                    return fail(format!("empty dish entry {dish} at {i}"));
                }
                let mut dish_customers = 0;
                for t in &d.tables {
                    if t.occupancy == 0 || t.direct > t.occupancy {
                        return fail(format!("table {} at {i} has bad occupancy", t.id.0));
                    }
                    if t.id.0 >= rest.next_table || !ids.insert(t.id) {
                        return fail(format!("table id {} at {i} reused or out of range", t.id.0));
                    }
                    dish_customers += t.occupancy;
                    tables += 1;
                    match (rest.parent, t.parent_table) {
                        (Some(p), Some(pt)) => {
                            if self.table(p, dish, pt).is_none() {
                                return fail(format!(
                                    "table {} at {i} points at missing parent table {}",
                                    t.id.0, pt.0
                                ));
                            }
                            *child_refs.entry((p, dish, pt)).or_default() += 1;
                        }
                        (None, None) => {}
                        _ => return fail(format!("table {} at {i} has wrong parent link", t.id.0)),
                    }
                }
                if dish_customers != d.customers {
                    return fail(format!("dish count of {dish} at {i} out of sync"));
                }
                customers += dish_customers;
            }
            if customers != rest.customers || tables != rest.table_count {
                return fail(format!("restaurant {i} totals out of sync"));
            }
        }
        for (i, rest) in self.restaurants.iter().enumerate() {
            let id = RestaurantId(i as u32);
            for (dish, d) in &rest.dishes {
                for t in &d.tables {
                    let refs = child_refs.get(&(id, dish, t.id)).copied().unwrap_or(0);
                    if t.direct + refs != t.occupancy {
                        return fail(format!(
                            "table {} at {i} holds {} customers but {} direct + {} child tables",
                            t.id.0, t.occupancy, t.direct, refs
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_records(&self) -> Vec<RestaurantRecord> {
        self.restaurants
            .iter()
            .enumerate()
            .map(|(i, r)| RestaurantRecord {
                id: i as u32,
                label: r.label.clone(),
                alpha: r.concentration.as_f64(),
                parent: r.parent.map(|p| p.0),
                next_table: r.next_table,
                tables: r
                    .dishes
                    .iter()
                    .flat_map(|(dish, d)| {
                        d.tables.iter().map(move |t| TableRecord {
                            dish: dish.clone(),
                            id: t.id.0,
                            occupancy: t.occupancy,
                            direct: t.direct,
                            parent_table: t.parent_table.map(|p| p.0),
                        })
                    })
                    .collect(),
            })
            .collect()
    }

    /// Rebuilds a hierarchy from records and audits it.
    pub fn from_records(lexicon: LexiconConfig, records: &[RestaurantRecord]) -> Result<Self> {
        let h = Self::from_records_unaudited(lexicon, records)?;
        h.audit().map_err(|e| Error::Corrupt(e.to_string()))?;
        Ok(h)
    }

    pub(crate) fn from_records_unaudited(lexicon: LexiconConfig, records: &[RestaurantRecord]) -> Result<Self> {
        let mut h = Hierarchy::new(lexicon)?;
        for (i, rec) in records.iter().enumerate() {
            if rec.id as usize != i {
                return Err(Error::Corrupt(format!("restaurant record {i} has id {}", rec.id)));
            }
            let id = h
                .add_restaurant(rec.parent.map(RestaurantId), T::of(rec.alpha), rec.label.clone())
                .map_err(|e| Error::Corrupt(e.to_string()))?;
            let rest = h.rest_mut(id);
            rest.next_table = rec.next_table;
            for t in &rec.tables {
                let entry = rest.dishes.entry(t.dish.clone()).or_default();
                entry.tables.push(Table {
                    id: TableId(t.id),
                    occupancy: t.occupancy,
                    direct: t.direct,
                    parent_table: t.parent_table.map(TableId),
                });
                entry.customers += t.occupancy;
                rest.customers += t.occupancy;
                rest.table_count += 1;
            }
        }
        Ok(h)
    }
}

/// `⌈(1−ρ)·n⌉`, with a small tolerance so that products landing a rounding
/// error above an integer do not round up.
pub(crate) fn removal_count(retention: f64, n: u32) -> u32 {
    let x = (1.0 - retention) * f64::from(n);
    ((x - 1e-9).ceil().max(0.0) as u32).min(n)
}

pub(crate) fn sample_predictive<T: Scalar, R: Rng + ?Sized>(
    pred: &Predictive<T>,
    base: &BaseMeasure<T>,
    rng: &mut R,
) -> Result<Form> {
    let mut weights: Vec<T> = pred.masses.iter().map(|(_, m)| *m).collect();
    weights.push(pred.residual);
    match categorical(&weights, rng) {
        Some(i) if i < pred.masses.len() => Ok(pred.masses[i].0.clone()),
        Some(_) => base.sample_novel(rng, |f| pred.contains(f)),
        None => Err(Error::InvalidInput("predictive has no mass".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRecord {
    pub dish: Form,
    pub id: u32,
    pub occupancy: u32,
    pub direct: u32,
    pub parent_table: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestaurantRecord {
    pub id: u32,
    pub label: String,
    pub alpha: f64,
    pub parent: Option<u32>,
    pub next_table: u32,
    pub tables: Vec<TableRecord>,
}
