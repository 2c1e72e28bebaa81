use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Predictive mass on the declared forms.
    DeclaredMass,
    HeldoutLoss,
    /// Predictive mass off the referent's licensed forms.
    MisgenderingRate,
    StepsToAdoption,
    TvToDeclared,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::DeclaredMass,
        Metric::HeldoutLoss,
        Metric::MisgenderingRate,
        Metric::StepsToAdoption,
        Metric::TvToDeclared,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::DeclaredMass => "declared_mass",
            Metric::HeldoutLoss => "heldout_loss",
            Metric::MisgenderingRate => "misgendering_rate",
            Metric::StepsToAdoption => "steps_to_adoption",
            Metric::TvToDeclared => "tv_to_declared",
        }
    }

    fn is_probability(self) -> bool {
        matches!(self, Metric::DeclaredMass | Metric::MisgenderingRate | Metric::TvToDeclared)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse {
                text: s.to_string(),
                reason: "unknown metric".into(),
            })
    }
}

/// A metric value; `Never` marks an adoption that did not happen in the run
/// and orders above every number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Number(f64),
    Never,
}

impl MetricValue {
    pub fn number(self) -> Option<f64> {
        match self {
            MetricValue::Number(x) => Some(x),
            MetricValue::Never => None,
        }
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (MetricValue::Number(a), MetricValue::Number(b)) => a.total_cmp(b),
            (MetricValue::Number(_), MetricValue::Never) => Ordering::Less,
            (MetricValue::Never, MetricValue::Number(_)) => Ordering::Greater,
            (MetricValue::Never, MetricValue::Never) => Ordering::Equal,
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Number(x) => f.write_str(&format_sig6(*x)),
            MetricValue::Never => f.write_str("never"),
        }
    }
}

impl FromStr for MetricValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "never" {
            return Ok(MetricValue::Never);
        }
        s.parse().map(MetricValue::Number).map_err(|_| Error::Parse {
            text: s.to_string(),
            reason: "expected a number or `never`".into(),
        })
    }
}

/// Lower median, with `Never` above every number.
pub fn lower_median(values: &[MetricValue]) -> Option<MetricValue> {
    let mut v = values.to_vec();
    v.sort_by(MetricValue::total_cmp);
    if v.is_empty() {
        None
    } else {
        Some(v[(v.len() - 1) / 2])
    }
}

/// Decimal notation with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    let exp = rounded.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    format!("{rounded:.decimals$}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub replicate: u32,
    pub step: u64,
    pub member: String,
    pub metric: Metric,
    pub value: MetricValue,
}

impl MetricRow {
    fn key(&self) -> (u32, u64, &str, &'static str) {
        (self.replicate, self.step, &self.member, self.metric.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    rows: Vec<MetricRow>,
}

pub const CSV_HEADER: [&str; 5] = ["replicate", "step", "member", "metric", "value"];

impl MetricsTable {
    pub fn new() -> Self {
        MetricsTable::default()
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: MetricRow) -> Result<()> {
        match row.value {
            MetricValue::Number(x) if row.metric.is_probability() && !(-1e-12..=1.0 + 1e-12).contains(&x) => {
                return Err(Error::Validation(format!("{} value {x} outside [0, 1]", row.metric)))
            }
            MetricValue::Number(x) if row.metric == Metric::StepsToAdoption && (x < 0.0 || x.fract() != 0.0) => {
                return Err(Error::Validation(format!("steps_to_adoption value {x} is not a count")))
            }
            MetricValue::Never if row.metric != Metric::StepsToAdoption => {
                return Err(Error::Validation(format!("{} cannot be `never`", row.metric)))
            }
            _ => {}
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn record(&mut self, replicate: u32, step: u64, member: &str, metric: Metric, value: MetricValue) -> Result<()> {
        self.push(MetricRow {
            replicate,
            step,
            member: member.to_string(),
            metric,
            value,
        })
    }

    pub fn extend(&mut self, other: MetricsTable) {
        self.rows.extend(other.rows);
    }

    /// Sorts rows by (replicate, step, member, metric name).
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| a.key().cmp(&b.key()));
    }

    pub fn select<'a>(&'a self, metric: Metric) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut sorted: Vec<&MetricRow> = self.rows.iter().collect();
        sorted.sort_by(|a, b| a.key().cmp(&b.key()));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER).map_err(csv_error)?;
        for r in sorted {
            w.write_record([
                r.replicate.to_string(),
                r.step.to_string(),
                r.member.clone(),
                r.metric.to_string(),
                r.value.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_error)?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::Validation(format!("unexpected CSV header: {header:?}")));
        }
        let mut table = MetricsTable::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_error)?;
            let field = |k: usize| rec.get(k).unwrap_or_default();
            let bad = |what: &str| Error::Validation(format!("CSV row {}: bad {what}", i + 2));
            table.push(MetricRow {
                replicate: field(0).parse().map_err(|_| bad("replicate"))?,
                step: field(1).parse().map_err(|_| bad("step"))?,
                member: field(2).to_string(),
                metric: field(3).parse().map_err(|_| bad("metric"))?,
                value: field(4).parse().map_err(|_| bad("value"))?,
            })?;
        }
        Ok(table)
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Validation(format!("CSV: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn csv_text(t: &MetricsTable) -> String {
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(0.123456789), "0.123457");
        assert_eq!(format_sig6(1.0), "1.00000");
        assert_eq!(format_sig6(37.0), "37.0000");
        assert_eq!(format_sig6(0.000012345678), "0.0000123457");
        assert_eq!(format_sig6(9.999996), "10.0000");
        assert_eq!(format_sig6(1234567.0), "1234570");
        assert_eq!(format_sig6(-2.5), "-2.50000");
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(csv_text(&MetricsTable::new()), "replicate,step,member,metric,value\n");
    }

    #[test]
    fn one_row_round_trips() {
        let mut t = MetricsTable::new();
        t.record(3, 40, "m1", Metric::TvToDeclared, MetricValue::Number(0.0625)).unwrap();
        let back = MetricsTable::read_csv(csv_text(&t).as_bytes()).unwrap();
        assert_eq!(back, t);
        let mut n = MetricsTable::new();
        n.record(0, 0, "rigid", Metric::StepsToAdoption, MetricValue::Never).unwrap();
        assert_eq!(MetricsTable::read_csv(csv_text(&n).as_bytes()).unwrap(), n);
    }

    #[test]
    fn output_is_sorted_whatever_the_input_order() {
        let mut rows = Vec::new();
        for rep in 0..3 {
            for step in [0u64, 5, 10] {
                for member in ["m0", "m1", "m10", "m2"] {
                    for metric in [Metric::TvToDeclared, Metric::MisgenderingRate] {
                        rows.push(MetricRow {
                            replicate: rep,
                            step,
                            member: member.into(),
                            metric,
                            value: MetricValue::Number(0.5),
                        });
                    }
                }
            }
        }
        let mut expected = rows.clone();
        // sort oracle: tuple comparison on the string forms of the keys
        expected.sort_by(|a, b| {
            (a.replicate, a.step, a.member.as_str(), a.metric.to_string())
                .cmp(&(b.replicate, b.step, b.member.as_str(), b.metric.to_string()))
        });
        let mut g = rand_pcg::Pcg64Mcg::seed_from_u64(4);
        rows.shuffle(&mut g);
        let mut t = MetricsTable::new();
        for r in rows {
            t.push(r).unwrap();
        }
        let back = MetricsTable::read_csv(csv_text(&t).as_bytes()).unwrap();
        assert_eq!(back.rows(), &expected[..]);
    }

    #[test]
    fn rejects_out_of_range_values() {
        let mut t = MetricsTable::new();
        assert!(t.record(0, 0, "m", Metric::MisgenderingRate, MetricValue::Number(1.5)).is_err());
        assert!(t.record(0, 0, "m", Metric::StepsToAdoption, MetricValue::Number(2.5)).is_err());
        assert!(t.record(0, 0, "m", Metric::TvToDeclared, MetricValue::Never).is_err());
    }

    #[test]
    fn lower_median_puts_never_last() {
        use MetricValue::*;
        assert_eq!(lower_median(&[Never, Number(3.0), Number(9.0), Never]), Some(Number(9.0)));
        assert_eq!(lower_median(&[Never, Number(3.0), Never]), Some(Never));
        assert_eq!(lower_median(&[]), None);
    }
}
