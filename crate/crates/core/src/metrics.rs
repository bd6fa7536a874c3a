//! Utility and fairness metrics over prediction records.
//!
//! Raw functions return fractions in `[0, 1]`; [`MetricsReport`] carries the
//! same quantities as percentages.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub yhat: u8,
    pub phat: f64,
    pub y: u8,
    pub s: u8,
}

impl PredictionRecord {
    pub fn new(yhat: u8, phat: f64, y: u8, s: u8) -> Result<Self> {
        let r = Self { yhat, phat, y, s };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if self.yhat > 1 || self.y > 1 || self.s > 1 {
            return Err(Error::InvalidData(format!("labels must be binary: {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.phat) {
            return Err(Error::InvalidData(format!("phat {} outside [0, 1]", self.phat)));
        }
        Ok(())
    }

    fn correct(&self) -> bool {
        self.yhat == self.y
    }
}

/// Reads records from CSV with a `yhat,phat,y,s` header.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<PredictionRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let rec: PredictionRecord = rec?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<W: Write>(writer: W, records: &[PredictionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Accuracy overall and per sensitive group, as fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracySummary {
    pub acc: f64,
    pub acc_gap: f64,
    pub acc_min: f64,
    /// Group (`s` value) attaining `acc_min`; ties go to `s = 0`.
    pub argmin_group: u8,
    pub group_acc: [f64; 2],
}

fn group_rate(records: &[PredictionRecord], keep: impl Fn(&PredictionRecord) -> bool, hit: impl Fn(&PredictionRecord) -> bool) -> Option<f64> {
    let (mut n, mut k) = (0usize, 0usize);
    for r in records.iter().filter(|r| keep(r)) {
        n += 1;
        k += hit(r) as usize;
    }
    (n > 0).then(|| k as f64 / n as f64)
}

pub fn accuracy_metrics(records: &[PredictionRecord]) -> Result<AccuracySummary> {
    let mut group_acc = [0.0; 2];
    for s in 0..2u8 {
        group_acc[s as usize] = group_rate(records, |r| r.s == s, PredictionRecord::correct)
            .ok_or_else(|| Error::EmptyGroup(format!("no records with s = {s}")))?;
    }
    let acc = group_rate(records, |_| true, PredictionRecord::correct).expect("non-empty");
    let argmin_group = if group_acc[1] < group_acc[0] { 1 } else { 0 };
    Ok(AccuracySummary {
        acc,
        acc_gap: (group_acc[0] - group_acc[1]).abs(),
        acc_min: group_acc[argmin_group as usize],
        argmin_group,
        group_acc,
    })
}

/// `|P(Yhat=1 | S=0) - P(Yhat=1 | S=1)|`.
pub fn dp_gap(records: &[PredictionRecord]) -> Result<f64> {
    let rate = |s: u8| {
        group_rate(records, |r| r.s == s, |r| r.yhat == 1)
            .ok_or_else(|| Error::EmptyGroup(format!("no records with s = {s}")))
    };
    Ok((rate(0)? - rate(1)?).abs())
}

/// `max_y |P(Yhat=1 | S=0, Y=y) - P(Yhat=1 | S=1, Y=y)|`.
///
/// Every `(s, y)` cell must contain at least one record.
pub fn eqodds_gap(records: &[PredictionRecord]) -> Result<f64> {
    let rate = |s: u8, y: u8| {
        group_rate(records, |r| r.s == s && r.y == y, |r| r.yhat == 1)
            .ok_or_else(|| Error::EmptyGroup(format!("no records with s = {s}, y = {y}")))
    };
    let mut gap = 0.0f64;
    for y in 0..2u8 {
        gap = gap.max((rate(0, y)? - rate(1, y)?).abs());
    }
    Ok(gap)
}

/// Conjunctive accuracy improvement of a debiased model over a baseline.
///
/// `base` and `debiased` are `(acc, acc_gap)` pairs in percent. Returns
/// `lambda (gap_b - gap_d) + (1 - lambda) (acc_d - acc_b)`.
pub fn cai(lambda: f64, base: (f64, f64), debiased: (f64, f64)) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let (acc_b, gap_b) = base;
    let (acc_d, gap_d) = debiased;
    Ok(lambda * (gap_b - gap_d) + (1.0 - lambda) * (acc_d - acc_b))
}

/// All metrics for one set of predictions, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub acc_gap: f64,
    pub acc_min: f64,
    pub acc_min_group: u8,
    pub dp_gap: f64,
    pub eqodds_gap: f64,
}

impl MetricsReport {
    pub fn from_records(records: &[PredictionRecord]) -> Result<Self> {
        let a = accuracy_metrics(records)?;
        Ok(Self {
            acc: 100.0 * a.acc,
            acc_gap: 100.0 * a.acc_gap,
            acc_min: 100.0 * a.acc_min,
            acc_min_group: a.argmin_group,
            dp_gap: 100.0 * dp_gap(records)?,
            eqodds_gap: 100.0 * eqodds_gap(records)?,
        })
    }

    /// `(acc, acc_gap)`, the pair consumed by [`cai`].
    pub fn cai_pair(&self) -> (f64, f64) {
        (self.acc, self.acc_gap)
    }
}

/// A report plus CAI rows against a baseline, printable as an aligned table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub label: String,
    pub metrics: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<MetricsReport>,
    pub cai: Vec<CaiRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaiRow {
    pub lambda: f64,
    pub value: f64,
}

impl AuditReport {
    pub fn new(label: impl Into<String>, metrics: MetricsReport, baseline: Option<MetricsReport>, lambdas: &[f64]) -> Result<Self> {
        let cai = match &baseline {
            Some(b) => lambdas
                .iter()
                .map(|&l| Ok(CaiRow { lambda: l, value: cai(l, b.cai_pair(), metrics.cai_pair())? }))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Ok(Self {
            label: label.into(),
            metrics,
            baseline,
            cai,
        })
    }
}

fn row(label: &str, m: &MetricsReport, cai: &[CaiRow], cai_cols: &[f64]) -> Vec<String> {
    let mut out = vec![
        label.to_string(),
        format!("{:.2}", m.acc),
        format!("{:.2}", m.acc_gap),
        format!("{:.2} (s={})", m.acc_min, m.acc_min_group),
    ];
    for l in cai_cols {
        out.push(match cai.iter().find(|c| c.lambda == *l) {
            Some(c) => format!("{:.2}", c.value),
            None => "-".into(),
        });
    }
    out.push(format!("{:.2}", m.dp_gap));
    out.push(format!("{:.2}", m.eqodds_gap));
    out
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lambdas: Vec<f64> = self.cai.iter().map(|c| c.lambda).collect();
        let mut header: Vec<String> = ["method", "acc", "acc_gap", "acc_min (group)"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(lambdas.iter().map(|l| format!("CAI_{l}")));
        header.push("dp_gap".into());
        header.push("eqodds_gap".into());

        let mut rows = vec![header];
        if let Some(b) = &self.baseline {
            rows.push(row("baseline", b, &[], &lambdas));
        }
        rows.push(row(&self.label, &self.metrics, &self.cai, &lambdas));

        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        for (i, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            writeln!(f, "{}", cells.join("  ").trim_end())?;
            if i == 0 {
                let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                writeln!(f, "{}", "-".repeat(total))?;
            }
        }
        Ok(())
    }
}
