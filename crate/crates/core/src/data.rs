//! Labeled datasets and the synthetic biased-data generator.
//!
//! [`SynthSpec::default`] reproduces the extreme-imbalance regime: the
//! training split contains no positive examples from the protected group
//! `s = 1`, while the test split is balanced over all four `(y, s)` cells.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Inputs `x: [N, p]` with parallel binary labels `y` (target) and `s`
/// (sensitive attribute).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub x: Tensor,
    pub y: Vec<u8>,
    pub s: Vec<u8>,
}

impl LabeledBatch {
    pub fn new(x: Tensor, y: Vec<u8>, s: Vec<u8>) -> Result<Self> {
        let (n, _) = x.dims2().ok_or_else(|| {
            Error::InvalidData(format!("inputs must be a matrix, got shape {:?}", x.shape()))
        })?;
        if y.len() != n || s.len() != n {
            return Err(Error::InvalidData(format!(
                "{n} rows but {} y labels and {} s labels",
                y.len(),
                s.len()
            )));
        }
        if y.iter().chain(&s).any(|&v| v > 1) {
            return Err(Error::InvalidData("labels must be 0 or 1".into()));
        }
        Ok(Self { x, y, s })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn select(&self, idx: &[usize]) -> LabeledBatch {
        LabeledBatch {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            s: idx.iter().map(|&i| self.s[i]).collect(),
        }
    }

    /// Number of rows with the given `(y, s)`.
    /// Seeded shuffle, then the first `round(n * test_fraction)` rows
    /// (at least one, at most `n - 1`) become the test split.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(LabeledBatch, LabeledBatch)> {
        let n = self.len();
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("test_fraction {test_fraction} outside (0, 1)")));
        }
        if n < 2 {
            return Err(Error::InvalidData("need at least two rows to split".into()));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        let (test, train) = idx.split_at(n_test);
        Ok((self.select(train), self.select(test)))
    }

    pub fn cell_count(&self, y: u8, s: u8) -> usize {
        self.y
            .iter()
            .zip(&self.s)
            .filter(|&(&yi, &si)| yi == y && si == s)
            .count()
    }

    pub fn has_both_classes(&self) -> bool {
        self.y.contains(&0) && self.y.contains(&1)
    }

    /// CSV with columns `x0..x{p-1}, y, s`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let p = self.input_width();
        let mut header: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        header.push("s".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.y[i].to_string());
            rec.push(self.s[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let cols = header.len();
        if cols < 3 || &header[cols - 2] != "y" || &header[cols - 1] != "s" {
            return Err(Error::InvalidData("expected columns x0.., y, s".into()));
        }
        let p = cols - 2;
        let (mut xs, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            for j in 0..p {
                xs.push(parse_field::<f64>(&rec[j], "x")?);
            }
            y.push(parse_field::<u8>(&rec[p], "y")?);
            s.push(parse_field::<u8>(&rec[p + 1], "s")?);
        }
        if y.is_empty() {
            return Err(Error::InvalidData("no rows".into()));
        }
        Self::new(Tensor::matrix(y.len(), p, xs)?, y, s)
    }
}

fn parse_field<T: std::str::FromStr>(v: &str, what: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidData(format!("cannot parse {what} value {v:?}")))
}

/// Class-conditional Gaussian data with per-cell counts.
///
/// Cells are indexed `[y][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub d_x: usize,
    pub means: [[Vec<f64>; 2]; 2],
    pub noise_std: f64,
    pub train_counts: [[usize; 2]; 2],
    pub test_count_per_cell: usize,
}

impl Default for SynthSpec {
    /// Ten inputs: `y` shifts dims 0-4 by 1.5, `s` shifts dims 4-9 by 1.0, so
    /// dim 4 carries both. Training has 500/250 negatives and 500/0
    /// positives for `s = 0/1`; the test split has 100 rows per cell.
    fn default() -> Self {
        Self::with_signals(10, 1.5, 1.0, 1.0, [[500, 250], [500, 0]], 100)
    }
}

impl SynthSpec {
    /// Means `mu(y, s)_j = y_signal * y` for `j < d_x / 2` and
    /// `+ s_signal * s` for `j >= d_x / 2 - 1`.
    pub fn with_signals(
        d_x: usize,
        y_signal: f64,
        s_signal: f64,
        noise_std: f64,
        train_counts: [[usize; 2]; 2],
        test_count_per_cell: usize,
    ) -> Self {
        let half = d_x / 2;
        let mean = |y: u8, s: u8| -> Vec<f64> {
            (0..d_x)
                .map(|j| {
                    let mut m = 0.0;
                    if j < half {
                        m += y_signal * y as f64;
                    }
                    if j + 1 >= half {
                        m += s_signal * s as f64;
                    }
                    m
                })
                .collect()
        };
        Self {
            d_x,
            means: [[mean(0, 0), mean(0, 1)], [mean(1, 0), mean(1, 1)]],
            noise_std,
            train_counts,
            test_count_per_cell,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 {
            return Err(Error::InvalidData("d_x must be positive".into()));
        }
        if self.means.iter().flatten().any(|m| m.len() != self.d_x || m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidData(format!(
                "every cell mean must have {} finite entries",
                self.d_x
            )));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidData("noise_std must be positive".into()));
        }
        let c = &self.train_counts;
        let cells = c.iter().flatten().filter(|&&n| n > 0).count();
        let has_y0 = c[0][0] + c[0][1] > 0;
        let has_y1 = c[1][0] + c[1][1] > 0;
        if cells < 2 || !has_y0 || !has_y1 {
            return Err(Error::InvalidData(
                "training cells must cover both y values".into(),
            ));
        }
        if self.test_count_per_cell == 0 {
            return Err(Error::InvalidData("test cells must be non-empty".into()));
        }
        Ok(())
    }

    fn draw<R: rand::Rng>(&self, counts: [[usize; 2]; 2], rng: &mut R) -> Result<LabeledBatch> {
        let n: usize = counts.iter().flatten().sum();
        let mut xs = Vec::with_capacity(n * self.d_x);
        let (mut ys, mut ss) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for y in 0..2u8 {
            for s in 0..2u8 {
                let mean = &self.means[y as usize][s as usize];
                for _ in 0..counts[y as usize][s as usize] {
                    for m in mean {
                        let e: f64 = StandardNormal.sample(rng);
                        xs.push(m + self.noise_std * e);
                    }
                    ys.push(y);
                    ss.push(s);
                }
            }
        }
        LabeledBatch::new(Tensor::matrix(n, self.d_x, xs)?, ys, ss)
    }
}

/// Draws `(train, test)` from one seeded stream; rows are grouped by cell in
/// the order `(0,0), (0,1), (1,0), (1,1)`.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<(LabeledBatch, LabeledBatch)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = spec.draw(spec.train_counts, &mut rng)?;
    let t = spec.test_count_per_cell;
    let test = spec.draw([[t, t], [t, t]], &mut rng)?;
    Ok((train, test))
}
