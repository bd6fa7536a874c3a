//! Stochastic Gaussian encoder, Bernoulli heads and the downstream logistic
//! classifier.
//!
//! Parameter structs own plain [`Tensor`]s. To differentiate through them,
//! `bind` registers every tensor as a leaf on a [`Tape`] and returns a
//! matching `*Vars` struct whose `forward` builds the graph.

use rand::Rng;

use crate::autodiff::{sigmoid, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Head probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

/// Fully connected layer `x W + b` with `W: [in, out]` and `b: [1, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(vec![inputs, outputs]),
            bias: Tensor::zeros(vec![1, outputs]),
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot(inputs, outputs, rng),
            bias: Tensor::zeros(vec![1, outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape) -> LinearVars {
        LinearVars {
            weight: tape.leaf(self.weight.clone()),
            bias: tape.leaf(self.bias.clone()),
        }
    }

    fn tensors(&self) -> [&Tensor; 2] {
        [&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (inputs + outputs) as f64).sqrt();
    let data = (0..inputs * outputs)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::new(vec![inputs, outputs], data).expect("glorot shape")
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl LinearVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add_row(xw, self.bias)
    }

    fn vars(&self) -> [Var; 2] {
        [self.weight, self.bias]
    }
}

/// MLP producing the mean and log standard deviation of `P(Z|X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub hidden: Vec<Linear>,
    pub mu: Linear,
    pub log_sigma: Linear,
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], latent: usize, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = inputs;
        for &h in hidden {
            layers.push(Linear::glorot(width, h, rng));
            width = h;
        }
        Self {
            hidden: layers,
            mu: Linear::glorot(width, latent, rng),
            log_sigma: Linear::glorot(width, latent, rng),
        }
    }

    pub fn zeros(inputs: usize, hidden: &[usize], latent: usize) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = inputs;
        for &h in hidden {
            layers.push(Linear::zeros(width, h));
            width = h;
        }
        Self {
            hidden: layers,
            mu: Linear::zeros(width, latent),
            log_sigma: Linear::zeros(width, latent),
        }
    }

    pub fn input_width(&self) -> usize {
        self.hidden.first().unwrap_or(&self.mu).inputs()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.outputs()
    }

    /// Width of the raw encoder output (`mu` and `log sigma` together).
    pub fn output_width(&self) -> usize {
        self.mu.outputs() + self.log_sigma.outputs()
    }

    pub fn bind(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            hidden: self.hidden.iter().map(|l| l.bind(tape)).collect(),
            mu: self.mu.bind(tape),
            log_sigma: self.log_sigma.bind(tape),
        }
    }

    /// Forward pass without gradient recording.
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::inference();
        let vars = self.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let (mu, sigma) = vars.encode(&mut tape, xv)?;
        Ok((tape.value(mu).clone(), tape.value(sigma).clone()))
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.hidden.iter().flat_map(Linear::tensors).collect();
        out.extend(self.mu.tensors());
        out.extend(self.log_sigma.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.hidden.iter_mut().flat_map(Linear::tensors_mut).collect();
        out.extend(self.mu.tensors_mut());
        out.extend(self.log_sigma.tensors_mut());
        out
    }

    fn names(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.hidden.len() {
            out.push(format!("{prefix}.hidden.{i}.weight"));
            out.push(format!("{prefix}.hidden.{i}.bias"));
        }
        for part in ["mu", "log_sigma"] {
            out.push(format!("{prefix}.{part}.weight"));
            out.push(format!("{prefix}.{part}.bias"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EncoderVars {
    pub hidden: Vec<LinearVars>,
    pub mu: LinearVars,
    pub log_sigma: LinearVars,
}

impl EncoderVars {
    /// Returns `(mu, sigma)` with `sigma = exp(log sigma)`, both `[N, d]`.
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        let mut h = x;
        for layer in &self.hidden {
            let pre = layer.forward(tape, h)?;
            h = tape.relu(pre)?;
        }
        let mu = self.mu.forward(tape, h)?;
        let log_sigma = self.log_sigma.forward(tape, h)?;
        let sigma = tape.exp(log_sigma)?;
        Ok((mu, sigma))
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out: Vec<Var> = self.hidden.iter().flat_map(LinearVars::vars).collect();
        out.extend(self.mu.vars());
        out.extend(self.log_sigma.vars());
        out
    }
}

/// Reparameterized draw `z = mu + sigma * eps`; `eps` enters as a constant.
pub fn sample_z(tape: &mut Tape, mu: Var, sigma: Var, eps: &Tensor) -> Result<Var> {
    if tape.shape(mu) != tape.shape(sigma) || tape.shape(mu) != eps.shape() {
        return Err(Error::ShapeMismatch {
            op: "sample_z",
            lhs: tape.shape(mu).to_vec(),
            rhs: eps.shape().to_vec(),
        });
    }
    let e = tape.constant(eps.clone());
    let noise = tape.mul(sigma, e)?;
    tape.add(mu, noise)
}

/// Two linear layers with a ReLU between them and a sigmoid output.
///
/// The conditional head `g(z, s)` carries an extra `[1, hidden]` weight row
/// for the sensitive attribute, which is equivalent to concatenating `s` to
/// `z` before the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub first: Linear,
    pub s_weight: Option<Tensor>,
    pub second: Linear,
}

impl HeadParams {
    pub fn init<R: Rng + ?Sized>(latent: usize, hidden: usize, conditional: bool, rng: &mut R) -> Self {
        let in_width = latent + conditional as usize;
        let limit_rows = glorot(in_width, hidden, rng);
        // Split the [in_width, hidden] draw into the z block and the s row.
        let (first_w, s_weight) = if conditional {
            let data = limit_rows.data();
            let z = Tensor::matrix(latent, hidden, data[..latent * hidden].to_vec()).unwrap();
            let s = Tensor::matrix(1, hidden, data[latent * hidden..].to_vec()).unwrap();
            (z, Some(s))
        } else {
            (limit_rows, None)
        };
        Self {
            first: Linear {
                weight: first_w,
                bias: Tensor::zeros(vec![1, hidden]),
            },
            s_weight,
            second: Linear::glorot(hidden, 1, rng),
        }
    }

    pub fn zeros(latent: usize, hidden: usize, conditional: bool) -> Self {
        Self {
            first: Linear::zeros(latent, hidden),
            s_weight: conditional.then(|| Tensor::zeros(vec![1, hidden])),
            second: Linear::zeros(hidden, 1),
        }
    }

    pub fn is_conditional(&self) -> bool {
        self.s_weight.is_some()
    }

    /// `d` for the plain head, `d + 1` for the conditional one.
    pub fn input_width(&self) -> usize {
        self.first.inputs() + self.is_conditional() as usize
    }

    pub fn bind(&self, tape: &mut Tape) -> HeadVars {
        HeadVars {
            first: self.first.bind(tape),
            s_weight: self.s_weight.as_ref().map(|w| tape.leaf(w.clone())),
            second: self.second.bind(tape),
        }
    }

    /// Forward pass without gradient recording; returns `[N, 1]` probabilities.
    pub fn predict(&self, z: &Tensor, s: Option<&[u8]>) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let vars = self.bind(&mut tape);
        let zv = tape.constant(z.clone());
        let sv = s.map(|s| tape.constant(label_column(s)));
        let p = vars.forward(&mut tape, zv, sv)?;
        Ok(tape.value(p).clone())
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.first.tensors().into();
        out.extend(self.s_weight.as_ref());
        out.extend(self.second.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.first.tensors_mut().into();
        out.extend(self.s_weight.as_mut());
        out.extend(self.second.tensors_mut());
        out
    }

    fn names(&self, prefix: &str) -> Vec<String> {
        let mut out = vec![format!("{prefix}.first.weight"), format!("{prefix}.first.bias")];
        if self.s_weight.is_some() {
            out.push(format!("{prefix}.s_weight"));
        }
        out.push(format!("{prefix}.second.weight"));
        out.push(format!("{prefix}.second.bias"));
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub first: LinearVars,
    pub s_weight: Option<Var>,
    pub second: LinearVars,
}

impl HeadVars {
    /// `s` must be an `[N, 1]` column of 0/1 values, given iff the head is
    /// conditional.
    pub fn forward(&self, tape: &mut Tape, z: Var, s: Option<Var>) -> Result<Var> {
        let mut h = self.first.forward(tape, z)?;
        match (self.s_weight, s) {
            (Some(w), Some(s)) => {
                let contrib = tape.matmul(s, w)?;
                h = tape.add(h, contrib)?;
            }
            (None, None) => {}
            (Some(_), None) => {
                return Err(Error::InvalidArgument(
                    "conditional head needs the sensitive attribute".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::InvalidArgument(
                    "unconditional head does not take the sensitive attribute".into(),
                ))
            }
        }
        let h = tape.relu(h)?;
        let logits = self.second.forward(tape, h)?;
        tape.sigmoid(logits)
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out: Vec<Var> = self.first.vars().into();
        out.extend(self.s_weight);
        out.extend(self.second.vars());
        out
    }
}

/// Labels as an `[N, 1]` column of 0.0/1.0.
pub fn label_column(labels: &[u8]) -> Tensor {
    Tensor::matrix(labels.len(), 1, labels.iter().map(|&v| v as f64).collect())
        .expect("label column of at least one row")
}

/// Encoder plus the two Bernoulli heads trained jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct RfibModel {
    pub encoder: EncoderParams,
    pub head_f: HeadParams,
    pub head_g: HeadParams,
}

/// Layer sizes of an [`RfibModel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub inputs: usize,
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub head_hidden: usize,
}

impl Architecture {
    pub fn new(inputs: usize) -> Self {
        Self {
            inputs,
            hidden: vec![64, 64],
            latent: 8,
            head_hidden: 32,
        }
    }
}

impl RfibModel {
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let encoder = EncoderParams::init(arch.inputs, &arch.hidden, arch.latent, rng);
        let head_f = HeadParams::init(arch.latent, arch.head_hidden, false, rng);
        let head_g = HeadParams::init(arch.latent, arch.head_hidden, true, rng);
        Self {
            encoder,
            head_f,
            head_g,
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.encoder.tensors();
        out.extend(self.head_f.tensors());
        out.extend(self.head_g.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.head_f.tensors_mut());
        out.extend(self.head_g.tensors_mut());
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = self.encoder.names("encoder");
        out.extend(self.head_f.names("head_f"));
        out.extend(self.head_g.names("head_g"));
        out
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            tensors: self
                .names()
                .into_iter()
                .zip(self.tensors().into_iter().cloned())
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let linear = |prefix: &str| -> Result<Linear> {
            let weight = ckpt.require(&format!("{prefix}.weight"))?.clone();
            let bias = ckpt.require(&format!("{prefix}.bias"))?.clone();
            match (weight.dims2(), bias.dims2()) {
                (Some((_, out)), Some((1, bout))) if out == bout => Ok(Linear { weight, bias }),
                _ => Err(Error::Checkpoint(format!("layer {prefix} has inconsistent shapes"))),
            }
        };
        let mut hidden = Vec::new();
        while ckpt.get(&format!("encoder.hidden.{}.weight", hidden.len())).is_some() {
            hidden.push(linear(&format!("encoder.hidden.{}", hidden.len()))?);
        }
        let encoder = EncoderParams {
            hidden,
            mu: linear("encoder.mu")?,
            log_sigma: linear("encoder.log_sigma")?,
        };
        let head = |prefix: &str, conditional: bool| -> Result<HeadParams> {
            Ok(HeadParams {
                first: linear(&format!("{prefix}.first"))?,
                s_weight: if conditional {
                    Some(ckpt.require(&format!("{prefix}.s_weight"))?.clone())
                } else {
                    None
                },
                second: linear(&format!("{prefix}.second"))?,
            })
        };
        let model = Self {
            encoder,
            head_f: head("head_f", false)?,
            head_g: head("head_g", true)?,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let d = self.encoder.latent_dim();
        let mut width = self.encoder.input_width();
        for l in &self.encoder.hidden {
            if l.inputs() != width {
                return Err(Error::Checkpoint("encoder layers do not chain".into()));
            }
            width = l.outputs();
        }
        let ok = self.encoder.mu.inputs() == width
            && self.encoder.log_sigma.inputs() == width
            && self.encoder.log_sigma.outputs() == d
            && self.head_f.input_width() == d
            && self.head_g.input_width() == d + 1
            && self.head_f.second.outputs() == 1
            && self.head_g.second.outputs() == 1
            && self.tensors().iter().all(|t| t.is_finite());
        if !ok {
            return Err(Error::Checkpoint("inconsistent model shapes or non-finite values".into()));
        }
        Ok(())
    }
}

/// Versioned flat list of named tensors.
///
/// Text layout, one record per tensor:
///
/// ```text
/// rfib-checkpoint 1
/// tensor <name> <rank> <dim>...
/// <row-major values separated by spaces>
/// ```
///
/// Values are written with the shortest representation that round-trips.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
}

pub const CHECKPOINT_MAGIC: &str = "rfib-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
        for (name, t) in &self.tensors {
            out.push_str(&format!("tensor {name} {}", t.shape().len()));
            for d in t.shape() {
                out.push_str(&format!(" {d}"));
            }
            out.push('\n');
            let values: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&values.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty checkpoint"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("not an rfib checkpoint"));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut tensors = Vec::new();
        while let Some(line) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 3 || fields[0] != "tensor" {
                return Err(Error::Checkpoint(format!("bad tensor header: {line}")));
            }
            let name = fields[1].to_string();
            let rank: usize = fields[2].parse().map_err(|_| bad("bad rank"))?;
            if fields.len() != 3 + rank {
                return Err(Error::Checkpoint(format!("rank mismatch for {name}")));
            }
            let shape = fields[3..]
                .iter()
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("bad dimension"))?;
            let values = lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("missing values for {name}")))?
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Checkpoint(format!("bad value in {name}")))?;
            let t = Tensor::new(shape, values).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            tensors.push((name, t));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Linear classifier `sigmoid(z w + b)` on representations.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticParams {
    pub weight: Vec<f64>,
    pub bias: f64,
}

/// Fixed settings of the representation classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticSettings {
    /// Coefficient `c` of the `c/2 * |w|^2` penalty added to the mean
    /// cross-entropy. The bias is not penalized.
    pub l2: f64,
    pub learning_rate: f64,
    /// Stop once the largest gradient component falls below this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticSettings {
    fn default() -> Self {
        Self {
            l2: 1.0,
            learning_rate: 0.1,
            tolerance: 1e-4,
            max_iter: 1000,
        }
    }
}

fn logistic_objective(z: &Tensor, y: &[u8], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let (n, d) = z.dims2().expect("matrix");
    let mut loss = 0.0;
    let mut gw = vec![0.0; d];
    let mut gb = 0.0;
    for i in 0..n {
        let row = z.row(i);
        let logit: f64 = b + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        // log(1 + e^t) - y t, evaluated stably
        let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
        loss += softplus - y[i] as f64 * logit;
        let r = sigmoid(logit) - y[i] as f64;
        for (g, a) in gw.iter_mut().zip(row) {
            *g += r * a;
        }
        gb += r;
    }
    let inv = 1.0 / n as f64;
    loss *= inv;
    gb *= inv;
    for (g, wj) in gw.iter_mut().zip(w) {
        *g = *g * inv + l2 * wj;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    (loss, gw, gb)
}

fn check_labels(labels: &[u8], n: usize, what: &str) -> Result<()> {
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            op: "labels",
            lhs: vec![n],
            rhs: vec![labels.len()],
        });
    }
    if labels.iter().any(|&v| v > 1) {
        return Err(Error::InvalidData(format!("{what} labels must be 0 or 1")));
    }
    Ok(())
}

pub fn logistic_fit(z: &Tensor, y: &[u8]) -> Result<LogisticParams> {
    logistic_fit_with(z, y, &LogisticSettings::default())
}

/// Full-batch gradient descent with step halving whenever a step would
/// increase the objective.
pub fn logistic_fit_with(z: &Tensor, y: &[u8], settings: &LogisticSettings) -> Result<LogisticParams> {
    let (n, d) = z.dims2().ok_or_else(|| {
        Error::InvalidArgument(format!("representations must be a matrix, got {:?}", z.shape()))
    })?;
    check_labels(y, n, "y")?;
    if n < 2 {
        return Err(Error::InvalidData("logistic fit needs at least two rows".into()));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::InvalidData("logistic fit needs both classes".into()));
    }

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut lr = settings.learning_rate;
    let (mut loss, mut gw, mut gb) = logistic_objective(z, y, &w, b, settings.l2);
    for _ in 0..settings.max_iter {
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < settings.tolerance {
            break;
        }
        loop {
            let cand_w: Vec<f64> = w.iter().zip(&gw).map(|(wj, g)| wj - lr * g).collect();
            let cand_b = b - lr * gb;
            let (cand_loss, cgw, cgb) = logistic_objective(z, y, &cand_w, cand_b, settings.l2);
            if cand_loss <= loss || lr < 1e-12 {
                w = cand_w;
                b = cand_b;
                loss = cand_loss;
                gw = cgw;
                gb = cgb;
                break;
            }
            lr *= 0.5;
        }
    }
    Ok(LogisticParams { weight: w, bias: b })
}

/// `phat = sigmoid(z w + b)` and `yhat = 1` iff `phat >= 0.5`.
pub fn logistic_predict(params: &LogisticParams, z: &Tensor) -> Result<(Vec<u8>, Vec<f64>)> {
    let (n, d) = z.dims2().ok_or_else(|| {
        Error::InvalidArgument(format!("representations must be a matrix, got {:?}", z.shape()))
    })?;
    if d != params.weight.len() {
        return Err(Error::ShapeMismatch {
            op: "logistic_predict",
            lhs: vec![n, d],
            rhs: vec![params.weight.len()],
        });
    }
    let phat: Vec<f64> = (0..n)
        .map(|i| {
            let t = params.bias + z.row(i).iter().zip(&params.weight).map(|(a, b)| a * b).sum::<f64>();
            sigmoid(t)
        })
        .collect();
    let yhat = phat.iter().map(|&p| (p >= 0.5) as u8).collect();
    Ok((yhat, phat))
}
