//! The RFIB training objective.
//!
//! For a batch of `N` examples and one reparameterized draw per example,
//!
//! ```text
//! J = (1/N) Σ_i D_alpha(N(mu_i, diag sigma_i²) ‖ N(0, I))
//!     + beta1 * NLL(f(z), y) + beta2 * NLL(g(z, s), y)
//! ```
//!
//! The label-entropy constants of the two variational lower bounds do not
//! depend on the parameters and are left out. With `alpha = 1, beta2 = 0`
//! this is the variational information bottleneck; with `alpha = 1,
//! beta1 = 0` it is the conditional fairness bottleneck.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, Tape, Var};
use crate::data::LabeledBatch;
use crate::divergence::ALPHA_ONE_BAND;
use crate::error::{Error, Result};
use crate::model::{label_column, EncoderVars, HeadVars, RfibModel, sample_z, PROB_EPS};
use crate::tensor::Tensor;

/// Fraction of the divergence pole at which encoder variances are capped
/// when `alpha > 1`.
pub const VARIANCE_CAP_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfibHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Which named method a hyperparameter setting reduces to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "IB")]
    Ib,
    #[serde(rename = "CFB")]
    Cfb,
    #[serde(rename = "RFIB")]
    Rfib,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ib => "IB",
            Method::Cfb => "CFB",
            Method::Rfib => "RFIB",
        })
    }
}

impl RfibHyper {
    pub fn new(alpha: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let h = Self { alpha, beta1, beta2 };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn method(&self) -> Method {
        let kl = (self.alpha - 1.0).abs() < ALPHA_ONE_BAND;
        match (kl, self.beta1 == 0.0, self.beta2 == 0.0) {
            (true, _, true) => Method::Ib,
            (true, true, false) => Method::Cfb,
            _ => Method::Rfib,
        }
    }

    /// Largest admissible posterior variance, `0.95 * alpha / (alpha - 1)`
    /// for `alpha > 1`; `None` otherwise.
    pub fn variance_cap(&self) -> Option<f64> {
        variance_cap(self.alpha)
    }
}

fn variance_cap(alpha: f64) -> Option<f64> {
    (alpha > 1.0 + ALPHA_ONE_BAND).then(|| VARIANCE_CAP_FRACTION * alpha / (alpha - 1.0))
}

fn tag(term: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::NonFinite { op: term },
        other => other,
    }
}

/// `(1/N) Σ_i D_alpha(N(mu_i, diag sigma_i²) ‖ N(0, I))` on the tape.
///
/// For `alpha > 1` the variances are capped at
/// [`RfibHyper::variance_cap`] so the divergence stays finite.
pub fn compression_term(tape: &mut Tape, mu: Var, sigma: Var, alpha: f64) -> Result<Var> {
    compression_inner(tape, mu, sigma, alpha).map_err(tag("compression"))
}

fn compression_inner(tape: &mut Tape, mu: Var, sigma: Var, alpha: f64) -> Result<Var> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if tape.shape(mu) != tape.shape(sigma) {
        return Err(Error::ShapeMismatch {
            op: "compression_term",
            lhs: tape.shape(mu).to_vec(),
            rhs: tape.shape(sigma).to_vec(),
        });
    }
    let n = match tape.shape(mu) {
        [n, _] => *n as f64,
        other => {
            return Err(Error::InvalidArgument(format!(
                "posterior parameters must be [N, d], got {other:?}"
            )))
        }
    };

    if alpha == 0.0 {
        // D_0 vanishes between Gaussians; keep the graph connected so the
        // gradient is an explicit zero.
        let z = tape.scale(mu, 0.0)?;
        return tape.sum(z);
    }

    let mut var = tape.square(sigma)?;
    let mu2 = tape.square(mu)?;

    let per_entry = if (alpha - 1.0).abs() < ALPHA_ONE_BAND {
        kl_entries(tape, mu2, var)?
    } else {
        if let Some(cap) = variance_cap(alpha) {
            let clamped = tape.value(var).data().iter().filter(|&&v| v > cap).count();
            if clamped > 0 {
                log::debug!("alpha = {alpha}: capped {clamped} posterior variances at {cap:.4}");
            }
            var = tape.clamp_max(var, cap)?;
        }
        // mixed = (1 - alpha) var + alpha
        let scaled = tape.scale(var, 1.0 - alpha)?;
        let mixed = tape.add_scalar(scaled, alpha)?;
        let ln_mixed = tape.log(mixed)?;
        let neg_ln_mixed = tape.scale(ln_mixed, -1.0)?;
        let inv_mixed = tape.exp(neg_ln_mixed)?;
        // alpha mu² / (2 mixed)
        let ratio = tape.mul(mu2, inv_mixed)?;
        let shift = tape.scale(ratio, alpha / 2.0)?;
        // -(ln mixed - (1 - alpha) ln var) / (2 (alpha - 1))
        let ln_var = tape.log(var)?;
        let weighted = tape.scale(ln_var, 1.0 - alpha)?;
        let log_ratio = tape.sub(ln_mixed, weighted)?;
        let spread = tape.scale(log_ratio, -1.0 / (2.0 * (alpha - 1.0)))?;
        tape.add(shift, spread)?
    };
    let total = tape.sum(per_entry)?;
    tape.scale(total, 1.0 / n)
}

/// `0.5 (var + mu² - 1 - ln var)` per entry.
fn kl_entries(tape: &mut Tape, mu2: Var, var: Var) -> Result<Var> {
    let ln_var = tape.log(var)?;
    let a = tape.add(var, mu2)?;
    let b = tape.sub(a, ln_var)?;
    let c = tape.add_scalar(b, -1.0)?;
    tape.scale(c, 0.5)
}

/// `(1/N) Σ_i KL(N(mu_i, diag sigma_i²) ‖ N(0, I))`, the compression term
/// of the variational information bottleneck.
pub fn kl_compression(tape: &mut Tape, mu: Var, sigma: Var) -> Result<Var> {
    compression_term(tape, mu, sigma, 1.0)
}

/// Mean Bernoulli negative log-likelihood of binary labels under `probs`,
/// with probabilities clamped into `[PROB_EPS, 1 - PROB_EPS]`.
pub fn bernoulli_nll(tape: &mut Tape, probs: Var, y: &[u8]) -> Result<Var> {
    bernoulli_inner(tape, probs, y).map_err(tag("nll"))
}

fn bernoulli_inner(tape: &mut Tape, probs: Var, y: &[u8]) -> Result<Var> {
    let col = label_column(y);
    if tape.shape(probs) != col.shape() {
        return Err(Error::ShapeMismatch {
            op: "bernoulli_nll",
            lhs: tape.shape(probs).to_vec(),
            rhs: col.shape().to_vec(),
        });
    }
    let neg = col.map(|v| 1.0 - v);
    let lo = tape.clamp_min(probs, PROB_EPS)?;
    let p = tape.clamp_max(lo, 1.0 - PROB_EPS)?;
    let ln_p = tape.log(p)?;
    let q = tape.rsub_scalar(1.0, p)?;
    let ln_q = tape.log(q)?;
    let yv = tape.constant(col);
    let nv = tape.constant(neg);
    let pos = tape.mul(yv, ln_p)?;
    let negs = tape.mul(nv, ln_q)?;
    let ll = tape.add(pos, negs)?;
    let m = tape.mean(ll)?;
    tape.scale(m, -1.0)
}

/// Model parameters registered on a tape.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub encoder: EncoderVars,
    pub head_f: HeadVars,
    pub head_g: HeadVars,
}

impl ModelVars {
    pub fn bind(model: &RfibModel, tape: &mut Tape) -> Self {
        Self {
            encoder: model.encoder.bind(tape),
            head_f: model.head_f.bind(tape),
            head_g: model.head_g.bind(tape),
        }
    }

    /// Same order as [`RfibModel::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.encoder.vars();
        out.extend(self.head_f.vars());
        out.extend(self.head_g.vars());
        out
    }

    /// Copy of `self` with every parameter replaced, in [`Self::vars`] order.
    pub fn with_vars(&self, vars: &[Var]) -> Result<Self> {
        let expected = self.vars().len();
        if vars.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "expected {expected} parameter vars, got {}",
                vars.len()
            )));
        }
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("length checked above");
        let mut out = self.clone();
        let enc = &mut out.encoder;
        for l in enc.hidden.iter_mut().chain([&mut enc.mu, &mut enc.log_sigma]) {
            l.weight = next();
            l.bias = next();
        }
        for h in [&mut out.head_f, &mut out.head_g] {
            h.first.weight = next();
            h.first.bias = next();
            if let Some(s) = h.s_weight.as_mut() {
                *s = next();
            }
            h.second.weight = next();
            h.second.bias = next();
        }
        Ok(out)
    }
}

/// Finite-difference check of the full loss with respect to every model
/// parameter; returns the worst relative error (see [`grad_check`]).
pub fn loss_grad_check(
    model: &RfibModel,
    batch: &LabeledBatch,
    hyper: &RfibHyper,
    eps: &Tensor,
    step: f64,
) -> Result<f64> {
    let template = ModelVars::bind(model, &mut Tape::inference());
    let params: Vec<Tensor> = model.tensors().into_iter().cloned().collect();
    grad_check(
        |tape, p| {
            let vars = template.with_vars(p)?;
            Ok(rfib_loss(tape, &vars, batch, hyper, eps)?.total)
        },
        &params,
        step,
    )
}

/// The scalar loss and its three unweighted components.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub compression: Var,
    pub nll_f: Var,
    pub nll_g: Var,
}

impl LossTerms {
    pub fn values(&self, tape: &Tape) -> LossValues {
        let v = |x: Var| tape.value(x).item().unwrap_or(f64::NAN);
        LossValues {
            total: v(self.total),
            compression: v(self.compression),
            nll_f: v(self.nll_f),
            nll_g: v(self.nll_g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub compression: f64,
    pub nll_f: f64,
    pub nll_g: f64,
}

/// Single-sample RFIB loss on `batch`; `eps` is one standard-normal draw
/// per example, shaped like the latent means.
pub fn rfib_loss(
    tape: &mut Tape,
    vars: &ModelVars,
    batch: &LabeledBatch,
    hyper: &RfibHyper,
    eps: &Tensor,
) -> Result<LossTerms> {
    hyper.validate()?;
    let x = tape.constant(batch.x.clone());
    let (mu, sigma) = vars.encoder.encode(tape, x).map_err(tag("encoder"))?;
    let z = sample_z(tape, mu, sigma, eps)?;

    let compression = compression_term(tape, mu, sigma, hyper.alpha)?;
    let pf = vars.head_f.forward(tape, z, None).map_err(tag("head f"))?;
    let nll_f = bernoulli_nll(tape, pf, &batch.y).map_err(tag("nll f"))?;
    let s = tape.constant(label_column(&batch.s));
    let pg = vars.head_g.forward(tape, z, Some(s)).map_err(tag("head g"))?;
    let nll_g = bernoulli_nll(tape, pg, &batch.y).map_err(tag("nll g"))?;

    let wf = tape.scale(nll_f, hyper.beta1)?;
    let wg = tape.scale(nll_g, hyper.beta2)?;
    let partial = tape.add(compression, wf)?;
    let total = tape.add(partial, wg).map_err(tag("total"))?;
    Ok(LossTerms {
        total,
        compression,
        nll_f,
        nll_g,
    })
}
