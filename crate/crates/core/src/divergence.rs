//! Rényi divergences of order `alpha` between discrete distributions and
//! between diagonal Gaussians.
//!
//! Orders 0 and 1 are dispatched exactly: `D_1` is the Kullback-Leibler
//! divergence and `D_0(P‖Q) = -log Q(supp P)`. Any `alpha` within
//! [`ALPHA_ONE_BAND`] of 1 is routed to the KL branch.
//!
//! The Gaussian closed form is checked against [`quadrature_oracle_1d`],
//! which integrates `p^alpha q^(1-alpha)` numerically.

use crate::error::{Error, Result};

/// Orders with `|alpha - 1|` below this are treated as exactly 1.
pub const ALPHA_ONE_BAND: f64 = 1e-9;

const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Gaussian with independent coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != var.len() {
            return Err(Error::InvalidArgument(format!(
                "mean/var lengths {} and {} must match and be non-zero",
                mean.len(),
                var.len()
            )));
        }
        if var.iter().any(|v| !(v.is_finite() && *v > 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument(
                "variances must be positive and all parameters finite".into(),
            ));
        }
        Ok(Self { mean, var })
    }

    pub fn univariate(mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![mean], vec![var])
    }

    /// `N(0, I_d)`.
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    fn log_pdf_1d(&self, x: f64) -> f64 {
        let (m, v) = (self.mean[0], self.var[0]);
        -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m) * (x - m) / v)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    Ok(())
}

fn is_kl_order(alpha: f64) -> bool {
    (alpha - 1.0).abs() < ALPHA_ONE_BAND
}

/// `D_alpha(p‖q)` for discrete distributions on a common index set.
pub fn renyi_discrete(p: &DiscreteDist, q: &DiscreteDist, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if p.probs.len() != q.probs.len() {
        return Err(Error::InvalidArgument(format!(
            "distributions have {} and {} outcomes",
            p.probs.len(),
            q.probs.len()
        )));
    }
    if let Some(index) = p
        .probs
        .iter()
        .zip(&q.probs)
        .position(|(&pi, &qi)| pi > 0.0 && qi == 0.0)
    {
        return Err(Error::SupportViolation { index });
    }

    let pairs = p.probs.iter().zip(&q.probs).filter(|(&pi, _)| pi > 0.0);
    if alpha == 0.0 {
        let mass: f64 = pairs.map(|(_, &qi)| qi).sum();
        return Ok((-mass.ln()).max(0.0));
    }
    if is_kl_order(alpha) {
        let kl: f64 = pairs.map(|(&pi, &qi)| pi * (pi / qi).ln()).sum();
        return Ok(kl.max(0.0));
    }
    // p^a q^(1-a) written as p (q/p)^(1-a): exact when p == q
    let s: f64 = pairs.map(|(&pi, &qi)| pi * (qi / pi).powf(1.0 - alpha)).sum();
    Ok((s.ln() / (alpha - 1.0)).max(0.0))
}

/// Per-coordinate contribution of `D_alpha(N(mp, vp) ‖ N(mq, vq))`.
fn renyi_gauss_1d(mp: f64, vp: f64, mq: f64, vq: f64, alpha: f64, dim: usize) -> Result<f64> {
    let dm2 = (mp - mq) * (mp - mq);
    if alpha == 0.0 {
        return Ok(0.0);
    }
    if is_kl_order(alpha) {
        return Ok(0.5 * (vp / vq + dm2 / vq - 1.0 + (vq / vp).ln()));
    }
    let mixed = (1.0 - alpha) * vp + alpha * vq;
    if mixed <= 0.0 {
        return Err(Error::InfiniteDivergence {
            alpha,
            dim,
            value: mixed,
        });
    }
    let log_ratio = mixed.ln() - (1.0 - alpha) * vp.ln() - alpha * vq.ln();
    Ok(alpha * dm2 / (2.0 * mixed) - log_ratio / (2.0 * (alpha - 1.0)))
}

/// Closed-form `D_alpha` between diagonal Gaussians, summed over coordinates.
///
/// Fails with [`Error::InfiniteDivergence`] when `(1-alpha) var_p + alpha var_q`
/// is not positive in some coordinate; this can only happen for `alpha > 1`.
pub fn renyi_gauss_diag(p: &DiagGaussian, q: &DiagGaussian, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if p.dim() != q.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    let mut total = 0.0;
    for i in 0..p.dim() {
        total += renyi_gauss_1d(p.mean[i], p.var[i], q.mean[i], q.var[i], alpha, i)?;
    }
    Ok(total)
}

/// Minimum number of Simpson nodes used by the oracle.
pub const QUADRATURE_MIN_POINTS: usize = 20_001;

/// Numerical `D_alpha` between two univariate Gaussians.
///
/// Integrates `p(x)^alpha q(x)^(1-alpha)` (or the KL integrand
/// `p log(p/q)` at `alpha = 1`) with composite Simpson's rule over a window
/// of ±12 standard deviations. The window covers both densities and the
/// integrand itself, whose spread grows without bound as the order
/// approaches the point where the divergence becomes infinite.
pub fn quadrature_oracle_1d(p: &DiagGaussian, q: &DiagGaussian, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::InvalidArgument("quadrature oracle is one-dimensional".into()));
    }
    if alpha == 0.0 {
        // Gaussians share the whole real line as support.
        return Ok(0.0);
    }
    let (mp, vp, mq, vq) = (p.mean[0], p.var[0], q.mean[0], q.var[0]);
    let kl = is_kl_order(alpha);

    // The tilted integrand is proportional to a Gaussian with these moments.
    let (center, spread) = if kl {
        (mp, vp.sqrt())
    } else {
        let mixed = (1.0 - alpha) * vp + alpha * vq;
        if mixed <= 0.0 {
            return Err(Error::Quadrature(format!(
                "integrand is not integrable at alpha = {alpha}"
            )));
        }
        let var = vp * vq / mixed;
        let center = (alpha * mp * vq + (1.0 - alpha) * mq * vp) / mixed;
        (center, var.sqrt())
    };

    let width = 12.0;
    let (sp, sq) = (vp.sqrt(), vq.sqrt());
    let lo = (mp - width * sp).min(mq - width * sq).min(center - width * spread);
    let hi = (mp + width * sp).max(mq + width * sq).max(center + width * spread);
    let finest = sp.min(sq).min(spread);
    let mut n = QUADRATURE_MIN_POINTS.max(((hi - lo) / (finest / 40.0)).ceil() as usize + 1);
    if n.is_multiple_of(2) {
        n += 1;
    }
    if n > 50_000_000 {
        return Err(Error::Quadrature(format!("window needs {n} points")));
    }

    let integrand = |x: f64| {
        let lp = p.log_pdf_1d(x);
        let lq = q.log_pdf_1d(x);
        if kl {
            lp.exp() * (lp - lq)
        } else {
            (alpha * lp + (1.0 - alpha) * lq).exp()
        }
    };
    let integral = simpson(integrand, lo, hi, n);
    if !integral.is_finite() {
        return Err(Error::Quadrature("integral is not finite".into()));
    }
    if kl {
        return Ok(integral);
    }
    if integral <= 0.0 {
        return Err(Error::Quadrature(format!("integral {integral} is not positive")));
    }
    Ok(integral.ln() / (alpha - 1.0))
}

/// Composite Simpson's rule on `n` (odd) equally spaced nodes.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / (n - 1) as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(p: &[f64]) -> DiscreteDist {
        DiscreteDist::new(p.to_vec()).unwrap()
    }

    fn g1(m: f64, v: f64) -> DiagGaussian {
        DiagGaussian::univariate(m, v).unwrap()
    }

    #[test]
    fn discrete_self_divergence_is_zero() {
        let p = disc(&[0.5, 0.5]);
        assert_eq!(renyi_discrete(&p, &p, 0.8).unwrap(), 0.0);
    }

    #[test]
    fn discrete_order_two() {
        // sum p^2 / q = 0.25/0.25 + 0.25/0.75 = 4/3
        let d = renyi_discrete(&disc(&[0.5, 0.5]), &disc(&[0.25, 0.75]), 2.0).unwrap();
        assert!((d - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((d - 0.28768).abs() < 1e-5);
    }

    #[test]
    fn discrete_order_zero_common_support() {
        let d = renyi_discrete(&disc(&[0.5, 0.5]), &disc(&[0.25, 0.75]), 0.0).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn discrete_order_zero_partial_support() {
        // P lives on the first outcome only, Q gives it 0.25.
        let d = renyi_discrete(&disc(&[1.0, 0.0]), &disc(&[0.25, 0.75]), 0.0).unwrap();
        assert!((d - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn discrete_kl_uses_zero_log_zero() {
        let p = disc(&[0.0, 1.0]);
        let q = disc(&[0.5, 0.5]);
        let d = renyi_discrete(&p, &q, 1.0).unwrap();
        assert!((d - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn discrete_errors() {
        let p = disc(&[0.5, 0.5]);
        let q = disc(&[1.0, 0.0]);
        assert!(matches!(
            renyi_discrete(&p, &q, 0.5),
            Err(Error::SupportViolation { index: 1 })
        ));
        assert!(renyi_discrete(&p, &p, -0.1).is_err());
        assert!(renyi_discrete(&p, &disc(&[1.0]), 0.5).is_err());
        assert!(DiscreteDist::new(vec![0.5, 0.4]).is_err());
        assert!(DiscreteDist::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn gaussian_mean_shift_at_point_eight() {
        let d = renyi_gauss_diag(&g1(1.0, 1.0), &g1(0.0, 1.0), 0.8).unwrap();
        assert!((d - 0.4).abs() < 1e-12);
        let oracle = quadrature_oracle_1d(&g1(1.0, 1.0), &g1(0.0, 1.0), 0.8).unwrap();
        assert!((oracle - 0.4).abs() < 1e-6, "{oracle}");
    }

    #[test]
    fn gaussian_kl_variance_ratio() {
        let expected = (4.0 - 1.0 - 4.0f64.ln()) / 2.0;
        let d = renyi_gauss_diag(&g1(0.0, 4.0), &g1(0.0, 1.0), 1.0).unwrap();
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 0.80685).abs() < 1e-5);
        let oracle = quadrature_oracle_1d(&g1(0.0, 4.0), &g1(0.0, 1.0), 1.0).unwrap();
        assert!((oracle - expected).abs() < 1e-8, "{oracle}");
    }

    #[test]
    fn gaussian_infinite_order() {
        let err = renyi_gauss_diag(&g1(0.0, 3.0), &g1(0.0, 1.0), 1.8).unwrap_err();
        match err {
            Error::InfiniteDivergence { value, dim, .. } => {
                assert_eq!(dim, 0);
                assert!((value + 0.6).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(quadrature_oracle_1d(&g1(0.0, 3.0), &g1(0.0, 1.0), 1.8).is_err());
    }

    #[test]
    fn gaussian_order_zero() {
        assert_eq!(renyi_gauss_diag(&g1(3.0, 0.2), &g1(0.0, 1.0), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn oracle_self_divergence() {
        for alpha in [0.3, 1.0, 1.7] {
            let d = quadrature_oracle_1d(&g1(0.7, 2.0), &g1(0.7, 2.0), alpha).unwrap();
            assert!(d.abs() < 1e-9, "alpha {alpha}: {d}");
        }
    }

    #[test]
    fn diag_is_sum_of_coordinates() {
        let p = DiagGaussian::new(vec![0.5, -1.0, 2.0], vec![0.3, 1.5, 0.9]).unwrap();
        let q = DiagGaussian::new(vec![0.0, 0.2, 1.0], vec![1.0, 2.0, 0.5]).unwrap();
        for alpha in [0.0, 0.4, 1.0, 1.3] {
            let whole = renyi_gauss_diag(&p, &q, alpha).unwrap();
            let parts: f64 = (0..3)
                .map(|i| {
                    renyi_gauss_diag(&g1(p.mean[i], p.var[i]), &g1(q.mean[i], q.var[i]), alpha)
                        .unwrap()
                })
                .sum();
            assert!((whole - parts).abs() < 1e-14);
        }
    }

    #[test]
    fn guard_band_routes_to_kl() {
        let p = g1(0.3, 2.0);
        let q = g1(-0.1, 0.7);
        let kl = renyi_gauss_diag(&p, &q, 1.0).unwrap();
        assert_eq!(renyi_gauss_diag(&p, &q, 1.0 + 5e-10).unwrap(), kl);
    }

    #[test]
    fn gaussian_errors() {
        assert!(DiagGaussian::new(vec![0.0], vec![0.0]).is_err());
        assert!(DiagGaussian::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(DiagGaussian::new(vec![], vec![]).is_err());
        let p = DiagGaussian::standard(2);
        assert!(renyi_gauss_diag(&p, &DiagGaussian::standard(3), 0.5).is_err());
        assert!(renyi_gauss_diag(&p, &p, f64::NAN).is_err());
    }
}
