//! Moment activations: maps from a Gaussian pre-activation `N(μ̄, C̄)` to the mean,
//! variance and linear-response coefficient `χ` of the post-activation signal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, GaussHermite, Tolerance};
use crate::special::{dawson_g, dawson_g_integral, dawson_h_integral, norm_cdf, norm_pdf};

/// Node count used by [`quadrature_ma`] when none is given.
pub const DEFAULT_HERMITE_NODES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMoments {
    pub mean: f64,
    pub variance: f64,
    pub chi: f64,
}

impl ScalarMoments {
    pub const ZERO: ScalarMoments = ScalarMoments { mean: 0.0, variance: 0.0, chi: 0.0 };
}

/// A pointwise nonlinearity and the points where it jumps or kinks.
pub type Pointwise = (fn(f64) -> f64, &'static [f64]);

/// Gaussian pre-activation with mean `mu_bar` and strictly positive variance `c_bar`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianInput {
    pub mu_bar: f64,
    pub c_bar: f64,
}

impl GaussianInput {
    pub fn new(mu_bar: f64, c_bar: f64) -> Result<Self> {
        let inp = Self { mu_bar, c_bar };
        inp.validate()?;
        Ok(inp)
    }

    fn validate(&self) -> Result<()> {
        if !self.mu_bar.is_finite() {
            return Err(Error::Domain(format!("pre-activation mean must be finite, got {}", self.mu_bar)));
        }
        if !(self.c_bar.is_finite() && self.c_bar > 0.0) {
            return Err(Error::Domain(format!(
                "pre-activation variance must be finite and positive, got {}",
                self.c_bar
            )));
        }
        Ok(())
    }
}

/// Leaky integrate-and-fire parameters. Times in ms, potentials in mV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    pub v_th: f64,
    pub v_res: f64,
    pub t_ref: f64,
    pub leak: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self { v_th: 20.0, v_res: 0.0, t_ref: 5.0, leak: 0.05 }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.v_th, self.v_res, self.t_ref, self.leak].iter().all(|v| v.is_finite());
        if !finite || self.v_th <= self.v_res || self.t_ref < 0.0 || self.leak <= 0.0 {
            return Err(Error::Domain(format!(
                "invalid LIF parameters {self:?}: need v_th > v_res, t_ref >= 0, leak > 0"
            )));
        }
        Ok(())
    }

    /// Standardized integration bounds `(I_lb, I_ub)`.
    fn bounds(&self, inp: GaussianInput) -> (f64, f64) {
        let scale = (self.leak * inp.c_bar).sqrt();
        let lb = (self.v_res * self.leak - inp.mu_bar) / scale;
        let ub = (self.v_th * self.leak - inp.mu_bar) / scale;
        (lb, ub)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Heaviside,
    Relu,
    Lif(LifParams),
}

impl ActivationKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Heaviside => "heaviside",
            ActivationKind::Relu => "relu",
            ActivationKind::Lif(_) => "lif",
        }
    }

    pub fn moments(&self, inp: GaussianInput) -> Result<ScalarMoments> {
        match self {
            ActivationKind::Heaviside => heaviside_ma(inp),
            ActivationKind::Relu => relu_ma(inp),
            ActivationKind::Lif(p) => lif_ma(inp, *p),
        }
    }

    /// Mean kernel together with its derivative in `μ̄` at frozen `C̄`.
    pub fn mean_and_derivative(&self, inp: GaussianInput) -> Result<(f64, f64)> {
        inp.validate()?;
        match self {
            ActivationKind::Heaviside => {
                let s = inp.c_bar.sqrt();
                let z = inp.mu_bar / s;
                Ok((norm_cdf(z), norm_pdf(z) / s))
            }
            ActivationKind::Relu => {
                let s = inp.c_bar.sqrt();
                let z = inp.mu_bar / s;
                let cdf = norm_cdf(z);
                Ok((s * norm_pdf(z) + inp.mu_bar * cdf, cdf))
            }
            ActivationKind::Lif(p) => {
                let (mean, _, chi) = lif_mean_chi(inp, *p)?;
                Ok((mean, chi))
            }
        }
    }

    /// The nonlinearity itself, used when a coordinate carries no variance.
    pub fn deterministic(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Heaviside => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Lif(p) => lif_deterministic_rate(x, *p),
        }
    }

    pub fn deterministic_derivative(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Heaviside => 0.0,
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Lif(p) => {
                let threshold = p.v_th * p.leak;
                if x <= threshold {
                    return 0.0;
                }
                let rate = lif_deterministic_rate(x, *p);
                let reset = p.v_res * p.leak;
                // d/dx of (1/L) ln((reset - x)/(threshold - x))
                let dlog = (1.0 / (x - threshold) - 1.0 / (x - reset)) / p.leak;
                rate * rate * dlog
            }
        }
    }

    /// Moments with the zero-variance limit routed to the plain nonlinearity.
    pub fn moments_or_deterministic(&self, mu_bar: f64, c_bar: f64) -> Result<ScalarMoments> {
        if c_bar <= 0.0 {
            if c_bar < 0.0 || !mu_bar.is_finite() {
                return Err(Error::Domain(format!(
                    "pre-activation ({mu_bar}, {c_bar}) is outside the kernel domain"
                )));
            }
            return Ok(ScalarMoments { mean: self.deterministic(mu_bar), variance: 0.0, chi: 0.0 });
        }
        self.moments(GaussianInput::new(mu_bar, c_bar)?)
    }

    pub fn mean_and_derivative_or_deterministic(&self, mu_bar: f64, c_bar: f64) -> Result<(f64, f64)> {
        if c_bar <= 0.0 {
            if c_bar < 0.0 || !mu_bar.is_finite() {
                return Err(Error::Domain(format!(
                    "pre-activation ({mu_bar}, {c_bar}) is outside the kernel domain"
                )));
            }
            return Ok((self.deterministic(mu_bar), self.deterministic_derivative(mu_bar)));
        }
        self.mean_and_derivative(GaussianInput::new(mu_bar, c_bar)?)
    }

    /// Pointwise nonlinearity with its discontinuity/kink locations, if it has one.
    pub fn pointwise(&self) -> Option<Pointwise> {
        match self {
            ActivationKind::Heaviside => Some((heaviside, &[0.0])),
            ActivationKind::Relu => Some((relu, &[0.0])),
            ActivationKind::Lif(_) => None,
        }
    }
}

fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn heaviside_ma(inp: GaussianInput) -> Result<ScalarMoments> {
    inp.validate()?;
    let z = inp.mu_bar / inp.c_bar.sqrt();
    let mean = norm_cdf(z);
    Ok(ScalarMoments { mean, variance: mean * (1.0 - mean), chi: norm_pdf(z) })
}

pub fn relu_ma(inp: GaussianInput) -> Result<ScalarMoments> {
    inp.validate()?;
    let GaussianInput { mu_bar, c_bar } = inp;
    let s = c_bar.sqrt();
    let z = mu_bar / s;
    let cdf = norm_cdf(z);
    let pdf = norm_pdf(z);
    let mean = s * pdf + mu_bar * cdf;
    let second = (c_bar + mu_bar * mu_bar) * cdf + mu_bar * s * pdf;
    Ok(ScalarMoments { mean, variance: (second - mean * mean).max(0.0), chi: s * cdf })
}

fn lif_tolerance() -> Tolerance {
    Tolerance { abs: 1e-12, rel: 1e-12, max_intervals: 2000 }
}

/// `(mean, ∫g, chi)` of the LIF kernel. An overflowing `∫g` means the neuron is silent.
fn lif_mean_chi(inp: GaussianInput, p: LifParams) -> Result<(f64, f64, f64)> {
    p.validate()?;
    let (lb, ub) = p.bounds(inp);
    let int_g = dawson_g_integral(lb, ub, lif_tolerance()).map_err(|e| match e {
        Error::Numeric(_) => {
            Error::Numeric(format!("LIF mean integral over [{lb}, {ub}] failed to converge"))
        }
        other => other,
    });
    let int_g = match int_g {
        Ok(v) if v.is_finite() => v,
        // g overflows far above threshold: the integral is effectively infinite.
        Ok(_) => return Ok((0.0, f64::INFINITY, 0.0)),
        Err(_) if ub > 26.0 => return Ok((0.0, f64::INFINITY, 0.0)),
        Err(e) => return Err(e),
    };
    let mean = 1.0 / (p.t_ref + 2.0 / p.leak * int_g);
    let dg = dawson_g(ub) - dawson_g(lb);
    let chi = mean * mean * (2.0 / p.leak) * dg / (p.leak * inp.c_bar).sqrt();
    Ok((mean, int_g, if chi.is_finite() { chi } else { 0.0 }))
}

pub fn lif_ma(inp: GaussianInput, p: LifParams) -> Result<ScalarMoments> {
    inp.validate()?;
    let (mean, _, chi) = lif_mean_chi(inp, p)?;
    if mean == 0.0 {
        return Ok(ScalarMoments::ZERO);
    }
    let (lb, ub) = p.bounds(inp);
    let int_h = match dawson_h_integral(lb, ub, lif_tolerance()) {
        Ok(v) => v,
        Err(_) if ub > 18.0 => f64::INFINITY,
        Err(_) => {
            return Err(Error::Numeric(format!("LIF variance integral over [{lb}, {ub}] failed to converge")))
        }
    };
    let variance = 8.0 / (p.leak * p.leak) * mean.powi(3) * int_h;
    Ok(ScalarMoments { mean, variance: if variance.is_finite() { variance.max(0.0) } else { 0.0 }, chi })
}

/// Firing rate of a noiseless LIF neuron driven by a constant current `x`.
pub fn lif_deterministic_rate(x: f64, p: LifParams) -> f64 {
    let threshold = p.v_th * p.leak;
    if x <= threshold {
        return 0.0;
    }
    let reset = p.v_res * p.leak;
    let isi = p.t_ref + ((x - reset) / (x - threshold)).ln() / p.leak;
    1.0 / isi
}

/// `∂m/∂μ̄` at frozen `C̄`.
pub fn ma_mean_derivative(kind: ActivationKind, inp: GaussianInput) -> Result<f64> {
    kind.mean_and_derivative(inp).map(|(_, d)| d)
}

/// Moments of `h(X)`, `X ~ N(μ̄, C̄)`, by Gauss–Hermite quadrature with `nodes` points.
pub fn quadrature_ma<F: Fn(f64) -> f64>(h: F, inp: GaussianInput, nodes: usize) -> Result<ScalarMoments> {
    inp.validate()?;
    let rule = GaussHermite::new(nodes)?;
    let s = inp.c_bar.sqrt();
    let (mut m1, mut m2, mut chi) = (0.0, 0.0, 0.0);
    for (&z, &w) in rule.nodes().iter().zip(rule.weights()) {
        let v = h(s * z + inp.mu_bar);
        if v.is_nan() {
            return Err(Error::Numeric(format!("nonlinearity returned NaN at x = {}", s * z + inp.mu_bar)));
        }
        m1 += w * v;
        m2 += w * v * v;
        chi += w * v * z;
    }
    Ok(ScalarMoments { mean: m1, variance: (m2 - m1 * m1).max(0.0), chi })
}

/// Same moments as [`quadrature_ma`], but integrating piecewise between the given
/// discontinuities with adaptive Gauss–Kronrod, so step-like `h` is handled exactly.
pub fn quadrature_ma_piecewise<F: Fn(f64) -> f64>(
    h: F,
    breakpoints: &[f64],
    inp: GaussianInput,
) -> Result<ScalarMoments> {
    inp.validate()?;
    let s = inp.c_bar.sqrt();
    // Work on the standardized axis; beyond ±38 the normal density is below 1e-300.
    const REACH: f64 = 38.0;
    let mut cuts: Vec<f64> =
        breakpoints.iter().map(|b| (b - inp.mu_bar) / s).filter(|z| z.abs() < REACH).collect();
    cuts.push(-REACH);
    cuts.push(REACH);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let tol = Tolerance { abs: 1e-15, rel: 1e-13, max_intervals: 2000 };
    let mut acc = [0.0f64; 3];
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        for (k, slot) in acc.iter_mut().enumerate() {
            let f = |z: f64| {
                let v = h(s * z + inp.mu_bar);
                let weight = norm_pdf(z);
                match k {
                    0 => v * weight,
                    1 => v * v * weight,
                    _ => v * z * weight,
                }
            };
            let r = integrate(f, a, b, tol)?;
            *slot += r.value;
        }
    }
    if acc.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("nonlinearity produced NaN".into()));
    }
    Ok(ScalarMoments { mean: acc[0], variance: (acc[1] - acc[0] * acc[0]).max(0.0), chi: acc[2] })
}

/// Covariance of the activation output given the Gaussian pre-activation `N(μ̄, C̄)`.
///
/// Diagonal entries come from the variance kernel, off-diagonal entries use the linear
/// response form `χ_i χ_j ρ_ij` with `ρ` clamped to `[-1, 1]`.
pub fn assemble_covariance(
    mu_bar: &DVector<f64>,
    c_bar: &DMatrix<f64>,
    kind: ActivationKind,
) -> Result<DMatrix<f64>> {
    let n = mu_bar.len();
    if c_bar.nrows() != n || c_bar.ncols() != n {
        return Err(Error::Contract(format!(
            "covariance is {}x{} but mean has length {n}",
            c_bar.nrows(),
            c_bar.ncols()
        )));
    }
    let mut moments = Vec::with_capacity(n);
    for i in 0..n {
        let c = c_bar[(i, i)];
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!(
                "pre-activation variance at coordinate {i} is {c}, must be positive"
            )));
        }
        moments.push(
            kind.moments(GaussianInput::new(mu_bar[i], c)?)
                .map_err(|e| e.context(format!("coordinate {i}")))?,
        );
    }
    Ok(covariance_from_moments(&moments, c_bar))
}

/// Builds the output covariance from per-coordinate kernel values. Coordinates with zero
/// input variance have `χ = 0` and therefore decouple.
pub(crate) fn covariance_from_moments(moments: &[ScalarMoments], c_bar: &DMatrix<f64>) -> DMatrix<f64> {
    let n = moments.len();
    let inv_sd: Vec<f64> = (0..n)
        .map(|i| {
            let c = c_bar[(i, i)];
            if c > 0.0 {
                1.0 / c.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        out[(j, j)] = moments[j].variance;
        let scaled_j = moments[j].chi * inv_sd[j];
        if scaled_j == 0.0 {
            continue;
        }
        for i in (j + 1)..n {
            let rho = (c_bar[(i, j)] * inv_sd[i] * inv_sd[j]).clamp(-1.0, 1.0);
            let v = moments[i].chi * moments[j].chi * rho;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    fn inp(m: f64, c: f64) -> GaussianInput {
        GaussianInput::new(m, c).unwrap()
    }

    #[test]
    fn heaviside_at_origin() {
        let m = heaviside_ma(inp(0.0, 1.0)).unwrap();
        assert_eq!(m.mean, 0.5);
        assert_eq!(m.variance, 0.25);
        assert!((m.chi - FRAC_1_SQRT_2PI).abs() < 1e-16);
    }

    #[test]
    fn heaviside_saturates() {
        let m = heaviside_ma(inp(10.0, 1.0)).unwrap();
        assert!((m.mean - 1.0).abs() < 1e-12);
        assert!(m.variance < 1e-12);
        assert!(m.chi < 1e-12);
        let m = heaviside_ma(inp(1.0, 1.0)).unwrap();
        assert!((m.mean - 0.841_344_746_068_542_9).abs() < 1e-15);
    }

    #[test]
    fn relu_at_origin() {
        let m = relu_ma(inp(0.0, 1.0)).unwrap();
        assert!((m.mean - FRAC_1_SQRT_2PI).abs() < 1e-16);
        let expected = 0.5 - 1.0 / (2.0 * std::f64::consts::PI);
        assert!((m.variance - expected).abs() < 1e-15);
        assert_eq!(m.chi, 0.5);
    }

    #[test]
    fn relu_linear_and_dead_regimes() {
        let m = relu_ma(inp(100.0, 1.0)).unwrap();
        assert!((m.mean - 100.0).abs() < 1e-12);
        assert!((m.variance - 1.0).abs() < 1e-10);
        assert!((m.chi - 1.0).abs() < 1e-12);
        let m = relu_ma(inp(-100.0, 1.0)).unwrap();
        assert!(m.mean.abs() < 1e-12 && m.variance.abs() < 1e-12 && m.chi.abs() < 1e-12);
    }

    #[test]
    fn kernels_reject_degenerate_variance() {
        for c in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(heaviside_ma(GaussianInput { mu_bar: 0.0, c_bar: c }), Err(Error::Domain(_))));
            assert!(relu_ma(GaussianInput { mu_bar: 0.0, c_bar: c }).is_err());
        }
    }

    #[test]
    fn lif_limits() {
        let p = LifParams::default();
        let low = lif_ma(inp(-200.0, 1.0), p).unwrap();
        assert!(low.mean < 1e-6);
        let high = lif_ma(inp(1e4, 1.0), p).unwrap();
        assert!((high.mean - 0.2).abs() < 1e-3, "{}", high.mean);
    }

    #[test]
    fn lif_matches_high_precision_values() {
        // 18-digit evaluations of the rate integrals by adaptive quadrature.
        let cases = [
            (1.0, 1.0, 0.0182369462058354758, 0.00293591820409095558, 0.0462293513950243328),
            (2.0, 1.0, 0.0535230170101681572, 0.00106888133888075006, 0.0274864952177304174),
        ];
        for (mu, c, m, v, chi) in cases {
            let r = lif_ma(inp(mu, c), LifParams::default()).unwrap();
            assert!((r.mean - m).abs() < 1e-14 * m, "{mu}");
            assert!((r.variance - v).abs() < 1e-13 * v, "{mu}");
            assert!((r.chi - chi).abs() < 1e-13 * chi, "{mu}");
        }
    }

    #[test]
    fn lif_params_are_validated() {
        let bad = LifParams { v_th: 0.0, v_res: 1.0, ..LifParams::default() };
        assert!(lif_ma(inp(1.0, 1.0), bad).is_err());
    }

    #[test]
    fn mean_derivative_closed_forms() {
        let d = ma_mean_derivative(ActivationKind::Heaviside, inp(0.0, 1.0)).unwrap();
        assert!((d - FRAC_1_SQRT_2PI).abs() < 1e-16);
        let d = ma_mean_derivative(ActivationKind::Relu, inp(0.0, 1.0)).unwrap();
        assert_eq!(d, 0.5);
    }

    #[test]
    fn mean_derivative_matches_finite_differences() {
        let kinds =
            [ActivationKind::Heaviside, ActivationKind::Relu, ActivationKind::Lif(LifParams::default())];
        for kind in kinds {
            for &(m, c) in &[(-1.0, 0.5), (0.3, 1.0), (1.5, 2.0), (2.0, 0.3)] {
                let h = 1e-6;
                let up = kind.mean_and_derivative(inp(m + h, c)).unwrap().0;
                let dn = kind.mean_and_derivative(inp(m - h, c)).unwrap().0;
                let fd = (up - dn) / (2.0 * h);
                let d = ma_mean_derivative(kind, inp(m, c)).unwrap();
                assert!((d - fd).abs() <= 1e-6 * d.abs().max(1e-3), "{kind:?} ({m},{c}): {d} vs {fd}");
            }
        }
    }

    #[test]
    fn quadrature_identity_is_exact() {
        let m = quadrature_ma(|x| x, inp(3.0, 2.0), DEFAULT_HERMITE_NODES).unwrap();
        assert!((m.mean - 3.0).abs() < 1e-12);
        assert!((m.variance - 2.0).abs() < 1e-11);
        assert!((m.chi - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn quadrature_reports_nan() {
        assert!(matches!(quadrature_ma(|_| f64::NAN, inp(0.0, 1.0), 20), Err(Error::Numeric(_))));
    }

    #[test]
    fn piecewise_quadrature_matches_step_kernels() {
        let (h, bp) = ActivationKind::Heaviside.pointwise().unwrap();
        let q = quadrature_ma_piecewise(h, bp, inp(1.0, 1.0)).unwrap();
        let a = heaviside_ma(inp(1.0, 1.0)).unwrap();
        assert!((q.mean - a.mean).abs() < 1e-8);
        assert!((q.variance - a.variance).abs() < 1e-8);
        assert!((q.chi - a.chi).abs() < 1e-8);

        let (h, bp) = ActivationKind::Relu.pointwise().unwrap();
        let q = quadrature_ma_piecewise(h, bp, inp(-0.5, 4.0)).unwrap();
        let a = relu_ma(inp(-0.5, 4.0)).unwrap();
        assert!((q.mean - a.mean).abs() < 1e-8);
        assert!((q.variance - a.variance).abs() < 1e-8);
        assert!((q.chi - a.chi).abs() < 1e-8);
    }

    #[test]
    fn covariance_assembly_examples() {
        let mu = DVector::from_vec(vec![0.0, 0.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.01, 0.01, 1.0]);
        let out = assemble_covariance(&mu, &c, ActivationKind::Heaviside).unwrap();
        let expected = FRAC_1_SQRT_2PI * FRAC_1_SQRT_2PI * 0.01;
        assert!((out[(0, 1)] - expected).abs() < 1e-16);
        assert!((expected - 1.5915e-3).abs() < 1e-7);
        assert_eq!(out[(0, 1)], out[(1, 0)]);

        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let out = assemble_covariance(&mu, &diag, ActivationKind::Relu).unwrap();
        assert_eq!(out[(0, 1)], 0.0);

        let one = assemble_covariance(
            &DVector::from_vec(vec![0.7]),
            &DMatrix::from_element(1, 1, 1.3),
            ActivationKind::Relu,
        )
        .unwrap();
        assert_eq!(one[(0, 0)], relu_ma(inp(0.7, 1.3)).unwrap().variance);
    }

    #[test]
    fn covariance_assembly_names_bad_coordinate() {
        let mu = DVector::from_vec(vec![0.0, 0.0]);
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let err = assemble_covariance(&mu, &c, ActivationKind::Heaviside).unwrap_err();
        assert!(err.to_string().contains("coordinate 1"), "{err}");
    }

    #[test]
    fn deterministic_lif_rate_has_threshold() {
        let p = LifParams::default();
        assert_eq!(lif_deterministic_rate(0.5, p), 0.0);
        assert_eq!(lif_deterministic_rate(1.0, p), 0.0);
        let r = lif_deterministic_rate(2.0, p);
        let expected = 1.0 / (5.0 + 20.0 * (2.0f64 / 1.0).ln());
        assert!((r - expected).abs() < 1e-15);
        let h = 1e-6;
        let kind = ActivationKind::Lif(p);
        let fd = (kind.deterministic(2.0 + h) - kind.deterministic(2.0 - h)) / (2.0 * h);
        assert!((kind.deterministic_derivative(2.0) - fd).abs() < 1e-8);
    }
}
