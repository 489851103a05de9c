//! Singular-integral quadrature: Gauss-Jacobi rules for endpoint power
//! weights combined with adaptive bisection, plus evaluators for the
//! asymptotic expansions of the triangular exponential integrals that drive
//! the estimator's limit constants.

use std::cell::Cell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64;
use once_cell::sync::Lazy;
use statrs::function::beta::beta;
use statrs::function::gamma::gamma;

use crate::error::{CfouError, Result};
use crate::fbm::HurstParam;
use crate::fou::DriftParam;

/// Tolerances and refinement budget for the adaptive engine.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Maximum bisection depth per panel.
    pub max_depth: usize,
    /// Base node count; the error estimate compares against 2x nodes.
    pub nodes: usize,
    /// Hard cap on the number of panels.
    pub max_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rtol: 1e-8,
            atol: 1e-12,
            max_depth: 20,
            nodes: 16,
            max_panels: 4000,
        }
    }
}

impl QuadConfig {
    /// Tighter configuration for inner integrals of nested quadratures.
    pub fn inner(&self) -> QuadConfig {
        QuadConfig {
            rtol: (self.rtol / 16.0).max(1e-14),
            atol: (self.atol / 16.0).max(1e-300),
            ..*self
        }
    }

    fn tolerance(&self, value_norm: f64) -> f64 {
        self.atol.max(self.rtol * value_norm)
    }
}

/// Scalar type integrable by the engine.
pub trait QuadValue:
    Copy + Send + Sync + std::ops::Add<Output = Self> + std::ops::Sub<Output = Self> + 'static
{
    fn zero() -> Self;
    fn scale(self, c: f64) -> Self;
    fn norm(self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn norm(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::ZERO
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn norm(self) -> f64 {
        Complex64::norm(self)
    }
}

/// Endpoint power weight (x-a)^p (b-x)^q on [a,b]; exponents > -1.
#[derive(Debug, Clone, Copy)]
pub struct SingularWeight {
    pub a: f64,
    pub b: f64,
    pub exponent_left: f64,
    pub exponent_right: f64,
}

impl SingularWeight {
    pub fn new(a: f64, b: f64, exponent_left: f64, exponent_right: f64) -> Result<Self> {
        if !(a < b) {
            return Err(CfouError::Domain(format!(
                "weight interval must satisfy a < b, got [{a}, {b}]"
            )));
        }
        if exponent_left <= -1.0 || exponent_right <= -1.0 {
            return Err(CfouError::Domain(format!(
                "weight exponents must exceed -1, got ({exponent_left}, {exponent_right})"
            )));
        }
        Ok(SingularWeight {
            a,
            b,
            exponent_left,
            exponent_right,
        })
    }
}

// ---------------------------------------------------------------------------
// Gauss-Jacobi nodes and weights (Golub-Welsch)
// ---------------------------------------------------------------------------

type NodeWeights = Arc<(Vec<f64>, Vec<f64>)>;

static JACOBI_CACHE: Lazy<Mutex<HashMap<(usize, u64, u64), NodeWeights>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Nodes and weights for int_{-1}^{1} (1-x)^alpha (1+x)^beta f(x) dx.
pub fn gauss_jacobi(n: usize, alpha: f64, beta_exp: f64) -> NodeWeights {
    let key = (n, alpha.to_bits(), beta_exp.to_bits());
    if let Some(hit) = JACOBI_CACHE.lock().unwrap().get(&key) {
        return hit.clone();
    }
    let rule = Arc::new(gauss_jacobi_raw(n, alpha, beta_exp));
    JACOBI_CACHE.lock().unwrap().insert(key, rule.clone());
    rule
}

fn gauss_jacobi_raw(n: usize, alpha: f64, beta_exp: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2 && alpha > -1.0 && beta_exp > -1.0);
    let ab = alpha + beta_exp;
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut diag = (beta_exp - alpha) / (ab + 2.0);
    for k in 0..n - 1 {
        let k1 = (k + 1) as f64;
        let den = 2.0 * k1 + ab;
        // k = 0 needs the cancelled form: the generic one is 0/0 when ab = -1.
        let off = if k == 0 {
            2.0 / (ab + 2.0) * ((1.0 + alpha) * (1.0 + beta_exp) / (ab + 3.0)).sqrt()
        } else {
            2.0 / den
                * (k1 * (k1 + alpha) * (k1 + beta_exp) * (k1 + ab)
                    / ((den + 1.0) * (den - 1.0)))
                    .sqrt()
        };
        m[(k, k)] = diag;
        m[(k, k + 1)] = off;
        m[(k + 1, k)] = off;
        diag = (beta_exp * beta_exp - alpha * alpha) / (den * (den + 2.0));
    }
    m[(n - 1, n - 1)] = diag;

    let eig = m.symmetric_eigen();
    let mu0 = 2f64.powf(ab + 1.0) * beta(alpha + 1.0, beta_exp + 1.0);
    let mut pairs: Vec<(f64, f64)> = eig
        .eigenvalues
        .iter()
        .copied()
        .zip(eig.eigenvectors.row(0).iter().map(|v| v * v * mu0))
        .collect();
    pairs.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

// ---------------------------------------------------------------------------
// Adaptive weighted integration
// ---------------------------------------------------------------------------

struct Panel<V> {
    lo: f64,
    hi: f64,
    depth: usize,
    value: V,
    err: f64,
}

struct WeightedProblem<'f, V> {
    f: &'f dyn Fn(f64) -> V,
    a: f64,
    b: f64,
    p: f64,
    q: f64,
    nodes: usize,
}

impl<V: QuadValue> WeightedProblem<'_, V> {
    /// Value and error estimate on one panel; Jacobi weights are absorbed
    /// into the rule on panels touching a singular endpoint.
    fn eval(&self, lo: f64, hi: f64) -> (V, f64) {
        let coarse = self.fixed_rule(lo, hi, self.nodes);
        let fine = self.fixed_rule(lo, hi, 2 * self.nodes);
        let err = (fine - coarse).norm();
        (fine, err)
    }

    fn fixed_rule(&self, lo: f64, hi: f64, n: usize) -> V {
        let left_sing = lo == self.a && self.p != 0.0;
        let right_sing = hi == self.b && self.q != 0.0;
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        // Jacobi convention: alpha goes with (1-x) (right end), beta with (1+x).
        let (alpha, beta_exp) = match (left_sing, right_sing) {
            (true, true) => (self.q, self.p),
            (true, false) => (0.0, self.p),
            (false, true) => (self.q, 0.0),
            (false, false) => (0.0, 0.0),
        };
        let rule = gauss_jacobi(n, alpha, beta_exp);
        let mut acc = V::zero();
        for (&xi, &wi) in rule.0.iter().zip(rule.1.iter()) {
            let x = mid + half * xi;
            let mut w = wi;
            // Factors not absorbed into the rule are applied pointwise.
            if !left_sing && self.p != 0.0 {
                w *= (x - self.a).powf(self.p);
            }
            if !right_sing && self.q != 0.0 {
                w *= (self.b - x).powf(self.q);
            }
            acc = acc + (self.f)(x).scale(w);
        }
        // Absorbed weights contribute half^p and/or half^q; the plain
        // Jacobian contributes half once.
        let mut scale = half;
        if left_sing {
            scale *= half.powf(self.p);
        }
        if right_sing {
            scale *= half.powf(self.q);
        }
        acc.scale(scale)
    }
}

/// Core adaptive driver. Returns (value, error bound, converged).
fn adaptive_core<V: QuadValue>(
    f: &dyn Fn(f64) -> V,
    w: &SingularWeight,
    splits: &[f64],
    cfg: &QuadConfig,
) -> (V, f64, bool) {
    let prob = WeightedProblem {
        f,
        a: w.a,
        b: w.b,
        p: w.exponent_left,
        q: w.exponent_right,
        nodes: cfg.nodes,
    };
    let mut edges: Vec<f64> = Vec::with_capacity(splits.len() + 2);
    edges.push(w.a);
    for &s in splits {
        if s > w.a && s < w.b {
            edges.push(s);
        }
    }
    edges.push(w.b);
    edges.sort_unstable_by(f64::total_cmp);
    edges.dedup();

    let mut panels: Vec<Panel<V>> = edges
        .windows(2)
        .map(|e| {
            let (v, err) = prob.eval(e[0], e[1]);
            Panel {
                lo: e[0],
                hi: e[1],
                depth: 0,
                value: v,
                err,
            }
        })
        .collect();

    loop {
        let mut total = V::zero();
        let mut err_sum = 0.0;
        for p in &panels {
            total = total + p.value;
            err_sum += p.err;
        }
        if err_sum <= cfg.tolerance(total.norm()) {
            return (total, err_sum, true);
        }
        // Split the splittable panel with the largest error.
        let mut worst: Option<usize> = None;
        let mut worst_err = 0.0;
        for (i, p) in panels.iter().enumerate() {
            if p.depth < cfg.max_depth && p.err >= worst_err {
                worst_err = p.err;
                worst = Some(i);
            }
        }
        let Some(i) = worst else {
            return (total, err_sum, false);
        };
        if panels.len() >= cfg.max_panels {
            return (total, err_sum, false);
        }
        let Panel { lo, hi, depth, .. } = panels[i];
        let mid = 0.5 * (lo + hi);
        let (lv, le) = prob.eval(lo, mid);
        let (rv, re) = prob.eval(mid, hi);
        panels[i] = Panel {
            lo,
            hi: mid,
            depth: depth + 1,
            value: lv,
            err: le,
        };
        panels.push(Panel {
            lo: mid,
            hi,
            depth: depth + 1,
            value: rv,
            err: re,
        });
    }
}

/// Weighted integral with hard error control.
pub fn integrate_singular_1d<V: QuadValue>(
    f: impl Fn(f64) -> V,
    w: &SingularWeight,
    cfg: &QuadConfig,
) -> Result<V> {
    let (value, bound, converged) = adaptive_core(&f, w, &[], cfg);
    if converged {
        Ok(value)
    } else {
        Err(accuracy_error(value, bound, "integrate_singular_1d"))
    }
}

/// Weighted integral that always returns its best estimate and bound.
pub fn integrate_singular_1d_lenient<V: QuadValue>(
    f: impl Fn(f64) -> V,
    w: &SingularWeight,
    cfg: &QuadConfig,
) -> (V, f64) {
    let (value, bound, _) = adaptive_core(&f, w, &[], cfg);
    (value, bound)
}

/// Unweighted adaptive integral on [a,b].
pub fn adaptive_1d<V: QuadValue>(f: impl Fn(f64) -> V, a: f64, b: f64, cfg: &QuadConfig) -> Result<V> {
    adaptive_1d_with_splits(f, a, b, &[], cfg)
}

/// Unweighted adaptive integral with caller-supplied initial subdivision
/// points (put kinks of the integrand here).
pub fn adaptive_1d_with_splits<V: QuadValue>(
    f: impl Fn(f64) -> V,
    a: f64,
    b: f64,
    splits: &[f64],
    cfg: &QuadConfig,
) -> Result<V> {
    if a == b {
        return Ok(V::zero());
    }
    let w = SingularWeight::new(a, b, 0.0, 0.0)?;
    let (value, bound, converged) = adaptive_core(&f, &w, splits, cfg);
    if converged {
        Ok(value)
    } else {
        Err(accuracy_error(value, bound, "adaptive_1d"))
    }
}

/// Lenient variant of [`adaptive_1d_with_splits`].
pub fn adaptive_1d_lenient<V: QuadValue>(
    f: impl Fn(f64) -> V,
    a: f64,
    b: f64,
    splits: &[f64],
    cfg: &QuadConfig,
) -> (V, f64) {
    if a == b {
        return (V::zero(), 0.0);
    }
    let w = SingularWeight {
        a,
        b,
        exponent_left: 0.0,
        exponent_right: 0.0,
    };
    let (value, bound, _) = adaptive_core(&f, &w, splits, cfg);
    (value, bound)
}

fn accuracy_error<V: QuadValue>(value: V, bound: f64, context: &str) -> CfouError {
    // Store the best estimate as a complex number regardless of V.
    let best = Complex64::new(value.norm(), 0.0);
    CfouError::Accuracy {
        best,
        bound,
        context: context.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Appendix asymptotic expansions
// ---------------------------------------------------------------------------

/// Sign of delta = 1 + alpha_1 + alpha_2 in the triangular-integral expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum DeltaRegime {
    DeltaNeg,
    DeltaZero,
    DeltaPos,
}

/// An asymptotic expansion evaluated next to its quadrature oracle.
#[derive(Debug, Clone, Copy)]
pub struct ExpansionResult<V> {
    pub value_expansion: V,
    pub value_quadrature: V,
    pub abs_gap: f64,
    pub regime: DeltaRegime,
}

impl<V: QuadValue> ExpansionResult<V> {
    fn new(value_expansion: V, value_quadrature: V, regime: DeltaRegime) -> Self {
        ExpansionResult {
            value_expansion,
            value_quadrature,
            abs_gap: (value_expansion - value_quadrature).norm(),
            regime,
        }
    }
}

/// kappa = -Gamma(2H) Gamma(4H-1) Gamma(3-4H) / (2 Gamma(2-2H)).
pub fn kappa(h: HurstParam) -> f64 {
    let hv = h.value();
    -gamma(2.0 * hv) * gamma(4.0 * hv - 1.0) * gamma(3.0 - 4.0 * hv) / (2.0 * gamma(2.0 - 2.0 * hv))
}

/// e^{-T} int_0^T e^x x^beta dx against its two-term expansion
/// T^beta - beta T^{beta-1}; the gap is O(T^{beta-2}).
pub fn asym_key0(beta_exp: f64, t_end: f64, cfg: &QuadConfig) -> Result<ExpansionResult<f64>> {
    if !(beta_exp > -1.0 && beta_exp < 0.0) {
        return Err(CfouError::Domain(format!(
            "asym_key0 needs beta in (-1,0), got {beta_exp}"
        )));
    }
    if t_end <= 1.0 {
        return Err(CfouError::Domain("asym_key0 needs t_end > 1".into()));
    }
    let w = SingularWeight::new(0.0, t_end, beta_exp, 0.0)?;
    let quadrature = integrate_singular_1d(|x| (x - t_end).exp(), &w, cfg)?;
    let expansion = t_end.powf(beta_exp) - beta_exp * t_end.powf(beta_exp - 1.0);
    Ok(ExpansionResult::new(expansion, quadrature, DeltaRegime::DeltaNeg))
}

/// Triangular exponential integral
/// int_{0<=x<=z<=T} e^{gamma (x-z)} x^{p} z^{q} (z-x)^{extra} dx dz
/// with extra in {0,1}, via the substitution x = u z, which factors the
/// problem into a u-integral of 1-d z-integrals.
fn triangular_exp_integral(
    gamma_c: Complex64,
    p: f64,
    q: f64,
    extra: u32,
    t_end: f64,
    cfg: &QuadConfig,
) -> Result<Complex64> {
    let nu = p + q + 1.0 + extra as f64;
    let inner_cfg = cfg.inner();
    let inner_slop = Cell::new(0.0f64);

    let outer = |u: f64| -> Complex64 {
        // (1-u)^extra from the (z - uz)^extra factor.
        let shape = (1.0 - u).powi(extra as i32);
        if shape == 0.0 {
            return Complex64::ZERO;
        }
        let c = gamma_c * (1.0 - u);
        let wz = SingularWeight {
            a: 0.0,
            b: t_end,
            exponent_left: nu,
            exponent_right: 0.0,
        };
        let (iz, err) = integrate_singular_1d_lenient(|z| (-c * z).exp(), &wz, &inner_cfg);
        let rel = err / (iz.norm() + 1e-300);
        if rel > inner_slop.get() {
            inner_slop.set(rel);
        }
        iz * shape
    };

    let wu = SingularWeight::new(0.0, 1.0, p, 0.0)?;
    let (value, bound, converged) = adaptive_core(&outer, &wu, &[], cfg);
    let total_bound = bound + inner_slop.get() * value.norm();
    if !converged || total_bound > cfg.tolerance(value.norm()) * 4.0 {
        return Err(CfouError::Accuracy {
            best: value,
            bound: total_bound,
            context: "triangular_exp_integral".into(),
        });
    }
    Ok(value)
}

/// int_{0<=x<=z<=T} e^{x-z} x^{a1} z^{a2} dx dz against the regime-matched
/// expansion in delta = 1 + a1 + a2.
pub fn asym_key(a1: f64, a2: f64, t_end: f64, cfg: &QuadConfig) -> Result<ExpansionResult<f64>> {
    if a1 <= -1.0 {
        return Err(CfouError::Domain(format!("asym_key needs a1 > -1, got {a1}")));
    }
    let delta = 1.0 + a1 + a2;
    if !(delta > -1.0 && delta < 1.0) {
        return Err(CfouError::Domain(format!(
            "asym_key needs delta = 1 + a1 + a2 in (-1,1), got {delta}"
        )));
    }
    let quad_c = triangular_exp_integral(Complex64::new(1.0, 0.0), a1, a2, 0, t_end, cfg)?;
    let quadrature = quad_c.re;

    const DELTA_EPS: f64 = 1e-12;
    let (expansion, regime) = if delta < -DELTA_EPS {
        (
            gamma(delta + 1.0) * beta(1.0 + a1, -delta) + t_end.powf(delta) / delta,
            DeltaRegime::DeltaNeg,
        )
    } else if delta > DELTA_EPS {
        (
            t_end.powf(delta) / delta + a2 * gamma(delta) * beta(1.0 + a1, 1.0 - delta)
                - a1 / (a1 + a2) * t_end.powf(delta - 1.0),
            DeltaRegime::DeltaPos,
        )
    } else {
        (t_end.ln(), DeltaRegime::DeltaZero)
    };
    Ok(ExpansionResult::new(expansion, quadrature, regime))
}

/// Which of the three complex triangular integrals to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoroIntegral {
    /// x^{2H-1} z^{2H}
    XZ,
    /// x^{2H} z^{2H-1}
    ZX,
    /// x^{2H-1} z^{2H} (z-x)
    Weighted,
}

/// Complex triangular integrals with exponential weight e^{gamma(x-z)} and
/// their four-term expansions in T (the Weighted case has an O(1) tail).
pub fn asym_coro(
    gamma_p: DriftParam,
    h: HurstParam,
    t_end: f64,
    which: CoroIntegral,
    cfg: &QuadConfig,
) -> Result<ExpansionResult<Complex64>> {
    let hv = h.value();
    if !(hv > 0.25 && hv < 0.5) {
        return Err(CfouError::Domain(format!(
            "asym_coro needs H in (1/4,1/2), got {hv}"
        )));
    }
    let g = gamma_p.gamma();
    let t = t_end;
    let kap = kappa(h);
    let t4h = t.powf(4.0 * hv);
    let t4h1 = t.powf(4.0 * hv - 1.0);
    let t4h2 = t.powf(4.0 * hv - 2.0);
    let four_h_1 = 4.0 * hv - 1.0;

    let (p, q, extra) = match which {
        CoroIntegral::XZ => (2.0 * hv - 1.0, 2.0 * hv, 0),
        CoroIntegral::ZX => (2.0 * hv, 2.0 * hv - 1.0, 0),
        CoroIntegral::Weighted => (2.0 * hv - 1.0, 2.0 * hv, 1),
    };
    let quadrature = triangular_exp_integral(g, p, q, extra, t, cfg)?;

    let expansion = match which {
        CoroIntegral::XZ => {
            t4h / (4.0 * hv * g) + (1.0 - 2.0 * hv) * t4h1 / (four_h_1 * g * g)
                + 2.0 * hv * kap / g.powf(1.0 + 4.0 * hv)
                + (hv - 1.0) * t4h2 / (g * g * g)
        }
        CoroIntegral::ZX => {
            t4h / (4.0 * hv * g) - 2.0 * hv * t4h1 / (four_h_1 * g * g)
                - 2.0 * hv * kap / g.powf(1.0 + 4.0 * hv)
                + hv * t4h2 / (g * g * g)
        }
        CoroIntegral::Weighted => {
            t4h / (4.0 * hv * g * g) + 2.0 * (1.0 - 2.0 * hv) * t4h1 / (four_h_1 * g * g * g)
                + 2.0 * hv * (4.0 * hv + 1.0) * kap / g.powf(2.0 + 4.0 * hv)
                + hv * t4h2 / (g * g * g)
        }
    };
    Ok(ExpansionResult::new(expansion, quadrature, DeltaRegime::DeltaPos))
}

/// Ratio e^{-s} int_0^s e^r r^beta dr / (1 and s^beta), the quantity bounded
/// by the appendix upper-bound lemma.
pub fn upper_bound_ratio(beta_exp: f64, s: f64, cfg: &QuadConfig) -> Result<f64> {
    if s <= 0.0 {
        return Err(CfouError::Domain("upper_bound_ratio needs s > 0".into()));
    }
    let w = SingularWeight::new(0.0, s, beta_exp, 0.0)?;
    let value = integrate_singular_1d(|r| (r - s).exp(), &w, cfg)?;
    Ok(value / s.powf(beta_exp).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> QuadConfig {
        QuadConfig::default()
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let rule = gauss_jacobi(8, 0.0, 0.0);
        for k in 0..12 {
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            let approx: f64 = rule
                .0
                .iter()
                .zip(rule.1.iter())
                .map(|(&x, &w)| w * x.powi(k))
                .sum();
            assert_abs_diff_eq!(approx, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn jacobi_rule_handles_sum_minus_one() {
        // alpha + beta = -1 exercises the k = 0 recurrence special case.
        let rule = gauss_jacobi(16, -0.5, -0.5);
        // int_{-1}^1 (1-x)^{-1/2} (1+x)^{-1/2} dx = pi.
        let total: f64 = rule.1.iter().sum();
        assert_abs_diff_eq!(total, std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn constant_weight_free() {
        let w = SingularWeight::new(0.0, 1.0, 0.0, 0.0).unwrap();
        let v: f64 = integrate_singular_1d(|_| 1.0, &w, &cfg()).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn power_law_antiderivative() {
        // int_0^1 x^{-0.4} dx = 1/0.6.
        let w = SingularWeight::new(0.0, 1.0, -0.4, 0.0).unwrap();
        let v: f64 = integrate_singular_1d(|_| 1.0, &w, &cfg()).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 0.6, epsilon = 1e-12);
    }

    /// Midpoint rule on a mesh graded toward zero, used as the independent
    /// oracle for the singular quadrature.
    fn graded_mesh_oracle(f: impl Fn(f64) -> f64, p: f64, n: usize) -> f64 {
        let grade = 4.0;
        let mut acc = 0.0;
        let mut t0 = 0.0f64;
        for i in 1..=n {
            let t1 = ((i as f64) / n as f64).powf(grade);
            let m = 0.5 * (t0 + t1);
            acc += f(m) * m.powf(p) * (t1 - t0);
            t0 = t1;
        }
        acc
    }

    #[test]
    fn exp_times_inverse_sqrt_matches_graded_mesh() {
        let w = SingularWeight::new(0.0, 1.0, -0.5, 0.0).unwrap();
        let v: f64 = integrate_singular_1d(f64::exp, &w, &cfg()).unwrap();
        let oracle = graded_mesh_oracle(f64::exp, -0.5, 1_000_000);
        assert!(
            (v - oracle).abs() <= 1e-8,
            "quadrature {v} vs graded-mesh oracle {oracle}"
        );
    }

    #[test]
    fn interior_singularity_needs_split_points() {
        // int_0^2 |x-1|^{-1/2} dx = 4, via two weighted halves.
        let w1 = SingularWeight::new(0.0, 1.0, 0.0, -0.5).unwrap();
        let w2 = SingularWeight::new(1.0, 2.0, -0.5, 0.0).unwrap();
        let v1: f64 = integrate_singular_1d(|_| 1.0, &w1, &cfg()).unwrap();
        let v2: f64 = integrate_singular_1d(|_| 1.0, &w2, &cfg()).unwrap();
        assert_abs_diff_eq!(v1 + v2, 4.0, epsilon = 1e-10);
    }

    #[test]
    fn doubling_depth_leaves_values_invariant() {
        let base = QuadConfig::default();
        let deep = QuadConfig {
            max_depth: 2 * base.max_depth,
            ..base
        };
        let w = SingularWeight::new(0.0, 10.0, -0.3, 0.0).unwrap();
        let f = |x: f64| (x * 1.7).sin() * (-0.4 * x).exp();
        let v1: f64 = integrate_singular_1d(f, &w, &base).unwrap();
        let v2: f64 = integrate_singular_1d(f, &w, &deep).unwrap();
        assert!((v1 - v2).abs() <= base.rtol * (1.0 + v1.abs()));
    }

    #[test]
    fn complex_integrand_conjugation_symmetry() {
        let w = SingularWeight::new(0.0, 5.0, -0.3, 0.0).unwrap();
        let g = Complex64::new(0.8, -1.3);
        let v: Complex64 = integrate_singular_1d(|x| (-g * x).exp(), &w, &cfg()).unwrap();
        let vc: Complex64 =
            integrate_singular_1d(|x| (-g.conj() * x).exp(), &w, &cfg()).unwrap();
        assert_abs_diff_eq!(v.re, vc.re, epsilon = 1e-11);
        assert_abs_diff_eq!(v.im, -vc.im, epsilon = 1e-11);
    }

    #[test]
    fn key0_example_values() {
        let r = asym_key0(-0.5, 100.0, &cfg()).unwrap();
        assert_abs_diff_eq!(r.value_expansion, 0.1005, epsilon = 1e-12);
        // Gap is O(T^{-2.5}); allow a generous constant.
        assert!(r.abs_gap <= 10.0 * 100.0f64.powf(-2.5), "gap {}", r.abs_gap);

        let r9 = asym_key0(-0.9, 50.0, &cfg()).unwrap();
        assert!(r9.abs_gap < 1e-3 * r9.value_expansion.abs());
    }

    #[test]
    fn key0_rate_regression() {
        // gap * T^{2 - beta} stays within a factor 4 band over a 4x range of T.
        let beta_exp = -0.5;
        let scaled: Vec<f64> = [25.0, 50.0, 100.0]
            .iter()
            .map(|&t| {
                let r = asym_key0(beta_exp, t, &cfg()).unwrap();
                r.abs_gap * t.powf(2.0 - beta_exp)
            })
            .collect();
        let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = scaled.iter().cloned().fold(0.0f64, f64::max);
        assert!(hi / lo < 4.0, "scaled gaps {scaled:?}");
    }

    #[test]
    fn key_delta_negative_and_positive() {
        // delta = -0.2: expansion error O(T^{delta-1}).
        let r = asym_key(-0.4, -0.8, 200.0, &cfg()).unwrap();
        assert_eq!(r.regime, DeltaRegime::DeltaNeg);
        assert!(r.abs_gap < 20.0 * 200.0f64.powf(-1.2), "gap {}", r.abs_gap);

        // delta = 0.2 (the H = 0.3 diagonal case): error O(T^{delta-2}).
        let r = asym_key(-0.4, -0.4, 200.0, &cfg()).unwrap();
        assert_eq!(r.regime, DeltaRegime::DeltaPos);
        assert!(r.abs_gap < 20.0 * 200.0f64.powf(-1.8), "gap {}", r.abs_gap);
    }

    #[test]
    fn key_delta_pos_matches_kappa_identity() {
        // For a1 = a2 = 2H-1 the constant term equals kappa(H).
        let h = HurstParam::new(0.35).unwrap();
        let a = 2.0 * 0.35 - 1.0;
        let delta = 1.0 + 2.0 * a;
        let r = asym_key(a, a, 150.0, &cfg()).unwrap();
        let kap = kappa(h);
        let explicit = 150.0f64.powf(delta) / delta + kap - 0.5 * 150.0f64.powf(delta - 1.0);
        assert_abs_diff_eq!(r.value_expansion, explicit, epsilon = 1e-9);
        assert!(r.abs_gap < 1e-3);
    }

    #[test]
    fn kappa_at_half_is_minus_half() {
        assert_abs_diff_eq!(kappa(HurstParam::new(0.5).unwrap()), -0.5, epsilon = 1e-14);
    }

    #[test]
    fn coro_conjugating_gamma_conjugates_result() {
        let h = HurstParam::new(0.35).unwrap();
        let g = DriftParam::new(1.0, 1.0).unwrap();
        let gc = DriftParam::new(1.0, -1.0).unwrap();
        let a = asym_coro(g, h, 30.0, CoroIntegral::XZ, &cfg()).unwrap();
        let b = asym_coro(gc, h, 30.0, CoroIntegral::XZ, &cfg()).unwrap();
        assert_abs_diff_eq!(a.value_quadrature.re, b.value_quadrature.re, epsilon = 1e-8);
        assert_abs_diff_eq!(a.value_quadrature.im, -b.value_quadrature.im, epsilon = 1e-8);
    }

    #[test]
    fn upper_bound_ratio_stays_bounded() {
        let c = cfg();
        for &b in &[-0.5, -0.3] {
            let mut max_first = 0.0f64;
            let mut max_last = 0.0f64;
            for i in 0..=24 {
                let s = 10f64.powf(-3.0 + 6.0 * i as f64 / 24.0);
                let r = upper_bound_ratio(b, s, &c).unwrap();
                assert!(r.is_finite() && r > 0.0);
                if s <= 1e-2 {
                    max_first = max_first.max(r);
                }
                if s >= 1e2 {
                    max_last = max_last.max(r);
                }
            }
            assert!(
                max_last <= 2.0 * max_first.max(1.0),
                "growth trend for beta {b}: first {max_first}, last {max_last}"
            );
        }
    }
}
