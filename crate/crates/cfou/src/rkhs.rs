//! The reproducing-kernel Hilbert space of fBm on [0,T]: Lebesgue-Stieltjes
//! measures of bounded-variation functions, the inner-product formula for
//! H < 1/2 (kernel |t-s|^{2H-1} sgn(t-s) against the measure of the second
//! argument), the classical |t-s|^{2H-2} formula for H > 1/2, and a
//! grid-Gram projection that serves as an independent oracle.

use num_complex::Complex64;

use crate::error::{CfouError, Result};
use crate::fbm::{increment_autocovariance, HurstParam, HurstRegime};
use crate::quad::{
    adaptive_1d_lenient, integrate_singular_1d_lenient, QuadConfig, SingularWeight,
};

/// Smallest atom mass kept by the measure extraction.
pub const ATOM_DROP_TOL: f64 = 1e-14;

/// Smooth density of one piece, with a closed-form derivative.
#[derive(Debug, Clone)]
pub enum Density {
    Const(Complex64),
    /// Sum of coef[k] * u^k.
    Poly(Vec<Complex64>),
    /// scale * exp(rate * u).
    Exp { scale: Complex64, rate: Complex64 },
    /// scale * (anchor - u)^exponent for u < anchor.
    PowerToward {
        anchor: f64,
        exponent: f64,
        scale: f64,
    },
}

impl Density {
    pub fn eval(&self, u: f64) -> Complex64 {
        match self {
            Density::Const(c) => *c,
            Density::Poly(coeffs) => {
                let mut acc = Complex64::ZERO;
                for &c in coeffs.iter().rev() {
                    acc = acc * u + c;
                }
                acc
            }
            Density::Exp { scale, rate } => scale * (rate * u).exp(),
            Density::PowerToward {
                anchor,
                exponent,
                scale,
            } => Complex64::new(scale * (anchor - u).powf(*exponent), 0.0),
        }
    }

    pub fn derivative(&self) -> Density {
        match self {
            Density::Const(_) => Density::Const(Complex64::ZERO),
            Density::Poly(coeffs) => {
                if coeffs.len() <= 1 {
                    Density::Const(Complex64::ZERO)
                } else {
                    Density::Poly(
                        coeffs
                            .iter()
                            .enumerate()
                            .skip(1)
                            .map(|(k, &c)| c * k as f64)
                            .collect(),
                    )
                }
            }
            Density::Exp { scale, rate } => Density::Exp {
                scale: scale * rate,
                rate: *rate,
            },
            Density::PowerToward {
                anchor,
                exponent,
                scale,
            } => Density::PowerToward {
                anchor: *anchor,
                exponent: exponent - 1.0,
                scale: -scale * exponent,
            },
        }
    }

    pub fn conj(&self) -> Density {
        match self {
            Density::Const(c) => Density::Const(c.conj()),
            Density::Poly(coeffs) => Density::Poly(coeffs.iter().map(|c| c.conj()).collect()),
            Density::Exp { scale, rate } => Density::Exp {
                scale: scale.conj(),
                rate: rate.conj(),
            },
            p @ Density::PowerToward { .. } => p.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Density::Const(c) => c.norm() == 0.0,
            Density::Poly(coeffs) => coeffs.iter().all(|c| c.norm() == 0.0),
            Density::Exp { scale, .. } => scale.norm() == 0.0,
            Density::PowerToward { scale, .. } => *scale == 0.0,
        }
    }
}

/// One smooth piece on [a,b].
#[derive(Debug, Clone)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub density: Density,
}

impl Piece {
    fn eval(&self, u: f64) -> Complex64 {
        self.density.eval(u)
    }
}

/// A bounded-variation function given as smooth pieces on disjoint intervals
/// of [0, infinity); zero outside its pieces.
#[derive(Debug, Clone)]
pub struct PiecewiseSmoothFn {
    pieces: Vec<Piece>,
}

impl PiecewiseSmoothFn {
    pub fn new(mut pieces: Vec<Piece>) -> Result<Self> {
        pieces.sort_by(|x, y| x.a.total_cmp(&y.a));
        for p in &pieces {
            if !(p.a >= 0.0 && p.b > p.a) {
                return Err(CfouError::Domain(format!(
                    "piece interval [{}, {}] invalid",
                    p.a, p.b
                )));
            }
        }
        for w in pieces.windows(2) {
            if w[1].a < w[0].b {
                return Err(CfouError::Domain(format!(
                    "pieces overlap: [{}, {}] and [{}, {}]",
                    w[0].a, w[0].b, w[1].a, w[1].b
                )));
            }
        }
        Ok(PiecewiseSmoothFn { pieces })
    }

    pub fn indicator(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![Piece {
            a,
            b,
            density: Density::Const(Complex64::ONE),
        }])
    }

    pub fn scaled_indicator(a: f64, b: f64, c: Complex64) -> Result<Self> {
        Self::new(vec![Piece {
            a,
            b,
            density: Density::Const(c),
        }])
    }

    /// scale * e^{rate u} on [a,b].
    pub fn exp_on(scale: Complex64, rate: Complex64, a: f64, b: f64) -> Result<Self> {
        Self::new(vec![Piece {
            a,
            b,
            density: Density::Exp { scale, rate },
        }])
    }

    /// Polynomial with the given coefficients on [a,b].
    pub fn poly_on(coeffs: Vec<Complex64>, a: f64, b: f64) -> Result<Self> {
        Self::new(vec![Piece {
            a,
            b,
            density: Density::Poly(coeffs),
        }])
    }

    /// scale * (anchor - u)^exponent on [a,b]; needs b <= anchor.
    pub fn power_toward(anchor: f64, exponent: f64, scale: f64, a: f64, b: f64) -> Result<Self> {
        if b > anchor {
            return Err(CfouError::Domain(format!(
                "power piece must end at or before its anchor {anchor}, got b = {b}"
            )));
        }
        Self::new(vec![Piece {
            a,
            b,
            density: Density::PowerToward {
                anchor,
                exponent,
                scale,
            },
        }])
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn eval(&self, u: f64) -> Complex64 {
        for p in &self.pieces {
            if u >= p.a && u <= p.b {
                return p.eval(u);
            }
        }
        Complex64::ZERO
    }

    pub fn support_end(&self) -> f64 {
        self.pieces.iter().map(|p| p.b).fold(0.0, f64::max)
    }
}

/// An atom of a Lebesgue-Stieltjes measure.
#[derive(Debug, Clone, Copy)]
pub struct Atom {
    pub location: f64,
    pub mass: Complex64,
}

/// The measure nu_g of a bounded-variation function: an absolutely
/// continuous part (the derivative on each piece) plus boundary atoms.
#[derive(Debug, Clone)]
pub struct AtomicMeasure {
    pub density: Vec<Piece>,
    pub atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn conj(&self) -> AtomicMeasure {
        AtomicMeasure {
            density: self
                .density
                .iter()
                .map(|p| Piece {
                    a: p.a,
                    b: p.b,
                    density: p.density.conj(),
                })
                .collect(),
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    location: a.location,
                    mass: a.mass.conj(),
                })
                .collect(),
        }
    }

    /// Integral of the density plus the sum of atom masses; zero for every
    /// measure produced by [`bv_measure`].
    pub fn total_mass(&self, cfg: &QuadConfig) -> Complex64 {
        let mut total: Complex64 = self.atoms.iter().map(|a| a.mass).sum();
        for p in &self.density {
            let (v, _) = adaptive_1d_lenient(|u| p.eval(u), p.a, p.b, &[], cfg);
            total += v;
        }
        total
    }
}

/// Lebesgue-Stieltjes measure of g extended by zero outside its support:
/// the derivative on each piece plus atoms +g(a) and -g(b) at the piece
/// boundaries, with coincident atoms merged.
pub fn bv_measure(g: &PiecewiseSmoothFn) -> AtomicMeasure {
    let mut density = Vec::new();
    let mut atoms: Vec<Atom> = Vec::new();
    for p in g.pieces() {
        let d = p.density.derivative();
        if !d.is_zero() {
            density.push(Piece {
                a: p.a,
                b: p.b,
                density: d,
            });
        }
        atoms.push(Atom {
            location: p.a,
            mass: p.eval(p.a),
        });
        atoms.push(Atom {
            location: p.b,
            mass: -p.eval(p.b),
        });
    }
    atoms.sort_by(|x, y| x.location.total_cmp(&y.location));
    let mut merged: Vec<Atom> = Vec::new();
    for a in atoms {
        match merged.last_mut() {
            Some(last) if last.location == a.location => last.mass += a.mass,
            _ => merged.push(a),
        }
    }
    merged.retain(|a| a.mass.norm() >= ATOM_DROP_TOL);
    AtomicMeasure {
        density,
        atoms: merged,
    }
}

// ---------------------------------------------------------------------------
// Inner product
// ---------------------------------------------------------------------------

/// Running total with a cancellation-aware error bound.
struct Accum {
    value: Complex64,
    bound: f64,
    scale: f64,
}

impl Accum {
    fn new() -> Self {
        Accum {
            value: Complex64::ZERO,
            bound: 0.0,
            scale: 0.0,
        }
    }

    fn push(&mut self, v: Complex64, e: f64) {
        self.value += v;
        self.bound += e;
        self.scale += v.norm();
    }
}

/// int_lo^hi g(x) |x - point|^beta dx for a singular point on or outside the
/// closed interval. Returns the best estimate and an error bound.
fn segment_weighted(
    g: &dyn Fn(f64) -> Complex64,
    lo: f64,
    hi: f64,
    point: f64,
    beta: f64,
    cfg: &QuadConfig,
) -> (Complex64, f64) {
    if hi <= lo {
        return (Complex64::ZERO, 0.0);
    }
    if point <= lo {
        if point == lo {
            let w = SingularWeight {
                a: lo,
                b: hi,
                exponent_left: beta,
                exponent_right: 0.0,
            };
            integrate_singular_1d_lenient(g, &w, cfg)
        } else {
            adaptive_1d_lenient(|x| g(x) * (x - point).powf(beta), lo, hi, &[], cfg)
        }
    } else if point >= hi {
        if point == hi {
            let w = SingularWeight {
                a: lo,
                b: hi,
                exponent_left: 0.0,
                exponent_right: beta,
            };
            integrate_singular_1d_lenient(g, &w, cfg)
        } else {
            adaptive_1d_lenient(|x| g(x) * (point - x).powf(beta), lo, hi, &[], cfg)
        }
    } else {
        // Interior singular point: split.
        let (l, el) = segment_weighted(g, lo, point, point, beta, cfg);
        let (r, er) = segment_weighted(g, point, hi, point, beta, cfg);
        (l + r, el + er)
    }
}

/// int over [a,b] of f(t) |t - s0|^beta sgn(t - s0) dt.
fn signed_kernel_int(
    f: &dyn Fn(f64) -> Complex64,
    a: f64,
    b: f64,
    s0: f64,
    beta: f64,
    cfg: &QuadConfig,
) -> (Complex64, f64) {
    let mut value = Complex64::ZERO;
    let mut bound = 0.0;
    // t > s0 contributes with positive sign.
    let lo_pos = a.max(s0);
    if b > lo_pos {
        let (v, e) = segment_weighted(f, lo_pos, b, s0, beta, cfg);
        value += v;
        bound += e;
    }
    // t < s0 contributes with negative sign.
    let hi_neg = b.min(s0);
    if hi_neg > a {
        let (v, e) = segment_weighted(f, a, hi_neg, s0, beta, cfg);
        value -= v;
        bound += e;
    }
    (value, bound)
}

/// Inner product in the RKHS of fBm, conjugate-linear in `g`, with the
/// default quadrature tolerances.
pub fn inner_product(
    f: &PiecewiseSmoothFn,
    g: &PiecewiseSmoothFn,
    h: HurstParam,
) -> Result<Complex64> {
    inner_product_with(f, g, h, &QuadConfig::default())
}

/// Inner product with explicit quadrature configuration.
pub fn inner_product_with(
    f: &PiecewiseSmoothFn,
    g: &PiecewiseSmoothFn,
    h: HurstParam,
    cfg: &QuadConfig,
) -> Result<Complex64> {
    let mut acc = Accum::new();
    match h.regime() {
        HurstRegime::Half => l2_inner(f, g, cfg, &mut acc),
        HurstRegime::Low | HurstRegime::Mid => rough_inner(f, g, h, cfg, &mut acc),
        HurstRegime::High => smooth_inner(f, g, h, cfg, &mut acc),
    }
    let tol = cfg.atol.max(cfg.rtol * acc.scale.max(acc.value.norm()));
    if acc.bound > 16.0 * tol {
        return Err(CfouError::Accuracy {
            best: acc.value,
            bound: acc.bound,
            context: "rkhs inner_product".into(),
        });
    }
    Ok(acc.value)
}

/// H = 1/2: plain L^2 pairing over overlapping pieces.
fn l2_inner(f: &PiecewiseSmoothFn, g: &PiecewiseSmoothFn, cfg: &QuadConfig, acc: &mut Accum) {
    for fp in f.pieces() {
        for gp in g.pieces() {
            let lo = fp.a.max(gp.a);
            let hi = fp.b.min(gp.b);
            if hi > lo {
                let (v, e) =
                    adaptive_1d_lenient(|u| fp.eval(u) * gp.eval(u).conj(), lo, hi, &[], cfg);
                acc.push(v, e);
            }
        }
    }
}

/// H < 1/2: H int f(t) |t-s|^{2H-1} sgn(t-s) dt against conj(nu_g)(ds).
fn rough_inner(
    f: &PiecewiseSmoothFn,
    g: &PiecewiseSmoothFn,
    h: HurstParam,
    cfg: &QuadConfig,
    acc: &mut Accum,
) {
    let beta = 2.0 * h.value() - 1.0;
    let hv = h.value();
    let nu = bv_measure(g).conj();
    let inner_cfg = cfg.inner();

    for fp in f.pieces() {
        let feval = |t: f64| fp.eval(t);
        for atom in &nu.atoms {
            let (v, e) = signed_kernel_int(&feval, fp.a, fp.b, atom.location, beta, cfg);
            acc.push(atom.mass * v * hv, atom.mass.norm() * e * hv);
        }
        for dp in &nu.density {
            // Outer integral over t with the inner s-integral as integrand.
            let inner_slop = std::cell::Cell::new(0.0f64);
            let outer = |t: f64| {
                let weval = |s: f64| dp.eval(s);
                // As a function of s the kernel carries sgn(t-s): s < t
                // pairs with +, s > t with -, the mirror of signed_kernel_int.
                let mut v = Complex64::ZERO;
                let mut e = 0.0;
                let hi_pos = dp.b.min(t);
                if hi_pos > dp.a {
                    let (vv, ee) = segment_weighted(&weval, dp.a, hi_pos, t, beta, &inner_cfg);
                    v += vv;
                    e += ee;
                }
                let lo_neg = dp.a.max(t);
                if dp.b > lo_neg {
                    let (vv, ee) = segment_weighted(&weval, lo_neg, dp.b, t, beta, &inner_cfg);
                    v -= vv;
                    e += ee;
                }
                let rel = e / (v.norm() + 1e-300);
                if rel > inner_slop.get() {
                    inner_slop.set(rel);
                }
                fp.eval(t) * v
            };
            let splits = [dp.a, dp.b];
            let (v, e) = adaptive_1d_lenient(outer, fp.a, fp.b, &splits, cfg);
            acc.push(v * hv, hv * (e + inner_slop.get() * v.norm()));
        }
    }
}

/// H > 1/2: H(2H-1) double integral of f(t) conj(g(s)) |t-s|^{2H-2}.
fn smooth_inner(
    f: &PiecewiseSmoothFn,
    g: &PiecewiseSmoothFn,
    h: HurstParam,
    cfg: &QuadConfig,
    acc: &mut Accum,
) {
    let hv = h.value();
    let beta = 2.0 * hv - 2.0;
    let pref = hv * (2.0 * hv - 1.0);
    let inner_cfg = cfg.inner();
    for fp in f.pieces() {
        for gp in g.pieces() {
            let inner_slop = std::cell::Cell::new(0.0f64);
            let outer = |t: f64| {
                let geval = |s: f64| gp.eval(s).conj();
                let (v, e) = segment_weighted(&geval, gp.a, gp.b, t, beta, &inner_cfg);
                let rel = e / (v.norm() + 1e-300);
                if rel > inner_slop.get() {
                    inner_slop.set(rel);
                }
                fp.eval(t) * v
            };
            let splits = [gp.a, gp.b];
            let (v, e) = adaptive_1d_lenient(outer, fp.a, fp.b, &splits, cfg);
            acc.push(v * pref, pref.abs() * (e + inner_slop.get() * v.norm()));
        }
    }
}

// ---------------------------------------------------------------------------
// Grid Gram oracle
// ---------------------------------------------------------------------------

/// Brute-force oracle: project f and g onto step functions on an n-cell grid
/// covering their supports (midpoint evaluation) and pair the coefficient
/// vectors through the fBm increment-covariance Gram matrix.
pub fn grid_gram_inner(
    f: &PiecewiseSmoothFn,
    g: &PiecewiseSmoothFn,
    h: HurstParam,
    n: usize,
) -> Result<Complex64> {
    if n < 8 {
        return Err(CfouError::Domain(format!(
            "grid_gram_inner needs n >= 8, got {n}"
        )));
    }
    let t_end = f.support_end().max(g.support_end());
    if !(t_end > 0.0) {
        return Err(CfouError::Domain("empty supports".into()));
    }
    let dt = t_end / n as f64;
    let vf: Vec<Complex64> = (0..n).map(|i| f.eval((i as f64 + 0.5) * dt)).collect();
    let vg: Vec<Complex64> = (0..n).map(|i| g.eval((i as f64 + 0.5) * dt)).collect();
    let row: Vec<f64> = (0..n).map(|k| increment_autocovariance(h, dt, k)).collect();

    let mut total = Complex64::ZERO;
    for (i, &fi) in vf.iter().enumerate() {
        if fi.norm() == 0.0 {
            continue;
        }
        let mut s = Complex64::ZERO;
        for (j, &gj) in vg.iter().enumerate() {
            s += gj.conj() * row[i.abs_diff(j)];
        }
        total += fi * s;
    }
    Ok(total)
}
