//! Exact synthesis of real and complex fractional Brownian motion on
//! uniform grids, via circulant embedding of the increment autocovariance
//! with a dense-factorization fallback.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{CfouError, Result};

/// Default tolerance below which negative circulant eigenvalues are clipped.
pub const EIGEN_TOL: f64 = 1e-12;

/// Hurst regime, split at the thresholds where the estimator theory changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HurstRegime {
    /// (0, 1/4]: the estimator kernels fall outside the tensor space.
    Low,
    /// (1/4, 1/2): rough paths, new inner-product formula applies.
    Mid,
    /// exactly 1/2: standard Brownian motion.
    Half,
    /// (1/2, 1): long memory, classical inner-product formula.
    High,
}

/// Hurst parameter H in (0,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(CfouError::Domain(format!(
                "Hurst parameter must lie in (0,1), got {h}"
            )));
        }
        Ok(HurstParam(h))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn regime(self) -> HurstRegime {
        let h = self.0;
        if h == 0.5 {
            HurstRegime::Half
        } else if h <= 0.25 {
            HurstRegime::Low
        } else if h < 0.5 {
            HurstRegime::Mid
        } else {
            HurstRegime::High
        }
    }
}

/// Uniform sampling grid t_k = k * t_end / n, k = 0..=n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    t_end: f64,
    n: usize,
}

impl UniformGrid {
    pub fn new(t_end: f64, n: usize) -> Result<Self> {
        if !(t_end > 0.0) {
            return Err(CfouError::Domain(format!(
                "grid horizon must be positive, got {t_end}"
            )));
        }
        if n < 2 {
            return Err(CfouError::Domain(format!(
                "grid needs at least 2 steps, got {n}"
            )));
        }
        Ok(UniformGrid { t_end, n })
    }

    pub fn t_end(self) -> f64 {
        self.t_end
    }

    /// Number of steps (the grid has n+1 nodes).
    pub fn n_steps(self) -> usize {
        self.n
    }

    pub fn dt(self) -> f64 {
        self.t_end / self.n as f64
    }

    pub fn node(self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

/// Deterministic generator seed: a base key plus a stream counter, so that
/// Monte-Carlo replications own disjoint substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed {
    pub base: u64,
    pub stream: u64,
}

impl Seed {
    pub fn new(base: u64, stream: u64) -> Self {
        Seed { base, stream }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Seed {
            base: self.base,
            stream,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha generator keyed by the base seed, with the stream id mapped to the
/// ChaCha stream so (base, stream) -> state is injective.
fn rng_for(seed: Seed) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    let mut state = seed.base;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(seed.stream);
    rng
}

/// Standard normal variates by the Marsaglia polar method (fixed per build
/// so seeded runs are bit-reproducible).
struct NormalSource<R: Rng> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> NormalSource<R> {
    fn new(rng: R) -> Self {
        NormalSource { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.rng.random::<f64>() - 1.0;
            let v = 2.0 * self.rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }
}

/// Real-valued path on a uniform grid; values[0] = 0.
#[derive(Debug, Clone)]
pub struct RealPath {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
}

/// Complex-valued path on a uniform grid; values[0] = 0.
#[derive(Debug, Clone)]
pub struct ComplexPath {
    pub grid: UniformGrid,
    pub values: Vec<Complex64>,
}

impl ComplexPath {
    /// Increments values[k+1] - values[k].
    pub fn increments(&self) -> Vec<Complex64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Restriction to every other node (n must be even). The restriction of
    /// an fBm sample to a coarser grid is again an exact sample.
    pub fn coarsen(&self) -> Result<ComplexPath> {
        let n = self.grid.n_steps();
        if n % 2 != 0 {
            return Err(CfouError::Domain("coarsen needs an even step count".into()));
        }
        let grid = UniformGrid::new(self.grid.t_end(), n / 2)?;
        let values = self.values.iter().copied().step_by(2).collect();
        Ok(ComplexPath { grid, values })
    }
}

/// Covariance of fBm: R(s,t) = (s^{2H} + t^{2H} - |s-t|^{2H}) / 2.
pub fn fbm_covariance(s: f64, t: f64, h: HurstParam) -> Result<f64> {
    if s < 0.0 || t < 0.0 {
        return Err(CfouError::Domain(format!(
            "fbm_covariance needs nonnegative times, got ({s}, {t})"
        )));
    }
    let hh = 2.0 * h.value();
    Ok(0.5 * (s.powf(hh) + t.powf(hh) - (s - t).abs().powf(hh)))
}

/// Autocovariance of fBm increments at lag k on a grid of spacing dt:
/// Cov(B_{t+dt}-B_t, B_{t+(k+1)dt}-B_{t+k dt}).
pub fn increment_autocovariance(h: HurstParam, dt: f64, k: usize) -> f64 {
    let hh = 2.0 * h.value();
    let k = k as f64;
    0.5 * dt.powf(hh) * ((k + 1.0).powf(hh) - 2.0 * k.powf(hh) + (k - 1.0).abs().powf(hh))
}

/// Reusable fractional Gaussian noise generator for a fixed (H, grid).
///
/// The circulant embedding of the increment autocovariance is diagonalized
/// once by FFT; each sample then costs one FFT. If the embedding spectrum
/// has an eigenvalue below -EIGEN_TOL the sampler falls back to a dense
/// Cholesky factorization of the increment covariance (when allowed).
pub struct FbmSampler {
    h: HurstParam,
    grid: UniformGrid,
    sqrt_eig: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    dense: Option<DMatrix<f64>>,
}

/// Largest n for which the dense fallback is attempted (n x n factorization).
const DENSE_FALLBACK_MAX_N: usize = 4096;

impl FbmSampler {
    pub fn new(h: HurstParam, grid: UniformGrid) -> Result<Self> {
        Self::with_options(h, grid, EIGEN_TOL, true)
    }

    pub fn with_options(
        h: HurstParam,
        grid: UniformGrid,
        eigen_tol: f64,
        allow_dense_fallback: bool,
    ) -> Result<Self> {
        let n = grid.n_steps();
        let m = 2 * n;
        let dt = grid.dt();

        // First row of the circulant embedding: c_0 .. c_n, c_{n-1} .. c_1.
        let mut row: Vec<Complex64> = Vec::with_capacity(m);
        for k in 0..=n {
            row.push(Complex64::new(increment_autocovariance(h, dt, k), 0.0));
        }
        for k in (1..n).rev() {
            row.push(Complex64::new(increment_autocovariance(h, dt, k), 0.0));
        }

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        let mut spectrum = row;
        fft.process(&mut spectrum);

        let min_eig = spectrum.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if min_eig < -eigen_tol {
            if !allow_dense_fallback {
                return Err(CfouError::Synthesis(format!(
                    "circulant eigenvalue {min_eig} below -{eigen_tol} and fallback disabled"
                )));
            }
            if n > DENSE_FALLBACK_MAX_N {
                return Err(CfouError::Synthesis(format!(
                    "dense fallback needed but n = {n} exceeds {DENSE_FALLBACK_MAX_N}"
                )));
            }
            let dense = dense_increment_factor(h, grid)?;
            return Ok(FbmSampler {
                h,
                grid,
                sqrt_eig: Vec::new(),
                fft,
                dense: Some(dense),
            });
        }

        let sqrt_eig = spectrum.iter().map(|z| z.re.max(0.0).sqrt()).collect();
        Ok(FbmSampler {
            h,
            grid,
            sqrt_eig,
            fft,
            dense: None,
        })
    }

    pub fn hurst(&self) -> HurstParam {
        self.h
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    /// Draw one exact-in-distribution fBm path started at zero.
    pub fn sample(&self, seed: Seed) -> RealPath {
        let mut normals = NormalSource::new(rng_for(seed));
        let increments = match &self.dense {
            Some(l) => self.sample_increments_dense(l, &mut normals),
            None => self.sample_increments_circulant(&mut normals),
        };
        let mut values = Vec::with_capacity(self.grid.n_steps() + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for dx in increments {
            acc += dx;
            values.push(acc);
        }
        RealPath {
            grid: self.grid,
            values,
        }
    }

    fn sample_increments_circulant<R: Rng>(&self, normals: &mut NormalSource<R>) -> Vec<f64> {
        let n = self.grid.n_steps();
        let m = 2 * n;
        let mf = m as f64;
        let mut w = vec![Complex64::ZERO; m];
        w[0] = Complex64::new(self.sqrt_eig[0] / mf.sqrt() * normals.next(), 0.0);
        w[n] = Complex64::new(self.sqrt_eig[n] / mf.sqrt() * normals.next(), 0.0);
        for j in 1..n {
            let a = normals.next();
            let b = normals.next();
            let s = self.sqrt_eig[j] / (2.0 * mf).sqrt();
            w[j] = Complex64::new(s * a, s * b);
            w[m - j] = w[j].conj();
        }
        self.fft.process(&mut w);
        w.truncate(n);
        w.into_iter().map(|z| z.re).collect()
    }

    fn sample_increments_dense<R: Rng>(
        &self,
        l: &DMatrix<f64>,
        normals: &mut NormalSource<R>,
    ) -> Vec<f64> {
        let n = self.grid.n_steps();
        let z: Vec<f64> = (0..n).map(|_| normals.next()).collect();
        let mut out = vec![0.0; n];
        // L is lower triangular.
        for i in 0..n {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += l[(i, j)] * zj;
            }
            out[i] = acc;
        }
        out
    }
}

/// Cholesky factor of the increment covariance matrix, with an escalating
/// diagonal shift up to `max_shift` to absorb roundoff.
pub fn dense_increment_factor(h: HurstParam, grid: UniformGrid) -> Result<DMatrix<f64>> {
    let n = grid.n_steps();
    let dt = grid.dt();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        increment_autocovariance(h, dt, i.abs_diff(j))
    });
    cholesky_with_shift(cov, 1e-10)
}

/// Cholesky with diagonal shifts 0, 1e-14, 1e-12, ... up to max_shift.
pub fn cholesky_with_shift(cov: DMatrix<f64>, max_shift: f64) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let mut shift = 0.0f64;
    loop {
        let mut shifted = cov.clone();
        for i in 0..n {
            shifted[(i, i)] += shift;
        }
        if let Some(chol) = shifted.cholesky() {
            return Ok(chol.l());
        }
        shift = if shift == 0.0 { 1e-14 } else { shift * 100.0 };
        if shift > max_shift {
            return Err(CfouError::Synthesis(format!(
                "covariance not positive semidefinite within shift {max_shift}"
            )));
        }
    }
}

/// One-shot sample of an fBm path (builds the sampler internally).
pub fn sample_fbm_path(h: HurstParam, grid: UniformGrid, seed: Seed) -> Result<RealPath> {
    Ok(FbmSampler::new(h, grid)?.sample(seed))
}

/// Reusable sampler for the complex fBm (B^1 + i B^2)/sqrt(2) with B^1, B^2
/// independent fBms drawn from sub-streams 2*stream and 2*stream + 1.
pub struct ComplexFbmSampler {
    inner: FbmSampler,
}

impl ComplexFbmSampler {
    pub fn new(h: HurstParam, grid: UniformGrid) -> Result<Self> {
        Ok(ComplexFbmSampler {
            inner: FbmSampler::new(h, grid)?,
        })
    }

    pub fn grid(&self) -> UniformGrid {
        self.inner.grid()
    }

    pub fn sample(&self, seed: Seed) -> ComplexPath {
        let b1 = self.inner.sample(seed.with_stream(2 * seed.stream));
        let b2 = self.inner.sample(seed.with_stream(2 * seed.stream + 1));
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let values = b1
            .values
            .iter()
            .zip(&b2.values)
            .map(|(&x, &y)| Complex64::new(x * inv_sqrt2, y * inv_sqrt2))
            .collect();
        ComplexPath {
            grid: self.inner.grid(),
            values,
        }
    }
}

/// One-shot sample of a complex fBm path.
pub fn sample_complex_fbm(h: HurstParam, grid: UniformGrid, seed: Seed) -> Result<ComplexPath> {
    Ok(ComplexFbmSampler::new(h, grid)?.sample(seed))
}
