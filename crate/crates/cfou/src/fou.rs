//! Simulation of the complex fractional Ornstein-Uhlenbeck process
//! dZ = -gamma Z dt + d zeta, Z_0 = 0, and its ergodic statistics.

use num_complex::Complex64;
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{CfouError, Result};
use crate::fbm::{sample_complex_fbm, ComplexPath, HurstParam, Seed, UniformGrid};

/// Complex drift gamma = lambda - i omega with lambda > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftParam {
    lambda: f64,
    omega: f64,
}

impl DriftParam {
    pub fn new(lambda: f64, omega: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(CfouError::Domain(format!(
                "drift needs lambda > 0, got {lambda}"
            )));
        }
        Ok(DriftParam { lambda, omega })
    }

    pub fn lambda(self) -> f64 {
        self.lambda
    }

    pub fn omega(self) -> f64 {
        self.omega
    }

    pub fn gamma(self) -> Complex64 {
        Complex64::new(self.lambda, -self.omega)
    }

    pub fn gamma_conj(self) -> Complex64 {
        Complex64::new(self.lambda, self.omega)
    }
}

/// Exponential-Euler solution driven by a given noise path:
/// Z_{k+1} = e^{-gamma dt} (Z_k + d zeta_k), the exact rewriting of the
/// left-point discretization of the variation-of-constants integral.
pub fn simulate_fou_from_driver(gamma: DriftParam, zeta: &ComplexPath) -> ComplexPath {
    let n = zeta.grid.n_steps();
    let decay = (-gamma.gamma() * zeta.grid.dt()).exp();
    let mut values = Vec::with_capacity(n + 1);
    let mut z = Complex64::ZERO;
    values.push(z);
    for k in 0..n {
        let dzeta = zeta.values[k + 1] - zeta.values[k];
        z = decay * (z + dzeta);
        values.push(z);
    }
    ComplexPath {
        grid: zeta.grid,
        values,
    }
}

/// Simulate the process from a seed; the driver is the complex fBm drawn
/// from the same seed.
pub fn simulate_fou(
    gamma: DriftParam,
    h: HurstParam,
    grid: UniformGrid,
    seed: Seed,
) -> Result<ComplexPath> {
    let zeta = sample_complex_fbm(h, grid, seed)?;
    Ok(simulate_fou_from_driver(gamma, &zeta))
}

/// Trapezoidal time average (1/T) int_0^T |Z_t|^2 dt.
pub fn ergodic_average(z: &ComplexPath) -> f64 {
    let n = z.grid.n_steps();
    let dt = z.grid.dt();
    let mut acc = 0.5 * (z.values[0].norm_sqr() + z.values[n].norm_sqr());
    for v in &z.values[1..n] {
        acc += v.norm_sqr();
    }
    acc * dt / z.grid.t_end()
}

/// Stationary second moment H Gamma(2H) (1/2 lambda) (conj(gamma)^{1-2H} + gamma^{1-2H}),
/// the almost-sure limit of the ergodic average.
pub fn stationary_variance(gamma: DriftParam, h: HurstParam) -> f64 {
    let hv = h.value();
    let p = 1.0 - 2.0 * hv;
    let sum = gamma.gamma().powf(p) + gamma.gamma_conj().powf(p);
    debug_assert!(sum.im.abs() < 1e-12 * (1.0 + sum.re.abs()));
    hv * gamma_fn(2.0 * hv) / (2.0 * gamma.lambda()) * sum.re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::ComplexFbmSampler;
    use approx::assert_abs_diff_eq;

    fn h(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn drift_requires_positive_lambda() {
        assert!(DriftParam::new(0.0, 1.0).is_err());
        assert!(DriftParam::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn starts_at_zero() {
        let grid = UniformGrid::new(1.0, 64).unwrap();
        let g = DriftParam::new(1.0, 1.0).unwrap();
        let z = simulate_fou(g, h(0.35), grid, Seed::new(1, 0)).unwrap();
        assert_eq!(z.values[0], Complex64::ZERO);
    }

    #[test]
    fn linear_in_the_driver() {
        let grid = UniformGrid::new(2.0, 128).unwrap();
        let g = DriftParam::new(1.0, -0.5).unwrap();
        let zeta = sample_complex_fbm(h(0.35), grid, Seed::new(9, 4)).unwrap();
        let mut neg = zeta.clone();
        for v in &mut neg.values {
            *v = -*v;
        }
        let z = simulate_fou_from_driver(g, &zeta);
        let zn = simulate_fou_from_driver(g, &neg);
        for (a, b) in z.values.iter().zip(&zn.values) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn ergodic_average_calibration() {
        let grid = UniformGrid::new(4.0, 256).unwrap();
        let zero = ComplexPath {
            grid,
            values: vec![Complex64::ZERO; 257],
        };
        assert_eq!(ergodic_average(&zero), 0.0);

        // Constant-modulus synthetic path |Z| = c gives c^2.
        let c = 1.7;
        let path = ComplexPath {
            grid,
            values: (0..=256)
                .map(|k| Complex64::from_polar(c, 0.01 * k as f64))
                .collect(),
        };
        assert_abs_diff_eq!(ergodic_average(&path), c * c, epsilon = 1e-12);
    }

    #[test]
    fn stationary_variance_values() {
        // H = 1/2, real gamma: classical OU variance 1/(2 lambda).
        let g = DriftParam::new(1.0, 0.0).unwrap();
        assert_abs_diff_eq!(stationary_variance(g, h(0.5)), 0.5, epsilon = 1e-14);

        // Complex drift: value is real and positive.
        let g = DriftParam::new(1.0, 1.0).unwrap();
        let v = stationary_variance(g, h(0.35));
        assert!(v > 0.0);
    }

    #[test]
    fn brownian_case_stationary_moment() {
        // MC mean of |Z_T|^2 at H = 1/2, T = 50 vs 1/(2 lambda) = 1/2.
        let g = DriftParam::new(1.0, 0.0).unwrap();
        let grid = UniformGrid::new(50.0, 1 << 12).unwrap();
        let sampler = ComplexFbmSampler::new(h(0.5), grid).unwrap();
        let n_reps = 2000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for rep in 0..n_reps {
            let zeta = sampler.sample(Seed::new(33, rep));
            let z = simulate_fou_from_driver(g, &zeta);
            let v = z.values[grid.n_steps()].norm_sqr();
            acc += v;
            acc2 += v * v;
        }
        let mean = acc / n_reps as f64;
        let var = (acc2 / n_reps as f64 - mean * mean).max(0.0);
        let se = (var / n_reps as f64).sqrt();
        assert!(
            (mean - 0.5).abs() < 3.0 * se + 0.01,
            "mean |Z_T|^2 = {mean}, se = {se}"
        );
    }

    #[test]
    fn ergodic_average_approaches_stationary_variance() {
        // Single long path at H = 0.35 within 10% of the closed form.
        let g = DriftParam::new(1.0, 1.0).unwrap();
        let grid = UniformGrid::new(200.0, 1 << 14).unwrap();
        let z = simulate_fou(g, h(0.35), grid, Seed::new(77, 0)).unwrap();
        let avg = ergodic_average(&z);
        let target = stationary_variance(g, h(0.35));
        assert!(
            (avg - target).abs() < 0.10 * target,
            "ergodic average {avg} vs stationary {target}"
        );
    }

    #[test]
    fn mc_time_average_matches_closed_form() {
        // MC mean over 500 reps of (1/T) int |Z|^2 within 5% at H = 0.35.
        let g = DriftParam::new(1.0, 1.0).unwrap();
        let grid = UniformGrid::new(50.0, 1 << 12).unwrap();
        let sampler = ComplexFbmSampler::new(h(0.35), grid).unwrap();
        let n_reps = 500;
        let mut acc = 0.0;
        for rep in 0..n_reps {
            let z = simulate_fou_from_driver(g, &sampler.sample(Seed::new(101, rep)));
            acc += ergodic_average(&z);
        }
        let mean = acc / n_reps as f64;
        let target = stationary_variance(g, h(0.35));
        assert!(
            (mean - target).abs() < 0.05 * target,
            "MC mean {mean} vs closed form {target}"
        );
    }

    #[test]
    fn discretization_consistency() {
        // |Z_T(n) - Z_T(2n)| shrinks with a positive empirical order when
        // the same fine driver is restricted to coarser grids.
        let g = DriftParam::new(1.0, 1.0).unwrap();
        let fine_grid = UniformGrid::new(10.0, 1 << 12).unwrap();
        let mut gaps: Vec<f64> = Vec::new();
        let mut acc = vec![0.0f64; 3];
        for rep in 0..8 {
            let fine = sample_complex_fbm(h(0.35), fine_grid, Seed::new(55, rep)).unwrap();
            let mid = fine.coarsen().unwrap();
            let coarse = mid.coarsen().unwrap();
            let coarser = coarse.coarsen().unwrap();
            let zf = simulate_fou_from_driver(g, &mid);
            let zc = simulate_fou_from_driver(g, &coarse);
            let zcc = simulate_fou_from_driver(g, &coarser);
            let last = |p: &ComplexPath| *p.values.last().unwrap();
            acc[0] += (last(&zcc) - last(&zc)).norm();
            acc[1] += (last(&zc) - last(&zf)).norm();
            let zfine = simulate_fou_from_driver(g, &fine);
            acc[2] += (last(&zf) - last(&zfine)).norm();
        }
        gaps.extend(acc.iter().map(|a| a / 8.0));
        // Log-log slope in n of the gaps (n doubles between entries).
        let slope = (gaps[0] / gaps[2]).ln() / (4.0f64).ln();
        assert!(
            slope > 0.2,
            "discretization order too weak: gaps {gaps:?}, slope {slope}"
        );
    }
}
