//! The least-squares drift estimator, its closed-form asymptotic constants,
//! and the Monte-Carlo consistency / normality harness.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{CfouError, Result};
use crate::fbm::{ComplexFbmSampler, HurstParam, Seed, UniformGrid};
use crate::fou::{simulate_fou_from_driver, DriftParam};
use crate::quad::kappa;

/// Forward-difference numerator and left-point denominator of one path.
fn lse_sums(z: &crate::fbm::ComplexPath) -> Result<(Complex64, f64)> {
    let n = z.grid.n_steps();
    if z.values.len() < 2 {
        return Err(CfouError::Domain("path needs at least 2 nodes".into()));
    }
    let dt = z.grid.dt();
    let mut num = Complex64::ZERO;
    let mut den = 0.0;
    for k in 0..n {
        num += z.values[k].conj() * (z.values[k + 1] - z.values[k]);
        den += z.values[k].norm_sqr();
    }
    den *= dt;
    if den <= f64::MIN_POSITIVE * n as f64 {
        return Err(CfouError::DegenerateDenominator(
            "sum |Z_k|^2 dt is zero".into(),
        ));
    }
    Ok((num, den))
}

/// Plain least-squares ratio from one observed path:
/// gamma_hat = -(sum conj(Z_k)(Z_{k+1}-Z_k)) / (sum |Z_k|^2 dt).
///
/// For H != 1/2 this pathwise sum realizes the forward (Young-type)
/// integral, which differs from the centered double Wiener-Ito integral of
/// the limit theory by a deterministic trace; see [`lse_gamma_centered`].
pub fn lse_gamma(z: &crate::fbm::ComplexPath) -> Result<Complex64> {
    let (num, den) = lse_sums(z)?;
    Ok(-num / den)
}

/// Expected value of sum conj(Z_k) dzeta_k under the exponential-Euler
/// scheme: sum_{m=1}^{n-1} (n - m) e^{-conj(gamma) m dt} c(m), with c the
/// fBm increment autocovariance. This is the exact discrete trace that
/// separates the pathwise forward sum from the centered chaos integral;
/// it vanishes identically at H = 1/2 and diverges like dt^{2H-1} for
/// H < 1/2, so it cannot be dropped on rough paths.
pub fn divergence_trace(gamma: DriftParam, h: HurstParam, grid: UniformGrid) -> Complex64 {
    let n = grid.n_steps();
    let dt = grid.dt();
    let decay = (-gamma.gamma_conj() * dt).exp();
    let mut pow = Complex64::ONE;
    let mut trace = Complex64::ZERO;
    for m in 1..n {
        pow *= decay;
        let c = crate::fbm::increment_autocovariance(h, dt, m);
        if c != 0.0 {
            trace += Complex64::new((n - m) as f64, 0.0) * pow * c;
        }
    }
    trace
}

/// Least-squares estimate with the numerator recentred onto the double
/// Wiener-Ito integral of the limit theory: the deterministic trace of the
/// forward sum is subtracted before forming the ratio. The drift and Hurst
/// parameters are known to the simulator, which is what the trace needs.
/// Coincides with [`lse_gamma`] at H = 1/2.
pub fn lse_gamma_centered(
    z: &crate::fbm::ComplexPath,
    gamma: DriftParam,
    h: HurstParam,
) -> Result<Complex64> {
    let (num, den) = lse_sums(z)?;
    let decay = (-gamma.gamma() * z.grid.dt()).exp();
    let corrected = num - decay * divergence_trace(gamma, h, z.grid);
    Ok(-corrected / den)
}

/// Closed-form constants of the estimator's bivariate limit law.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceSummary {
    pub sigma2: f64,
    pub c: f64,
    pub b: f64,
    pub d: f64,
    pub kappa: f64,
    /// Alias of sigma2 (the tensor-norm drift coefficient).
    pub m_h2: f64,
    /// Alias of c + i b (the tensor-inner drift coefficient).
    pub n_h: Complex64,
    /// [[sigma2+c, b], [b, sigma2-c]].
    pub matrix_c: [[f64; 2]; 2],
    /// matrix_c / d^2.
    pub limit_cov: [[f64; 2]; 2],
}

impl CovarianceSummary {
    /// matrix_c / (2 d^2), the alternative normalization carried by the
    /// fourth-moment theorem's moment algebra.
    pub fn limit_cov_half(&self) -> [[f64; 2]; 2] {
        let m = self.limit_cov;
        [
            [0.5 * m[0][0], 0.5 * m[0][1]],
            [0.5 * m[1][0], 0.5 * m[1][1]],
        ]
    }
}

/// sigma^2, c + ib, d (and kappa, M_H^2, N_H) for H in (1/4, 3/4); the
/// Gamma factors pole at exactly 1/4 and 3/4.
pub fn asymptotic_constants(gamma: DriftParam, h: HurstParam) -> Result<CovarianceSummary> {
    let hv = h.value();
    const POLE_EPS: f64 = 1e-9;
    if !(hv > 0.25 && hv < 0.75) || (hv - 0.25).abs() < POLE_EPS || (hv - 0.75).abs() < POLE_EPS {
        return Err(CfouError::Domain(format!(
            "asymptotic constants need H in (1/4, 3/4) away from the poles, got {hv}"
        )));
    }
    let g = gamma.gamma();
    let gc = gamma.gamma_conj();
    let lambda = gamma.lambda();

    let factor = 1.0 + gamma_fn(3.0 - 4.0 * hv) * gamma_fn(4.0 * hv - 1.0)
        / (gamma_fn(2.0 * hv) * gamma_fn(2.0 - 2.0 * hv));

    let s_sum = g.powf(2.0 - 4.0 * hv) + gc.powf(2.0 - 4.0 * hv);
    debug_assert!(s_sum.im.abs() < 1e-12 * (1.0 + s_sum.re.abs()));
    let sigma2 = s_sum.re / (2.0 * lambda) * factor;

    let cb = gc.powf(1.0 - 4.0 * hv) * (4.0 * hv - 2.0) * factor;

    let d_sum = g.powf(1.0 - 2.0 * hv) + gc.powf(1.0 - 2.0 * hv);
    debug_assert!(d_sum.im.abs() < 1e-12 * (1.0 + d_sum.re.abs()));
    let d = d_sum.re / (2.0 * lambda);

    let (c, b) = (cb.re, cb.im);
    let matrix_c = [[sigma2 + c, b], [b, sigma2 - c]];
    let d2 = d * d;
    let limit_cov = [
        [matrix_c[0][0] / d2, matrix_c[0][1] / d2],
        [matrix_c[1][0] / d2, matrix_c[1][1] / d2],
    ];
    Ok(CovarianceSummary {
        sigma2,
        c,
        b,
        d,
        kappa: kappa(h),
        m_h2: sigma2,
        n_h: cb,
        matrix_c,
        limit_cov,
    })
}

/// Output of one Monte-Carlo experiment.
#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub n_reps: usize,
    /// Largest horizon of the sweep; normality statistics refer to it.
    pub t_end: f64,
    pub n_steps: usize,
    pub hurst: f64,
    pub gamma_lambda: f64,
    pub gamma_omega: f64,
    pub seed_base: u64,
    /// Estimates at the largest horizon, one per replication.
    pub estimates: Vec<Complex64>,
    /// sqrt(T)(gamma_hat - gamma) at the largest horizon.
    pub scaled_errors: Vec<Complex64>,
    /// Second-moment matrix of the scaled errors.
    pub empirical_cov: [[f64; 2]; 2],
    /// matrix_c / d^2 from the closed-form constants (no 1/2).
    pub target_cov: [[f64; 2]; 2],
    /// (T, mean |gamma_hat - gamma|) for each horizon of the sweep.
    pub consistency_curve: Vec<(f64, f64)>,
}

/// Per-replication record emitted to CSV.
#[derive(Debug, Clone, Copy)]
pub struct McRow {
    pub rep: usize,
    pub t_end: f64,
    pub gamma_hat: Complex64,
    pub scaled_err: Complex64,
}

/// Simulate `n_reps` independent paths per horizon, estimate gamma on each,
/// and collect the consistency curve plus the scaled-error covariance at the
/// largest horizon. Replication r at horizon index i uses stream
/// i * n_reps + r, so all replications are disjoint.
pub fn run_mc_experiment(
    gamma: DriftParam,
    h: HurstParam,
    t_list: &[f64],
    n_steps: usize,
    n_reps: usize,
    seed: Seed,
) -> Result<(McReport, Vec<McRow>)> {
    if t_list.is_empty() {
        return Err(CfouError::Validation("t_list must not be empty".into()));
    }
    if n_reps == 0 {
        return Err(CfouError::Validation("n_reps must be positive".into()));
    }
    let mut t_sorted = t_list.to_vec();
    t_sorted.sort_by(f64::total_cmp);

    let mut consistency_curve = Vec::with_capacity(t_sorted.len());
    let mut rows: Vec<McRow> = Vec::with_capacity(t_sorted.len() * n_reps);
    let mut last_estimates: Vec<Complex64> = Vec::new();

    for (ti, &t_end) in t_sorted.iter().enumerate() {
        let grid = UniformGrid::new(t_end, n_steps)?;
        let sampler = ComplexFbmSampler::new(h, grid)?;
        let estimates: Vec<Complex64> = (0..n_reps)
            .into_par_iter()
            .map(|rep| {
                let stream = (ti * n_reps + rep) as u64;
                let zeta = sampler.sample(seed.with_stream(stream));
                let z = simulate_fou_from_driver(gamma, &zeta);
                lse_gamma_centered(&z, gamma, h).expect("nondegenerate simulated path")
            })
            .collect();
        let mean_abs_err = estimates
            .iter()
            .map(|&g| (g - gamma.gamma()).norm())
            .sum::<f64>()
            / n_reps as f64;
        consistency_curve.push((t_end, mean_abs_err));
        let sqrt_t = t_end.sqrt();
        rows.extend(estimates.iter().enumerate().map(|(rep, &g)| McRow {
            rep,
            t_end,
            gamma_hat: g,
            scaled_err: (g - gamma.gamma()) * sqrt_t,
        }));
        last_estimates = estimates;
    }

    let t_last = *t_sorted.last().unwrap();
    let sqrt_t = t_last.sqrt();
    let scaled_errors: Vec<Complex64> = last_estimates
        .iter()
        .map(|&g| (g - gamma.gamma()) * sqrt_t)
        .collect();
    let empirical_cov = second_moment_matrix(&scaled_errors);
    let target_cov = asymptotic_constants(gamma, h)
        .map(|s| s.limit_cov)
        .unwrap_or([[f64::NAN; 2]; 2]);

    Ok((
        McReport {
            n_reps,
            t_end: t_last,
            n_steps,
            hurst: h.value(),
            gamma_lambda: gamma.lambda(),
            gamma_omega: gamma.omega(),
            seed_base: seed.base,
            estimates: last_estimates,
            scaled_errors,
            empirical_cov,
            target_cov,
            consistency_curve,
        },
        rows,
    ))
}

/// Second-moment matrix (about zero) of complex samples seen as R^2 vectors.
pub fn second_moment_matrix(samples: &[Complex64]) -> [[f64; 2]; 2] {
    let n = samples.len().max(1) as f64;
    let mut m = [[0.0; 2]; 2];
    for z in samples {
        m[0][0] += z.re * z.re;
        m[0][1] += z.re * z.im;
        m[1][1] += z.im * z.im;
    }
    m[0][0] /= n;
    m[0][1] /= n;
    m[1][1] /= n;
    m[1][0] = m[0][1];
    m
}

/// Relative Frobenius distance ||A - B||_F / ||B||_F.
pub fn frobenius_rel(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            num += (a[i][j] - b[i][j]).powi(2);
            den += b[i][j].powi(2);
        }
    }
    (num / den).sqrt()
}

/// Which normalization of the limit covariance fits the Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Normalization {
    /// C / d^2 as printed in the limit theorem.
    Full,
    /// C / (2 d^2) as carried by the fourth-moment theorem.
    Half,
}

/// Normality diagnostics of the scaled errors.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    /// Componentwise skewness of the whitened scaled errors.
    pub skewness: [f64; 2],
    /// Componentwise excess kurtosis of the whitened scaled errors.
    pub excess_kurtosis: [f64; 2],
    /// Mean squared Mahalanobis distance under target_cov (2 if exact).
    pub mahalanobis_mean: f64,
    /// Relative Frobenius distance of the empirical covariance to C/d^2.
    pub frob_rel_full: f64,
    /// Relative Frobenius distance of the empirical covariance to C/(2d^2).
    pub frob_rel_half: f64,
    pub better: Normalization,
}

/// Skewness, kurtosis and covariance fits of a Monte-Carlo report. The
/// covariance comparison is run against both candidate normalizations of
/// the limit matrix and the better fit is recorded.
pub fn normality_diagnostics(report: &McReport) -> Result<DiagnosticsReport> {
    let n = report.scaled_errors.len();
    if n < 200 {
        return Err(CfouError::Diagnostics(format!(
            "need at least 200 replications, got {n}"
        )));
    }
    let t = &report.target_cov;
    let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    if !(det > 0.0) || t[0][0] <= 0.0 {
        return Err(CfouError::Diagnostics(format!(
            "target covariance singular or indefinite (det {det})"
        )));
    }
    let inv = [
        [t[1][1] / det, -t[0][1] / det],
        [-t[1][0] / det, t[0][0] / det],
    ];

    // Whitening by the inverse symmetric square root of the target.
    let white = inv_sqrt_2x2(t)?;
    let whitened: Vec<(f64, f64)> = report
        .scaled_errors
        .iter()
        .map(|z| {
            (
                white[0][0] * z.re + white[0][1] * z.im,
                white[1][0] * z.re + white[1][1] * z.im,
            )
        })
        .collect();

    let mut skewness = [0.0; 2];
    let mut excess_kurtosis = [0.0; 2];
    for comp in 0..2 {
        let xs: Vec<f64> = whitened
            .iter()
            .map(|w| if comp == 0 { w.0 } else { w.1 })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        if var <= 1e-20 * (1.0 + mean * mean) {
            return Err(CfouError::Diagnostics("zero variance in component".into()));
        }
        let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n as f64;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
        skewness[comp] = m3 / var.powf(1.5);
        excess_kurtosis[comp] = m4 / (var * var) - 3.0;
    }

    let mahalanobis_mean = report
        .scaled_errors
        .iter()
        .map(|z| {
            let v = [z.re, z.im];
            let mut q = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    q += v[i] * inv[i][j] * v[j];
                }
            }
            q
        })
        .sum::<f64>()
        / n as f64;

    let half = [
        [0.5 * t[0][0], 0.5 * t[0][1]],
        [0.5 * t[1][0], 0.5 * t[1][1]],
    ];
    let frob_rel_full = frobenius_rel(&report.empirical_cov, t);
    let frob_rel_half = frobenius_rel(&report.empirical_cov, &half);
    let better = if frob_rel_half <= frob_rel_full {
        Normalization::Half
    } else {
        Normalization::Full
    };

    Ok(DiagnosticsReport {
        skewness,
        excess_kurtosis,
        mahalanobis_mean,
        frob_rel_full,
        frob_rel_half,
        better,
    })
}

/// Inverse symmetric square root of a 2x2 SPD matrix.
fn inv_sqrt_2x2(m: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let mat = nalgebra::Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
    let eig = nalgebra::SymmetricEigen::new(mat);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(CfouError::Diagnostics(
            "target covariance not positive definite".into(),
        ));
    }
    let d = nalgebra::Matrix2::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let w = eig.eigenvectors * d * eig.eigenvectors.transpose();
    Ok([[w[(0, 0)], w[(0, 1)]], [w[(1, 0)], w[(1, 1)]]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_complex_fbm, ComplexPath};
    use approx::assert_abs_diff_eq;

    fn h(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn zero_path_is_degenerate() {
        let grid = UniformGrid::new(1.0, 16).unwrap();
        let z = ComplexPath {
            grid,
            values: vec![Complex64::ZERO; 17],
        };
        assert!(matches!(
            lse_gamma(&z),
            Err(CfouError::DegenerateDenominator(_))
        ));
    }

    #[test]
    fn noiseless_decay_recovers_drift() {
        // Deterministic path Z_k = e^{-gamma t_k} z0: the estimate is
        // (1 - e^{-gamma dt})/dt = gamma (1 + O(dt)), halving error as n doubles.
        let gamma = DriftParam::new(1.0, -0.7).unwrap();
        let z0 = Complex64::new(0.4, 1.3);
        let mut errs = Vec::new();
        for n in [256usize, 512, 1024] {
            let grid = UniformGrid::new(4.0, n).unwrap();
            let values = (0..=n)
                .map(|k| (-gamma.gamma() * grid.node(k)).exp() * z0)
                .collect();
            let z = ComplexPath { grid, values };
            let est = lse_gamma(&z).unwrap();
            errs.push((est - gamma.gamma()).norm());
        }
        assert!(errs[1] < 0.6 * errs[0]);
        assert!(errs[2] < 0.6 * errs[1]);
        assert!(errs[2] < 0.01);
    }

    #[test]
    fn ratio_identity_is_exact() {
        // gamma_hat = (1 - e^{-gamma dt})/dt - e^{-gamma dt} S_zeta / S_den
        // exactly, with S_zeta = sum conj(Z_k) dzeta_k, S_den = sum |Z_k|^2 dt.
        let gamma = DriftParam::new(1.0, 1.0).unwrap();
        let grid = UniformGrid::new(10.0, 2048).unwrap();
        let zeta = sample_complex_fbm(h(0.35), grid, Seed::new(3, 9)).unwrap();
        let z = simulate_fou_from_driver(gamma, &zeta);
        let est = lse_gamma(&z).unwrap();

        let dt = grid.dt();
        let decay = (-gamma.gamma() * dt).exp();
        let mut s_zeta = Complex64::ZERO;
        let mut s_den = 0.0;
        for k in 0..grid.n_steps() {
            s_zeta += z.values[k].conj() * (zeta.values[k + 1] - zeta.values[k]);
            s_den += z.values[k].norm_sqr();
        }
        s_den *= dt;
        let reconstructed = (Complex64::ONE - decay) / dt - decay * s_zeta / s_den;
        assert!(
            (est - reconstructed).norm() <= 1e-10 * (1.0 + est.norm()),
            "estimate {est} vs identity {reconstructed}"
        );
    }

    #[test]
    fn centered_equals_raw_at_half_hurst() {
        // c(m) = 0 for m >= 1 at H = 1/2, so the trace vanishes identically.
        let gamma = DriftParam::new(1.0, 1.0).unwrap();
        let grid = UniformGrid::new(20.0, 1024).unwrap();
        assert_eq!(
            divergence_trace(gamma, h(0.5), grid),
            Complex64::ZERO
        );
        let zeta = sample_complex_fbm(h(0.5), grid, Seed::new(4, 2)).unwrap();
        let z = simulate_fou_from_driver(gamma, &zeta);
        let raw = lse_gamma(&z).unwrap();
        let centered = lse_gamma_centered(&z, gamma, h(0.5)).unwrap();
        assert!((raw - centered).norm() < 1e-14);
    }

    #[test]
    fn centered_ratio_identity_is_exact() {
        // gamma_hat_centered = (1 - e^{-gamma dt})/dt
        //   - e^{-gamma dt} (sum conj(Z_k) dzeta_k - trace) / sum |Z_k|^2 dt.
        let gamma = DriftParam::new(1.0, 1.0).unwrap();
        let grid = UniformGrid::new(10.0, 2048).unwrap();
        let zeta = sample_complex_fbm(h(0.35), grid, Seed::new(8, 5)).unwrap();
        let z = simulate_fou_from_driver(gamma, &zeta);
        let est = lse_gamma_centered(&z, gamma, h(0.35)).unwrap();

        let dt = grid.dt();
        let decay = (-gamma.gamma() * dt).exp();
        let mut s_zeta = Complex64::ZERO;
        let mut s_den = 0.0;
        for k in 0..grid.n_steps() {
            s_zeta += z.values[k].conj() * (zeta.values[k + 1] - zeta.values[k]);
            s_den += z.values[k].norm_sqr();
        }
        s_den *= dt;
        let centered_sum = s_zeta - divergence_trace(gamma, h(0.35), grid);
        let reconstructed = (Complex64::ONE - decay) / dt - decay * centered_sum / s_den;
        assert!(
            (est - reconstructed).norm() <= 1e-10 * (1.0 + est.norm()),
            "estimate {est} vs identity {reconstructed}"
        );
    }

    #[test]
    fn centered_estimator_mc_mean_near_gamma() {
        // MC mean of the centered estimate over 500 reps stays within
        // 3 s.e. + O(dt) discretization slack of gamma, componentwise.
        let gamma = DriftParam::new(1.0, 1.0).unwrap();
        let (report, _) = run_mc_experiment(
            gamma,
            h(0.35),
            &[100.0],
            1 << 14,
            500,
            Seed::new(7, 0),
        )
        .unwrap();
        let n = report.estimates.len() as f64;
        let mean: Complex64 = report.estimates.iter().sum::<Complex64>() / n;
        let var_re = report
            .estimates
            .iter()
            .map(|g| (g.re - mean.re).powi(2))
            .sum::<f64>()
            / n;
        let var_im = report
            .estimates
            .iter()
            .map(|g| (g.im - mean.im).powi(2))
            .sum::<f64>()
            / n;
        let dt_slack = 2.0 * report.t_end / report.n_steps as f64;
        let tol_re = 3.0 * (var_re / n).sqrt() + dt_slack;
        let tol_im = 3.0 * (var_im / n).sqrt() + dt_slack;
        assert!(
            (mean.re - gamma.gamma().re).abs() < tol_re,
            "Re mean {} vs {}",
            mean.re,
            gamma.gamma().re
        );
        assert!(
            (mean.im - gamma.gamma().im).abs() < tol_im,
            "Im mean {} vs {}",
            mean.im,
            gamma.gamma().im
        );
    }

    #[test]
    fn constants_at_half_are_classical() {
        let gamma = DriftParam::new(1.0, 3.0).unwrap();
        let s = asymptotic_constants(gamma, h(0.5)).unwrap();
        assert_abs_diff_eq!(s.sigma2, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.c, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.b, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.d, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.limit_cov[0][0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.limit_cov[1][1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.limit_cov[0][1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constants_continuous_at_half() {
        let gamma = DriftParam::new(1.0, 1.0).unwrap();
        let mid = asymptotic_constants(gamma, h(0.5)).unwrap();
        for hv in [0.5 - 1e-6, 0.5 + 1e-6] {
            let s = asymptotic_constants(gamma, h(hv)).unwrap();
            assert!((s.sigma2 - mid.sigma2).abs() < 1e-3 * mid.sigma2.abs());
            assert!((s.c - mid.c).abs() < 1e-3);
            assert!((s.b - mid.b).abs() < 1e-3);
            assert!((s.d - mid.d).abs() < 1e-3 * mid.d.abs());
        }
    }

    #[test]
    fn constants_reject_poles() {
        let gamma = DriftParam::new(1.0, 0.0).unwrap();
        assert!(asymptotic_constants(gamma, h(0.25)).is_err());
        assert!(asymptotic_constants(gamma, h(0.75)).is_err());
        assert!(asymptotic_constants(gamma, h(0.2)).is_err());
    }

    #[test]
    fn real_drift_makes_b_vanish() {
        let gamma = DriftParam::new(1.0, 0.0).unwrap();
        let s = asymptotic_constants(gamma, h(0.6)).unwrap();
        assert_abs_diff_eq!(s.b, 0.0, epsilon = 1e-13);
        // And omega != 0 rotates the eigenvectors: b != 0 away from H = 1/2.
        let g2 = DriftParam::new(1.0, 1.0).unwrap();
        let s2 = asymptotic_constants(g2, h(0.6)).unwrap();
        assert!(s2.b.abs() > 1e-3);
    }

    #[test]
    fn constants_match_reference_evaluation() {
        // Independent high-precision evaluation of the same formulas at
        // (lambda, omega, H) = (1, 1, 0.35): gamma = 1 - i = sqrt(2) e^{-i pi/4},
        // computed with 50-digit arithmetic and frozen here.
        let gamma = DriftParam::new(1.0, 1.0).unwrap();
        let s = asymptotic_constants(gamma, h(0.35)).unwrap();
        assert_abs_diff_eq!(s.sigma2, 2.9632136206444862, epsilon = 1e-12);
        assert_abs_diff_eq!(s.c, -1.3419139117954146, epsilon = 1e-12);
        assert_abs_diff_eq!(s.b, 0.43601426059127716, epsilon = 1e-12);
        assert_abs_diff_eq!(s.d, 1.0789119792303025, epsilon = 1e-12);
        assert_abs_diff_eq!(s.kappa, -1.4333020776237145, epsilon = 1e-12);
    }

    #[test]
    fn mc_self_consistency_small() {
        // Two different base seeds give nearby empirical covariances.
        let gamma = DriftParam::new(1.0, 0.0).unwrap();
        let (r1, _) = run_mc_experiment(
            gamma,
            h(0.5),
            &[40.0],
            1 << 11,
            400,
            Seed::new(1, 0),
        )
        .unwrap();
        let (r2, _) = run_mc_experiment(
            gamma,
            h(0.5),
            &[40.0],
            1 << 11,
            400,
            Seed::new(2, 0),
        )
        .unwrap();
        let d = frobenius_rel(&r1.empirical_cov, &r2.empirical_cov);
        assert!(d < 0.25, "cross-seed covariance distance {d}");
    }

    #[test]
    fn diagnostics_on_synthetic_gaussian() {
        // Bivariate normal samples with covariance = target: Mahalanobis
        // mean within 2 +- 4 sqrt(8/n).
        let gamma = DriftParam::new(1.0, 1.0).unwrap();
        let summary = asymptotic_constants(gamma, h(0.35)).unwrap();
        let t = summary.limit_cov;
        // Cholesky of the 2x2 target.
        let l11 = t[0][0].sqrt();
        let l21 = t[0][1] / l11;
        let l22 = (t[1][1] - l21 * l21).sqrt();
        let mut rng_state = 0x12345u64;
        let mut next_normal = {
            let mut cache: Option<f64> = None;
            move || loop {
                if let Some(v) = cache.take() {
                    return v;
                }
                let u = {
                    rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    (rng_state >> 11) as f64 / (1u64 << 53) as f64
                };
                let v = {
                    rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    (rng_state >> 11) as f64 / (1u64 << 53) as f64
                };
                let (a, b) = (2.0 * u - 1.0, 2.0 * v - 1.0);
                let s = a * a + b * b;
                if s > 0.0 && s < 1.0 {
                    let f = (-2.0 * s.ln() / s).sqrt();
                    cache = Some(b * f);
                    return a * f;
                }
            }
        };
        let n = 4000;
        let samples: Vec<Complex64> = (0..n)
            .map(|_| {
                let (g1, g2) = (next_normal(), next_normal());
                Complex64::new(l11 * g1, l21 * g1 + l22 * g2)
            })
            .collect();
        let report = McReport {
            n_reps: n,
            t_end: 1.0,
            n_steps: 2,
            hurst: 0.35,
            gamma_lambda: 1.0,
            gamma_omega: 1.0,
            seed_base: 0,
            estimates: samples.clone(),
            scaled_errors: samples.clone(),
            empirical_cov: second_moment_matrix(&samples),
            target_cov: t,
            consistency_curve: vec![],
        };
        let diag = normality_diagnostics(&report).unwrap();
        let band = 4.0 * (8.0 / n as f64).sqrt();
        assert!(
            (diag.mahalanobis_mean - 2.0).abs() < band,
            "Mahalanobis mean {}",
            diag.mahalanobis_mean
        );
        assert_eq!(diag.better, Normalization::Full);
        assert!(diag.skewness[0].abs() < 0.2);
        assert!(diag.excess_kurtosis[0].abs() < 0.5);
    }

    #[test]
    fn diagnostics_reject_degenerate_samples() {
        let gamma = DriftParam::new(1.0, 1.0).unwrap();
        let t = asymptotic_constants(gamma, h(0.35)).unwrap().limit_cov;
        let samples = vec![Complex64::new(1.0, 1.0); 500];
        let report = McReport {
            n_reps: 500,
            t_end: 1.0,
            n_steps: 2,
            hurst: 0.35,
            gamma_lambda: 1.0,
            gamma_omega: 1.0,
            seed_base: 0,
            estimates: samples.clone(),
            scaled_errors: samples.clone(),
            empirical_cov: second_moment_matrix(&samples),
            target_cov: t,
            consistency_curve: vec![],
        };
        assert!(normality_diagnostics(&report).is_err());
    }
}
