//! Command-line front end: experiment configuration, validation, dispatch,
//! and deterministic CSV/JSON emission.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bridges::{
    bridge_orthogonality, bridge_second_moment, bridge_second_moment_limit,
    bridge_second_moment_truncated, holder_exponent_estimate, xi_second_moment_closed,
    xi_second_moment_mc, xi_second_moment_quadrature, BridgeParams, HolderWindow,
};
use crate::error::{CfouError, Result};
use crate::estimator::{normality_diagnostics, run_mc_experiment, lse_gamma, lse_gamma_centered};
use crate::fbm::{HurstParam, Seed, UniformGrid};
use crate::fou::{simulate_fou, DriftParam};
use crate::kernels::{
    contraction_norm, divergence_probe, inner_drift_sweep, norm_drift_sweep,
    psi_norm_via_reduction, tensor_norm_sq, ConvergenceTable, ExpKernel, ExpKernelKind,
};
use crate::quad::{asym_coro, asym_key, asym_key0, CoroIntegral, QuadConfig};
use crate::report::{fmt_f64, write_csv, write_json, Metadata};

/// Default base seed for every experiment; never wall-clock.
pub const DEFAULT_SEED: u64 = 42;

/// Flat, serializable experiment description: the command name plus a
/// key-value map. This is what gets embedded in every output file and what
/// `--config` files contain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Parser)]
#[command(
    name = "cfou",
    version,
    about = "Numerical laboratory for drift estimation in complex fractional Ornstein-Uhlenbeck processes"
)]
struct Cli {
    /// Run the experiment described by a JSON config file instead of flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap on worker threads (falls back to CFOU_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one process path and write it out.
    Simulate(SimulateArgs),
    /// Estimate the drift on one simulated path.
    Estimate(SimulateArgs),
    /// Monte-Carlo consistency and normality experiment.
    Mc(McArgs),
    /// Tensor-space verification sweeps for the estimator kernels.
    VerifyKernels(KernelArgs),
    /// Asymptotic-expansion checks for the triangular integrals.
    VerifyQuad(QuadArgs),
    /// Second-moment identities of the weighted integrals and bridges.
    Bridge(BridgeArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long = "gamma.lambda", value_name = "LAMBDA", default_value_t = 1.0)]
    gamma_lambda: f64,
    #[arg(long = "gamma.omega", value_name = "OMEGA", default_value_t = 0.0)]
    gamma_omega: f64,
    #[arg(long)]
    hurst: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long = "out-path")]
    out_path: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "t-end")]
    t_end: f64,
    #[arg(long = "n-steps", default_value_t = 1 << 12)]
    n_steps: usize,
}

#[derive(Debug, Args)]
struct McArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated horizons.
    #[arg(long = "t-list", value_delimiter = ',')]
    t_list: Vec<f64>,
    #[arg(long = "n-steps", default_value_t = 1 << 14)]
    n_steps: usize,
    #[arg(long = "n-reps", default_value_t = 500)]
    n_reps: usize,
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// norm | inner | divergence | contraction | reduction
    #[arg(long)]
    mode: String,
    #[arg(long = "t-list", value_delimiter = ',')]
    t_list: Option<Vec<f64>>,
    #[arg(long = "n-list", value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
}

#[derive(Debug, Args)]
struct QuadArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// key0 | key | coro | all
    #[arg(long, default_value = "all")]
    mode: String,
    #[arg(long = "t-list", value_delimiter = ',')]
    t_list: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct BridgeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    alpha: f64,
    #[arg(long = "g-exp", default_value_t = 0.6)]
    g_exp: f64,
    #[arg(long = "t-end", default_value_t = 1.0)]
    t_end: f64,
    /// closed-form | quadrature | monte-carlo | all
    #[arg(long, default_value = "all")]
    method: String,
    #[arg(long = "n-reps", default_value_t = 20_000)]
    n_reps: usize,
}

/// Entry point for the binary: parse, dispatch, exit with the documented
/// status codes, printing a one-line machine-parsable reason on failure.
pub fn run() {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("CFOU_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let config = match (cli.config, cli.command) {
        (Some(path), None) => match load_config(&path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{}", e.stderr_line());
                std::process::exit(e.exit_code());
            }
        },
        (None, Some(cmd)) => command_to_config(&cmd),
        (Some(_), Some(_)) => {
            let e = CfouError::Validation(
                "pass either --config or a subcommand, not both".into(),
            );
            eprintln!("{}", e.stderr_line());
            std::process::exit(e.exit_code());
        }
        (None, None) => {
            let e = CfouError::Validation("no command given".into());
            eprintln!("{}", e.stderr_line());
            std::process::exit(e.exit_code());
        }
    };
    if let Err(e) = dispatch(&config) {
        eprintln!("{}", e.stderr_line());
        std::process::exit(e.exit_code());
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn command_to_config(cmd: &Command) -> ExperimentConfig {
    let mut params = BTreeMap::new();
    let (name, common): (&str, &CommonArgs) = match cmd {
        Command::Simulate(a) => {
            params.insert("t_end".into(), a.t_end.into());
            params.insert("n_steps".into(), a.n_steps.into());
            ("simulate", &a.common)
        }
        Command::Estimate(a) => {
            params.insert("t_end".into(), a.t_end.into());
            params.insert("n_steps".into(), a.n_steps.into());
            ("estimate", &a.common)
        }
        Command::Mc(a) => {
            params.insert("t_list".into(), a.t_list.clone().into());
            params.insert("n_steps".into(), a.n_steps.into());
            params.insert("n_reps".into(), a.n_reps.into());
            ("mc", &a.common)
        }
        Command::VerifyKernels(a) => {
            params.insert("mode".into(), a.mode.clone().into());
            if let Some(t) = &a.t_list {
                params.insert("t_list".into(), t.clone().into());
            }
            if let Some(n) = &a.n_list {
                params.insert(
                    "n_list".into(),
                    Value::Array(n.iter().map(|&x| x.into()).collect()),
                );
            }
            if let Some(t) = a.t_end {
                params.insert("t_end".into(), t.into());
            }
            ("verify-kernels", &a.common)
        }
        Command::VerifyQuad(a) => {
            params.insert("mode".into(), a.mode.clone().into());
            if let Some(t) = &a.t_list {
                params.insert("t_list".into(), t.clone().into());
            }
            ("verify-quad", &a.common)
        }
        Command::Bridge(a) => {
            params.insert("alpha".into(), a.alpha.into());
            params.insert("g_exp".into(), a.g_exp.into());
            params.insert("t_end".into(), a.t_end.into());
            params.insert("method".into(), a.method.clone().into());
            params.insert("n_reps".into(), a.n_reps.into());
            ("bridge", &a.common)
        }
    };
    params.insert("gamma.lambda".into(), common.gamma_lambda.into());
    params.insert("gamma.omega".into(), common.gamma_omega.into());
    params.insert("hurst".into(), common.hurst.into());
    params.insert("seed".into(), common.seed.into());
    params.insert("format".into(), common.format.clone().into());
    if let Some(p) = &common.out_path {
        params.insert("out_path".into(), p.display().to_string().into());
    }
    ExperimentConfig {
        command: name.into(),
        params,
    }
}

// ---------------------------------------------------------------------------
// Typed parameter extraction with strict key validation
// ---------------------------------------------------------------------------

struct ParamReader<'c> {
    cfg: &'c ExperimentConfig,
    allowed: &'static [&'static str],
}

impl<'c> ParamReader<'c> {
    fn new(cfg: &'c ExperimentConfig, allowed: &'static [&'static str]) -> Result<Self> {
        for key in cfg.params.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(CfouError::Validation(format!(
                    "unknown key '{key}' for command '{}'",
                    cfg.command
                )));
            }
        }
        Ok(ParamReader { cfg, allowed })
    }

    fn f64(&self, key: &str, default: Option<f64>) -> Result<f64> {
        debug_assert!(self.allowed.contains(&key));
        match self.cfg.params.get(key) {
            Some(v) => v
                .as_f64()
                .ok_or_else(|| CfouError::Validation(format!("key '{key}' must be a number"))),
            None => default
                .ok_or_else(|| CfouError::Validation(format!("missing required key '{key}'"))),
        }
    }

    fn usize(&self, key: &str, default: Option<usize>) -> Result<usize> {
        match self.cfg.params.get(key) {
            Some(v) => v
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| CfouError::Validation(format!("key '{key}' must be an integer"))),
            None => default
                .ok_or_else(|| CfouError::Validation(format!("missing required key '{key}'"))),
        }
    }

    fn string(&self, key: &str, default: Option<&str>) -> Result<String> {
        match self.cfg.params.get(key) {
            Some(v) => v
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| CfouError::Validation(format!("key '{key}' must be a string"))),
            None => default
                .map(str::to_string)
                .ok_or_else(|| CfouError::Validation(format!("missing required key '{key}'"))),
        }
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self
            .cfg
            .params
            .get(key)
            .ok_or_else(|| CfouError::Validation(format!("missing required key '{key}'")))?;
        v.as_array()
            .map(|a| a.iter().filter_map(Value::as_f64).collect::<Vec<f64>>())
            .filter(|list: &Vec<f64>| !list.is_empty())
            .ok_or_else(|| CfouError::Validation(format!("key '{key}' must be a number list")))
    }

    fn usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.cfg.params.get(key) {
            Some(v) => v
                .as_array()
                .map(|a| {
                    a.iter()
                        .filter_map(Value::as_u64)
                        .map(|x| x as usize)
                        .collect::<Vec<usize>>()
                })
                .filter(|list| !list.is_empty())
                .ok_or_else(|| {
                    CfouError::Validation(format!("key '{key}' must be an integer list"))
                }),
            None => Ok(default.to_vec()),
        }
    }

    fn drift(&self) -> Result<DriftParam> {
        DriftParam::new(
            self.f64("gamma.lambda", Some(1.0))?,
            self.f64("gamma.omega", Some(0.0))?,
        )
        .map_err(|e| CfouError::Validation(e.to_string()))
    }

    fn hurst(&self) -> Result<HurstParam> {
        HurstParam::new(self.f64("hurst", None)?)
            .map_err(|e| CfouError::Validation(e.to_string()))
    }

    fn seed(&self) -> Result<Seed> {
        Ok(Seed::new(self.usize("seed", Some(DEFAULT_SEED as usize))? as u64, 0))
    }

    fn out_path(&self, default: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.string("out_path", Some(default))?))
    }
}

fn meta_for(cfg: &ExperimentConfig) -> Result<Metadata> {
    Ok(Metadata::new(serde_json::to_string(cfg)?))
}

/// Validate and run one experiment; writes its artifacts and returns.
pub fn dispatch(cfg: &ExperimentConfig) -> Result<()> {
    match cfg.command.as_str() {
        "simulate" => run_simulate(cfg, false),
        "estimate" => run_simulate(cfg, true),
        "mc" => run_mc(cfg),
        "verify-kernels" => run_verify_kernels(cfg),
        "verify-quad" => run_verify_quad(cfg),
        "bridge" => run_bridge(cfg),
        other => Err(CfouError::Validation(format!("unknown command '{other}'"))),
    }
}

const SIM_KEYS: &[&str] = &[
    "gamma.lambda",
    "gamma.omega",
    "hurst",
    "t_end",
    "n_steps",
    "seed",
    "out_path",
    "format",
];

fn run_simulate(cfg: &ExperimentConfig, estimate: bool) -> Result<()> {
    let p = ParamReader::new(cfg, SIM_KEYS)?;
    let gamma = p.drift()?;
    let h = p.hurst()?;
    let t_end = p.f64("t_end", None)?;
    let n_steps = p.usize("n_steps", Some(1 << 12))?;
    let seed = p.seed()?;
    let grid = UniformGrid::new(t_end, n_steps).map_err(|e| CfouError::Validation(e.to_string()))?;
    let z = simulate_fou(gamma, h, grid, seed)?;
    let meta = meta_for(cfg)?;

    if estimate {
        let raw = lse_gamma(&z)?;
        let centered = lse_gamma_centered(&z, gamma, h)?;
        let out = p.out_path("estimate.json")?;
        write_json(
            &out,
            &meta,
            &serde_json::json!({
                "gamma_hat_raw": [raw.re, raw.im],
                "gamma_hat_centered": [centered.re, centered.im],
                "gamma_true": [gamma.gamma().re, gamma.gamma().im],
                "t_end": t_end,
                "n_steps": n_steps,
            }),
        )?;
        println!("estimate written to {}", out.display());
    } else {
        let out = p.out_path("path.csv")?;
        let rows = z.values.iter().enumerate().map(|(k, v)| {
            format!(
                "{},{},{}",
                fmt_f64(grid.node(k)),
                fmt_f64(v.re),
                fmt_f64(v.im)
            )
        });
        write_csv(&out, &meta, "t,re_z,im_z", rows)?;
        println!("path written to {}", out.display());
    }
    Ok(())
}

const MC_KEYS: &[&str] = &[
    "gamma.lambda",
    "gamma.omega",
    "hurst",
    "t_list",
    "n_steps",
    "n_reps",
    "seed",
    "out_path",
    "format",
];

fn run_mc(cfg: &ExperimentConfig) -> Result<()> {
    let p = ParamReader::new(cfg, MC_KEYS)?;
    let gamma = p.drift()?;
    let h = p.hurst()?;
    let t_list = p.f64_list("t_list")?;
    let n_steps = p.usize("n_steps", Some(1 << 14))?;
    let n_reps = p.usize("n_reps", Some(500))?;
    let seed = p.seed()?;
    let (report, rows) = run_mc_experiment(gamma, h, &t_list, n_steps, n_reps, seed)?;
    let diagnostics = normality_diagnostics(&report).ok();

    let meta = meta_for(cfg)?;
    let json_path = p.out_path("mc_report.json")?;
    write_json(
        &json_path,
        &meta,
        &serde_json::json!({ "mc": report, "diagnostics": diagnostics }),
    )?;
    let csv_path = json_path.with_extension("csv");
    write_csv(
        &csv_path,
        &meta,
        "rep,T,re_gamma_hat,im_gamma_hat,re_scaled_err,im_scaled_err",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.rep,
                fmt_f64(r.t_end),
                fmt_f64(r.gamma_hat.re),
                fmt_f64(r.gamma_hat.im),
                fmt_f64(r.scaled_err.re),
                fmt_f64(r.scaled_err.im)
            )
        }),
    )?;
    println!(
        "mc report written to {} and {}",
        json_path.display(),
        csv_path.display()
    );
    Ok(())
}

const KERNEL_KEYS: &[&str] = &[
    "gamma.lambda",
    "gamma.omega",
    "hurst",
    "mode",
    "t_list",
    "n_list",
    "t_end",
    "seed",
    "out_path",
    "format",
];

fn table_rows(table: &ConvergenceTable) -> Vec<String> {
    table
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                fmt_f64(r.t_end),
                r.n,
                fmt_f64(r.estimate.re),
                fmt_f64(r.estimate.im),
                r.target
                    .map(|t| format!("{};{}", fmt_f64(t.re), fmt_f64(t.im)))
                    .unwrap_or_default(),
                r.residual.map(fmt_f64).unwrap_or_default()
            )
        })
        .collect()
}

fn run_verify_kernels(cfg: &ExperimentConfig) -> Result<()> {
    let p = ParamReader::new(cfg, KERNEL_KEYS)?;
    let gamma = p.drift()?;
    let h = p.hurst()?;
    let mode = p.string("mode", None)?;
    let meta = meta_for(cfg)?;
    let header = "T,n,estimate_re,estimate_im,target,residual";

    let table = match mode.as_str() {
        "divergence" => {
            let t_end = p.f64("t_end", Some(5.0))?;
            let n_list = p.usize_list("n_list", &[64, 128, 256, 512])?;
            divergence_probe(h, gamma, t_end, &n_list)?
        }
        "norm" => {
            let t_list = p.f64_list("t_list").unwrap_or(vec![10.0, 20.0, 40.0]);
            norm_drift_sweep(h, gamma, &t_list, 12.8, true)?
        }
        "inner" => {
            let t_list = p.f64_list("t_list").unwrap_or(vec![10.0, 20.0, 40.0]);
            inner_drift_sweep(h, gamma, &t_list, 12.8, true)?
        }
        "contraction" => {
            let t_list = p.f64_list("t_list").unwrap_or(vec![5.0, 10.0, 20.0]);
            let n = p.usize_list("n_list", &[48])?[0];
            let mut rows = Vec::new();
            for &t_end in &t_list {
                let v = contraction_norm(gamma, h, t_end, n)?;
                rows.push(crate::kernels::ConvergenceRow {
                    t_end,
                    n,
                    estimate: num_complex::Complex64::new(v, 0.0),
                    target: None,
                    residual: None,
                });
            }
            ConvergenceTable { rows }
        }
        "reduction" => {
            let t_end = p.f64("t_end", Some(10.0))?;
            let n = p.usize_list("n_list", &[512])?[0];
            let reduction = psi_norm_via_reduction(gamma, h, t_end, &QuadConfig::default())?;
            let psi = ExpKernel::new(ExpKernelKind::Psi, gamma, t_end)?;
            let grid = tensor_norm_sq(&psi, h, n)?;
            ConvergenceTable {
                rows: vec![crate::kernels::ConvergenceRow {
                    t_end,
                    n,
                    estimate: num_complex::Complex64::new(grid, 0.0),
                    target: Some(num_complex::Complex64::new(reduction, 0.0)),
                    residual: Some((grid - reduction).abs()),
                }],
            }
        }
        other => {
            return Err(CfouError::Validation(format!(
                "unknown verify-kernels mode '{other}'"
            )))
        }
    };
    let out = p.out_path("kernels.csv")?;
    write_csv(&out, &meta, header, table_rows(&table))?;
    println!("kernel table written to {}", out.display());
    Ok(())
}

const QUAD_KEYS: &[&str] = &[
    "gamma.lambda",
    "gamma.omega",
    "hurst",
    "mode",
    "t_list",
    "seed",
    "out_path",
    "format",
];

fn run_verify_quad(cfg: &ExperimentConfig) -> Result<()> {
    let p = ParamReader::new(cfg, QUAD_KEYS)?;
    let mode = p.string("mode", Some("all"))?;
    let qcfg = QuadConfig::default();
    let mut rows: Vec<String> = Vec::new();
    let push = |rows: &mut Vec<String>, case: &str, t: f64, r_exp: (f64, f64), r_quad: (f64, f64), gap: f64| {
        rows.push(format!(
            "{case},{},{},{},{},{},{}",
            fmt_f64(t),
            fmt_f64(r_exp.0),
            fmt_f64(r_exp.1),
            fmt_f64(r_quad.0),
            fmt_f64(r_quad.1),
            fmt_f64(gap)
        ));
    };

    if mode == "key0" || mode == "all" {
        let t_list = p.f64_list("t_list").unwrap_or(vec![25.0, 50.0, 100.0]);
        for &t in &t_list {
            let r = asym_key0(-0.5, t, &qcfg)?;
            push(&mut rows, "key0:beta=-0.5", t, (r.value_expansion, 0.0), (r.value_quadrature, 0.0), r.abs_gap);
        }
    }
    if mode == "key" || mode == "all" {
        let t_list = p.f64_list("t_list").unwrap_or(vec![50.0, 100.0, 200.0]);
        for &t in &t_list {
            let r = asym_key(-0.4, -0.8, t, &qcfg)?;
            push(&mut rows, "key:delta=-0.2", t, (r.value_expansion, 0.0), (r.value_quadrature, 0.0), r.abs_gap);
            let r = asym_key(-0.4, -0.4, t, &qcfg)?;
            push(&mut rows, "key:delta=+0.2", t, (r.value_expansion, 0.0), (r.value_quadrature, 0.0), r.abs_gap);
        }
    }
    if mode == "coro" || mode == "all" {
        let gamma = p.drift()?;
        let h = HurstParam::new(p.f64("hurst", Some(0.35))?)
            .map_err(|e| CfouError::Validation(e.to_string()))?;
        let t_list = p.f64_list("t_list").unwrap_or(vec![50.0, 100.0, 200.0]);
        for &t in &t_list {
            for (name, which) in [
                ("coro:xz", CoroIntegral::XZ),
                ("coro:zx", CoroIntegral::ZX),
                ("coro:weighted", CoroIntegral::Weighted),
            ] {
                let r = asym_coro(gamma, h, t, which, &qcfg)?;
                push(
                    &mut rows,
                    name,
                    t,
                    (r.value_expansion.re, r.value_expansion.im),
                    (r.value_quadrature.re, r.value_quadrature.im),
                    r.abs_gap,
                );
            }
        }
    }
    if rows.is_empty() {
        return Err(CfouError::Validation(format!(
            "unknown verify-quad mode '{mode}'"
        )));
    }
    let out = p.out_path("quad.csv")?;
    write_csv(
        &out,
        &meta_for(cfg)?,
        "case,T,expansion_re,expansion_im,quadrature_re,quadrature_im,abs_gap",
        rows,
    )?;
    println!("expansion table written to {}", out.display());
    Ok(())
}

const BRIDGE_KEYS: &[&str] = &[
    "gamma.lambda",
    "gamma.omega",
    "hurst",
    "alpha",
    "g_exp",
    "t_end",
    "method",
    "n_reps",
    "seed",
    "out_path",
    "format",
];

fn run_bridge(cfg: &ExperimentConfig) -> Result<()> {
    let p = ParamReader::new(cfg, BRIDGE_KEYS)?;
    let h = p.hurst()?;
    let alpha = p.f64("alpha", None)?;
    let g_exp = p.f64("g_exp", Some(0.6))?;
    let t_end = p.f64("t_end", Some(1.0))?;
    let method = p.string("method", Some("all"))?;
    let n_reps = p.usize("n_reps", Some(20_000))?;
    let seed = p.seed()?;
    let params =
        BridgeParams::new(h, alpha, t_end).map_err(|e| CfouError::Validation(e.to_string()))?;
    let qcfg = QuadConfig::default();

    let want = |m: &str| method == "all" || method == m;
    let closed = xi_second_moment_closed(&params);
    let quad = if want("quadrature") {
        Some(xi_second_moment_quadrature(&params, 12, &qcfg)?)
    } else {
        None
    };
    let mc = if want("monte-carlo") {
        Some(xi_second_moment_mc(&params, 1 << 13, n_reps, seed)?)
    } else {
        None
    };
    let rel_gap = |a: f64, b: f64| (a - b).abs() / b.abs();
    let max_gap = {
        let mut g: f64 = 0.0;
        if let Some(q) = quad {
            g = g.max(rel_gap(q, closed));
        }
        if let Some(m) = mc {
            g = g.max(rel_gap(m, closed));
        }
        if let (Some(q), Some(m)) = (quad, mc) {
            g = g.max(rel_gap(m, q));
        }
        g
    };

    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut rows = vec![format!(
        "xi_second_moment,{},{},{},{}",
        fmt_f64(closed),
        opt(quad),
        opt(mc),
        fmt_f64(max_gap)
    )];

    let bridge_ref = bridge_second_moment(h, g_exp)?;
    let bridge_lim = bridge_second_moment_limit(h, g_exp)?;
    let bridge_quad = bridge_second_moment_truncated(h, g_exp, t_end, 10, &qcfg)?;
    rows.push(format!(
        "bridge_second_moment,{},{},,{}",
        fmt_f64(bridge_ref),
        fmt_f64(bridge_quad),
        fmt_f64(rel_gap(bridge_quad, bridge_ref))
    ));
    rows.push(format!(
        "bridge_second_moment_limit,{},{},,{}",
        fmt_f64(bridge_lim),
        fmt_f64(bridge_quad),
        fmt_f64(rel_gap(bridge_quad, bridge_lim))
    ));
    let orth = bridge_orthogonality(h, g_exp, 0.5 * t_end, t_end, 10, &qcfg)?;
    rows.push(format!("bridge_orthogonality_k10,0,{},,", fmt_f64(orth)));
    let slope = holder_exponent_estimate(&params, HolderWindow::Terminal)?;
    rows.push(format!(
        "holder_exponent_terminal,{},{},,{}",
        fmt_f64(h.value() - alpha),
        fmt_f64(slope),
        fmt_f64(rel_gap(slope, h.value() - alpha))
    ));

    let out = p.out_path("bridge.csv")?;
    write_csv(
        &out,
        &meta_for(cfg)?,
        "quantity,closed_form,quadrature,monte_carlo,rel_gap",
        rows,
    )?;
    println!("bridge table written to {}", out.display());
    Ok(())
}
