//! Named, reproducible experiments: each one drives catalog problems with
//! frozen run configurations, classifies the resulting error sequences, and
//! compares measured against predicted rates. Artifacts (error series,
//! root/q-order series, JSON report) are emitted deterministically so a
//! figure can be regenerated byte-for-byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::numerics::XReal;
use crate::rate::{
    classify_psi, errors_from_iterates, p_base_estimate, q_factor_estimate, q_order_estimate,
    qup_limit_estimate, up_theta_check, ClassifyConfig, ErrorSequence, NormOrder, PowerFunction,
    QupVerdict, RateError, RateReport, Tail, UpVerdict,
};
use crate::solvers::{
    fixed_point_iterate, kpoint_inverse_interp, lambda_map_iterate, newton_scalar, RunControl,
    SolverError, Termination, VectorProblem,
};
use crate::spectral::{self, SpectralError};
use crate::testbed::{
    anti_linearithmic_function, char_root, frac_newton_function, gd_fractional_profile,
    holder_test_function, linearithmic_function, synth_sequence, Modulation, PredictionTarget,
    SynthSpec, TestbedError,
};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("unknown experiment: {0}")]
    UnknownExperiment(String),
    #[error("experiment {experiment} does not take a parameter named {key}")]
    UnknownParameter { experiment: String, key: String },
    #[error("i/o failure: {0}")]
    Io(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Testbed(#[from] TestbedError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

impl ExperimentError {
    /// True for errors caused by the caller's configuration rather than by
    /// the run itself; the CLI maps these to a distinct exit code.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::UnknownExperiment(_) | ExperimentError::UnknownParameter { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub overrides: BTreeMap<String, f64>,
    pub out_dir: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn new(experiment: impl Into<String>) -> Self {
        ExperimentConfig {
            experiment: experiment.into(),
            overrides: BTreeMap::new(),
            out_dir: None,
            format: OutputFormat::default(),
        }
    }
}

/// One problem instance inside an experiment, with its verdict.
#[derive(Debug)]
pub struct RunOutcome {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub measured: f64,
    pub predicted: f64,
    pub gap: f64,
    pub pass: bool,
    pub reason: Option<String>,
    /// Full classification, when the run produced one.
    pub report: Option<RateReport>,
    /// The error series behind the verdict, for artifact emission.
    pub errors: Option<ErrorSequence>,
    /// Extra emitted series: (series name, points).
    pub series: Vec<(String, Vec<(u64, f64)>)>,
}

impl RunOutcome {
    fn failed(name: impl Into<String>, params: BTreeMap<String, f64>, reason: String) -> Self {
        RunOutcome {
            name: name.into(),
            params,
            measured: f64::NAN,
            predicted: f64::NAN,
            gap: f64::NAN,
            pass: false,
            reason: Some(reason),
            report: None,
            errors: None,
            series: Vec::new(),
        }
    }
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub experiment: String,
    pub runs: Vec<RunOutcome>,
    pub all_pass: bool,
}

impl ExperimentReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "experiment": self.experiment,
            "runs": self.runs.iter().map(|r| {
                let mut v = json!({
                    "name": r.name,
                    "params": r.params,
                    "measured": r.measured,
                    "predicted": r.predicted,
                    "gap": r.gap,
                    "pass": r.pass,
                });
                if let Some(reason) = &r.reason {
                    v["reason"] = json!(reason);
                }
                v
            }).collect::<Vec<_>>(),
        })
    }
}

/// Tolerance verdict used everywhere a measured value meets a prediction.
/// Pass iff the gap is at most `tol` (boundary inclusive) and finite.
pub(crate) fn judge(measured: f64, predicted: f64, tol: f64) -> (f64, bool) {
    let gap = (measured - predicted).abs();
    (gap, gap.is_finite() && gap <= tol)
}

type Params = BTreeMap<String, f64>;
type Runner = fn(&Params) -> Result<Vec<RunOutcome>, ExperimentError>;

pub struct ExperimentDef {
    pub name: &'static str,
    pub description: &'static str,
    /// Figure tag the emitted series correspond to ("-" for none).
    pub figure: &'static str,
    pub defaults: &'static [(&'static str, f64)],
    runner: Runner,
}

pub const REGISTRY: &[ExperimentDef] = &[
    ExperimentDef {
        name: "fig2_newton_fracpower",
        description: "Newton on the fractional-power family: k^r rates for r in {0.25, 0.5, 0.75} \
                      plus linear and quadratic baselines, via log-domain maps",
        figure: "2",
        defaults: &[("k_max", 20_000.0), ("record_every", 10.0), ("x0", 0.01)],
        runner: run_fig2,
    },
    ExperimentDef {
        name: "fig3_newton_lith",
        description: "Newton on the linearithmic (k ln k) and anti-linearithmic (k / ln k) \
                      families, direct iteration in extended precision",
        figure: "3",
        defaults: &[("k_max", 300.0), ("burn_in", 20.0)],
        runner: run_fig3,
    },
    ExperimentDef {
        name: "fig4_gd_frac",
        description: "Gradient descent on radial fractional-power profiles: k^r rates for \
                      r in {0.25, 0.5, 0.75}, via the radius log-map",
        figure: "4",
        defaults: &[("k_max", 20_000.0), ("record_every", 10.0), ("r0", 0.01)],
        runner: run_fig4,
    },
    ExperimentDef {
        name: "fig5_kpoint_holder",
        description: "Secant (K=2) and 3-point inverse interpolation on the Hoelder family: \
                      measured q-orders against characteristic roots for nu in {0.25, 0.5, 1}",
        figure: "5",
        defaults: &[("max_iter", 500.0), ("stop_lambda", 250.0)],
        runner: run_fig5,
    },
    ExperimentDef {
        name: "thm41_spectral",
        description: "Random contraction maps: measured linear P-base equals the spectral \
                      radius under l1/l2/linf norms; nilpotent maps terminate exactly",
        figure: "-",
        defaults: &[("trials", 20.0), ("iters", 200.0), ("seed", 20_260_822.0)],
        runner: run_thm41,
    },
    ExperimentDef {
        name: "counterexamples_s34",
        description: "Synthetic boundary families separating the order hierarchy: Q-linear \
                      without UP, QUP without bounded Q-factor, QUP-superlinear without UP",
        figure: "-",
        defaults: &[("k_max_linear", 10_000.0), ("k_max_super", 24.0)],
        runner: run_counterexamples,
    },
];

pub fn find_experiment(name: &str) -> Option<&'static ExperimentDef> {
    REGISTRY.iter().find(|d| d.name == name)
}

/// Registry listing: name, description, figure tag.
pub fn list_experiments() -> serde_json::Value {
    serde_json::Value::Array(
        REGISTRY
            .iter()
            .map(|d| {
                json!({
                    "name": d.name,
                    "description": d.description,
                    "figure": d.figure,
                })
            })
            .collect(),
    )
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let def = find_experiment(&config.experiment)
        .ok_or_else(|| ExperimentError::UnknownExperiment(config.experiment.clone()))?;
    let mut params: Params = def
        .defaults
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    for (key, value) in &config.overrides {
        if !params.contains_key(key) {
            return Err(ExperimentError::UnknownParameter {
                experiment: def.name.to_string(),
                key: key.clone(),
            });
        }
        params.insert(key.clone(), *value);
    }
    let runs = (def.runner)(&params)?;
    let all_pass = runs.iter().all(|r| r.pass);
    let report = ExperimentReport {
        experiment: def.name.to_string(),
        runs,
        all_pass,
    };
    if let Some(dir) = &config.out_dir {
        emit_artifacts(&report, dir, config.format)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Artifact emission
// ---------------------------------------------------------------------------

fn io_err(e: std::io::Error) -> ExperimentError {
    ExperimentError::Io(e.to_string())
}

fn emit_artifacts(
    report: &ExperimentReport,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<(), ExperimentError> {
    let dir = out_dir.join(&report.experiment);
    fs::create_dir_all(&dir).map_err(io_err)?;
    if format != OutputFormat::Json {
        for run in &report.runs {
            if let Some(errors) = &run.errors {
                let f = fs::File::create(dir.join(format!("{}.csv", run.name))).map_err(io_err)?;
                errors.write_csv(f)?;
            }
            for (series_name, points) in &run.series {
                let mut body = String::from("k,value\n");
                for (k, v) in points {
                    body.push_str(&format!("{k},{v}\n"));
                }
                fs::write(dir.join(format!("{}.{}.csv", run.name, series_name)), body)
                    .map_err(io_err)?;
            }
        }
    }
    if format != OutputFormat::Csv {
        let text = serde_json::to_string_pretty(&report.to_json())
            .expect("report serialization is infallible");
        fs::write(dir.join("report.json"), text + "\n").map_err(io_err)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared run helpers
// ---------------------------------------------------------------------------

fn param(params: &Params, key: &str) -> f64 {
    params[key]
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

/// exp(-lambda_k / psi(k)) series: the k-th-root convergence curve.
fn root_series(errors: &ErrorSequence, psi: &PowerFunction) -> Vec<(u64, f64)> {
    errors
        .entries()
        .iter()
        .filter_map(|(k, e)| {
            let lam = e.lambda_f64();
            lam.is_finite().then(|| (*k, (-lam / psi.eval(*k)).exp()))
        })
        .collect()
}

fn model_label(model: &PowerFunction) -> String {
    model.name()
}

// ---------------------------------------------------------------------------
// fig2: Newton fractional-power rates
// ---------------------------------------------------------------------------

fn run_fig2(params: &Params) -> Result<Vec<RunOutcome>, ExperimentError> {
    let k_max = param(params, "k_max") as u64;
    let record_every = param(params, "record_every") as u64;
    let x0 = param(params, "x0");
    let lam0 = -x0.ln();
    let mut outcomes = Vec::new();

    for r in [0.25, 0.5, 0.75] {
        let name = format!("frac-r{r}");
        let run_params: Params = [("r".to_string(), r), ("c".to_string(), 1.0), ("x0".to_string(), x0)]
            .into_iter()
            .collect();
        let entry = frac_newton_function(r, 1.0, 0.0)?;
        let map = entry.log_map.as_ref().expect("fractional family has a map");
        let ctrl = RunControl {
            max_iter: k_max,
            record_every,
            ..RunControl::default()
        };
        let run = match lambda_map_iterate(&name, map, lam0, &ctrl) {
            Ok(run) => run,
            Err(e) => {
                outcomes.push(RunOutcome::failed(name, run_params, e.to_string()));
                continue;
            }
        };
        let PredictionTarget::PBase(predicted) = entry.prediction.target else {
            unreachable!("fractional entries predict a base");
        };
        let report = classify_psi(&run.errors, &ClassifyConfig::default())?;
        let (gap, base_ok) = judge(report.p_base, predicted, 0.05);
        let model_ok = matches!(report.best_model, PowerFunction::Power { r: rhat } if (rhat - r).abs() <= 0.05);
        let reason = if !model_ok {
            Some(format!(
                "expected Power near r = {r}, classifier chose {}",
                model_label(&report.best_model)
            ))
        } else if !base_ok {
            Some(format!("base gap {gap} exceeds 0.05"))
        } else {
            None
        };
        outcomes.push(RunOutcome {
            name,
            params: run_params,
            measured: report.p_base,
            predicted,
            gap,
            pass: base_ok && model_ok,
            reason,
            series: vec![("kth-root".into(), root_series(&run.errors, &entry.prediction.model))],
            report: Some(report),
            errors: Some(run.errors),
        });
    }

    // Linear baseline: Newton on a double root halves the error each step,
    // so the log map is an exact shift by ln 2.
    {
        let name = "baseline-linear".to_string();
        let ctrl = RunControl {
            max_iter: 2000,
            record_every: 1,
            ..RunControl::default()
        };
        let shift = 2.0_f64.ln();
        let run = lambda_map_iterate(&name, |l| Some(l + shift), lam0, &ctrl)?;
        let report = classify_psi(&run.errors, &ClassifyConfig::default())?;
        let (gap, base_ok) = judge(report.p_base, 0.5, 0.05);
        let model_ok =
            matches!(report.best_model, PowerFunction::Power { r } if (r - 1.0).abs() <= 0.05);
        outcomes.push(RunOutcome {
            name,
            params: [("x0".to_string(), x0)].into_iter().collect(),
            measured: report.p_base,
            predicted: 0.5,
            gap,
            pass: base_ok && model_ok,
            reason: (!(base_ok && model_ok))
                .then(|| format!("expected linear halving, got {}", model_label(&report.best_model))),
            series: vec![(
                "kth-root".into(),
                root_series(&run.errors, &PowerFunction::Power { r: 1.0 }),
            )],
            report: Some(report),
            errors: Some(run.errors),
        });
    }

    // Quadratic baseline: simple-root Newton squares the error; lambda
    // doubles until f64 range runs out, which is depth enough to classify.
    {
        let name = "baseline-quadratic".to_string();
        let ctrl = RunControl {
            max_iter: 2000,
            stop_lambda: 1e300,
            record_every: 1,
            ..RunControl::default()
        };
        let run = lambda_map_iterate(
            &name,
            |l| {
                let arg = 1.0 - 2.0 * (-l).exp();
                if arg <= 0.0 {
                    return None;
                }
                let next = 2.0 * l + arg.ln();
                next.is_finite().then_some(next)
            },
            lam0,
            &ctrl,
        )?;
        let report = classify_psi(&run.errors, &ClassifyConfig::default())?;
        let measured = match report.best_model {
            PowerFunction::Exponential { r } => r,
            _ => f64::NAN,
        };
        let (gap, pass) = judge(measured, 2.0, 0.05);
        outcomes.push(RunOutcome {
            name,
            params: [("x0".to_string(), x0)].into_iter().collect(),
            measured,
            predicted: 2.0,
            gap,
            pass,
            reason: (!pass).then(|| {
                format!(
                    "expected exponential order 2, classifier chose {}",
                    model_label(&report.best_model)
                )
            }),
            series: vec![(
                "kth-root".into(),
                root_series(&run.errors, &PowerFunction::Exponential { r: 2.0 }),
            )],
            report: Some(report),
            errors: Some(run.errors),
        });
    }

    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// fig3: Newton (anti-)linearithmic rates
// ---------------------------------------------------------------------------

fn run_fig3(params: &Params) -> Result<Vec<RunOutcome>, ExperimentError> {
    let k_max = param(params, "k_max") as u64;
    let burn_in = param(params, "burn_in") as u64;
    let e_inv = (-1.0_f64).exp();
    let mut outcomes = Vec::new();

    let entries = [linearithmic_function(0.0), anti_linearithmic_function(0.0)];
    for entry in &entries {
        for x0 in [0.01, 0.05] {
            let name = format!("{}-x{x0}", entry.name);
            let run_params: Params = [("x0".to_string(), x0)].into_iter().collect();
            let problem = entry.problem().expect("newton entries carry a problem");
            let ctrl = RunControl {
                max_iter: k_max,
                ..RunControl::default()
            };
            let run = match newton_scalar(problem, XReal::from_f64(x0), &ctrl) {
                Ok(run) => run,
                Err(e) => {
                    outcomes.push(RunOutcome::failed(name, run_params, e.to_string()));
                    continue;
                }
            };
            let cfg = ClassifyConfig {
                burn_in,
                ..ClassifyConfig::default()
            };
            let report = classify_psi(&run.errors, &cfg)?;
            let (gap, base_ok) = judge(report.p_base, e_inv, 0.1);
            let model_ok = report.best_model == entry.prediction.model;
            let reason = if !model_ok {
                Some(format!(
                    "expected {}, classifier chose {}",
                    model_label(&entry.prediction.model),
                    model_label(&report.best_model)
                ))
            } else if !base_ok {
                Some(format!("base gap {gap} exceeds 0.1"))
            } else {
                None
            };
            outcomes.push(RunOutcome {
                name,
                params: run_params,
                measured: report.p_base,
                predicted: e_inv,
                gap,
                pass: base_ok && model_ok,
                reason,
                series: vec![(
                    "kth-root".into(),
                    root_series(&run.errors, &entry.prediction.model),
                )],
                report: Some(report),
                errors: Some(run.errors),
            });
        }
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// fig4: gradient-descent fractional-power rates
// ---------------------------------------------------------------------------

fn run_fig4(params: &Params) -> Result<Vec<RunOutcome>, ExperimentError> {
    let k_max = param(params, "k_max") as u64;
    let record_every = param(params, "record_every") as u64;
    let r0 = param(params, "r0");
    let v0 = -r0.ln();
    let mut outcomes = Vec::new();

    for r in [0.25, 0.5, 0.75] {
        let name = format!("gd-r{r}");
        let run_params: Params = [("r".to_string(), r), ("eta".to_string(), 1.0), ("r0".to_string(), r0)]
            .into_iter()
            .collect();
        let entry = gd_fractional_profile(r)?;
        let map = entry.log_map.as_ref().expect("gd entries carry a map");
        let ctrl = RunControl {
            max_iter: k_max,
            record_every,
            ..RunControl::default()
        };
        let run = match lambda_map_iterate(&name, map, v0, &ctrl) {
            Ok(run) => run,
            Err(e) => {
                outcomes.push(RunOutcome::failed(name, run_params, e.to_string()));
                continue;
            }
        };
        let PredictionTarget::PBase(predicted) = entry.prediction.target else {
            unreachable!("gd entries predict a base");
        };
        let psi = PowerFunction::Power { r };
        let measured = p_base_estimate(&run.errors, &psi, &Tail::LastHalf)?;
        let (gap, base_ok) = judge(measured, predicted, 0.02);
        let report = classify_psi(&run.errors, &ClassifyConfig::default())?;
        let model_ok = matches!(report.best_model, PowerFunction::Power { r: rhat } if (rhat - r).abs() <= 0.05);
        let reason = if !base_ok {
            Some(format!("k^{r}-root limit gap {gap} exceeds 0.02"))
        } else if !model_ok {
            Some(format!(
                "expected Power near r = {r}, classifier chose {}",
                model_label(&report.best_model)
            ))
        } else {
            None
        };
        outcomes.push(RunOutcome {
            name,
            params: run_params,
            measured,
            predicted,
            gap,
            pass: base_ok && model_ok,
            reason,
            series: vec![("kth-root".into(), root_series(&run.errors, &psi))],
            report: Some(report),
            errors: Some(run.errors),
        });
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// fig5: K-point orders on the Hoelder family
// ---------------------------------------------------------------------------

fn run_fig5(params: &Params) -> Result<Vec<RunOutcome>, ExperimentError> {
    let max_iter = param(params, "max_iter") as u64;
    let stop_lambda = param(params, "stop_lambda");
    let mut outcomes = Vec::new();

    for k_points in [2u32, 3] {
        for nu in [0.25, 0.5, 1.0] {
            let name = format!("holder-K{k_points}-nu{nu}");
            let run_params: Params = [("K".to_string(), k_points as f64), ("nu".to_string(), nu)]
                .into_iter()
                .collect();
            let entry = holder_test_function(k_points, nu)?;
            let problem = entry.problem().expect("kpoint entries carry a problem");
            let predicted = char_root(k_points, nu)?;

            let x0 = XReal::from_f64(1.0);
            let x1 = XReal::from_f64(0.8);
            let mut starts = vec![x0.clone(), x1.clone()];
            if k_points == 3 {
                // Third start from one secant step, so the method begins
                // from its own natural history.
                let f0 = problem.f(&x0).expect("start in domain");
                let f1 = problem.f(&x1).expect("start in domain");
                let step = f1
                    .mul(&x1.sub(&x0))
                    .div(&f1.sub(&f0))
                    .expect("distinct residuals at the starts");
                starts.push(x1.sub(&step));
            }
            let ctrl = RunControl {
                max_iter,
                stop_lambda,
                ..RunControl::default()
            };
            let run = match kpoint_inverse_interp(problem, &starts, &ctrl) {
                Ok(run) => run,
                Err(e) => {
                    outcomes.push(RunOutcome::failed(name, run_params, e.to_string()));
                    continue;
                }
            };
            let qseries = q_order_estimate(&run.errors)?;
            let values: Vec<f64> = qseries.values.iter().map(|(_, q)| *q).collect();
            if values.len() < 5 {
                outcomes.push(RunOutcome::failed(
                    name,
                    run_params,
                    format!("only {} q-order points (termination {:?})", values.len(), run.termination),
                ));
                continue;
            }
            let measured = median(&values[values.len() - 5..]);
            let (gap, pass) = judge(measured, predicted, 0.05);
            outcomes.push(RunOutcome {
                name,
                params: run_params,
                measured,
                predicted,
                gap,
                pass,
                reason: (!pass).then(|| format!("median tail q-order gap {gap} exceeds 0.05")),
                series: vec![("q-order".into(), qseries.values.clone())],
                report: None,
                errors: Some(run.errors),
            });
        }
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// thm41: spectral-radius validation on random contractions
// ---------------------------------------------------------------------------

#[allow(clippy::needless_range_loop)]
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect())
        .collect();
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = (0..n).map(|r| cols[i][r] * cols[j][r]).sum();
            for r in 0..n {
                cols[i][r] -= dot * cols[j][r];
            }
        }
        let norm = cols[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        for r in 0..n {
            cols[i][r] /= norm;
        }
    }
    let mut q = vec![vec![0.0; n]; n];
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            q[i][j] = *v;
        }
    }
    q
}

/// Random similarity-transformed contraction with a simple dominant
/// eigenvalue rho and all other moduli in [0.1, 0.6] rho.
#[allow(clippy::needless_range_loop)]
fn random_contraction(n: usize, rho: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut b = vec![vec![0.0; n]; n];
    b[0][0] = rho;
    let mut i = 1;
    while i < n {
        let sub = rho * rng.gen_range(0.1..0.6);
        if i + 1 < n && rng.gen_bool(0.5) {
            let theta: f64 = rng.gen_range(0.2..1.2);
            b[i][i] = sub * theta.cos();
            b[i][i + 1] = -sub * theta.sin();
            b[i + 1][i] = sub * theta.sin();
            b[i + 1][i + 1] = sub * theta.cos();
            i += 2;
        } else {
            b[i][i] = if rng.gen_bool(0.5) { sub } else { -sub };
            i += 1;
        }
    }
    let q = random_orthogonal(n, rng);
    let mut jq = vec![vec![0.0; n]; n];
    for r in 0..n {
        for c in 0..n {
            for k in 0..n {
                jq[r][c] += q[r][k] * b[k][c];
            }
        }
    }
    let mut j = vec![vec![0.0; n]; n];
    for r in 0..n {
        for c in 0..n {
            for k in 0..n {
                j[r][c] += jq[r][k] * q[c][k];
            }
        }
    }
    j
}

fn affine_problem(j: Vec<Vec<f64>>, name: String) -> VectorProblem {
    let n = j.len();
    let jac = j.clone();
    VectorProblem::new(
        name,
        move |v: &[XReal]| {
            Ok(j
                .iter()
                .map(|row| {
                    let mut acc = XReal::zero(v[0].precision());
                    for (aij, vj) in row.iter().zip(v) {
                        acc = acc.add(&XReal::from_f64(*aij).mul(vj));
                    }
                    acc
                })
                .collect())
        },
        vec![XReal::zero(512); n],
        Some(jac),
    )
}

fn run_thm41(params: &Params) -> Result<Vec<RunOutcome>, ExperimentError> {
    let trials = param(params, "trials") as u64;
    let iters = param(params, "iters") as u64;
    let seed = param(params, "seed") as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcomes = Vec::new();

    for t in 0..trials {
        let n = rng.gen_range(2..=6usize);
        let rho = rng.gen_range(0.1..0.9);
        let j = random_contraction(n, rho, &mut rng);
        let name = format!("trial-{t:02}");
        let run_params: Params = [("n".to_string(), n as f64), ("rho".to_string(), rho)]
            .into_iter()
            .collect();

        let info = spectral::dominant_projector(&j, 1e-6)?;
        // General-position start with margin, certified by the projector.
        let x0f: Vec<f64> = loop {
            let cand: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let norm = cand.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let unit: Vec<f64> = cand.iter().map(|v| v / norm).collect();
            if spectral::general_position_check(&info, &unit, 0.4)? {
                break unit;
            }
        };

        let problem = affine_problem(j, name.clone());
        let x0: Vec<XReal> = x0f.iter().map(|v| XReal::from_f64(*v)).collect();
        let ctrl = RunControl {
            max_iter: iters,
            ..RunControl::default()
        };
        let run = match fixed_point_iterate(&problem, &x0, &ctrl) {
            Ok(run) => run,
            Err(e) => {
                outcomes.push(RunOutcome::failed(name, run_params, e.to_string()));
                continue;
            }
        };
        let iterates: Vec<Vec<XReal>> = run.iterates.iter().map(|(_, v)| v.clone()).collect();
        let star = vec![XReal::zero(512); n];
        let psi = PowerFunction::Power { r: 1.0 };
        let tail = Tail::Range {
            from_k: iters / 2,
            to_k: iters,
        };
        let mut worst_gap = 0.0_f64;
        let mut measured_l2 = f64::NAN;
        let mut errors_l2 = None;
        for norm in [NormOrder::One, NormOrder::Two, NormOrder::Inf] {
            let errs = errors_from_iterates(&iterates, &star, norm)?;
            let p = p_base_estimate(&errs, &psi, &tail)?;
            worst_gap = worst_gap.max((p - info.rho).abs());
            if norm == NormOrder::Two {
                measured_l2 = p;
                errors_l2 = Some(errs);
            }
        }
        let pass = worst_gap <= 1e-2;
        outcomes.push(RunOutcome {
            name,
            params: run_params,
            measured: measured_l2,
            predicted: info.rho,
            gap: worst_gap,
            pass,
            reason: (!pass).then(|| format!("worst-norm gap {worst_gap} exceeds 1e-2")),
            report: None,
            errors: errors_l2,
            series: Vec::new(),
        });
    }

    // Nilpotent map: the iteration must land exactly on the fixed point.
    {
        let name = "nilpotent".to_string();
        let j = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
        let problem = affine_problem(j, name.clone());
        let x0 = vec![XReal::from_f64(1.0), XReal::from_f64(1.0)];
        let ctrl = RunControl {
            max_iter: 10,
            ..RunControl::default()
        };
        let run = fixed_point_iterate(&problem, &x0, &ctrl)?;
        let pass = run.termination == Termination::ExactFixedPoint;
        outcomes.push(RunOutcome {
            name,
            params: Params::new(),
            measured: 0.0,
            predicted: 0.0,
            gap: 0.0,
            pass,
            reason: (!pass).then(|| format!("termination was {:?}", run.termination)),
            report: None,
            errors: Some(run.errors),
            series: Vec::new(),
        });
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// counterexamples: the synthetic hierarchy suite
// ---------------------------------------------------------------------------

fn run_counterexamples(params: &Params) -> Result<Vec<RunOutcome>, ExperimentError> {
    let k_lin = param(params, "k_max_linear") as u64;
    let k_sup = param(params, "k_max_super") as u64;
    let linear = PowerFunction::Power { r: 1.0 };
    let half_tail = Tail::Range {
        from_k: k_lin / 2,
        to_k: k_lin,
    };
    let mut outcomes = Vec::new();

    // Family A: geometric with a k^2 factor. Q-linear (the step ratio
    // converges) but not UP (the polynomial factor drifts the Theta window).
    {
        let seq = synth_sequence(
            &SynthSpec {
                base: 0.5,
                psi: linear.clone(),
                modulation: Modulation::Power { a: 2.0 },
            },
            k_lin,
        )?;
        let factors = q_factor_estimate(&seq, 1.0)?;
        let tail: Vec<f64> = factors.iter().rev().take(100).map(|(_, f)| *f).collect();
        let spread = tail.iter().cloned().fold(f64::MIN, f64::max)
            - tail.iter().cloned().fold(f64::MAX, f64::min);
        let measured = *tail.first().expect("tail nonempty");
        let (gap, factor_ok) = judge(measured, 0.5, 1e-2);
        let q_linear = factor_ok && spread <= 1e-2;
        let up = up_theta_check(&seq, &linear, 0.5, &half_tail, 0.05, 100.0_f64.ln())?;
        let not_up = up == UpVerdict::UnboundedRatio;
        let pass = q_linear && not_up;
        outcomes.push(RunOutcome {
            name: "power-modulation".into(),
            params: [("a".to_string(), 2.0), ("base".to_string(), 0.5)].into_iter().collect(),
            measured,
            predicted: 0.5,
            gap,
            pass,
            reason: (!pass).then(|| {
                format!("expected Q-linear without UP; q-linear = {q_linear}, up-verdict = {up:?}")
            }),
            report: None,
            errors: Some(seq),
            series: vec![("q-factor".into(), factors)],
        });
    }

    // Family B: alternating k^{+-1} factor. The k-th root limit exists, but
    // the step ratio swings between k^{-2}-ish and k^{+2}-ish scales.
    {
        let seq = synth_sequence(
            &SynthSpec {
                base: 0.5,
                psi: linear.clone(),
                modulation: Modulation::Alternating { a: 1.0 },
            },
            k_lin,
        )?;
        let verdict = qup_limit_estimate(&seq, &linear, &half_tail, 5e-3);
        let (measured, qup_ok) = match verdict {
            QupVerdict::LimitExists(c) => (c, (c - 0.5).abs() <= 1e-2),
            _ => (f64::NAN, false),
        };
        let factors = q_factor_estimate(&seq, 1.0)?;
        let tail: Vec<f64> = factors.iter().rev().take(200).map(|(_, f)| *f).collect();
        let max = tail.iter().cloned().fold(f64::MIN, f64::max);
        let min = tail.iter().cloned().fold(f64::MAX, f64::min);
        let oscillates = max / min > 1e6;
        let pass = qup_ok && oscillates;
        let (gap, _) = judge(measured, 0.5, 1e-2);
        outcomes.push(RunOutcome {
            name: "alternating-modulation".into(),
            params: [("a".to_string(), 1.0), ("base".to_string(), 0.5)].into_iter().collect(),
            measured,
            predicted: 0.5,
            gap,
            pass,
            reason: (!pass).then(|| {
                format!(
                    "expected QUP with oscillating q-factor; qup-ok = {qup_ok}, \
                     factor swing = {:.3e}",
                    max / min
                )
            }),
            report: None,
            errors: Some(seq),
            series: vec![("q-factor".into(), factors)],
        });
    }

    // Family C: doubly exponential decay with a k^2 factor. QUP-superlinear,
    // yet the polynomial factor again rules out a UP constant.
    {
        let psi = PowerFunction::Exponential { r: 2.0 };
        let seq = synth_sequence(
            &SynthSpec {
                base: 0.4,
                psi: psi.clone(),
                modulation: Modulation::Power { a: 2.0 },
            },
            k_sup,
        )?;
        let verdict = qup_limit_estimate(
            &seq,
            &psi,
            &Tail::Range {
                from_k: k_sup / 2 + 1,
                to_k: k_sup,
            },
            5e-3,
        );
        let (measured, qup_ok) = match verdict {
            QupVerdict::LimitExists(c) => (c, (c - 0.4).abs() <= 1e-2),
            _ => (f64::NAN, false),
        };
        let up = up_theta_check(
            &seq,
            &psi,
            0.4,
            &Tail::Range {
                from_k: 5,
                to_k: k_sup,
            },
            0.05,
            100.0_f64.ln(),
        )?;
        let not_up = up == UpVerdict::UnboundedRatio;
        let pass = qup_ok && not_up;
        let (gap, _) = judge(measured, 0.4, 1e-2);
        outcomes.push(RunOutcome {
            name: "superlinear-modulation".into(),
            params: [("a".to_string(), 2.0), ("base".to_string(), 0.4), ("q".to_string(), 2.0)]
                .into_iter()
                .collect(),
            measured,
            predicted: 0.4,
            gap,
            pass,
            reason: (!pass).then(|| {
                format!("expected QUP-superlinear without UP; qup-ok = {qup_ok}, up-verdict = {up:?}")
            }),
            report: None,
            errors: Some(seq),
            series: Vec::new(),
        });
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// File classification (CLI back end)
// ---------------------------------------------------------------------------

/// Reads an error sequence from a CSV (`k,lambda,is_zero`) or JSON file and
/// classifies it. The format is chosen by extension, defaulting to CSV.
pub fn classify_file(path: &Path, cfg: &ClassifyConfig) -> Result<RateReport, ExperimentError> {
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    let seq = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let text = fs::read_to_string(path).map_err(io_err)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Io(format!("invalid JSON: {e}")))?;
        ErrorSequence::from_json(&value)?
    } else {
        let file = fs::File::open(path).map_err(io_err)?;
        ErrorSequence::read_csv(label, BufReader::new(file))?
    };
    Ok(classify_psi(&seq, cfg)?)
}

/// Renders a classification for terminal output.
pub fn format_rate_report(report: &RateReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("model:     {}\n", model_label(&report.best_model)));
    out.push_str(&format!("p-base:    {:.6}\n", report.p_base));
    out.push_str(&format!("residual:  {:.3e}\n", report.residual));
    match &report.qup_verdict {
        QupVerdict::LimitExists(c) => out.push_str(&format!("qup:       limit exists, {c:.6}\n")),
        QupVerdict::NoLimit => out.push_str("qup:       no limit in the tail window\n"),
        QupVerdict::InsufficientData => out.push_str("qup:       insufficient data\n"),
    }
    match &report.up_verdict {
        UpVerdict::ThetaBounded { c, low, high } => out.push_str(&format!(
            "up:        Theta-bounded, base {c:.6}, window [{low:.3e}, {high:.3e}]\n"
        )),
        UpVerdict::UnboundedRatio => out.push_str("up:        ratio drifts without bound\n"),
        UpVerdict::InsufficientData => out.push_str("up:        insufficient data\n"),
    }
    if let Some(b) = &report.boundary {
        out.push_str(&format!("boundary:  {b:?}\n"));
    }
    if !report.alternatives.is_empty() {
        out.push_str("alternatives:\n");
        for (model, rms) in &report.alternatives {
            out.push_str(&format!("  {:24} rms {rms:.3e}\n", model_label(model)));
        }
    }
    out
}
