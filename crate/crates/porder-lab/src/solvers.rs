//! Iterative method drivers: fixed-point iteration, Newton's method, radial
//! gradient descent, and K-point inverse-interpolation root finding.
//!
//! Every driver runs in [`XReal`] arithmetic, measures `lambda_k` against the
//! problem's known solution at each step, and applies one shared termination
//! policy (success threshold, iteration cap, exact arrival, divergence
//! detection, domain exit). The histories double as [`ErrorSequence`]s, so
//! runs feed straight into the estimators in [`crate::rate`].
//!
//! For designed problems whose error recurrence has a closed log-domain form,
//! [`lambda_map_iterate`] drives that recurrence directly in f64; direct
//! iteration loses all relative precision in `lambda` once `xi_k` stops
//! moving in representable steps, while the map costs nothing per iteration
//! and is exact to f64 rounding.

use std::collections::VecDeque;
use std::io::Write;

use crate::numerics::{to_log_error, LogError, NumericError, XReal};
use crate::rate::{ErrorSequence, RateError};

/// Recorded-step divergence detection starts after this many iterations.
pub const DIVERGENCE_BURN_IN: u64 = 5;
/// Consecutive recorded decreases of `lambda` that declare divergence.
pub const DIVERGENCE_RUN: u32 = 10;

/// Errors raised before a run produces any usable history.
#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid run control: {0}")]
    InvalidControl(String),
    #[error("start out of domain: {0}")]
    OutOfDomain(String),
    #[error("need at least {needed} initial points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("interpolation nodes coincide")]
    DegenerateNodes,
    #[error("numeric failure: {0}")]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Why a run stopped. Runs never fail once started: error events terminate
/// with the partial history intact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `lambda_k` reached `stop_lambda`.
    StopThreshold,
    MaxIter,
    /// The iterate hit the solution exactly.
    ExactFixedPoint,
    Diverged,
    /// The next iterate left the domain, or the map failed to evaluate.
    DomainExit,
    DerivativeZero,
    /// Two interpolation nodes collided mid-run.
    DegenerateNodes,
}

/// Stopping and recording policy shared by all drivers.
#[derive(Debug, Clone)]
pub struct RunControl {
    pub max_iter: u64,
    /// Success: stop once `lambda_k >= stop_lambda` (error at most
    /// `e^-stop_lambda`).
    pub stop_lambda: f64,
    /// Divergence floor: abort when `lambda_k <= divergence_lambda` after the
    /// burn-in ( the default 0 means "error magnitude reached 1").
    pub divergence_lambda: f64,
    /// Record every n-th iterate (the final one is always recorded).
    pub record_every: u64,
}

impl Default for RunControl {
    fn default() -> Self {
        RunControl {
            max_iter: 500,
            stop_lambda: 5000.0,
            divergence_lambda: 0.0,
            record_every: 1,
        }
    }
}

impl RunControl {
    fn validate(&self) -> Result<(), SolverError> {
        if self.max_iter < 1 {
            return Err(SolverError::InvalidControl("max_iter must be >= 1".into()));
        }
        if self.stop_lambda <= 0.0 {
            return Err(SolverError::InvalidControl(
                "stop_lambda must be positive".into(),
            ));
        }
        if self.record_every < 1 {
            return Err(SolverError::InvalidControl(
                "record_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Problems
// ---------------------------------------------------------------------------

type ScalarFn = Box<dyn Fn(&XReal) -> Result<XReal, NumericError> + Send + Sync>;
type VectorFn = Box<dyn Fn(&[XReal]) -> Result<Vec<XReal>, NumericError> + Send + Sync>;

/// A scalar root-finding problem with a known solution for error measurement.
pub struct ScalarProblem {
    pub name: String,
    f: ScalarFn,
    df: ScalarFn,
    pub root: XReal,
    domain: (XReal, XReal),
}

impl ScalarProblem {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&XReal) -> Result<XReal, NumericError> + Send + Sync + 'static,
        df: impl Fn(&XReal) -> Result<XReal, NumericError> + Send + Sync + 'static,
        root: XReal,
        domain: (f64, f64),
    ) -> Self {
        ScalarProblem {
            name: name.into(),
            f: Box::new(f),
            df: Box::new(df),
            root,
            domain: (XReal::from_f64(domain.0), XReal::from_f64(domain.1)),
        }
    }

    pub fn f(&self, x: &XReal) -> Result<XReal, NumericError> {
        (self.f)(x)
    }

    pub fn df(&self, x: &XReal) -> Result<XReal, NumericError> {
        (self.df)(x)
    }

    /// Open-interval membership.
    pub fn contains(&self, x: &XReal) -> bool {
        self.domain.0 < *x && *x < self.domain.1
    }
}

/// A fixed-point map with a known fixed point; the Jacobian at the fixed
/// point, when analytically available, feeds the spectral predictions.
pub struct VectorProblem {
    pub name: String,
    g: VectorFn,
    pub fixed_point: Vec<XReal>,
    pub jacobian_at_star: Option<Vec<Vec<f64>>>,
}

impl VectorProblem {
    pub fn new(
        name: impl Into<String>,
        g: impl Fn(&[XReal]) -> Result<Vec<XReal>, NumericError> + Send + Sync + 'static,
        fixed_point: Vec<XReal>,
        jacobian_at_star: Option<Vec<Vec<f64>>>,
    ) -> Self {
        VectorProblem {
            name: name.into(),
            g: Box::new(g),
            fixed_point,
            jacobian_at_star,
        }
    }

    pub fn apply(&self, x: &[XReal]) -> Result<Vec<XReal>, NumericError> {
        (self.g)(x)
    }
}

// ---------------------------------------------------------------------------
// Run histories
// ---------------------------------------------------------------------------

/// Recorded history of a scalar run.
pub struct ScalarRun {
    pub name: String,
    pub iterates: Vec<(u64, XReal)>,
    pub errors: ErrorSequence,
    pub termination: Termination,
}

/// Recorded history of a vector run; `errors` carries the l2 magnitudes
/// (other norms follow from `iterates` via
/// [`crate::rate::errors_from_iterates`] on unthinned runs).
pub struct VectorRun {
    pub name: String,
    pub iterates: Vec<(u64, Vec<XReal>)>,
    pub errors: ErrorSequence,
    pub termination: Termination,
}

/// History of a log-domain recurrence run; there are no iterates, the
/// recurrence acts on `lambda` itself.
pub struct LambdaRun {
    pub name: String,
    pub errors: ErrorSequence,
    pub termination: Termination,
}

impl ScalarRun {
    /// CSV form `k,x,lambda`; an exact arrival leaves the lambda field empty.
    pub fn write_csv(&self, w: impl Write) -> Result<(), SolverError> {
        write_run_csv(w, &["x"], self.iterates.iter().map(|(k, x)| (*k, vec![x.clone()])), &self.errors)
    }
}

impl VectorRun {
    /// CSV form `k,x0,...,x{n-1},lambda`.
    pub fn write_csv(&self, w: impl Write) -> Result<(), SolverError> {
        let n = self.iterates.first().map_or(0, |(_, x)| x.len());
        let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        write_run_csv(
            w,
            &name_refs,
            self.iterates.iter().map(|(k, x)| (*k, x.clone())),
            &self.errors,
        )
    }
}

fn write_run_csv(
    w: impl Write,
    component_names: &[&str],
    iterates: impl Iterator<Item = (u64, Vec<XReal>)>,
    errors: &ErrorSequence,
) -> Result<(), SolverError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["k".to_string()];
    header.extend(component_names.iter().map(|s| s.to_string()));
    header.push("lambda".to_string());
    out.write_record(&header)
        .map_err(|e| SolverError::InvalidControl(e.to_string()))?;
    let lambda_by_k: std::collections::HashMap<u64, &LogError> =
        errors.entries().iter().map(|(k, e)| (*k, e)).collect();
    for (k, xs) in iterates {
        let mut row = vec![k.to_string()];
        row.extend(xs.iter().map(|x| x.to_decimal_string()));
        let lambda = lambda_by_k
            .get(&k)
            .and_then(|e| e.lambda())
            .map(|l| l.to_decimal_string())
            .unwrap_or_default();
        row.push(lambda);
        out.write_record(&row)
            .map_err(|e| SolverError::InvalidControl(e.to_string()))?;
    }
    out.flush()
        .map_err(|e| SolverError::InvalidControl(e.to_string()))
}

// ---------------------------------------------------------------------------
// Shared stepping machinery
// ---------------------------------------------------------------------------

enum StepNext<X> {
    Next(X),
    Exit(Termination),
}

type RunParts<X> = (Vec<(u64, X)>, ErrorSequence, Termination);

struct Recorder<X> {
    iterates: Vec<(u64, X)>,
    entries: Vec<(u64, LogError)>,
    prev_lambda: Option<f64>,
    down_run: u32,
}

impl<X: Clone> Recorder<X> {
    fn new() -> Self {
        Recorder {
            iterates: Vec::new(),
            entries: Vec::new(),
            prev_lambda: None,
            down_run: 0,
        }
    }

    /// Records the iterate if due and decides whether the run stops here.
    fn observe(&mut self, k: u64, x: &X, err: LogError, ctrl: &RunControl) -> Option<Termination> {
        let due = k.is_multiple_of(ctrl.record_every);
        let exact = err.is_exact_zero();
        let lam = err.lambda_f64();
        let mut verdict = None;

        if exact {
            verdict = Some(Termination::ExactFixedPoint);
        } else if lam >= ctrl.stop_lambda {
            verdict = Some(Termination::StopThreshold);
        } else if due && k >= DIVERGENCE_BURN_IN {
            if lam <= ctrl.divergence_lambda {
                verdict = Some(Termination::Diverged);
            } else {
                if let Some(prev) = self.prev_lambda {
                    if lam < prev {
                        self.down_run += 1;
                    } else {
                        self.down_run = 0;
                    }
                }
                if self.down_run >= DIVERGENCE_RUN {
                    verdict = Some(Termination::Diverged);
                }
            }
        }
        if verdict.is_none() && k >= ctrl.max_iter {
            verdict = Some(Termination::MaxIter);
        }

        if due || verdict.is_some() {
            if self.entries.last().map(|(lk, _)| *lk) != Some(k) {
                self.iterates.push((k, x.clone()));
                self.entries.push((k, err));
            }
            if !exact {
                self.prev_lambda = Some(lam);
            }
        }
        verdict
    }

    fn finish(self, name: &str, termination: Termination) -> RunParts<X> {
        let seq = ErrorSequence::new(name, self.entries)
            .expect("recorder builds strictly increasing indices");
        (self.iterates, seq, termination)
    }
}

fn drive<X: Clone>(
    name: &str,
    x0: X,
    err_of: impl Fn(&X) -> Result<LogError, NumericError>,
    mut step: impl FnMut(u64, &X) -> StepNext<X>,
    ctrl: &RunControl,
) -> Result<RunParts<X>, SolverError> {
    ctrl.validate()?;
    let mut rec = Recorder::new();
    let mut x = x0;
    let err = err_of(&x)?;
    if let Some(t) = rec.observe(0, &x, err, ctrl) {
        return Ok(rec.finish(name, t));
    }
    let mut k = 0;
    loop {
        k += 1;
        match step(k, &x) {
            StepNext::Next(nx) => {
                x = nx;
                match err_of(&x) {
                    Ok(err) => {
                        if let Some(t) = rec.observe(k, &x, err, ctrl) {
                            return Ok(rec.finish(name, t));
                        }
                    }
                    Err(_) => return Ok(rec.finish(name, Termination::DomainExit)),
                }
            }
            StepNext::Exit(t) => return Ok(rec.finish(name, t)),
        }
    }
}

fn scalar_error(x: &XReal, root: &XReal) -> Result<LogError, NumericError> {
    to_log_error(&x.sub(root).abs())
}

fn vector_error(x: &[XReal], star: &[XReal]) -> Result<LogError, NumericError> {
    let mut acc = XReal::zero(x.first().map_or(crate::numerics::DEFAULT_PRECISION, XReal::precision));
    for (a, b) in x.iter().zip(star) {
        let d = a.sub(b);
        acc = acc.add(&d.mul(&d));
    }
    to_log_error(&acc.sqrt()?)
}

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

/// Iterates `x_{k+1} = g(x_k)` for a vector fixed-point map.
pub fn fixed_point_iterate(
    problem: &VectorProblem,
    x0: &[XReal],
    ctrl: &RunControl,
) -> Result<VectorRun, SolverError> {
    if x0.len() != problem.fixed_point.len() {
        return Err(SolverError::OutOfDomain(format!(
            "x0 has dimension {}, fixed point has {}",
            x0.len(),
            problem.fixed_point.len()
        )));
    }
    let star = problem.fixed_point.clone();
    let (iterates, errors, termination) = drive(
        &problem.name,
        x0.to_vec(),
        |x| vector_error(x, &star),
        |_, x| match problem.apply(x) {
            Ok(nx) => StepNext::Next(nx),
            Err(_) => StepNext::Exit(Termination::DomainExit),
        },
        ctrl,
    )?;
    Ok(VectorRun {
        name: problem.name.clone(),
        iterates,
        errors,
        termination,
    })
}

/// Scalar counterpart of [`fixed_point_iterate`] for maps with a known fixed
/// point.
pub fn fixed_point_scalar(
    name: &str,
    g: impl Fn(&XReal) -> Result<XReal, NumericError>,
    fixed_point: &XReal,
    x0: XReal,
    ctrl: &RunControl,
) -> Result<ScalarRun, SolverError> {
    let (iterates, errors, termination) = drive(
        name,
        x0,
        |x| scalar_error(x, fixed_point),
        |_, x| match g(x) {
            Ok(nx) => StepNext::Next(nx),
            Err(_) => StepNext::Exit(Termination::DomainExit),
        },
        ctrl,
    )?;
    Ok(ScalarRun {
        name: name.to_string(),
        iterates,
        errors,
        termination,
    })
}

/// Newton's method `x_{k+1} = x_k - f(x_k)/f'(x_k)` on a scalar problem.
pub fn newton_scalar(
    problem: &ScalarProblem,
    x0: XReal,
    ctrl: &RunControl,
) -> Result<ScalarRun, SolverError> {
    if !problem.contains(&x0) {
        return Err(SolverError::OutOfDomain(format!(
            "x0 = {} outside the problem domain",
            x0.to_decimal_string()
        )));
    }
    let (iterates, errors, termination) = drive(
        &problem.name,
        x0,
        |x| scalar_error(x, &problem.root),
        |_, x| {
            let fx = match problem.f(x) {
                Ok(v) => v,
                Err(_) => return StepNext::Exit(Termination::DomainExit),
            };
            let dfx = match problem.df(x) {
                Ok(v) => v,
                Err(_) => return StepNext::Exit(Termination::DomainExit),
            };
            if dfx.is_zero() {
                return StepNext::Exit(Termination::DerivativeZero);
            }
            let next = match fx.div(&dfx) {
                Ok(q) => x.sub(&q),
                Err(_) => return StepNext::Exit(Termination::DomainExit),
            };
            if problem.contains(&next) {
                StepNext::Next(next)
            } else {
                StepNext::Exit(Termination::DomainExit)
            }
        },
        ctrl,
    )?;
    Ok(ScalarRun {
        name: problem.name.clone(),
        iterates,
        errors,
        termination,
    })
}

/// Gradient descent on a radial objective, reduced to the radius recurrence
/// `r_{k+1} = |r_k - eta f(r_k)|` where `f` is the radial gradient profile.
/// The fixed point is `r = 0`.
pub fn gradient_descent_radial(
    name: &str,
    grad_profile: impl Fn(&XReal) -> Result<XReal, NumericError>,
    r0: XReal,
    eta: &XReal,
    ctrl: &RunControl,
) -> Result<ScalarRun, SolverError> {
    if r0.sign() <= 0 {
        return Err(SolverError::OutOfDomain("r0 must be positive".into()));
    }
    if eta.sign() <= 0 {
        return Err(SolverError::OutOfDomain("eta must be positive".into()));
    }
    let zero = XReal::zero(r0.precision());
    let (iterates, errors, termination) = drive(
        name,
        r0,
        |r| scalar_error(r, &zero),
        |_, r| match grad_profile(r) {
            Ok(fr) => StepNext::Next(r.sub(&eta.mul(&fr)).abs()),
            Err(_) => StepNext::Exit(Termination::DomainExit),
        },
        ctrl,
    )?;
    Ok(ScalarRun {
        name: name.to_string(),
        iterates,
        errors,
        termination,
    })
}

/// Drives a closed-form log-domain error recurrence `lambda -> map(lambda)`.
/// `None` from the map is a domain exit.
pub fn lambda_map_iterate(
    name: &str,
    map: impl Fn(f64) -> Option<f64>,
    lambda0: f64,
    ctrl: &RunControl,
) -> Result<LambdaRun, SolverError> {
    let (_, errors, termination) = drive(
        name,
        lambda0,
        |l| Ok(LogError::from_lambda(XReal::from_f64(*l))),
        |_, l| match map(*l) {
            Some(next) if next.is_finite() => StepNext::Next(next),
            _ => StepNext::Exit(Termination::DomainExit),
        },
        ctrl,
    )?;
    Ok(LambdaRun {
        name: name.to_string(),
        errors,
        termination,
    })
}

// ---------------------------------------------------------------------------
// Divided differences and K-point inverse interpolation
// ---------------------------------------------------------------------------

/// Newton-form interpolating polynomial `P(y)` through `(y_i, x_i)` pairs.
pub struct NewtonPoly {
    nodes: Vec<XReal>,
    coeffs: Vec<XReal>,
}

impl NewtonPoly {
    pub fn eval(&self, y: &XReal) -> XReal {
        let n = self.coeffs.len();
        let mut acc = self.coeffs[n - 1].clone();
        for i in (0..n - 1).rev() {
            acc = acc.mul(&y.sub(&self.nodes[i])).add(&self.coeffs[i]);
        }
        acc
    }

    pub fn coefficients(&self) -> &[XReal] {
        &self.coeffs
    }
}

/// Builds the divided-difference table for pairs `(y_i, x_i)`: the returned
/// polynomial satisfies `P(y_i) = x_i` exactly to working precision.
pub fn divided_differences(pairs: &[(XReal, XReal)]) -> Result<NewtonPoly, SolverError> {
    let n = pairs.len();
    if n == 0 {
        return Err(SolverError::TooFewPoints { needed: 1, got: 0 });
    }
    let nodes: Vec<XReal> = pairs.iter().map(|(y, _)| y.clone()).collect();
    let mut coeffs: Vec<XReal> = pairs.iter().map(|(_, x)| x.clone()).collect();
    for j in 1..n {
        for i in (j..n).rev() {
            let num = coeffs[i].sub(&coeffs[i - 1]);
            let den = nodes[i].sub(&nodes[i - j]);
            if den.is_zero() {
                return Err(SolverError::DegenerateNodes);
            }
            coeffs[i] = num.div(&den).map_err(SolverError::Numeric)?;
        }
    }
    Ok(NewtonPoly { nodes, coeffs })
}

/// K-point inverse interpolation: each step interpolates `x` as a polynomial
/// in `y = f(x)` through the K most recent iterates and takes `x_{k+1} =
/// P(0)`. `K = 2` is the secant method, `K = 3` inverse-quadratic. Retention
/// is strictly most-recent; there is no bracketing or safeguarding.
pub fn kpoint_inverse_interp(
    problem: &ScalarProblem,
    initial_points: &[XReal],
    ctrl: &RunControl,
) -> Result<ScalarRun, SolverError> {
    ctrl.validate()?;
    let kk = initial_points.len();
    if kk < 2 {
        return Err(SolverError::TooFewPoints {
            needed: 2,
            got: kk,
        });
    }
    for x in initial_points {
        if !problem.contains(x) {
            return Err(SolverError::OutOfDomain(format!(
                "initial point {} outside the domain",
                x.to_decimal_string()
            )));
        }
    }

    let mut rec: Recorder<XReal> = Recorder::new();
    let mut window: VecDeque<(XReal, XReal)> = VecDeque::with_capacity(kk);
    for (i, x) in initial_points.iter().enumerate() {
        let err = scalar_error(x, &problem.root)?;
        if let Some(t) = rec.observe(i as u64, x, err, ctrl) {
            let (iterates, errors, termination) = rec.finish(&problem.name, t);
            return Ok(ScalarRun {
                name: problem.name.clone(),
                iterates,
                errors,
                termination,
            });
        }
        let y = problem.f(x)?;
        window.push_back((x.clone(), y));
    }
    for i in 0..kk {
        for j in (i + 1)..kk {
            if window[i].1 == window[j].1 {
                return Err(SolverError::DegenerateNodes);
            }
        }
    }

    let mut k = kk as u64 - 1;
    let finish = |rec: Recorder<XReal>, t: Termination| {
        let (iterates, errors, termination) = rec.finish(&problem.name, t);
        ScalarRun {
            name: problem.name.clone(),
            iterates,
            errors,
            termination,
        }
    };
    loop {
        k += 1;
        let mut degenerate = false;
        'outer: for i in 0..kk {
            for j in (i + 1)..kk {
                if window[i].1 == window[j].1 {
                    degenerate = true;
                    break 'outer;
                }
            }
        }
        if degenerate {
            return Ok(finish(rec, Termination::DegenerateNodes));
        }
        let pairs: Vec<(XReal, XReal)> =
            window.iter().map(|(x, y)| (y.clone(), x.clone())).collect();
        let poly = match divided_differences(&pairs) {
            Ok(p) => p,
            Err(SolverError::DegenerateNodes) => {
                return Ok(finish(rec, Termination::DegenerateNodes))
            }
            Err(e) => return Err(e),
        };
        let next = poly.eval(&XReal::zero(pairs[0].0.precision()));
        if !problem.contains(&next) {
            return Ok(finish(rec, Termination::DomainExit));
        }
        let err = scalar_error(&next, &problem.root)?;
        if let Some(t) = rec.observe(k, &next, err, ctrl) {
            return Ok(finish(rec, t));
        }
        let y = match problem.f(&next) {
            Ok(v) => v,
            Err(_) => return Ok(finish(rec, Termination::DomainExit)),
        };
        window.pop_front();
        window.push_back((next, y));
    }
}
