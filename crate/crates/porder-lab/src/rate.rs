//! Error sequences, rate models, and the estimators that classify them.
//!
//! The central question this module answers: given per-iteration error
//! magnitudes `xi_k`, for which power function `psi(k) -> inf` does
//! `xi_k^(1/psi(k))` settle to a constant `C` in (0,1)? The limsup of that
//! root is the base; whether the plain limit exists, and whether the error is
//! within constant factors of `C^psi(k)`, refine the classification.
//!
//! Everything here works on the log-domain magnitudes `lambda_k = -ln xi_k`
//! in fresh f64 precision: by the time a rate is being *estimated* the heavy
//! lifting (keeping `xi_k` representable at all) has already happened in
//! [`crate::numerics`].

use std::fmt;
use std::io::{BufRead, Write};

use crate::numerics::{LogError, NumericError, XReal};

/// Errors from sequence construction, estimation, and (de)serialization.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RateError {
    #[error("insufficient data: needed {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("iteration indices must strictly increase (k = {0} repeated or out of order)")]
    NonIncreasingIndex(u64),
    #[error("an exact-zero entry must be the last entry")]
    ZeroNotLast,
    #[error("dimension mismatch: iterate has {got} components, x_star has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("numeric failure: {0}")]
    Numeric(#[from] NumericError),
    #[error("i/o failure: {0}")]
    Io(String),
}

// ---------------------------------------------------------------------------
// Error sequences
// ---------------------------------------------------------------------------

/// Ordered per-iteration error magnitudes in log domain.
///
/// Indices are strictly increasing (recorded iterations may be thinned, so
/// gaps are expected) and at most one entry is an exact zero, necessarily the
/// last: a method that hits the solution exactly has terminated.
#[derive(Debug, Clone)]
pub struct ErrorSequence {
    entries: Vec<(u64, LogError)>,
    label: String,
    meta: Option<String>,
}

impl ErrorSequence {
    pub fn new(
        label: impl Into<String>,
        entries: Vec<(u64, LogError)>,
    ) -> Result<Self, RateError> {
        let mut last_k: Option<u64> = None;
        for (i, (k, err)) in entries.iter().enumerate() {
            if let Some(prev) = last_k {
                if *k <= prev {
                    return Err(RateError::NonIncreasingIndex(*k));
                }
            }
            last_k = Some(*k);
            if err.is_exact_zero() && i + 1 != entries.len() {
                return Err(RateError::ZeroNotLast);
            }
        }
        Ok(ErrorSequence {
            entries,
            label: label.into(),
            meta: None,
        })
    }

    /// Convenience constructor from plain `(k, lambda)` pairs.
    pub fn from_lambdas(
        label: impl Into<String>,
        lambdas: impl IntoIterator<Item = (u64, f64)>,
    ) -> Self {
        let entries = lambdas
            .into_iter()
            .map(|(k, l)| (k, LogError::from_lambda(XReal::from_f64(l))))
            .collect();
        // Monotone indices are the caller's responsibility here; the checked
        // path is `new`.
        ErrorSequence {
            entries,
            label: label.into(),
            meta: None,
        }
    }

    pub fn with_meta(mut self, meta: impl Into<String>) -> Self {
        self.meta = Some(meta.into());
        self
    }

    pub fn entries(&self) -> &[(u64, LogError)] {
        &self.entries
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn meta(&self) -> Option<&str> {
        self.meta.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Finite `(k, lambda)` pairs after discarding `k < burn_in` and any
    /// exact-zero terminator.
    pub fn tail_points(&self, burn_in: u64) -> Vec<(f64, f64)> {
        self.entries
            .iter()
            .filter(|(k, e)| *k >= burn_in && !e.is_exact_zero())
            .map(|(k, e)| (*k as f64, e.lambda_f64()))
            .filter(|(_, l)| l.is_finite())
            .collect()
    }

    /// Writes the CSV form: header `k,lambda,is_zero`, lambda in the decimal
    /// serialization format (empty for the exact-zero terminator).
    pub fn write_csv(&self, w: impl Write) -> Result<(), RateError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "lambda", "is_zero"])
            .map_err(|e| RateError::Io(e.to_string()))?;
        for (k, err) in &self.entries {
            let lambda = match err.lambda() {
                Some(l) => l.to_decimal_string(),
                None => String::new(),
            };
            let z = if err.is_exact_zero() { "true" } else { "false" };
            out.write_record([k.to_string().as_str(), lambda.as_str(), z])
                .map_err(|e| RateError::Io(e.to_string()))?;
        }
        out.flush().map_err(|e| RateError::Io(e.to_string()))
    }

    /// Reads the CSV form; parse failures name the line and field.
    pub fn read_csv(label: impl Into<String>, r: impl BufRead) -> Result<Self, RateError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let mut entries = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2; // header is line 1
            let record = record.map_err(|e| RateError::Parse {
                line,
                field: "<record>".into(),
                message: e.to_string(),
            })?;
            let field = |idx: usize, name: &str| -> Result<String, RateError> {
                record
                    .get(idx)
                    .map(str::to_owned)
                    .ok_or_else(|| RateError::Parse {
                        line,
                        field: name.into(),
                        message: "missing field".into(),
                    })
            };
            let k: u64 = field(0, "k")?.trim().parse().map_err(|e| RateError::Parse {
                line,
                field: "k".into(),
                message: format!("{e}"),
            })?;
            let is_zero = match field(2, "is_zero")?.trim() {
                "true" | "1" => true,
                "false" | "0" | "" => false,
                other => {
                    return Err(RateError::Parse {
                        line,
                        field: "is_zero".into(),
                        message: format!("expected true/false, got `{other}`"),
                    })
                }
            };
            let err = if is_zero {
                LogError::exact_zero()
            } else {
                let raw = field(1, "lambda")?;
                let lam = XReal::parse_decimal(&raw, crate::numerics::DEFAULT_PRECISION)
                    .map_err(|e| RateError::Parse {
                        line,
                        field: "lambda".into(),
                        message: e.to_string(),
                    })?;
                LogError::from_lambda(lam)
            };
            entries.push((k, err));
        }
        ErrorSequence::new(label, entries)
    }

    /// JSON mirror of the CSV schema: `{label, meta, entries: [{k, lambda, is_zero}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "label": self.label,
            "meta": self.meta,
            "entries": self.entries.iter().map(|(k, e)| serde_json::json!({
                "k": k,
                "lambda": e.lambda().map(|l| l.to_decimal_string()),
                "is_zero": e.is_exact_zero(),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, RateError> {
        let bad = |field: &str, message: &str| RateError::Parse {
            line: 0,
            field: field.into(),
            message: message.into(),
        };
        let label = v
            .get("label")
            .and_then(|l| l.as_str())
            .ok_or_else(|| bad("label", "missing or not a string"))?;
        let entries_json = v
            .get("entries")
            .and_then(|e| e.as_array())
            .ok_or_else(|| bad("entries", "missing or not an array"))?;
        let mut entries = Vec::with_capacity(entries_json.len());
        for item in entries_json {
            let k = item
                .get("k")
                .and_then(|k| k.as_u64())
                .ok_or_else(|| bad("k", "missing or not an integer"))?;
            let is_zero = item
                .get("is_zero")
                .and_then(|z| z.as_bool())
                .unwrap_or(false);
            let err = if is_zero {
                LogError::exact_zero()
            } else {
                let raw = item
                    .get("lambda")
                    .and_then(|l| l.as_str())
                    .ok_or_else(|| bad("lambda", "missing or not a string"))?;
                LogError::from_lambda(
                    XReal::parse_decimal(raw, crate::numerics::DEFAULT_PRECISION)
                        .map_err(|e| bad("lambda", &e.to_string()))?,
                )
            };
            entries.push((k, err));
        }
        let mut seq = ErrorSequence::new(label, entries)?;
        if let Some(meta) = v.get("meta").and_then(|m| m.as_str()) {
            seq = seq.with_meta(meta);
        }
        Ok(seq)
    }
}

/// Norm order for extracting error magnitudes from vector iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormOrder {
    One,
    Two,
    Inf,
}

/// Extracts `lambda_k = -ln ||x_k - x_star||_p` from an iterate history.
///
/// An iterate that coincides with `x_star` exactly produces the exact-zero
/// terminator and truncates the sequence there.
pub fn errors_from_iterates(
    iterates: &[Vec<XReal>],
    x_star: &[XReal],
    p: NormOrder,
) -> Result<ErrorSequence, RateError> {
    let n = x_star.len();
    if n == 0 {
        return Err(RateError::Domain("x_star must have dimension >= 1".into()));
    }
    let mut entries = Vec::with_capacity(iterates.len());
    for (k, x) in iterates.iter().enumerate() {
        if x.len() != n {
            return Err(RateError::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let diffs: Vec<XReal> = x.iter().zip(x_star).map(|(a, b)| a.sub(b).abs()).collect();
        let norm = match p {
            NormOrder::One => {
                let mut acc = XReal::zero(diffs[0].precision());
                for d in &diffs {
                    acc = acc.add(d);
                }
                acc
            }
            NormOrder::Two => {
                let mut acc = XReal::zero(diffs[0].precision());
                for d in &diffs {
                    acc = acc.add(&d.mul(d));
                }
                acc.sqrt()?
            }
            NormOrder::Inf => {
                let mut best = diffs[0].clone();
                for d in &diffs[1..] {
                    if *d > best {
                        best = d.clone();
                    }
                }
                best
            }
        };
        let err = crate::numerics::to_log_error(&norm)?;
        let exact = err.is_exact_zero();
        entries.push((k as u64, err));
        if exact {
            break;
        }
    }
    ErrorSequence::new("iterate-errors", entries)
}

// ---------------------------------------------------------------------------
// Power functions
// ---------------------------------------------------------------------------

/// A rate model `psi(k)`: the candidate growth shapes against which error
/// sequences are classified. Evaluation is defined for `k >= 2`; smaller
/// arguments are clamped to 2 so every model stays positive.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerFunction {
    /// `psi(k) = r^k`, requires `r > 1`.
    Exponential { r: f64 },
    /// `psi(k) = k^r`, requires `r > 0`.
    Power { r: f64 },
    /// `psi(k) = ln k`.
    Logarithmic,
    /// `psi(k) = k ln k`.
    Linearithmic,
    /// `psi(k) = k / ln k`.
    AntiLinearithmic,
    /// `psi(k) = k^p (ln k)^s`.
    PolyLog { p: f64, s: f64 },
    /// Tabulated `(k, psi(k))` values; piecewise-linear between nodes,
    /// constant-slope extrapolation beyond the ends.
    Custom(Vec<(u64, f64)>),
}

impl PowerFunction {
    pub fn exponential(r: f64) -> Result<Self, RateError> {
        if r > 1.0 && r.is_finite() {
            Ok(PowerFunction::Exponential { r })
        } else {
            Err(RateError::Domain(format!(
                "exponential model requires r > 1, got {r}"
            )))
        }
    }

    pub fn power(r: f64) -> Result<Self, RateError> {
        if r > 0.0 && r.is_finite() {
            Ok(PowerFunction::Power { r })
        } else {
            Err(RateError::Domain(format!(
                "power model requires r > 0, got {r}"
            )))
        }
    }

    pub fn custom(table: Vec<(u64, f64)>) -> Result<Self, RateError> {
        if table.len() < 2 {
            return Err(RateError::Domain(
                "custom model needs at least two nodes".into(),
            ));
        }
        if table.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(RateError::Domain(
                "custom model nodes must have strictly increasing k".into(),
            ));
        }
        if table.iter().any(|(_, v)| !v.is_finite() || *v <= 0.0) {
            return Err(RateError::Domain(
                "custom model values must be positive and finite".into(),
            ));
        }
        Ok(PowerFunction::Custom(table))
    }

    pub fn eval(&self, k: u64) -> f64 {
        let kf = k.max(2) as f64;
        match self {
            PowerFunction::Exponential { r } => r.powf(kf),
            PowerFunction::Power { r } => kf.powf(*r),
            PowerFunction::Logarithmic => kf.ln(),
            PowerFunction::Linearithmic => kf * kf.ln(),
            PowerFunction::AntiLinearithmic => kf / kf.ln(),
            PowerFunction::PolyLog { p, s } => kf.powf(*p) * kf.ln().powf(*s),
            PowerFunction::Custom(table) => {
                let kq = k.max(2);
                match table.binary_search_by_key(&kq, |(node, _)| *node) {
                    Ok(i) => table[i].1,
                    Err(0) => {
                        let (k0, v0) = table[0];
                        let (k1, v1) = table[1];
                        let slope = (v1 - v0) / (k1 - k0) as f64;
                        (v0 + slope * (kq as f64 - k0 as f64)).max(f64::MIN_POSITIVE)
                    }
                    Err(i) if i == table.len() => {
                        let (k0, v0) = table[table.len() - 2];
                        let (k1, v1) = table[table.len() - 1];
                        let slope = (v1 - v0) / (k1 - k0) as f64;
                        v1 + slope * (kq as f64 - k1 as f64)
                    }
                    Err(i) => {
                        let (k0, v0) = table[i - 1];
                        let (k1, v1) = table[i];
                        let t = (kq - k0) as f64 / (k1 - k0) as f64;
                        v0 + t * (v1 - v0)
                    }
                }
            }
        }
    }

    /// Short display name used in reports and CLI output.
    pub fn name(&self) -> String {
        match self {
            PowerFunction::Exponential { r } => format!("Exponential({r:.6})"),
            PowerFunction::Power { r } => format!("Power({r:.6})"),
            PowerFunction::Logarithmic => "Logarithmic".into(),
            PowerFunction::Linearithmic => "Linearithmic".into(),
            PowerFunction::AntiLinearithmic => "AntiLinearithmic".into(),
            PowerFunction::PolyLog { p, s } => format!("PolyLog({p:.6}, {s:.6})"),
            PowerFunction::Custom(_) => "Custom".into(),
        }
    }
}

impl fmt::Display for PowerFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

// ---------------------------------------------------------------------------
// Windows and estimator configuration
// ---------------------------------------------------------------------------

/// Tail-window convention for limsup surrogates and fits.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Tail {
    /// Last half of the available points, but never fewer than 8.
    #[default]
    LastHalf,
    /// Last `n` points.
    LastN(usize),
    /// Points with `from_k <= k <= to_k`.
    Range { from_k: u64, to_k: u64 },
}

fn tail_slice(pts: &[(f64, f64)], tail: &Tail) -> Vec<(f64, f64)> {
    match tail {
        Tail::LastHalf => {
            let n = pts.len();
            let mut start = n / 2;
            if n.saturating_sub(start) < 8 {
                start = n.saturating_sub(8);
            }
            pts[start..].to_vec()
        }
        Tail::LastN(n) => {
            let start = pts.len().saturating_sub(*n);
            pts[start..].to_vec()
        }
        Tail::Range { from_k, to_k } => pts
            .iter()
            .copied()
            .filter(|(k, _)| *k >= *from_k as f64 && *k <= *to_k as f64)
            .collect(),
    }
}

/// Tunables for [`classify_psi`] and the verdict estimators. Defaults follow
/// the calibration used throughout the bundled experiments.
#[derive(Debug, Clone)]
pub struct ClassifyConfig {
    /// Entries with `k < burn_in` are discarded before any fit.
    pub burn_in: u64,
    /// Window over which fits and surrogates are computed.
    pub tail: Tail,
    /// Spread tolerance on the k-th-root sequence for the QUP verdict.
    pub qup_tol: f64,
    /// Slope tolerance of `rho_k` vs `ln k` for the UP verdict.
    pub slope_tol: f64,
    /// Maximum allowed `rho_k` range for the UP verdict.
    pub range_cap: f64,
    /// Residual ties within this relative margin prefer the simpler model.
    pub tie_margin: f64,
    /// Fits at or below this RMS are treated as exact (noiseless data).
    pub exact_rms: f64,
    /// Admissible `|p - p0|` for snapping to a fixed-exponent named model.
    pub snap_p_radius: f64,
    /// Weight of the log-log-slope mismatch in the snap distance.
    pub snap_s_weight: f64,
    /// Maximum snap distance; beyond it the free fit is reported as-is.
    pub snap_cap: f64,
    /// Fitted bases below/above these thresholds get boundary labels.
    pub boundary_lo: f64,
    pub boundary_hi: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            burn_in: 5,
            tail: Tail::LastHalf,
            qup_tol: 5e-3,
            slope_tol: 0.05,
            range_cap: 100.0_f64.ln(),
            tie_margin: 0.05,
            exact_rms: 1e-8,
            snap_p_radius: 0.35,
            snap_s_weight: 0.25,
            snap_cap: 0.75,
            boundary_lo: 0.02,
            boundary_hi: 0.98,
        }
    }
}

// ---------------------------------------------------------------------------
// Point estimators
// ---------------------------------------------------------------------------

/// Finite-sample limsup surrogate of the psi-th root: the maximum of
/// `exp(-lambda_k / psi(k))` over the tail window.
pub fn p_base_estimate(
    seq: &ErrorSequence,
    psi: &PowerFunction,
    tail: &Tail,
) -> Result<f64, RateError> {
    let pts = tail_slice(&seq.tail_points(0), tail);
    if pts.len() < 5 {
        return Err(RateError::InsufficientData {
            needed: 5,
            got: pts.len(),
        });
    }
    Ok(pts
        .iter()
        .map(|(k, l)| (-l / psi.eval(*k as u64)).exp())
        .fold(0.0_f64, f64::max))
}

/// Outcome of the limit-existence check on the psi-th-root sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum QupVerdict {
    /// The roots settled: spread over the tail within tolerance; the carried
    /// value is the window mean.
    LimitExists(f64),
    NoLimit,
    InsufficientData,
}

/// Checks whether `xi_k^(1/psi(k))` has a limit (not merely a limsup): the
/// spread (max - min) of the root sequence over the tail must be within
/// `tol`.
pub fn qup_limit_estimate(
    seq: &ErrorSequence,
    psi: &PowerFunction,
    tail: &Tail,
    tol: f64,
) -> QupVerdict {
    let pts = tail_slice(&seq.tail_points(0), tail);
    if pts.len() < 8 {
        return QupVerdict::InsufficientData;
    }
    let roots: Vec<f64> = pts
        .iter()
        .map(|(k, l)| (-l / psi.eval(*k as u64)).exp())
        .collect();
    let max = roots.iter().copied().fold(f64::MIN, f64::max);
    let min = roots.iter().copied().fold(f64::MAX, f64::min);
    if max - min <= tol {
        QupVerdict::LimitExists(roots.iter().sum::<f64>() / roots.len() as f64)
    } else {
        QupVerdict::NoLimit
    }
}

/// Outcome of the two-sided constant-factor check.
#[derive(Debug, Clone, PartialEq)]
pub enum UpVerdict {
    /// `xi_k / C^psi(k)` stays within `[low, high]` on the window.
    ThetaBounded { c: f64, low: f64, high: f64 },
    UnboundedRatio,
    InsufficientData,
}

/// Checks `xi_k = Theta(c_base^psi(k))` on the window: with
/// `rho_k = lambda_k + psi(k) ln(c_base)` (so `xi_k / C^psi(k) = e^-rho_k`),
/// the verdict is theta-bounded iff the slope of `rho_k` against `ln k` is
/// within `slope_tol` and the `rho_k` range is at most `range_cap`. A `k^a`
/// modulation shows up as slope `-a`; a genuinely bounded ratio fits flat.
pub fn up_theta_check(
    seq: &ErrorSequence,
    psi: &PowerFunction,
    c_base: f64,
    window: &Tail,
    slope_tol: f64,
    range_cap: f64,
) -> Result<UpVerdict, RateError> {
    if !(0.0 < c_base && c_base < 1.0) {
        return Err(RateError::Domain(format!(
            "c_base must lie in (0, 1), got {c_base}"
        )));
    }
    let pts = tail_slice(&seq.tail_points(0), window);
    if pts.len() < 10 {
        return Ok(UpVerdict::InsufficientData);
    }
    let rho: Vec<f64> = pts
        .iter()
        .map(|(k, l)| l + psi.eval(*k as u64) * c_base.ln())
        .collect();
    let lnk: Vec<f64> = pts.iter().map(|(k, _)| k.ln()).collect();
    let fit = fit::ols2(&lnk, &rho);
    let max = rho.iter().copied().fold(f64::MIN, f64::max);
    let min = rho.iter().copied().fold(f64::MAX, f64::min);
    if fit.slope.abs() <= slope_tol && max - min <= range_cap {
        Ok(UpVerdict::ThetaBounded {
            c: c_base,
            low: (-max).exp(),
            high: (-min).exp(),
        })
    } else {
        Ok(UpVerdict::UnboundedRatio)
    }
}

/// Per-step order estimates with non-monotone entries flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct QOrderSeries {
    /// `(k, q_k)` with `q_k = (lambda_(k+1) - lambda_k)/(lambda_k - lambda_(k-1))`,
    /// indexed by the middle entry's k.
    pub values: Vec<(u64, f64)>,
    /// Middle indices skipped because lambda failed to increase there.
    pub flagged: Vec<u64>,
}

/// Successive log-error difference ratios: the workhorse estimate of the
/// classical Q-order on superlinearly convergent runs.
pub fn q_order_estimate(seq: &ErrorSequence) -> Result<QOrderSeries, RateError> {
    let pts = seq.tail_points(0);
    if pts.len() < 3 {
        return Err(RateError::InsufficientData {
            needed: 3,
            got: pts.len(),
        });
    }
    let mut values = Vec::new();
    let mut flagged = Vec::new();
    for w in pts.windows(3) {
        let (k1, l1) = w[1];
        let d0 = w[1].1 - w[0].1;
        let d1 = w[2].1 - l1;
        if d0 > 0.0 && d1 > 0.0 {
            values.push((k1 as u64, d1 / d0));
        } else {
            flagged.push(k1 as u64);
        }
    }
    Ok(QOrderSeries { values, flagged })
}

/// Q-factor series `xi_(k+1) / xi_k^q` as `exp(-(lambda_(k+1) - q lambda_k))`,
/// indexed by the earlier entry's k.
pub fn q_factor_estimate(seq: &ErrorSequence, q: f64) -> Result<Vec<(u64, f64)>, RateError> {
    if q < 1.0 {
        return Err(RateError::Domain(format!("q must be >= 1, got {q}")));
    }
    let pts = seq.tail_points(0);
    if pts.len() < 2 {
        return Err(RateError::InsufficientData {
            needed: 2,
            got: pts.len(),
        });
    }
    Ok(pts
        .windows(2)
        .map(|w| (w[0].0 as u64, (-(w[1].1 - q * w[0].1)).exp()))
        .collect())
}

/// R-factor limsup surrogate: `max exp(-lambda_k / k)` over the tail for
/// `r = 1`, `max exp(-lambda_k / r^k)` for `r > 1`.
pub fn r_factor(seq: &ErrorSequence, r: f64, tail: &Tail) -> Result<f64, RateError> {
    if r < 1.0 {
        return Err(RateError::Domain(format!("r must be >= 1, got {r}")));
    }
    let pts = tail_slice(&seq.tail_points(0), tail);
    if pts.len() < 5 {
        return Err(RateError::InsufficientData {
            needed: 5,
            got: pts.len(),
        });
    }
    Ok(pts
        .iter()
        .map(|(k, l)| {
            let denom = if r == 1.0 { *k } else { r.powf(*k) };
            (-l / denom).exp()
        })
        .fold(0.0_f64, f64::max))
}

// ---------------------------------------------------------------------------
// Least-squares plumbing
// ---------------------------------------------------------------------------

mod fit {
    //! Tiny dense least squares; nothing here knows about rates.

    pub struct Ols2 {
        pub slope: f64,
        pub intercept: f64,
        pub rms: f64,
    }

    /// OLS line fit via centered moments.
    pub fn ols2(x: &[f64], y: &[f64]) -> Ols2 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (xi, yi) in x.iter().zip(y) {
            sxx += (xi - mx) * (xi - mx);
            sxy += (xi - mx) * (yi - my);
        }
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let intercept = my - slope * mx;
        let rms = (x
            .iter()
            .zip(y)
            .map(|(xi, yi)| {
                let r = yi - slope * xi - intercept;
                r * r
            })
            .sum::<f64>()
            / n)
            .sqrt();
        Ols2 {
            slope,
            intercept,
            rms,
        }
    }

    pub struct Ols3 {
        pub a: f64,
        pub b: f64,
        #[allow(dead_code)] // part of the fit even when callers only rank by rms
        pub c: f64,
        pub rms: f64,
    }

    /// OLS fit of `y ~ a x1 + b x2 + c`. Centering both regressors folds the
    /// intercept out, and the remaining 2x2 normal system stays accurate even
    /// when `x1` and `x2` are strongly correlated (the residual near the
    /// minimum is flat along the ill-conditioned direction, so coefficient
    /// wobble there does not contaminate the reported RMS).
    pub fn ols3(x1: &[f64], x2: &[f64], y: &[f64]) -> Ols3 {
        let n = x1.len() as f64;
        let m1 = x1.iter().sum::<f64>() / n;
        let m2 = x2.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut s11 = 0.0;
        let mut s12 = 0.0;
        let mut s22 = 0.0;
        let mut s1y = 0.0;
        let mut s2y = 0.0;
        for ((u, v), w) in x1.iter().zip(x2).zip(y) {
            let (du, dv, dw) = (u - m1, v - m2, w - my);
            s11 += du * du;
            s12 += du * dv;
            s22 += dv * dv;
            s1y += du * dw;
            s2y += dv * dw;
        }
        let det = s11 * s22 - s12 * s12;
        let (a, b) = if det.abs() > 0.0 {
            ((s22 * s1y - s12 * s2y) / det, (s11 * s2y - s12 * s1y) / det)
        } else {
            (0.0, 0.0)
        };
        let c = my - a * m1 - b * m2;
        let rms = (x1
            .iter()
            .zip(x2)
            .zip(y)
            .map(|((u, v), w)| {
                let resid = w - a * u - b * v - c;
                resid * resid
            })
            .sum::<f64>()
            / n)
            .sqrt();
        Ols3 { a, b, c, rms }
    }

    /// Intercept-only fit: mean and RMS about it.
    pub fn intercept(resid: &[f64]) -> (f64, f64) {
        let n = resid.len() as f64;
        let mean = resid.iter().sum::<f64>() / n;
        let rms = (resid.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
        (mean, rms)
    }
}

// ---------------------------------------------------------------------------
// The classifier
// ---------------------------------------------------------------------------

/// Finite-sample boundary labels for fitted bases indistinguishable from the
/// degenerate limits 0 and 1. The thresholds (`boundary_lo`, `boundary_hi`)
/// are a calibration choice, not derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryLabel {
    /// Base at 0: decay faster than every `C^psi(k)` with `C > 0`.
    SuperPsi,
    /// Base at 1: decay slower than every `C^psi(k)` with `C < 1`.
    SubPsi,
}

/// Outcome of [`classify_psi`]: fitted model, base, verdicts, diagnostics.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub best_model: PowerFunction,
    /// Fitted P-base in [0, 1]; see [`classify_psi`] for the estimator.
    pub p_base: f64,
    pub qup_verdict: QupVerdict,
    pub up_verdict: UpVerdict,
    /// `q_k` values within the tail window.
    pub q_order_tail: Vec<f64>,
    /// RMS residual of the winning fit in `ln lambda` space.
    pub residual: f64,
    /// Constrained single-model fits, ranked by residual.
    pub alternatives: Vec<(PowerFunction, f64)>,
    pub boundary: Option<BoundaryLabel>,
}

// Named snap targets in the (p, s) plane of z = p ln k + s ln ln k + c.
// Power leaves p free; the others pin it.
const SNAP_TARGETS: [(f64, bool, f64); 4] = [
    // (p0, p_is_fixed, s0): Power, Linearithmic, AntiLinearithmic, Logarithmic
    (0.0, false, 0.0),
    (1.0, true, 1.0),
    (1.0, true, -1.0),
    (0.0, true, 1.0),
];

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Named {
    Power,
    Linearithmic,
    AntiLinearithmic,
    Logarithmic,
}

const NAMED_ORDER: [Named; 4] = [
    Named::Power,
    Named::Linearithmic,
    Named::AntiLinearithmic,
    Named::Logarithmic,
];

/// Classifies the growth shape of `lambda_k` and estimates the base.
///
/// Selection works in `z = ln lambda` space through the nested three-parameter
/// family `z = p ln k + s ln ln k + c`, which contains every non-exponential
/// named model as a `(p, s)` point: Power(r) at `(r, 0)`, Linearithmic at
/// `(1, 1)`, AntiLinearithmic at `(1, -1)`, Logarithmic at `(0, 1)`. The free
/// fit is snapped to the nearest admissible named point (a plain
/// smallest-residual contest cannot work here: a free Power exponent absorbs
/// the slowly varying `ln ln k` term and beats the true fixed-shape model on
/// any desk-scale window). The Exponential model lives in a different space
/// (`ln lambda` against `k`) and is compared by residual first, with the tie
/// margin favoring it.
///
/// The reported `p_base` is a first-order-corrected fit: over the tail,
/// `psi(k)/lambda_k` is regressed against the winning model's leading
/// correction scale (`1/ln k` for Linearithmic/Logarithmic,
/// `(ln ln k + 1)/ln k` for AntiLinearithmic, `1/k` otherwise) and the
/// intercept `a` gives `base = exp(-1/a)`. On pure model data the correction
/// coefficient fits to zero and the estimate is exact; on solver data it
/// removes the known logarithmic-scale drift that keeps the raw windowed
/// surrogate far from its limit at desk scale. The raw surrogate remains
/// available as [`p_base_estimate`].
pub fn classify_psi(seq: &ErrorSequence, cfg: &ClassifyConfig) -> Result<RateReport, RateError> {
    let pts: Vec<(f64, f64)> = seq
        .tail_points(cfg.burn_in)
        .into_iter()
        .filter(|(k, l)| *k >= 2.0 && *l > 0.0)
        .collect();
    if pts.len() < 20 {
        return Err(RateError::InsufficientData {
            needed: 20,
            got: pts.len(),
        });
    }
    let tail = tail_slice(&pts, &cfg.tail);
    if tail.len() < 8 {
        return Err(RateError::InsufficientData {
            needed: 8,
            got: tail.len(),
        });
    }

    let k: Vec<f64> = tail.iter().map(|(k, _)| *k).collect();
    let lam: Vec<f64> = tail.iter().map(|(_, l)| *l).collect();
    let z: Vec<f64> = lam.iter().map(|l| l.ln()).collect();
    let x: Vec<f64> = k.iter().map(|k| k.ln()).collect();
    let lx: Vec<f64> = x.iter().map(|x| x.ln()).collect();

    // Free nested-family fit and the exponential-space fit.
    let family = fit::ols3(&x, &lx, &z);
    let expfit = fit::ols2(&k, &z);

    // Constrained single-model fits for the alternatives list.
    let power_fit = fit::ols2(&x, &z);
    let shape_rms = |s_coeff: f64, p_coeff: f64| -> f64 {
        let resid: Vec<f64> = z
            .iter()
            .zip(x.iter().zip(lx.iter()))
            .map(|(zi, (xi, lxi))| zi - p_coeff * xi - s_coeff * lxi)
            .collect();
        fit::intercept(&resid).1
    };
    let lith_rms = shape_rms(1.0, 1.0);
    let anti_rms = shape_rms(-1.0, 1.0);
    let log_rms = shape_rms(1.0, 0.0);

    let mut alternatives: Vec<(PowerFunction, f64)> = vec![
        (
            PowerFunction::Power {
                r: power_fit.slope,
            },
            power_fit.rms,
        ),
        (PowerFunction::Linearithmic, lith_rms),
        (PowerFunction::AntiLinearithmic, anti_rms),
        (PowerFunction::Logarithmic, log_rms),
    ];
    if expfit.slope > 0.0 {
        // A non-positive slope means lambda is not growing at all; r <= 1 is
        // not a valid exponential model, so it is not offered as a fit.
        alternatives.push((
            PowerFunction::Exponential {
                r: expfit.slope.exp(),
            },
            expfit.rms,
        ));
    }
    alternatives.sort_by(|a, b| a.1.total_cmp(&b.1));

    // Exponential wins when its residual is no worse than the family's by
    // more than the tie margin (and the slope is a genuine growth rate).
    let exponential_wins =
        expfit.slope > 0.0 && expfit.rms <= (1.0 + cfg.tie_margin) * family.rms;

    let (best_model, residual) = if exponential_wins {
        (
            PowerFunction::Exponential {
                r: expfit.slope.exp(),
            },
            expfit.rms,
        )
    } else {
        let p = family.a;
        let s = family.b;
        let snapped = snap(p, s, cfg, family.rms);
        let model = match snapped {
            Some(Named::Power) => {
                if power_fit.slope > 0.0 {
                    PowerFunction::Power {
                        r: power_fit.slope,
                    }
                } else {
                    PowerFunction::PolyLog { p, s }
                }
            }
            Some(Named::Linearithmic) => PowerFunction::Linearithmic,
            Some(Named::AntiLinearithmic) => PowerFunction::AntiLinearithmic,
            Some(Named::Logarithmic) => PowerFunction::Logarithmic,
            None => PowerFunction::PolyLog { p, s },
        };
        (model, family.rms)
    };

    // Fitted base: first-order-corrected extrapolation (see doc comment).
    let u: Vec<f64> = k
        .iter()
        .map(|kf| match &best_model {
            PowerFunction::Linearithmic | PowerFunction::Logarithmic => 1.0 / kf.ln(),
            PowerFunction::AntiLinearithmic => (kf.ln().ln() + 1.0) / kf.ln(),
            _ => 1.0 / kf,
        })
        .collect();
    let inv_t: Vec<f64> = k
        .iter()
        .zip(lam.iter())
        .map(|(kf, l)| best_model.eval(*kf as u64) / l)
        .collect();
    let base_fit = fit::ols2(&u, &inv_t);
    let p_base = if base_fit.intercept > 0.0 {
        (-1.0 / base_fit.intercept).exp().clamp(0.0, 1.0)
    } else {
        // Extrapolation failed to stay positive; fall back to the raw
        // windowed surrogate.
        p_base_estimate(seq, &best_model, &cfg.tail)?.clamp(0.0, 1.0)
    };

    let boundary = if p_base < cfg.boundary_lo {
        Some(BoundaryLabel::SuperPsi)
    } else if p_base > cfg.boundary_hi {
        Some(BoundaryLabel::SubPsi)
    } else {
        None
    };

    let qup_verdict = qup_limit_estimate(seq, &best_model, &cfg.tail, cfg.qup_tol);
    let up_verdict = if p_base > 0.0 && p_base < 1.0 {
        up_theta_check(
            seq,
            &best_model,
            p_base,
            &cfg.tail,
            cfg.slope_tol,
            cfg.range_cap,
        )?
    } else {
        UpVerdict::InsufficientData
    };

    let q_series = q_order_estimate(seq)?;
    let k_lo = k.first().copied().unwrap_or(0.0);
    let k_hi = k.last().copied().unwrap_or(f64::MAX);
    let q_order_tail = q_series
        .values
        .iter()
        .filter(|(kk, _)| (*kk as f64) >= k_lo && (*kk as f64) <= k_hi)
        .map(|(_, q)| *q)
        .collect();

    Ok(RateReport {
        best_model,
        p_base,
        qup_verdict,
        up_verdict,
        q_order_tail,
        residual,
        alternatives,
        boundary,
    })
}

/// Snaps a free `(p, s)` fit to a named model, or `None` for the generic
/// family. Exact fits (noiseless generated data) snap only on a parameter
/// match, so a generated PolyLog sequence is recovered verbatim.
fn snap(p: f64, s: f64, cfg: &ClassifyConfig, rms: f64) -> Option<Named> {
    if rms <= cfg.exact_rms {
        for (named, (p0, p_fixed, s0)) in NAMED_ORDER.iter().zip(SNAP_TARGETS.iter()) {
            let dp = if *p_fixed { (p - p0).abs() } else { 0.0 };
            if dp <= 1e-6 && (s - s0).abs() <= 1e-6 {
                return Some(*named);
            }
        }
        return None;
    }
    let mut best: Option<(Named, f64)> = None;
    for (named, (p0, p_fixed, s0)) in NAMED_ORDER.iter().zip(SNAP_TARGETS.iter()) {
        let dp = if *p_fixed { p - p0 } else { 0.0 };
        if *p_fixed && dp.abs() > cfg.snap_p_radius {
            continue;
        }
        let d = (dp * dp + cfg.snap_s_weight * (s - s0) * (s - s0)).sqrt();
        if d <= cfg.snap_cap && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((*named, d));
        }
    }
    best.map(|(named, _)| named)
}
