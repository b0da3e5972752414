//! Catalog of designed test problems whose convergence rates are known in
//! closed form, plus the characteristic-root solver for K-point methods and
//! a synthetic error-sequence generator for the boundary counterexamples.
//!
//! Each entry carries its analytic derivative and a rate prediction so that
//! experiments compare measured against predicted without re-deriving any
//! constant. The log-domain recurrences are stored alongside: deep-iteration
//! studies run the one-dimensional lambda map where the direct iteration
//! would be wasteful.

use std::collections::BTreeMap;

use serde_json::json;

use crate::numerics::{NumericError, XReal};
use crate::rate::{ErrorSequence, PowerFunction};
use crate::solvers::ScalarProblem;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TestbedError {
    #[error("parameter out of range: {0}")]
    Domain(String),
}

/// One-dimensional recurrence on the log-error lambda = -ln|error|.
/// Returns `None` when the map leaves its domain of validity.
pub type LogMap = Box<dyn Fn(f64) -> Option<f64> + Send + Sync>;

/// Radial gradient profile f(rho) used by descent runs.
pub type RadialProfile = Box<dyn Fn(&XReal) -> Result<XReal, NumericError> + Send + Sync>;

/// What kind of iteration the entry is designed for.
pub enum ProblemKind {
    /// Scalar root problem driven by Newton's method.
    Newton(ScalarProblem),
    /// Scalar root problem driven by K-point inverse interpolation.
    KPoint(ScalarProblem),
    /// Radial gradient profile for descent on a rotationally symmetric
    /// objective; `domain` bounds the radius.
    Gradient {
        profile: RadialProfile,
        domain: (f64, f64),
    },
}

/// The theoretical rate statement attached to an entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictionTarget {
    /// Expected P-base for the predicted power function.
    PBase(f64),
    /// Expected Q-order of convergence.
    QOrder(f64),
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub model: PowerFunction,
    pub target: PredictionTarget,
    /// Human-readable derivation note for reports and the JSON listing.
    pub note: String,
}

pub struct CatalogEntry {
    pub name: String,
    pub kind: ProblemKind,
    pub params: BTreeMap<String, f64>,
    pub prediction: Prediction,
    /// Closed-form recurrence on lambda, where one exists.
    pub log_map: Option<LogMap>,
}

impl CatalogEntry {
    /// The scalar problem, when the entry is Newton- or K-point-driven.
    pub fn problem(&self) -> Option<&ScalarProblem> {
        match &self.kind {
            ProblemKind::Newton(p) | ProblemKind::KPoint(p) => Some(p),
            ProblemKind::Gradient { .. } => None,
        }
    }

    pub fn listing(&self) -> serde_json::Value {
        let (kind, value) = match self.prediction.target {
            PredictionTarget::PBase(v) => ("p-base", v),
            PredictionTarget::QOrder(v) => ("q-order", v),
        };
        json!({
            "name": self.name,
            "params": self.params,
            "prediction": {
                "model": self.prediction.model.name(),
                "kind": kind,
                "value": value,
                "note": self.prediction.note,
            },
        })
    }
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// |x| < e^{-1} radius of the fractional-power family.
const E_INV: f64 = 0.36787944117144233;
/// |x| < e^{-e} radius of the (anti-)linearithmic families.
const E_NEG_E: f64 = 0.06598803584531254;

/// Shifted error and its log magnitude; errs outside |x - alpha| < 1.
fn log_abs_err(x: &XReal, alpha: f64) -> Result<Option<(XReal, XReal)>, NumericError> {
    let e = x.sub(&XReal::from_f64_prec(alpha, x.precision()));
    if e.is_zero() {
        return Ok(None);
    }
    let l = e.abs().ln()?.neg();
    if l.sign() <= 0 {
        return Err(NumericError::LogNonPositive);
    }
    Ok(Some((e, l)))
}

/// Newton test family with a fractional power of the log-error in the
/// exponent: f(x) = exp(-c L^{1/r}) with L = -ln|x - alpha|, f(alpha) = 0.
/// Newton contracts the error by exactly 1 - (r/c) L^{1 - 1/r} per step, so
/// the log-error obeys L' = L - ln(1 - (r/c) L^{1 - 1/r}) and grows like
/// ((r/c)(1/r))^{r} k^{r}: a Power(r) rate with base exp(-(C0 (s+1))^{1/(s+1)}),
/// s = 1/r - 1, C0 = r/c.
pub fn frac_newton_function(r: f64, c: f64, alpha: f64) -> Result<CatalogEntry, TestbedError> {
    if !(r > 0.0 && r < 1.0) {
        return Err(TestbedError::Domain(format!("r must lie in (0, 1), got {r}")));
    }
    if c.is_nan() || c <= 0.0 {
        return Err(TestbedError::Domain(format!("c must be positive, got {c}")));
    }
    if !alpha.is_finite() {
        return Err(TestbedError::Domain("alpha must be finite".into()));
    }
    let s = 1.0 / r - 1.0;
    let c0 = r / c;
    let base = (-(c0 * (s + 1.0)).powf(1.0 / (s + 1.0))).exp();

    let f = move |x: &XReal| -> Result<XReal, NumericError> {
        let prec = x.precision();
        let Some((_, l)) = log_abs_err(x, alpha)? else {
            return Ok(XReal::zero(prec));
        };
        let t = XReal::from_f64_prec(c, prec).mul(&l.pow(&XReal::from_f64_prec(1.0 / r, prec))?);
        Ok(t.neg().exp())
    };
    let df = move |x: &XReal| -> Result<XReal, NumericError> {
        let prec = x.precision();
        let Some((e, l)) = log_abs_err(x, alpha)? else {
            return Ok(XReal::zero(prec));
        };
        let fx = XReal::from_f64_prec(c, prec)
            .mul(&l.pow(&XReal::from_f64_prec(1.0 / r, prec))?)
            .neg()
            .exp();
        let fac = XReal::from_f64_prec(c / r, prec)
            .mul(&l.pow(&XReal::from_f64_prec(1.0 / r - 1.0, prec))?);
        fx.mul(&fac).div(&e)
    };
    let problem = ScalarProblem::new(
        "newton-fracpower",
        f,
        df,
        XReal::from_f64(alpha),
        (alpha - E_INV, alpha + E_INV),
    );

    let map_rc = c0;
    let map_ex = 1.0 - 1.0 / r;
    let log_map: LogMap = Box::new(move |lam| {
        if lam <= 0.0 {
            return None;
        }
        let arg = 1.0 - map_rc * lam.powf(map_ex);
        if arg <= 0.0 {
            return None;
        }
        let next = lam - arg.ln();
        next.is_finite().then_some(next)
    });

    Ok(CatalogEntry {
        name: "newton-fracpower".into(),
        kind: ProblemKind::Newton(problem),
        params: params(&[("r", r), ("c", c), ("alpha", alpha), ("s", s), ("c0", c0)]),
        prediction: Prediction {
            model: PowerFunction::Power { r },
            target: PredictionTarget::PBase(base),
            note: format!(
                "base exp(-(C0 (s+1))^(1/(s+1))) with s = 1/r - 1 = {s}, C0 = r/c = {c0}; \
                 log-error map L' = L - ln(1 - (r/c) L^(1-1/r))"
            ),
        },
        log_map: Some(log_map),
    })
}

/// Newton test function converging at the linearithmic rate k ln k:
/// f(x) = |x - alpha| exp(-(ln L)^2 / 2). The Newton error ratio is
/// (ln L)/(L + ln L), so L' = L + ln(L + ln L) - ln ln L and
/// -ln(error) ~ k ln k with base exp(-1).
pub fn linearithmic_function(alpha: f64) -> CatalogEntry {
    let f = move |x: &XReal| -> Result<XReal, NumericError> {
        let prec = x.precision();
        let Some((e, l)) = log_abs_err(x, alpha)? else {
            return Ok(XReal::zero(prec));
        };
        let lnl = l.ln()?;
        let g = lnl.mul(&lnl).mul(&XReal::from_f64_prec(0.5, prec));
        Ok(e.abs().mul(&g.neg().exp()))
    };
    let df = move |x: &XReal| -> Result<XReal, NumericError> {
        let prec = x.precision();
        let Some((e, l)) = log_abs_err(x, alpha)? else {
            return Ok(XReal::zero(prec));
        };
        let lnl = l.ln()?;
        let g = lnl.mul(&lnl).mul(&XReal::from_f64_prec(0.5, prec));
        let fx = e.abs().mul(&g.neg().exp());
        fx.mul(&XReal::one(prec).add(&lnl.div(&l)?)).div(&e)
    };
    let problem = ScalarProblem::new(
        "newton-linearithmic",
        f,
        df,
        XReal::from_f64(alpha),
        (alpha - E_NEG_E, alpha + E_NEG_E),
    );
    let log_map: LogMap = Box::new(|lam: f64| {
        if lam <= 1.0 {
            return None;
        }
        let ll = lam.ln();
        let next = lam + (lam + ll).ln() - ll.ln();
        next.is_finite().then_some(next)
    });
    CatalogEntry {
        name: "newton-linearithmic".into(),
        kind: ProblemKind::Newton(problem),
        params: params(&[("alpha", alpha)]),
        prediction: Prediction {
            model: PowerFunction::Linearithmic,
            target: PredictionTarget::PBase((-1.0_f64).exp()),
            note: "error ratio ln L / (L + ln L) per Newton step, so -ln(error) ~ k ln k \
                   with base exp(-1); map L' = L + ln(L + ln L) - ln ln L"
                .into(),
        },
        log_map: Some(log_map),
    }
}

/// Newton test function converging at the anti-linearithmic rate k / ln k:
/// f(x) = |x - alpha|^{ln L - 1}. Newton multiplies the error by
/// 1 - 1/ln L, so L' = L - ln(1 - 1/ln L) and -ln(error) ~ k / ln k with
/// base exp(-1).
pub fn anti_linearithmic_function(alpha: f64) -> CatalogEntry {
    let f = move |x: &XReal| -> Result<XReal, NumericError> {
        let prec = x.precision();
        let Some((_, l)) = log_abs_err(x, alpha)? else {
            return Ok(XReal::zero(prec));
        };
        let lnl = l.ln()?;
        Ok(l.mul(&lnl.sub(&XReal::one(prec))).neg().exp())
    };
    let df = move |x: &XReal| -> Result<XReal, NumericError> {
        let prec = x.precision();
        let Some((e, l)) = log_abs_err(x, alpha)? else {
            return Ok(XReal::zero(prec));
        };
        let lnl = l.ln()?;
        let fx = l.mul(&lnl.sub(&XReal::one(prec))).neg().exp();
        fx.mul(&lnl).div(&e)
    };
    let problem = ScalarProblem::new(
        "newton-antilinearithmic",
        f,
        df,
        XReal::from_f64(alpha),
        (alpha - E_NEG_E, alpha + E_NEG_E),
    );
    let log_map: LogMap = Box::new(|lam: f64| {
        if lam <= 1.0 {
            return None;
        }
        let arg = 1.0 - 1.0 / lam.ln();
        if arg <= 0.0 {
            return None;
        }
        let next = lam - arg.ln();
        next.is_finite().then_some(next)
    });
    CatalogEntry {
        name: "newton-antilinearithmic".into(),
        kind: ProblemKind::Newton(problem),
        params: params(&[("alpha", alpha)]),
        prediction: Prediction {
            model: PowerFunction::AntiLinearithmic,
            target: PredictionTarget::PBase((-1.0_f64).exp()),
            note: "error ratio 1 - 1/ln L per Newton step sums to -ln(error) ~ k / ln k \
                   with base exp(-1); map L' = L - ln(1 - 1/ln L)"
                .into(),
        },
        log_map: Some(log_map),
    }
}

/// Smoothness-limited test family for K-point inverse interpolation. The
/// derivative of order K - 1 is exactly nu-Hoelder at the root and no
/// better, which caps the attainable order at the root of
/// q^K = q^{K-1} + ... + q + nu.
pub fn holder_test_function(k_points: u32, nu: f64) -> Result<CatalogEntry, TestbedError> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(TestbedError::Domain(format!(
            "nu must lie in (0, 1], got {nu}"
        )));
    }
    let (coeff, expo) = match k_points {
        2 => (1.0 / (1.0 + nu), nu),
        3 => (1.0 / (2.0 + nu), 1.0 + nu),
        other => {
            return Err(TestbedError::Domain(format!(
                "only 2- and 3-point variants are built, got K = {other}"
            )))
        }
    };
    let q = char_root(k_points, nu)?;

    let f = move |x: &XReal| -> Result<XReal, NumericError> {
        let prec = x.precision();
        let p = x.abs().pow(&XReal::from_f64_prec(expo, prec))?;
        Ok(x.mul(&p).mul(&XReal::from_f64_prec(coeff, prec)).add(x))
    };
    let df = move |x: &XReal| -> Result<XReal, NumericError> {
        let prec = x.precision();
        let p = x.abs().pow(&XReal::from_f64_prec(expo, prec))?;
        Ok(p.add(&XReal::one(prec)))
    };
    let name = format!("kpoint-holder-{k_points}");
    let problem = ScalarProblem::new(name.clone(), f, df, XReal::zero(512), (-2.0, 2.0));
    Ok(CatalogEntry {
        name,
        kind: ProblemKind::KPoint(problem),
        params: params(&[("K", k_points as f64), ("nu", nu), ("q", q)]),
        prediction: Prediction {
            model: PowerFunction::Exponential { r: q },
            target: PredictionTarget::QOrder(q),
            note: format!(
                "order is the root in (1, 2) of q^K = q^(K-1) + ... + q + nu at K = {k_points}, \
                 nu = {nu}"
            ),
        },
        log_map: None,
    })
}

/// Radial gradient-descent profile f(rho) = rho (-ln rho)^{1 - 1/r} on
/// rho in (0, e^{-1}). The unit-step radius recurrence is
/// rho' = rho |1 - (-ln rho)^{1-1/r}|, i.e. v' = v - ln|1 - v^{1-1/r}| in
/// the log domain, with v_k ~ (1/r)^r k^r: a Power(r) rate with base
/// exp(-(1/r)^r).
pub fn gd_fractional_profile(r: f64) -> Result<CatalogEntry, TestbedError> {
    if !(r > 0.0 && r < 1.0) {
        return Err(TestbedError::Domain(format!("r must lie in (0, 1), got {r}")));
    }
    let expo = 1.0 - 1.0 / r;
    let profile: RadialProfile = Box::new(move |rho: &XReal| {
        let prec = rho.precision();
        if rho.sign() <= 0 {
            return Err(NumericError::LogNonPositive);
        }
        let l = rho.ln()?.neg();
        if l.sign() <= 0 {
            return Err(NumericError::LogNonPositive);
        }
        rho.mul(&l.pow(&XReal::from_f64_prec(expo, prec))?)
            .div(&XReal::one(prec))
    });
    let base = (-(1.0 / r).powf(r)).exp();
    let log_map: LogMap = Box::new(move |v: f64| {
        if v <= 0.0 {
            return None;
        }
        let arg = (1.0 - v.powf(expo)).abs();
        if arg == 0.0 {
            return None;
        }
        let next = v - arg.ln();
        next.is_finite().then_some(next)
    });
    Ok(CatalogEntry {
        name: "gd-fracpower".into(),
        kind: ProblemKind::Gradient {
            profile,
            domain: (0.0, E_INV),
        },
        params: params(&[("r", r), ("eta", 1.0)]),
        prediction: Prediction {
            model: PowerFunction::Power { r },
            target: PredictionTarget::PBase(base),
            note: format!(
                "radius recurrence v' = v - ln|1 - v^(1-1/r)| has v_k ~ (1/r)^r k^r, \
                 so the base is exp(-(1/r)^r) at r = {r}"
            ),
        },
        log_map: Some(log_map),
    })
}

/// Unique root in (1, 2) of q^K = q^{K-1} + ... + q + nu, by bisection.
/// The bracket is guaranteed: the polynomial is negative at 1 (value
/// 2 - K - nu) and positive at 2 (value 2 - nu).
pub fn char_root(k: u32, nu: f64) -> Result<f64, TestbedError> {
    if k < 2 {
        return Err(TestbedError::Domain(format!("K must be at least 2, got {k}")));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(TestbedError::Domain(format!(
            "nu must lie in (0, 1], got {nu}"
        )));
    }
    let p = |q: f64| {
        let mut acc = q.powi(k as i32);
        for j in 1..k {
            acc -= q.powi(j as i32);
        }
        acc - nu
    };
    let (mut lo, mut hi) = (1.0_f64, 2.0_f64);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if p(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Modulation applied on top of the pure base term when synthesizing an
/// error sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Modulation {
    None,
    /// error_k = C^{psi(k)} k^a
    Power { a: f64 },
    /// error_k = C^{psi(k)} k^{a (-1)^k}
    Alternating { a: f64 },
    /// error_k carries an extra factor c2 on odd k, so consecutive ratios
    /// oscillate between two values.
    RatioOscillation { c2: f64 },
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub base: f64,
    pub psi: PowerFunction,
    pub modulation: Modulation,
}

/// Synthesizes the log-error sequence lambda_k = psi(k) (-ln C) minus the
/// modulation log term, for k = 2..=k_max.
pub fn synth_sequence(spec: &SynthSpec, k_max: u64) -> Result<ErrorSequence, TestbedError> {
    if !(spec.base > 0.0 && spec.base < 1.0) {
        return Err(TestbedError::Domain(format!(
            "base must lie in (0, 1), got {}",
            spec.base
        )));
    }
    if k_max < 10 {
        return Err(TestbedError::Domain(format!(
            "k_max must be at least 10, got {k_max}"
        )));
    }
    if let Modulation::RatioOscillation { c2 } = spec.modulation {
        if c2.is_nan() || c2 <= 0.0 {
            return Err(TestbedError::Domain(format!(
                "oscillation factor must be positive, got {c2}"
            )));
        }
    }
    let neg_ln_c = -spec.base.ln();
    let label = format!(
        "synth-{}-{}",
        spec.psi.name(),
        match spec.modulation {
            Modulation::None => "plain".to_string(),
            Modulation::Power { a } => format!("power{a}"),
            Modulation::Alternating { a } => format!("alternating{a}"),
            Modulation::RatioOscillation { c2 } => format!("ratio{c2}"),
        }
    );
    let entries = (2..=k_max).map(|k| {
        let modterm = match spec.modulation {
            Modulation::None => 0.0,
            Modulation::Power { a } => a * (k as f64).ln(),
            Modulation::Alternating { a } => {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                a * sign * (k as f64).ln()
            }
            Modulation::RatioOscillation { c2 } => {
                if k % 2 == 1 {
                    c2.ln()
                } else {
                    0.0
                }
            }
        };
        (k, spec.psi.eval(k) * neg_ln_c - modterm)
    });
    Ok(ErrorSequence::from_lambdas(label, entries))
}

/// The canonical entries used throughout the bundled experiments.
pub fn standard_catalog() -> Vec<CatalogEntry> {
    vec![
        frac_newton_function(0.5, 1.0, 0.0).expect("canonical params in range"),
        linearithmic_function(0.0),
        anti_linearithmic_function(0.0),
        holder_test_function(2, 1.0).expect("canonical params in range"),
        holder_test_function(3, 0.5).expect("canonical params in range"),
        gd_fractional_profile(0.5).expect("canonical params in range"),
    ]
}

/// JSON listing of a catalog: name, params, prediction.
pub fn catalog_listing(entries: &[CatalogEntry]) -> serde_json::Value {
    serde_json::Value::Array(entries.iter().map(CatalogEntry::listing).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::{
        p_base_estimate, q_factor_estimate, qup_limit_estimate, up_theta_check, QupVerdict, Tail,
        UpVerdict,
    };
    use crate::solvers::{gradient_descent_radial, newton_scalar, RunControl};

    // Reference characteristic roots, frozen from an independent
    // high-precision bisection of q^K - q^(K-1) - ... - q - nu. Digits
    // beyond f64 document the frozen values.
    #[allow(clippy::excessive_precision)]
    const CHAR_ROOTS: &[(u32, f64, f64)] = &[
        (2, 0.25, 1.20710678118654752),
        (2, 0.5, 1.36602540378443865),
        (2, 1.0, 1.61803398874989485),
        (3, 0.25, 1.68261500670704842),
        (3, 0.5, 1.73990787437757278),
        (3, 1.0, 1.83928675521416113),
        (3, 1e-6, 1.61803426514301572),
        (4, 1.0, 1.92756197548292530),
        (8, 1.0, 1.99603117973541459),
    ];

    #[test]
    fn char_root_matches_frozen_references() {
        for &(k, nu, expect) in CHAR_ROOTS {
            let q = char_root(k, nu).unwrap();
            assert!(
                (q - expect).abs() <= 2e-12,
                "q_{k}({nu}) = {q}, expected {expect}"
            );
        }
    }

    #[test]
    fn char_root_residual_is_small_on_grid() {
        for k in 2..=8u32 {
            for step in 1..=10 {
                let nu = step as f64 / 10.0;
                let q = char_root(k, nu).unwrap();
                let mut p = q.powi(k as i32);
                for j in 1..k {
                    p -= q.powi(j as i32);
                }
                p -= nu;
                assert!(p.abs() <= 1e-10, "residual {p} at K={k}, nu={nu}");
                assert!(q > 1.0 && q < 2.0);
            }
        }
    }

    #[test]
    fn char_root_is_monotone_in_nu() {
        for k in [2u32, 3, 5, 8] {
            let mut prev = 0.0;
            for step in 1..=10 {
                let q = char_root(k, step as f64 / 10.0).unwrap();
                assert!(q > prev, "K={k}: not monotone at step {step}");
                prev = q;
            }
        }
    }

    #[test]
    fn char_root_rejects_bad_params() {
        assert!(char_root(1, 0.5).is_err());
        assert!(char_root(2, 0.0).is_err());
        assert!(char_root(2, 1.5).is_err());
    }

    #[test]
    fn frac_newton_prediction_and_condition_limit() {
        let entry = frac_newton_function(0.5, 1.0, 0.0).unwrap();
        let PredictionTarget::PBase(b) = entry.prediction.target else {
            panic!("expected a P-base prediction");
        };
        assert!((b - (-1.0_f64).exp()).abs() <= 1e-15);
        assert_eq!(entry.params["c0"], 0.5);
        assert_eq!(entry.params["s"], 1.0);
        assert!(matches!(entry.prediction.model, PowerFunction::Power { r } if r == 0.5));

        // f vanishes exactly at the root.
        let p = entry.problem().unwrap();
        assert!(p.f(&XReal::zero(512)).unwrap().is_zero());

        assert!(frac_newton_function(1.5, 1.0, 0.0).is_err());
        assert!(frac_newton_function(0.5, -1.0, 0.0).is_err());
    }

    #[test]
    fn gd_prediction_value() {
        let entry = gd_fractional_profile(0.5).unwrap();
        let PredictionTarget::PBase(b) = entry.prediction.target else {
            panic!("expected a P-base prediction");
        };
        assert!((b - (-(2.0_f64).sqrt()).exp()).abs() <= 1e-16);

        // At rho = e^{-1} the log factor is 1, so the profile is the
        // identity there.
        let ProblemKind::Gradient { profile, .. } = &entry.kind else {
            panic!("expected a gradient entry");
        };
        let rho = XReal::one(512).neg().exp();
        let val = profile(&rho).unwrap();
        assert!(val.sub(&rho).abs().to_f64() <= 1e-100);
    }

    #[test]
    fn holder_entries_and_root_behavior() {
        let entry = holder_test_function(2, 1.0).unwrap();
        let PredictionTarget::QOrder(q) = entry.prediction.target else {
            panic!("expected a Q-order prediction");
        };
        #[allow(clippy::excessive_precision)]
        const PHI: f64 = 1.61803398874989485;
        assert!((q - PHI).abs() <= 2e-12);

        let p = entry.problem().unwrap();
        assert!(p.f(&XReal::zero(512)).unwrap().is_zero());
        let d0 = p.df(&XReal::zero(512)).unwrap();
        assert!(d0.sub(&XReal::one(512)).abs().to_f64() <= 1e-150);

        assert!(holder_test_function(5, 0.5).is_err());
        assert!(holder_test_function(2, 0.0).is_err());
        assert!(holder_test_function(2, 1.2).is_err());
    }

    #[test]
    fn holder_exponent_is_sharp_at_the_root() {
        // |f'(x) - f'(0)| equals |x|^nu identically for the two-point
        // variant, so the Hoelder exponent cannot be improved.
        let entry = holder_test_function(2, 0.6).unwrap();
        let p = entry.problem().unwrap();
        let one = XReal::one(512);
        for &x in &[0.8, 0.5, 0.2, 0.05, -0.05, -0.3, -0.7] {
            let xx = XReal::from_f64(x);
            let gap = p.df(&xx).unwrap().sub(&one).abs();
            let expect = xx.abs().pow(&XReal::from_f64(0.6)).unwrap();
            let rel = gap.sub(&expect).abs().div(&expect).unwrap().to_f64();
            assert!(rel <= 1e-100, "x = {x}: rel = {rel}");
        }
    }

    #[test]
    fn standard_catalog_predictions_use_builtin_models() {
        let cat = standard_catalog();
        assert_eq!(cat.len(), 6);
        for e in &cat {
            assert!(
                !matches!(e.prediction.model, PowerFunction::Custom(_)),
                "{} predicts a custom model",
                e.name
            );
            assert!(!e.prediction.note.is_empty());
        }
    }

    #[test]
    fn catalog_listing_is_complete_json() {
        let v = catalog_listing(&standard_catalog());
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 6);
        for item in arr {
            assert!(item["name"].as_str().is_some_and(|s| !s.is_empty()));
            assert!(item["params"].is_object());
            let pred = &item["prediction"];
            assert!(pred["model"].as_str().is_some());
            assert!(pred["value"].as_f64().unwrap() > 0.0);
            let kind = pred["kind"].as_str().unwrap();
            assert!(kind == "p-base" || kind == "q-order");
        }
    }

    fn assert_derivative_consistent(p: &ScalarProblem, points: &[f64]) {
        let h = XReal::parse_decimal("1e-30", 512).unwrap();
        let two_h = h.add(&h);
        for &x in points {
            let xx = XReal::from_f64(x);
            let fp = p.f(&xx.add(&h)).unwrap();
            let fm = p.f(&xx.sub(&h)).unwrap();
            let num = fp.sub(&fm).div(&two_h).unwrap();
            let ana = p.df(&xx).unwrap();
            let rel = num.sub(&ana).abs().div(&ana.abs()).unwrap().to_f64();
            assert!(rel <= 1e-10, "{}: x = {x}, rel = {rel}", p.name);
        }
    }

    #[test]
    fn analytic_derivatives_match_central_differences() {
        let wide: Vec<f64> = [0.01, 0.03, 0.06, 0.1, 0.15, 0.2, 0.25, 0.3, 0.33, 0.35]
            .iter()
            .flat_map(|&v| [v, -v])
            .collect();
        let narrow: Vec<f64> = [0.002, 0.005, 0.01, 0.015, 0.02, 0.03, 0.04, 0.05, 0.055, 0.06]
            .iter()
            .flat_map(|&v| [v, -v])
            .collect();
        let holder_pts: Vec<f64> = [0.05, 0.15, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.4, 1.5]
            .iter()
            .flat_map(|&v| [v, -v])
            .collect();

        let e1 = frac_newton_function(0.5, 1.0, 0.0).unwrap();
        assert_derivative_consistent(e1.problem().unwrap(), &wide);
        let e2 = frac_newton_function(0.7, 2.0, 0.3).unwrap();
        let shifted: Vec<f64> = wide.iter().map(|v| 0.3 + v).collect();
        assert_derivative_consistent(e2.problem().unwrap(), &shifted);

        let e3 = linearithmic_function(0.0);
        assert_derivative_consistent(e3.problem().unwrap(), &narrow);
        let e4 = anti_linearithmic_function(0.0);
        assert_derivative_consistent(e4.problem().unwrap(), &narrow);

        let e5 = holder_test_function(2, 0.6).unwrap();
        assert_derivative_consistent(e5.problem().unwrap(), &holder_pts);
        let e6 = holder_test_function(3, 0.5).unwrap();
        assert_derivative_consistent(e6.problem().unwrap(), &holder_pts);
    }

    /// Iterates the entry's lambda map from the run's own first lambda and
    /// checks per-step relative agreement.
    fn assert_map_tracks(errors: &ErrorSequence, map: &LogMap, rel_tol: f64) {
        let lambdas: Vec<f64> = errors
            .entries()
            .iter()
            .map(|(_, e)| e.lambda_f64())
            .take_while(|l| l.is_finite())
            .collect();
        assert!(lambdas.len() > 50, "run too short: {}", lambdas.len());
        let mut lam = lambdas[0];
        for (i, &direct) in lambdas.iter().enumerate().skip(1) {
            lam = map(lam).expect("map left its domain during a valid run");
            let rel = (lam - direct).abs() / direct.abs();
            assert!(rel <= rel_tol, "step {i}: map {lam} vs direct {direct}");
        }
    }

    #[test]
    fn frac_newton_map_matches_direct_iteration() {
        let entry = frac_newton_function(0.5, 1.0, 0.0).unwrap();
        let ctrl = RunControl {
            max_iter: 2000,
            ..RunControl::default()
        };
        let run = newton_scalar(entry.problem().unwrap(), XReal::from_f64(0.05), &ctrl).unwrap();
        assert_map_tracks(&run.errors, entry.log_map.as_ref().unwrap(), 1e-6);
    }

    #[test]
    fn linearithmic_map_matches_direct_iteration() {
        let entry = linearithmic_function(0.0);
        let ctrl = RunControl {
            max_iter: 300,
            ..RunControl::default()
        };
        let run = newton_scalar(entry.problem().unwrap(), XReal::from_f64(0.05), &ctrl).unwrap();
        assert_map_tracks(&run.errors, entry.log_map.as_ref().unwrap(), 1e-6);
    }

    #[test]
    fn anti_linearithmic_map_matches_direct_iteration() {
        let entry = anti_linearithmic_function(0.0);
        let ctrl = RunControl {
            max_iter: 500,
            ..RunControl::default()
        };
        let run = newton_scalar(entry.problem().unwrap(), XReal::from_f64(0.01), &ctrl).unwrap();
        assert_map_tracks(&run.errors, entry.log_map.as_ref().unwrap(), 1e-6);
    }

    #[test]
    fn gd_map_matches_radial_iteration() {
        let entry = gd_fractional_profile(0.5).unwrap();
        let ProblemKind::Gradient { profile, .. } = &entry.kind else {
            panic!("expected gradient kind");
        };
        let ctrl = RunControl {
            max_iter: 2000,
            ..RunControl::default()
        };
        let run = gradient_descent_radial(
            "gd-frac-consistency",
            |r| profile(r),
            XReal::from_f64(0.05),
            &XReal::from_f64(1.0),
            &ctrl,
        )
        .unwrap();
        assert_map_tracks(&run.errors, entry.log_map.as_ref().unwrap(), 1e-6);
    }

    #[test]
    fn synth_plain_geometric() {
        let spec = SynthSpec {
            base: 0.5,
            psi: PowerFunction::Power { r: 1.0 },
            modulation: Modulation::None,
        };
        let seq = synth_sequence(&spec, 200).unwrap();
        let (k0, e0) = &seq.entries()[0];
        assert_eq!(*k0, 2);
        assert!((e0.lambda_f64() - 2.0 * 2.0_f64.ln()).abs() <= 1e-12);
        let p = p_base_estimate(&seq, &PowerFunction::Power { r: 1.0 }, &Tail::LastHalf).unwrap();
        assert!((p - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn synth_alternating_is_qup_but_not_q_linear() {
        let spec = SynthSpec {
            base: 0.5,
            psi: PowerFunction::Power { r: 1.0 },
            modulation: Modulation::Alternating { a: 1.0 },
        };
        let seq = synth_sequence(&spec, 20_000).unwrap();
        // Deep tail: the k^{+-1/k} modulation washes out and the limit
        // exists.
        let verdict = qup_limit_estimate(
            &seq,
            &PowerFunction::Power { r: 1.0 },
            &Tail::Range {
                from_k: 10_000,
                to_k: 20_000,
            },
            5e-3,
        );
        let QupVerdict::LimitExists(c) = verdict else {
            panic!("expected a QUP limit, got {verdict:?}");
        };
        assert!((c - 0.5).abs() <= 2e-3);

        // ...but the step ratio swings by k^{+-2}: no Q-linear factor.
        let factors = q_factor_estimate(&seq, 1.0).unwrap();
        let window: Vec<f64> = factors
            .iter()
            .filter(|(k, _)| (100..200).contains(k))
            .map(|(_, f)| *f)
            .collect();
        let max = window.iter().cloned().fold(f64::MIN, f64::max);
        let min = window.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min > 1e6, "ratio spread only {}", max / min);
    }

    #[test]
    fn synth_ratio_oscillation_has_two_accumulation_points() {
        let spec = SynthSpec {
            base: 0.5,
            psi: PowerFunction::Power { r: 1.0 },
            modulation: Modulation::RatioOscillation { c2: 0.3 },
        };
        let seq = synth_sequence(&spec, 400).unwrap();
        let factors = q_factor_estimate(&seq, 1.0).unwrap();
        let tail = &factors[factors.len() - 20..];
        for (k, f) in tail {
            let expect = if k % 2 == 0 { 0.5 * 0.3 } else { 0.5 / 0.3 };
            assert!((f - expect).abs() <= 1e-9, "k={k}: {f} vs {expect}");
        }
    }

    #[test]
    fn synth_superlinear_modulation_breaks_up_theta() {
        let spec = SynthSpec {
            base: 0.4,
            psi: PowerFunction::Exponential { r: 2.0 },
            modulation: Modulation::Power { a: 2.0 },
        };
        let seq = synth_sequence(&spec, 24).unwrap();
        let psi = PowerFunction::Exponential { r: 2.0 };
        let verdict = qup_limit_estimate(
            &seq,
            &psi,
            &Tail::Range {
                from_k: 14,
                to_k: 24,
            },
            5e-3,
        );
        let QupVerdict::LimitExists(c) = verdict else {
            panic!("expected a QUP limit, got {verdict:?}");
        };
        assert!((c - 0.4).abs() <= 1e-3);

        // The k^2 factor drifts the Theta-window without bound.
        let up = up_theta_check(
            &seq,
            &psi,
            0.4,
            &Tail::Range {
                from_k: 5,
                to_k: 24,
            },
            0.05,
            100.0_f64.ln(),
        )
        .unwrap();
        assert_eq!(up, UpVerdict::UnboundedRatio);
    }

    #[test]
    fn synth_rejects_bad_specs() {
        let psi = PowerFunction::Power { r: 1.0 };
        let bad_base = SynthSpec {
            base: 1.0,
            psi: psi.clone(),
            modulation: Modulation::None,
        };
        assert!(synth_sequence(&bad_base, 100).is_err());
        let ok = SynthSpec {
            base: 0.5,
            psi: psi.clone(),
            modulation: Modulation::None,
        };
        assert!(synth_sequence(&ok, 5).is_err());
        let bad_osc = SynthSpec {
            base: 0.5,
            psi,
            modulation: Modulation::RatioOscillation { c2: 0.0 },
        };
        assert!(synth_sequence(&bad_osc, 100).is_err());
    }

    #[test]
    fn synth_lambdas_are_finite() {
        let models = [
            PowerFunction::Power { r: 1.0 },
            PowerFunction::Linearithmic,
            PowerFunction::Exponential { r: 2.0 },
        ];
        let mods = [
            Modulation::None,
            Modulation::Power { a: 3.0 },
            Modulation::Alternating { a: 2.0 },
            Modulation::RatioOscillation { c2: 0.2 },
        ];
        for base in [0.1, 0.5, 0.9] {
            for psi in &models {
                for m in &mods {
                    let k_max = if matches!(psi, PowerFunction::Exponential { .. }) {
                        24
                    } else {
                        500
                    };
                    let spec = SynthSpec {
                        base,
                        psi: psi.clone(),
                        modulation: *m,
                    };
                    let seq = synth_sequence(&spec, k_max).unwrap();
                    for (k, e) in seq.entries() {
                        assert!(e.lambda_f64().is_finite(), "k={k} non-finite");
                    }
                }
            }
        }
    }
}
