//! Extended-precision arithmetic for iterates and log-domain error magnitudes.
//!
//! Solvers in this crate drive errors down to magnitudes like `C^(k ln k)`,
//! which leave native floating point representable range after roughly a
//! hundred iterations. [`XReal`] wraps an arbitrary-precision float with a
//! widened binary exponent range so that `|ln xi|` up to 1e9 stays
//! representable, and [`LogError`] carries the log-domain magnitude
//! `lambda = -ln xi` that every estimator downstream consumes.

use std::cell::Cell;
use std::cmp::Ordering;
use std::fmt;

use gmp_mpfr_sys::mpfr;
use rug::float::Round;
use rug::ops::{DivAssignRound, PowAssignRound};
use rug::Float;

/// Default working precision in bits.
pub const DEFAULT_PRECISION: u32 = 512;

/// Hard floor on working precision; requests below it are raised to it.
pub const MIN_PRECISION: u32 = 128;

/// Errors produced by checked arithmetic. Domain violations are reported
/// eagerly; no operation returns NaN.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NumericError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("ln of a non-positive value")]
    LogNonPositive,
    #[error("fractional power of a negative base")]
    FractionalPowNegativeBase,
    #[error("zero base raised to a negative power")]
    ZeroToNegativePow,
    #[error("negative value where a magnitude was required")]
    NegativeMagnitude,
    #[error("square root of a negative value")]
    SqrtNegative,
    #[error("malformed decimal literal: {0}")]
    ParseError(String),
}

// MPFR's exponent range is thread-local and defaults to roughly +/-2^30,
// which is too narrow for exp(-1e9). Every constructor funnels through this
// guard, which widens the current thread's range to the library maximum once.
thread_local! {
    static EXP_RANGE_WIDENED: Cell<bool> = const { Cell::new(false) };
}

fn widen_exponent_range() {
    EXP_RANGE_WIDENED.with(|done| {
        if !done.get() {
            unsafe {
                mpfr::set_emin(mpfr::get_emin_min());
                mpfr::set_emax(mpfr::get_emax_max());
            }
            done.set(true);
        }
    });
}

fn clamp_prec(prec: u32) -> u32 {
    prec.max(MIN_PRECISION)
}

/// Extended-precision real number.
///
/// Values are immutable after construction; arithmetic allocates fresh
/// results at the wider of the operand precisions. The binary exponent range
/// covers at least `|ln x| <= 1e9` on every thread that constructs one.
#[derive(Debug, Clone)]
pub struct XReal {
    value: Float,
}

impl XReal {
    /// Builds a value from `v` at the default 512-bit precision.
    pub fn from_f64(v: f64) -> Self {
        Self::from_f64_prec(v, DEFAULT_PRECISION)
    }

    /// Builds a value from `v` at `prec` bits (raised to 128 if below).
    pub fn from_f64_prec(v: f64, prec: u32) -> Self {
        widen_exponent_range();
        XReal {
            value: Float::with_val(clamp_prec(prec), v),
        }
    }

    pub fn from_u64_prec(v: u64, prec: u32) -> Self {
        widen_exponent_range();
        XReal {
            value: Float::with_val(clamp_prec(prec), v),
        }
    }

    pub fn zero(prec: u32) -> Self {
        Self::from_f64_prec(0.0, prec)
    }

    pub fn one(prec: u32) -> Self {
        Self::from_f64_prec(1.0, prec)
    }

    /// Working precision of this value in bits.
    pub fn precision(&self) -> u32 {
        self.value.prec()
    }

    /// Sign: -1, 0, or +1. Zero is exactly representable and is the only
    /// value with sign 0.
    pub fn sign(&self) -> i8 {
        if self.value.is_zero() {
            0
        } else if self.value.is_sign_negative() {
            -1
        } else {
            1
        }
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    /// Nearest f64, losing range and precision; fine for reporting only.
    pub fn to_f64(&self) -> f64 {
        self.value.to_f64()
    }

    fn result_prec(&self, other: &Self) -> u32 {
        self.value.prec().max(other.value.prec())
    }

    pub fn add(&self, other: &Self) -> Self {
        widen_exponent_range();
        XReal {
            value: Float::with_val(self.result_prec(other), &self.value + &other.value),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        widen_exponent_range();
        XReal {
            value: Float::with_val(self.result_prec(other), &self.value - &other.value),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        widen_exponent_range();
        XReal {
            value: Float::with_val(self.result_prec(other), &self.value * &other.value),
        }
    }

    pub fn div(&self, other: &Self) -> Result<Self, NumericError> {
        if other.is_zero() {
            return Err(NumericError::DivisionByZero);
        }
        widen_exponent_range();
        let mut out = Float::with_val(self.result_prec(other), &self.value);
        out.div_assign_round(&other.value, Round::Nearest);
        Ok(XReal { value: out })
    }

    /// `self^exp` for a real exponent. Negative bases are only legal with
    /// integer exponents; zero bases with nonnegative ones.
    pub fn pow(&self, exp: &Self) -> Result<Self, NumericError> {
        if self.sign() < 0 && !exp.value.is_integer() {
            return Err(NumericError::FractionalPowNegativeBase);
        }
        if self.is_zero() && exp.sign() < 0 {
            return Err(NumericError::ZeroToNegativePow);
        }
        widen_exponent_range();
        let mut out = Float::with_val(self.result_prec(exp), &self.value);
        out.pow_assign_round(&exp.value, Round::Nearest);
        Ok(XReal { value: out })
    }

    /// `self^exp` for an integer exponent; exact when the result fits.
    pub fn pow_i(&self, exp: i32) -> Result<Self, NumericError> {
        if self.is_zero() && exp < 0 {
            return Err(NumericError::ZeroToNegativePow);
        }
        widen_exponent_range();
        let mut out = Float::with_val(self.value.prec(), &self.value);
        out.pow_assign_round(exp, Round::Nearest);
        Ok(XReal { value: out })
    }

    pub fn ln(&self) -> Result<Self, NumericError> {
        if self.sign() <= 0 {
            return Err(NumericError::LogNonPositive);
        }
        widen_exponent_range();
        Ok(XReal {
            value: Float::with_val(self.value.prec(), self.value.ln_ref()),
        })
    }

    /// Never underflows to zero for finite input: the widened exponent range
    /// keeps exp(-1e9) a normal value.
    pub fn exp(&self) -> Self {
        widen_exponent_range();
        XReal {
            value: Float::with_val(self.value.prec(), self.value.exp_ref()),
        }
    }

    pub fn abs(&self) -> Self {
        XReal {
            value: Float::with_val(self.value.prec(), self.value.abs_ref()),
        }
    }

    pub fn neg(&self) -> Self {
        XReal {
            value: Float::with_val(self.value.prec(), -&self.value),
        }
    }

    pub fn sqrt(&self) -> Result<Self, NumericError> {
        if self.sign() < 0 {
            return Err(NumericError::SqrtNegative);
        }
        widen_exponent_range();
        Ok(XReal {
            value: Float::with_val(self.value.prec(), self.value.sqrt_ref()),
        })
    }

    /// Binary exponent of the magnitude, for range assertions in tests.
    pub fn exponent(&self) -> Option<i64> {
        self.value.get_exp().map(|e| e as i64)
    }

    /// Serializes as `<sign><digits>.<digits>e<exponent>` with an
    /// unrestricted decimal exponent, e.g. `-1.234e-100000`. Digit count is
    /// chosen so parsing back at the same precision round-trips exactly.
    pub fn to_decimal_string(&self) -> String {
        if self.value.is_zero() {
            return "0.0e0".to_string();
        }
        let (neg, digits, exp) = self.value.to_sign_string_exp(10, None);
        let exp = exp.expect("finite nonzero value has an exponent");
        let sign = if neg { "-" } else { "" };
        let (head, tail) = digits.split_at(1);
        let tail = if tail.is_empty() { "0" } else { tail };
        // rug's exponent positions the point before the first digit; the
        // serialized form puts it after, shifting the exponent down by one.
        format!("{sign}{head}.{tail}e{}", i64::from(exp) - 1)
    }

    /// Parses the serialization format (plain decimal literals also accepted).
    pub fn parse_decimal(s: &str, prec: u32) -> Result<Self, NumericError> {
        widen_exponent_range();
        let parsed =
            Float::parse(s.trim()).map_err(|e| NumericError::ParseError(e.to_string()))?;
        Ok(XReal {
            value: Float::with_val(clamp_prec(prec), parsed),
        })
    }
}

impl PartialEq for XReal {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl PartialOrd for XReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl fmt::Display for XReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal_string())
    }
}

/// Log-domain error magnitude: `lambda = -ln xi` for an error `xi >= 0`.
///
/// An exact zero error (finite termination) is kept as a flag rather than an
/// infinite lambda; comparisons treat it as the smallest possible error.
#[derive(Debug, Clone)]
pub struct LogError {
    lambda: Option<XReal>,
}

impl LogError {
    pub fn exact_zero() -> Self {
        LogError { lambda: None }
    }

    pub fn from_lambda(lambda: XReal) -> Self {
        LogError {
            lambda: Some(lambda),
        }
    }

    pub fn is_exact_zero(&self) -> bool {
        self.lambda.is_none()
    }

    /// Lambda at working precision; `None` for an exact zero.
    pub fn lambda(&self) -> Option<&XReal> {
        self.lambda.as_ref()
    }

    /// Lambda as f64 for estimator arithmetic; +inf for an exact zero.
    pub fn lambda_f64(&self) -> f64 {
        match &self.lambda {
            Some(l) => l.to_f64(),
            None => f64::INFINITY,
        }
    }

    /// Orders by error magnitude: exact zero sorts below any positive error,
    /// and larger lambda means smaller error. Total on well-formed values
    /// (finite lambda), which is all this crate constructs.
    pub fn error_cmp(&self, other: &Self) -> Ordering {
        match (&self.lambda, &other.lambda) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            // larger lambda = smaller xi
            (Some(a), Some(b)) => b.partial_cmp(a).unwrap_or(Ordering::Equal),
        }
    }
}

/// Converts an error magnitude to its log-domain form.
///
/// Exact zero maps to the `is_exact_zero` flag; negative inputs are domain
/// errors rather than NaNs.
pub fn to_log_error(xi: &XReal) -> Result<LogError, NumericError> {
    match xi.sign() {
        -1 => Err(NumericError::NegativeMagnitude),
        0 => Ok(LogError::exact_zero()),
        _ => Ok(LogError::from_lambda(xi.ln()?.neg())),
    }
}
