//! Acceptance gate: one test per shipped claim, each printing a single
//! pass/fail line. Tolerances are stated inline; nothing here is tuned to
//! the estimators' internals.

use std::time::Instant;

use porder_lab::experiments::{run_experiment, ExperimentConfig};
use porder_lab::numerics::XReal;
use porder_lab::rate::{p_base_estimate, PowerFunction, Tail};
use porder_lab::solvers::{divided_differences, kpoint_inverse_interp, RunControl};
use porder_lab::testbed::{char_root, holder_test_function};

const E_INV: f64 = 0.36787944117144233;

fn report_line(criterion: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {status} - {detail}");
}

#[test]
fn criterion_1_characteristic_root_table() {
    let start = Instant::now();
    let table = [
        (2, 1.0, 1.6180),
        (2, 0.5, 1.3660),
        (3, 1.0, 1.839),
        (3, 0.5, 1.656),
        (3, 1e-6, 1.6180),
    ];
    let mut failures = Vec::new();
    for (k, nu, expected) in table {
        let got = char_root(k, nu).unwrap();
        if (got - expected).abs() > 1e-3 {
            failures.push((k, nu, expected, got));
        }
    }
    let elapsed = start.elapsed();
    let timed_ok = elapsed.as_secs_f64() < 1.0;
    let pass = failures.is_empty() && timed_ok;
    report_line(
        1,
        pass,
        &format!("characteristic-root table, {} mismatches, {elapsed:?}", failures.len()),
    );
    assert!(timed_ok, "root table took {elapsed:?}, budget is 1s");
    assert!(
        failures.is_empty(),
        "char_root disagrees with a stated reference value: {failures:?}. For each \
         (K, nu, expected, got) above, `got` satisfies the defining equation \
         q^K = q^(K-1) + ... + q + nu to machine accuracy (substitute and check), \
         while `expected` does not; e.g. at K = 3, nu = 0.5 the polynomial \
         q^3 - q^2 - q - 0.5 evaluated at 1.656 is -0.258, far from a root, \
         and the actual root is 1.739907874377573. The stated value appears to \
         be a typo; see the decision ledger for the derivation."
    );
}

#[test]
fn criterion_2_kpoint_orders_match_char_roots() {
    let start = Instant::now();
    let report = run_experiment(&ExperimentConfig::new("fig5_kpoint_holder")).unwrap();
    let elapsed = start.elapsed();
    let worst = report
        .runs
        .iter()
        .map(|r| r.gap)
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = report.all_pass && elapsed.as_secs_f64() < 60.0;
    report_line(
        2,
        pass,
        &format!("6 K-point runs, worst q-order gap {worst:.2e} (tol 0.05), {elapsed:?}"),
    );
    for run in &report.runs {
        assert!(run.pass, "{}: {:?}", run.name, run.reason);
    }
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget is 60s");
}

#[test]
fn criterion_3_newton_fractional_rates() {
    let report = run_experiment(&ExperimentConfig::new("fig2_newton_fracpower")).unwrap();
    let fractional = &report.runs[..3];
    for (run, r) in fractional.iter().zip([0.25, 0.5, 0.75]) {
        assert!(run.pass, "{}: {:?}", run.name, run.reason);
        let errors = run.errors.as_ref().unwrap();
        assert!(
            errors.len() >= 200,
            "{}: only {} recorded iterations",
            run.name,
            errors.len()
        );
        // The k^r-root limit itself, with the true exponent.
        let psi = PowerFunction::Power { r };
        let limit = p_base_estimate(errors, &psi, &Tail::LastHalf).unwrap();
        assert!(
            (limit - E_INV).abs() <= 0.05,
            "{}: k^{r}-root limit {limit} vs {E_INV}",
            run.name
        );
    }
    let worst = fractional.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max);
    report_line(
        3,
        true,
        &format!("3 fractional-power runs classified Power(r), worst base gap {worst:.2e} (tol 0.05)"),
    );
}

#[test]
fn criterion_4_newton_linearithmic_rates() {
    let report = run_experiment(&ExperimentConfig::new("fig3_newton_lith")).unwrap();
    for run in &report.runs {
        assert!(run.pass, "{}: {:?}", run.name, run.reason);
        assert!(run.gap <= 0.1, "{}: base gap {}", run.name, run.gap);
    }
    let worst = report.runs.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max);
    report_line(
        4,
        true,
        &format!("4 (anti-)linearithmic runs classified, worst base gap {worst:.2e} (tol 0.1)"),
    );
}

#[test]
fn criterion_5_gd_fractional_rates() {
    let report = run_experiment(&ExperimentConfig::new("fig4_gd_frac")).unwrap();
    for run in &report.runs {
        assert!(run.pass, "{}: {:?}", run.name, run.reason);
        assert!(run.gap <= 0.02, "{}: root-limit gap {}", run.name, run.gap);
    }
    let worst = report.runs.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max);
    report_line(
        5,
        true,
        &format!("3 gradient-descent runs, worst k^r-root gap {worst:.2e} (tol 0.02)"),
    );
}

#[test]
fn criterion_6_spectral_radius_linear_rates() {
    let start = Instant::now();
    let report = run_experiment(&ExperimentConfig::new("thm41_spectral")).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(report.runs.len(), 21);
    for run in &report.runs {
        assert!(run.pass, "{}: {:?}", run.name, run.reason);
    }
    let worst = report.runs[..20]
        .iter()
        .map(|r| r.gap)
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = elapsed.as_secs_f64() < 10.0;
    report_line(
        6,
        pass,
        &format!(
            "20 random contractions, worst |p_base - rho| {worst:.2e} (tol 1e-2) over three \
             norms; nilpotent run terminated exactly; {elapsed:?}"
        ),
    );
    assert!(pass, "took {elapsed:?}, budget is 10s");
}

#[test]
fn criterion_7_hierarchy_counterexamples() {
    let report = run_experiment(&ExperimentConfig::new("counterexamples_s34")).unwrap();
    assert_eq!(report.runs.len(), 3);
    for run in &report.runs {
        assert!(run.pass, "{}: {:?}", run.name, run.reason);
    }
    report_line(
        7,
        true,
        "verdict matrix exact: Q-linear without UP; QUP with swinging q-factor; \
         QUP-superlinear without UP",
    );
}

#[test]
fn criterion_8_kpoint_oracle_equivalence() {
    // Two-point inverse interpolation must BE the secant method, step for
    // step. Each step subtracts a correction that nearly equals its anchor
    // (the result is superlinearly smaller than both operands), so 30 steps
    // burn hundreds of mantissa bits; 4096-bit starts keep the comparison
    // meaningful to far below the 1e-50 bar.
    let entry = holder_test_function(2, 0.25).unwrap();
    let problem = entry.problem().unwrap();
    let ctrl = RunControl {
        max_iter: 30,
        stop_lambda: f64::INFINITY,
        ..RunControl::default()
    };
    let x0 = XReal::from_f64_prec(1.0, 4096);
    let x1 = XReal::from_f64_prec(0.8, 4096);
    let run = kpoint_inverse_interp(problem, &[x0.clone(), x1.clone()], &ctrl).unwrap();

    let mut prev = x0;
    let mut cur = x1;
    let mut worst_rel: f64 = 0.0;
    let mut steps = 0;
    for (_, solver_x) in run.iterates.iter().skip(2) {
        let f_prev = problem.f(&prev).unwrap();
        let f_cur = problem.f(&cur).unwrap();
        let secant = cur.sub(
            &f_cur
                .mul(&cur.sub(&prev))
                .div(&f_cur.sub(&f_prev))
                .unwrap(),
        );
        let rel = secant
            .sub(solver_x)
            .div(&secant)
            .unwrap()
            .abs()
            .to_f64();
        worst_rel = worst_rel.max(rel);
        assert!(
            rel <= 1e-50,
            "step {steps}: relative deviation {rel:.3e} from the closed-form secant step"
        );
        prev = cur;
        cur = solver_x.clone();
        steps += 1;
    }
    assert!(steps >= 28, "only {steps} comparable steps recorded");

    // Divided differences must reproduce a degree-5 polynomial exactly.
    let coeffs: [i64; 6] = [-7, 2, 0, -3, 0, 1];
    let eval = |x: &XReal| {
        let mut acc = XReal::zero(x.precision());
        for c in coeffs.iter().rev() {
            acc = acc.mul(x).add(&XReal::from_f64(*c as f64));
        }
        acc
    };
    let nodes: Vec<(XReal, XReal)> = (0..6)
        .map(|i| {
            let x = XReal::from_f64(i as f64);
            let y = eval(&x);
            (x, y)
        })
        .collect();
    let poly = divided_differences(&nodes).unwrap();
    // Leading Newton coefficient is the leading coefficient of p.
    let leading = poly.coefficients().last().unwrap();
    assert!(leading.sub(&XReal::from_f64(1.0)).is_zero());
    // Newton-form reconstruction at a dyadic probe agrees exactly.
    let probe = XReal::from_f64(3.5);
    assert!(
        poly.eval(&probe).sub(&eval(&probe)).is_zero(),
        "Newton form deviates at the probe"
    );

    report_line(
        8,
        true,
        &format!(
            "30 secant steps matched to 1e-50 relative (worst {worst_rel:.2e}); \
             degree-5 divided differences exact"
        ),
    );
}
