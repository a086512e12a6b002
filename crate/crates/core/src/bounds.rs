//! Numeric evaluation of the domain-generalisation bounds.
//!
//! All values are returned unclipped; a bound above 1 is flagged `vacuous`
//! but kept so comparisons across hyperparameters still see raw values.

use serde::Serialize;

use crate::error::{validation, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundInputs {
    /// Domain-averaged empirical risk of a `[0, 1]`-valued 1-Lipschitz loss.
    pub empirical_risk: f64,
    /// Instance-level complexity over all `m·n` training samples.
    pub rad_mn: f64,
    /// Domain-level complexity over the `n` training domains.
    pub rad_n: f64,
    /// Samples per domain.
    pub m: usize,
    /// Number of training domains.
    pub n: usize,
    pub delta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.empirical_risk) {
            return Err(validation(format!("empirical risk {} not in [0, 1]", self.empirical_risk)));
        }
        check_rads(self.rad_mn, self.rad_n)?;
        check_sizes(self.m, self.n, self.delta)
    }
}

fn check_rads(rad_mn: f64, rad_n: f64) -> Result<()> {
    if !(rad_mn >= 0.0 && rad_n >= 0.0 && rad_mn.is_finite() && rad_n.is_finite()) {
        return Err(validation(format!("complexities must be finite and nonnegative, got {rad_mn}, {rad_n}")));
    }
    Ok(())
}

fn check_sizes(m: usize, n: usize, delta: f64) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(validation("m and n must be at least 1"));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(validation(format!("delta {delta} not in (0, 0.5)")));
    }
    Ok(())
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(validation(format!("kappa {kappa} not in (0, 1)")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    AverageCase,
    ExcessRisk,
    WorstCase,
    Cantelli,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub value: f64,
    /// Probability with which the bound holds.
    pub confidence: f64,
    pub vacuous: bool,
    pub inputs: Vec<(&'static str, f64)>,
}

impl BoundReport {
    fn new(kind: BoundKind, value: f64, confidence: f64, inputs: Vec<(&'static str, f64)>) -> Self {
        BoundReport {
            kind,
            value,
            confidence,
            vacuous: value > 1.0,
            inputs,
        }
    }
}

/// `√(ln(2/δ) / (2k))`
fn deviation(delta: f64, k: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * k)).sqrt()
}

/// Average-case bound on the expected risk over unseen domains:
///
/// `L̂ + 2ℛ_{mn} + 2ℛ_n + 3√(ln(2/δ)/(2mn)) + 3√(ln(2/δ)/(2n))`,
/// holding with probability `1 − 2δ`.
pub fn theorem1_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    let BoundInputs { empirical_risk, rad_mn, rad_n, m, n, delta } = *inputs;
    let (m, n) = (m as f64, n as f64);
    let value = empirical_risk
        + 2.0 * rad_mn
        + 2.0 * rad_n
        + 3.0 * deviation(delta, m * n)
        + 3.0 * deviation(delta, n);
    Ok(BoundReport::new(
        BoundKind::AverageCase,
        value,
        1.0 - 2.0 * delta,
        vec![
            ("empirical_risk", empirical_risk),
            ("rad_mn", rad_mn),
            ("rad_n", rad_n),
            ("m", m),
            ("n", n),
            ("delta", delta),
        ],
    ))
}

/// Excess risk of the empirical risk minimiser over the best predictor in the
/// class: `2ℛ_{mn} + 2ℛ_n + 2√(ln(2/δ)/(2mn)) + 2√(ln(2/δ)/(2n))`.
pub fn excess_risk_bound(rad_mn: f64, rad_n: f64, m: usize, n: usize, delta: f64) -> Result<BoundReport> {
    check_rads(rad_mn, rad_n)?;
    check_sizes(m, n, delta)?;
    let (mf, nf) = (m as f64, n as f64);
    let value = 2.0 * rad_mn + 2.0 * rad_n + 2.0 * deviation(delta, mf * nf) + 2.0 * deviation(delta, nf);
    Ok(BoundReport::new(
        BoundKind::ExcessRisk,
        value,
        1.0 - 2.0 * delta,
        vec![("rad_mn", rad_mn), ("rad_n", rad_n), ("m", mf), ("n", nf), ("delta", delta)],
    ))
}

/// One-sided Chebyshev (Cantelli): for a domain drawn from the environment,
/// `L_p ≤ Lᵉ + √(((1−κ)/κ)·Var)` with probability at least `1 − κ`.
pub fn cantelli_bound(env_risk: f64, variance: f64, kappa: f64) -> Result<BoundReport> {
    check_kappa(kappa)?;
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(validation(format!("variance must be finite and nonnegative, got {variance}")));
    }
    let value = env_risk + ((1.0 - kappa) / kappa * variance).sqrt();
    Ok(BoundReport::new(
        BoundKind::Cantelli,
        value,
        1.0 - kappa,
        vec![("env_risk", env_risk), ("variance", variance), ("kappa", kappa)],
    ))
}

/// `A + √(((1−κ)/κ)·A)`: turns a bound `A` on the expected risk into a
/// per-domain bound, using `Var ≤ Lᵉ` for `[0, 1]`-valued losses. The
/// reported confidence is `1 − κ` relative to `A` holding; see
/// [`worst_case_bound`] for the composed confidence.
pub fn worst_case_transform(a: f64, kappa: f64) -> Result<BoundReport> {
    check_kappa(kappa)?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(validation(format!("A must be finite and nonnegative, got {a}")));
    }
    let value = a + ((1.0 - kappa) / kappa * a).sqrt();
    Ok(BoundReport::new(BoundKind::WorstCase, value, 1.0 - kappa, vec![("A", a), ("kappa", kappa)]))
}

/// Worst-case transform of an average-case report; confidence becomes
/// `1 − (2δ + κ)`.
pub fn worst_case_bound(average: &BoundReport, kappa: f64) -> Result<BoundReport> {
    let mut report = worst_case_transform(average.value, kappa)?;
    report.confidence = average.confidence - kappa;
    if report.confidence <= 0.0 {
        return Err(validation(format!(
            "failure budgets leave no confidence: 1 - (2δ + κ) = {}",
            report.confidence
        )));
    }
    Ok(report)
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin_lowest(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] <= v => {}
            _ => best = Some(i),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(n: usize) -> BoundInputs {
        BoundInputs { empirical_risk: 0.1, rad_mn: 0.02, rad_n: 0.05, m: 100, n, delta: 0.05 }
    }

    // direct evaluation, written out term by term
    fn by_hand(l: f64, rmn: f64, rn: f64, m: f64, n: f64, d: f64, c: f64) -> f64 {
        let ln = (2.0f64 / d).ln();
        l + 2.0 * rmn + 2.0 * rn + c * (ln / (2.0 * m * n)).sqrt() + c * (ln / (2.0 * n)).sqrt()
    }

    #[test]
    fn average_bound_reference_values() {
        let r = theorem1_bound(&inputs(5)).unwrap();
        assert!((r.value - 2.2443).abs() < 1e-4, "{}", r.value);
        assert!((r.value - by_hand(0.1, 0.02, 0.05, 100.0, 5.0, 0.05, 3.0)).abs() < 1e-14);
        assert!(r.vacuous);
        assert!((r.confidence - 0.9).abs() < 1e-15);
        let big = theorem1_bound(&inputs(10_000)).unwrap();
        assert!((big.value - 0.2848).abs() < 1e-4, "{}", big.value);
        assert!(!big.vacuous);
    }

    #[test]
    fn average_bound_rejects_bad_inputs() {
        for delta in [0.0, 0.5, 0.7, -0.1] {
            assert!(theorem1_bound(&BoundInputs { delta, ..inputs(5) }).is_err());
        }
        assert!(theorem1_bound(&BoundInputs { empirical_risk: 1.5, ..inputs(5) }).is_err());
    }

    #[test]
    fn average_bound_monotonicity() {
        let base = inputs(5);
        let v = |i: BoundInputs| theorem1_bound(&i).unwrap().value;
        for n in 1..200 {
            assert!(v(BoundInputs { n: n + 1, ..base }) < v(BoundInputs { n, ..base }));
        }
        for m in 1..200 {
            assert!(v(BoundInputs { m: m + 1, ..base }) < v(BoundInputs { m, ..base }));
        }
        for i in 0..100 {
            let r = i as f64 * 0.01;
            assert!(v(BoundInputs { rad_mn: r + 0.01, ..base }) > v(BoundInputs { rad_mn: r, ..base }));
            assert!(v(BoundInputs { rad_n: r + 0.01, ..base }) > v(BoundInputs { rad_n: r, ..base }));
            let d = 0.001 + i as f64 * 0.004;
            // smaller delta (larger 1/δ) gives a larger bound
            assert!(v(BoundInputs { delta: d, ..base }) > v(BoundInputs { delta: d + 0.004, ..base }));
        }
    }

    #[test]
    fn excess_risk_reference_values() {
        let r = excess_risk_bound(0.02, 0.05, 100, 5, 0.05).unwrap();
        assert!((r.value - 1.4762).abs() < 1e-4, "{}", r.value);
        let limit = excess_risk_bound(0.0, 0.0, 10_000_000, 10_000_000, 0.05).unwrap();
        assert!(limit.value < 1e-3);
        for n in [1, 3, 10, 1000] {
            for m in [1, 50, 5000] {
                let i = BoundInputs { m, n, ..inputs(n) };
                let t1 = theorem1_bound(&i).unwrap().value;
                let ex = excess_risk_bound(i.rad_mn, i.rad_n, m, n, i.delta).unwrap().value;
                assert!(ex < t1 - i.empirical_risk + 1e-12);
            }
        }
    }

    #[test]
    fn cantelli_examples() {
        for kappa in [0.01, 0.3, 0.9] {
            assert_eq!(cantelli_bound(0.2, 0.0, kappa).unwrap().value, 0.2);
        }
        let r = cantelli_bound(0.2, 0.01, 0.5).unwrap();
        assert!((r.value - 0.3).abs() < 1e-15);
        assert_eq!(r.confidence, 0.5);
        assert!(cantelli_bound(0.2, 0.01, 1.0).is_err());
        assert!(cantelli_bound(0.2, -0.01, 0.5).is_err());
    }

    #[test]
    fn cantelli_holds_on_discrete_environment() {
        // five equally likely domains with known risks
        let risks = [0.05, 0.1, 0.12, 0.2, 0.6];
        let mean = risks.iter().sum::<f64>() / 5.0;
        let var = risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 5.0;
        for kappa in [0.05, 0.1, 0.2, 0.25, 0.4, 0.6, 0.8, 0.95] {
            let b = cantelli_bound(mean, var, kappa).unwrap().value;
            let exceed = risks.iter().filter(|&&r| r > b).count() as f64 / 5.0;
            assert!(exceed <= kappa, "kappa {kappa}: {exceed}");
        }
    }

    #[test]
    fn worst_case_examples() {
        assert_eq!(worst_case_transform(0.0, 0.3).unwrap().value, 0.0);
        assert_eq!(worst_case_transform(0.25, 0.5).unwrap().value, 0.75);
        let r = worst_case_transform(0.09, 0.1).unwrap();
        assert!((r.value - 0.99).abs() < 1e-12);
        assert!(worst_case_transform(0.1, 0.0).is_err());
        assert!(worst_case_transform(-0.1, 0.5).is_err());
    }

    #[test]
    fn worst_case_composes_confidence() {
        let avg = theorem1_bound(&inputs(10_000)).unwrap();
        let wc = worst_case_bound(&avg, 0.1).unwrap();
        assert!((wc.confidence - (1.0 - (2.0 * 0.05 + 0.1))).abs() < 1e-12);
        assert!(worst_case_bound(&avg, 0.95).is_err());
    }

    #[test]
    fn worst_case_strictly_increasing() {
        for kappa in [0.01, 0.2, 0.5, 0.99] {
            let vals: Vec<f64> = (0..=2000).map(|i| worst_case_transform(i as f64 * 1e-3, kappa).unwrap().value).collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn argmin_ties_to_first() {
        assert_eq!(argmin_lowest(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin_lowest(&[]), None);
    }
}
