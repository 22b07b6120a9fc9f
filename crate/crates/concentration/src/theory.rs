//! Quantitative theory as calculators: the VC-style complexity penalty, the
//! generalization certificate bracketing the empirical concentration, the
//! `(T⁴, 1/T)` schedule, the ℓ∞ → ℓ2 budget conversion, and the
//! intrinsic-robustness bookkeeping.

use serde::{Deserialize, Serialize};

use crate::metric::Metric;
use crate::regions::Region;
use crate::{Error, Result};

/// Inputs of the complexity penalty `min(1, 8·exp(nT·lnT·lnm − mδ²/128))`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub n: usize,
    pub t_count: usize,
    pub m: usize,
    pub delta: f64,
}

/// Two-sided bracket certificate: with probability at least `confidence`,
/// the true restricted concentration at `alpha ∓ delta` brackets the
/// empirical value within `± delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationCertificate {
    pub h_empirical: f64,
    pub delta: f64,
    pub confidence: f64,
    pub statement: String,
}

/// One table row: the empirical concentration estimate for a found region,
/// evaluated on both splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEstimate {
    pub alpha: f64,
    pub epsilon: f64,
    pub metric: Metric,
    pub t_count: usize,
    pub risk_train: f64,
    pub risk_test: f64,
    pub advrisk_train: f64,
    pub advrisk_test: f64,
    pub region: Region,
    /// Mean and standard deviation of the train adversarial risk over
    /// restarts, when the search used restarts.
    pub restart_mean: Option<f64>,
    pub restart_stddev: Option<f64>,
}

/// Complexity penalty for the rectangle-complement and ball-union families,
/// clamped into `[0,1]` and computed in log space.
pub fn complexity_penalty(p: PenaltyParams) -> Result<f64> {
    if p.m < 2 {
        return Err(Error::param("m", "must be at least 2"));
    }
    if p.t_count < 1 {
        return Err(Error::param("t_count", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p.delta) {
        return Err(Error::param("delta", "must lie in [0,1]"));
    }
    let n = p.n as f64;
    let t = p.t_count as f64;
    let m = p.m as f64;
    let log_value =
        8.0_f64.ln() + n * t * t.ln() * m.ln() - m * p.delta * p.delta / 128.0;
    if log_value >= 0.0 {
        Ok(1.0)
    } else {
        Ok(log_value.exp().min(1.0))
    }
}

/// Builds the generalization certificate for an empirical estimate. Both
/// penalty terms use the same formula because the expanded family is
/// contained in the base family for rectangles and balls alike, so the
/// confidence is `max(0, 1 − 4·penalty)`.
pub fn generalization_certificate(h_emp: f64, p: PenaltyParams) -> Result<GeneralizationCertificate> {
    if !(0.0..=1.0).contains(&h_emp) {
        return Err(Error::param("h_emp", "must lie in [0,1]"));
    }
    let phi = complexity_penalty(p)?;
    let confidence = (1.0 - 4.0 * phi).max(0.0);
    let statement = format!(
        "with probability >= {confidence}: h(mu, alpha-{d}, eps, G) - {d} <= {h_emp} <= h(mu, alpha+{d}, eps, G) + {d}",
        d = p.delta,
    );
    Ok(GeneralizationCertificate {
        h_empirical: h_emp,
        delta: p.delta,
        confidence,
        statement,
    })
}

/// Convergence schedule: with `T` primitives, use at least `T⁴` samples and
/// deviation `1/T`.
pub fn schedule(t_count: usize) -> (u64, f64) {
    let t = t_count as u64;
    (t * t * t * t, 1.0 / t_count as f64)
}

/// Volume-matching conversion of an ℓ∞ budget to an ℓ2 budget:
/// `ε2 = sqrt(n/π) · ε∞`.
pub fn eps_convert(n: usize, eps_inf: f64) -> f64 {
    (n as f64 / std::f64::consts::PI).sqrt() * eps_inf
}

/// Upper estimate of intrinsic robustness for classifiers with risk at least
/// alpha: one minus the found region's adversarial risk.
pub fn intrinsic_robustness(advrisk: f64) -> f64 {
    1.0 - advrisk
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_spot_values() {
        // n=1, T=1, m=1e6, delta=0.05: exponent = ln(8) - 1e6*0.0025/128
        let p = PenaltyParams { n: 1, t_count: 1, m: 1_000_000, delta: 0.05 };
        let got = complexity_penalty(p).unwrap();
        let want = 8.0 * (-(1_000_000.0_f64 * 0.0025 / 128.0)).exp();
        assert!((got - want).abs() / want < 1e-12);
        assert!((got - 2.65e-8).abs() < 0.05e-8, "got {got}");

        // m=1e3 gives a raw value above 1; clamped.
        let p = PenaltyParams { n: 1, t_count: 1, m: 1_000, delta: 0.05 };
        assert_eq!(complexity_penalty(p).unwrap(), 1.0);

        // delta = 0 degenerates to the clamp.
        let p = PenaltyParams { n: 1, t_count: 1, m: 1_000_000, delta: 0.0 };
        assert_eq!(complexity_penalty(p).unwrap(), 1.0);
    }

    #[test]
    fn penalty_monotonicity_grid() {
        let base = PenaltyParams { n: 2, t_count: 3, m: 4_000_000, delta: 0.2 };
        let v = |p: PenaltyParams| complexity_penalty(p).unwrap();
        for m2 in [5_000_000, 8_000_000] {
            assert!(v(PenaltyParams { m: m2, ..base }) <= v(base));
        }
        assert!(v(PenaltyParams { delta: 0.3, ..base }) <= v(base));
        assert!(v(PenaltyParams { n: 3, ..base }) >= v(base));
        assert!(v(PenaltyParams { t_count: 4, ..base }) >= v(base));
    }

    #[test]
    fn certificate_values() {
        let p = PenaltyParams { n: 1, t_count: 1, m: 1_000_000, delta: 0.05 };
        let cert = generalization_certificate(0.1, p).unwrap();
        assert!((1.0 - cert.confidence - 1.06e-7).abs() < 0.02e-7);

        // Clamped penalty -> vacuous but well-formed certificate.
        let p = PenaltyParams { n: 1, t_count: 1, m: 100, delta: 0.01 };
        let cert = generalization_certificate(0.5, p).unwrap();
        assert_eq!(cert.confidence, 0.0);

        // Confidence nondecreasing in m.
        let c5 = generalization_certificate(0.1, PenaltyParams { m: 100_000, ..p }).unwrap();
        let c6 = generalization_certificate(0.1, PenaltyParams { m: 1_000_000, ..p }).unwrap();
        assert!(c6.confidence >= c5.confidence);
    }

    #[test]
    fn schedule_values() {
        assert_eq!(schedule(10), (10_000, 0.1));
        assert_eq!(schedule(1), (1, 1.0));
        assert_eq!(schedule(40), (2_560_000, 0.025));
    }

    #[test]
    fn eps_convert_table_values() {
        assert!((eps_convert(784, 0.3) - 4.74).abs() < 0.005);
        assert!((eps_convert(784, 0.1) - 1.58).abs() < 0.005);
        assert!((eps_convert(3072, 8.0 / 255.0) - 0.9810).abs() < 5e-5);
        // Linear in eps and increasing in n.
        assert!((eps_convert(784, 0.2) - 2.0 * eps_convert(784, 0.1)).abs() < 1e-12);
        assert!(eps_convert(785, 0.1) > eps_convert(784, 0.1));
    }

    #[test]
    fn intrinsic_robustness_values() {
        assert!((intrinsic_robustness(0.0724) - 0.9276).abs() < 1e-12);
        assert_eq!(intrinsic_robustness(1.0), 0.0);
        assert!((intrinsic_robustness(0.2921) - 0.7079).abs() < 1e-12);
    }

    #[test]
    fn schedule_terms_become_summable() {
        // Penalty terms along the schedule must eventually decay
        // geometrically: term(T+1) <= c * term(T) for c < 1 once the
        // -T²/128 part of the exponent dominates.
        let term = |t: usize| {
            let (m, d) = schedule(t);
            complexity_penalty(PenaltyParams { n: 1, t_count: t, m: m as usize, delta: d }).unwrap()
        };
        let mut t0 = None;
        // Start at T = 2: schedule(1) yields m = 1, below the penalty guard.
        for t in 2..200_000 {
            if term(t + 1) <= 0.9 * term(t) && term(t) < 1.0 {
                t0 = Some(t);
                break;
            }
        }
        let t0 = t0.expect("decay must set in");
        for t in t0..(t0 + 50) {
            assert!(term(t + 1) <= 0.9 * term(t));
        }
    }
}
