//! Studentized sensitivity test for a Neyman-type null under the Γ model,
//! and the rule-dominance test built on it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{build_comparison_frame, ComparisonFrame, PairedSample, SensitivityParams};
use crate::normal;
use crate::sensitivity::gamma_to_kappa;

/// Studentized statistic and its upper-tail normal p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Studentized {
    pub statistic: f64,
    pub p_value: f64,
}

/// Outcome of testing `H: r_i ⊀_{Γ,δ} r_j`. `rejected` affirms r_i ≺ r_j.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub rule_pair: (usize, usize),
    pub statistic: f64,
    pub p_value: f64,
    pub rejected: bool,
    pub gamma: f64,
    pub delta: f64,
    /// Level the test was run at (after any multiplicity adjustment).
    pub level: f64,
    pub m: usize,
    /// δ·n/m, subtracted from each signed difference.
    pub shifted_margin: f64,
}

/// `d_i − κ|d_i|` with κ = (Γ−1)/(Γ+1).
pub fn adjusted_differences(d: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let kappa = gamma_to_kappa(gamma)?;
    Ok(d.iter().map(|&x| x - kappa * x.abs()).collect())
}

/// Mean of the Γ-adjusted, shifted differences over its standard error
/// `sqrt(Σ(a_i − ā)² / (m(m−1)))`.
pub fn fogarty_statistic(d: &[f64], gamma: f64, shift: f64) -> Result<Studentized> {
    let kappa = gamma_to_kappa(gamma)?;
    studentize(d, kappa, shift)
}

pub(crate) fn studentize(d: &[f64], kappa: f64, shift: f64) -> Result<Studentized> {
    let m = d.len();
    if m < 2 {
        return Err(Error::TooFewPairs { needed: 2, got: m });
    }
    let adjust = |x: f64| {
        let y = x - shift;
        y - kappa * y.abs()
    };
    let mf = m as f64;
    let mean = d.iter().map(|&x| adjust(x)).sum::<f64>() / mf;
    let ss = d
        .iter()
        .map(|&x| {
            let e = adjust(x) - mean;
            e * e
        })
        .sum::<f64>();
    let se = (ss / (mf * (mf - 1.0))).sqrt();
    // spread at rounding level (constant input whose mean is inexact)
    let scale = d.iter().map(|&x| adjust(x).abs()).fold(0.0, f64::max);
    if se <= 4.0 * f64::EPSILON * scale || !se.is_finite() {
        return Err(Error::DegenerateVariance);
    }
    let statistic = mean / se;
    Ok(Studentized {
        statistic,
        p_value: normal::sf(statistic),
    })
}

/// Runs the dominance test on an already reduced comparison.
pub fn test_frame(frame: &ComparisonFrame, params: &SensitivityParams) -> Result<TestResult> {
    let shift = frame.margin_shift(params.delta());
    let s = studentize(&frame.signed_d, params.kappa(), shift)?;
    let critical = normal::upper_critical(params.alpha());
    Ok(TestResult {
        rule_pair: frame.rule_pair,
        statistic: s.statistic,
        p_value: s.p_value,
        rejected: s.statistic > critical,
        gamma: params.gamma(),
        delta: params.delta(),
        level: params.alpha(),
        m: frame.m(),
        shifted_margin: shift,
    })
}

/// Tests `H: r_i ⊀_{Γ,δ} r_j` at level α on the matched pairs.
pub fn test_dominance(
    sample: &PairedSample,
    rule_i: usize,
    rule_j: usize,
    params: &SensitivityParams,
) -> Result<TestResult> {
    let frame = build_comparison_frame(sample, rule_i, rule_j)?;
    test_frame(&frame, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn adjusted_identity_at_gamma_one() {
        assert_eq!(adjusted_differences(&[2.0, 1.0, 3.0], 1.0).unwrap(), vec![2.0, 1.0, 3.0]);
    }

    #[test]
    fn adjusted_at_gamma_two() {
        let a = adjusted_differences(&[2.0, -1.0, 3.0], 2.0).unwrap();
        let want = [4.0 / 3.0, -4.0 / 3.0, 2.0];
        for (x, w) in a.iter().zip(want) {
            assert!(close(*x, w, 1e-15), "{x} vs {w}");
        }
    }

    #[test]
    fn adjusted_zero_is_fixed() {
        assert_eq!(adjusted_differences(&[0.0, 0.0], 5.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(adjusted_differences(&[1.0], 0.9), Err(Error::InvalidGamma(0.9)));
    }

    #[test]
    fn symmetric_sample_has_zero_statistic() {
        let s = fogarty_statistic(&[1.0, -1.0, 1.0, -1.0], 1.0, 0.0).unwrap();
        assert_eq!(s.statistic, 0.0);
        assert_eq!(s.p_value, 0.5);
    }

    #[test]
    fn statistic_on_small_positive_sample() {
        // mean 2, se² = (1 + 0 + 1) / (3·2) = 1/3
        let s = fogarty_statistic(&[2.0, 1.0, 3.0], 1.0, 0.0).unwrap();
        assert!(close(s.statistic, 2.0 * 3f64.sqrt(), 1e-14));
        assert!(close(s.p_value, 2.660027525696246e-4, 1e-15));
        let s2 = fogarty_statistic(&[2.0, 1.0, 3.0], 2.0, 0.0).unwrap();
        assert!(close(s2.statistic, 3.4641016151377544, 1e-12));
    }

    #[test]
    fn too_few_and_degenerate() {
        assert_eq!(
            fogarty_statistic(&[1.0], 1.0, 0.0),
            Err(Error::TooFewPairs { needed: 2, got: 1 })
        );
        assert_eq!(
            fogarty_statistic(&[2.0, 2.0, 2.0], 1.0, 0.0),
            Err(Error::DegenerateVariance)
        );
        assert_eq!(
            fogarty_statistic(&[0.7, 0.7, 0.7], 1.0, 0.0),
            Err(Error::DegenerateVariance)
        );
    }

    #[test]
    fn dominance_on_flipped_fixture() {
        let s = PairedSample::from_columns(vec![1.0, 2.0, -3.0], &[vec![0, 0, 1], vec![1, 1, 0]])
            .unwrap();
        let p = SensitivityParams::new(1.0, 0.05, 0.0).unwrap();
        let r = test_dominance(&s, 0, 1, &p).unwrap();
        assert!(close(r.statistic, 3.4641016151377544, 1e-12));
        assert!(r.rejected);
        assert_eq!(r.m, 3);
        assert_eq!(r.shifted_margin, 0.0);
        assert_eq!(test_dominance(&s, 1, 1, &p), Err(Error::IdenticalRules(1, 1)));
    }

    #[test]
    fn dominance_with_constant_signed_differences() {
        let s = PairedSample::from_columns(vec![3.0, 3.0, -9.0], &[vec![0, 0, 0], vec![1, 1, 0]])
            .unwrap();
        let p = SensitivityParams::new(1.0, 0.05, 0.0).unwrap();
        assert_eq!(test_dominance(&s, 0, 1, &p), Err(Error::DegenerateVariance));
    }

    #[test]
    fn margin_shift_is_applied_before_adjustment() {
        // n = 4, m = 2, δ = 0.5 ⇒ shift 1
        let s = PairedSample::from_columns(
            vec![3.0, 1.5, 10.0, 10.0],
            &[vec![0; 4], vec![1, 1, 0, 0]],
        )
        .unwrap();
        let p = SensitivityParams::new(3.0, 0.05, 0.5).unwrap();
        let r = test_dominance(&s, 0, 1, &p).unwrap();
        let direct = fogarty_statistic(&[2.0, 0.5], 3.0, 0.0).unwrap();
        assert_eq!(r.shifted_margin, 1.0);
        assert!(close(r.statistic, direct.statistic, 1e-14));
    }
}
