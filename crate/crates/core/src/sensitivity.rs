//! Sensitivity values of rule comparisons, their large-sample behaviour and
//! the (Λ, Δ) amplification of Γ.
//!
//! The sensitivity value Γ* is the smallest Γ at which the dominance test no
//! longer rejects. Working with κ = (Γ−1)/(Γ+1), the crossing of the
//! studentized statistic through `z_α` solves a quadratic in κ whose
//! coefficients are sample moments of `D` and `|D|`, so Γ* is available in
//! closed form without searching over Γ.

use serde::Serialize;

use crate::dominance::studentize;
use crate::error::{Error, Result};
use crate::model::ComparisonFrame;
use crate::normal;

pub fn gamma_to_kappa(gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma >= 1.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    Ok((gamma - 1.0) / (gamma + 1.0))
}

pub fn kappa_to_gamma(kappa: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::InvalidKappa(kappa));
    }
    Ok((1.0 + kappa) / (1.0 - kappa))
}

/// First and second moments of `D` and `|D|`, normalized by `1/I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSummary {
    pub mean_d: f64,
    pub mean_abs: f64,
    pub var_d: f64,
    pub var_abs: f64,
    pub cov: f64,
    pub count: usize,
}

impl MomentSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let count = values.len();
        if count < 2 {
            return Err(Error::TooFewPairs {
                needed: 2,
                got: count,
            });
        }
        let n = count as f64;
        let mean_d = values.iter().sum::<f64>() / n;
        let mean_abs = values.iter().map(|x| x.abs()).sum::<f64>() / n;
        let (mut var_d, mut var_abs, mut cov) = (0.0, 0.0, 0.0);
        for &x in values {
            let a = x - mean_d;
            let b = x.abs() - mean_abs;
            var_d += a * a;
            var_abs += b * b;
            cov += a * b;
        }
        Ok(Self {
            mean_d,
            mean_abs,
            var_d: var_d / n,
            var_abs: var_abs / n,
            cov: cov / n,
            count,
        })
    }
}

pub fn moment_summary(frame: &ComparisonFrame) -> Result<MomentSummary> {
    MomentSummary::from_values(&frame.signed_d)
}

/// Sensitivity value on both scales. `gamma` is `+∞` (and `kappa` 1) when the
/// test rejects at every Γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityValue {
    pub kappa: f64,
    pub gamma: f64,
}

impl SensitivityValue {
    pub fn is_finite(&self) -> bool {
        self.gamma.is_finite()
    }

    const NONE: Self = Self {
        kappa: 0.0,
        gamma: 1.0,
    };
    const UNBOUNDED: Self = Self {
        kappa: 1.0,
        gamma: f64::INFINITY,
    };
}

pub fn sensitivity_value(frame: &ComparisonFrame, alpha: f64) -> Result<SensitivityValue> {
    sensitivity_value_of(&frame.signed_d, alpha)
}

/// Closed-form sensitivity value of a vector of signed differences.
///
/// With `c = z_α² / (I − 1)` (the `1/(I(I−1))` standard error written in
/// terms of `1/I` moments), κ* is the root in `[0, Ē/|Ē|)` of
///
/// `(|D|̄² − c s²_|D|) κ² − 2 (D̄ |D|̄ − c s_{D,|D|}) κ + D̄² − c s²_D = 0`.
///
/// On that interval the quadratic is positive at 0 whenever the Γ = 1 test
/// rejects and negative at `D̄/|D|̄`, so the root is unique and the rejection
/// region in Γ is exactly `[1, Γ*)`.
pub fn sensitivity_value_of(values: &[f64], alpha: f64) -> Result<SensitivityValue> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let moments = MomentSummary::from_values(values)?;
    let z = normal::upper_critical(alpha);
    let at_one = studentize(values, 0.0, 0.0)?;
    if at_one.statistic <= z {
        return Ok(SensitivityValue::NONE);
    }
    // Without negative differences every adjusted value scales by (1 − κ) and
    // the statistic never moves.
    if values.iter().all(|&x| x >= 0.0) {
        return Ok(SensitivityValue::UNBOUNDED);
    }
    let kappa = quadratic_crossing(&moments, z);
    Ok(SensitivityValue {
        kappa,
        gamma: kappa_to_gamma(kappa).unwrap_or(f64::INFINITY),
    })
}

fn quadratic_crossing(m: &MomentSummary, z: f64) -> f64 {
    let i = m.count as f64;
    let c = z * z / (i - 1.0);
    let a = m.mean_abs * m.mean_abs - c * m.var_abs;
    let b = m.mean_d * m.mean_abs - c * m.cov;
    let c0 = m.mean_d * m.mean_d - c * m.var_d;
    // Upper end of the admissible interval: the adjusted mean must keep the
    // sign of z_α.
    let upper = if z > 0.0 {
        (m.mean_d / m.mean_abs).min(1.0)
    } else {
        1.0
    };

    let mut roots = Vec::with_capacity(2);
    let scale = a.abs().max(b.abs()).max(c0.abs());
    if a.abs() <= 1e-14 * scale {
        if b != 0.0 {
            roots.push(c0 / (2.0 * b));
        }
    } else {
        let disc = (b * b - a * c0).max(0.0);
        let q = b + b.signum() * disc.sqrt();
        roots.push(q / a);
        if q != 0.0 {
            roots.push(c0 / q);
        }
    }

    const SLACK: f64 = 1e-12;
    let inside = roots
        .iter()
        .copied()
        .filter(|r| r.is_finite() && *r >= -SLACK && *r <= upper + SLACK)
        .fold(f64::INFINITY, f64::min);
    let root = if inside.is_finite() {
        inside
    } else {
        // Rounding pushed the single admissible root just outside; take the
        // nearest one.
        roots
            .iter()
            .copied()
            .filter(|r| r.is_finite())
            .min_by(|x, y| dist(*x, upper).total_cmp(&dist(*y, upper)))
            .unwrap_or(upper)
    };
    root.clamp(0.0, upper.min(1.0 - f64::EPSILON))
}

fn dist(r: f64, upper: f64) -> f64 {
    if r < 0.0 {
        -r
    } else if r > upper {
        r - upper
    } else {
        0.0
    }
}

/// Which side of zero the mean signed difference falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PositiveMean,
    /// `E[D] ≤ 0`: the limiting κ is not a valid sensitivity value and the
    /// design sensitivity is clamped to 1.
    NonPositiveMean,
}

/// Large-sample parameters of κ*:
/// `√I (κ* − kappa_limit) → N(z_α · mu, sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticParams {
    pub kappa_limit: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub design_sensitivity: f64,
    pub regime: Regime,
}

pub fn asymptotic_params(m: &MomentSummary) -> Result<AsymptoticParams> {
    if !(m.mean_abs > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    let (ed, ea) = (m.mean_d, m.mean_abs);
    let ea2 = ea * ea;
    let inner = m.var_abs * ed * ed + m.var_d * ea2 - 2.0 * ed * ea * m.cov;
    let mu = -inner.max(0.0).sqrt() / ea2;
    let sigma2 = (m.var_d * ea2 - m.var_abs * ed * ed - 2.0 * ed * ea * m.cov
        + 2.0 * ed * ed * m.var_abs)
        / (ea2 * ea2);
    let (design_sensitivity, regime) = if ed <= 0.0 {
        (1.0, Regime::NonPositiveMean)
    } else if ed >= ea {
        (f64::INFINITY, Regime::PositiveMean)
    } else {
        ((ea + ed) / (ea - ed), Regime::PositiveMean)
    };
    Ok(AsymptoticParams {
        kappa_limit: ed / ea,
        mu,
        sigma2: sigma2.max(0.0),
        design_sensitivity,
        regime,
    })
}

/// Approximate power of the level-α test at Γ on `count` disagreeing pairs:
/// `P(κ* ≥ κ(Γ))` under the normal approximation of κ*.
///
/// A zero variance gives the 0/1 step at the approximate mean.
pub fn approx_power(params: &AsymptoticParams, count: usize, gamma: f64, alpha: f64) -> Result<f64> {
    if count == 0 {
        return Err(Error::TooFewPairs { needed: 1, got: 0 });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let kappa = gamma_to_kappa(gamma)?;
    let root_i = (count as f64).sqrt();
    let z = normal::upper_critical(alpha);
    let mean = params.kappa_limit + z * params.mu / root_i;
    let sd = params.sigma2.sqrt() / root_i;
    if sd == 0.0 {
        return Ok(if mean >= kappa { 1.0 } else { 0.0 });
    }
    Ok(normal::sf((kappa - mean) / sd))
}

/// The Δ paired with Λ on the amplification curve of Γ, where
/// `Γ = (ΛΔ + 1) / (Λ + Δ)`.
pub fn amplify(gamma: f64, lambda: f64) -> Result<f64> {
    if !(gamma.is_finite() && lambda.is_finite() && gamma > 1.0 && lambda > gamma) {
        return Err(Error::InvalidAmplification { gamma, lambda });
    }
    // Δ = (Γλ − 1)/(λ − Γ), written so that Δ → Γ as λ → ∞ is explicit.
    Ok(gamma + (gamma - 1.0) * (gamma + 1.0) / (lambda - gamma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(values: Vec<f64>) -> ComparisonFrame {
        let n = values.len();
        ComparisonFrame {
            rule_pair: (0, 1),
            pairs: (0..n).collect(),
            signed_d: values,
            n,
        }
    }

    #[test]
    fn kappa_transform_examples() {
        assert_eq!(gamma_to_kappa(1.0).unwrap(), 0.0);
        assert!((kappa_to_gamma(1.0 / 3.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((gamma_to_kappa(4.0).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(gamma_to_kappa(0.99), Err(Error::InvalidGamma(0.99)));
        assert_eq!(kappa_to_gamma(1.0), Err(Error::InvalidKappa(1.0)));
        assert_eq!(kappa_to_gamma(-0.1), Err(Error::InvalidKappa(-0.1)));
    }

    #[test]
    fn moment_examples() {
        let m = moment_summary(&frame(vec![1.0, -1.0])).unwrap();
        assert_eq!((m.mean_d, m.mean_abs, m.var_d, m.var_abs, m.cov), (0.0, 1.0, 1.0, 0.0, 0.0));

        let m = moment_summary(&frame(vec![2.0, 1.0, 3.0])).unwrap();
        for (got, want) in [
            (m.mean_d, 2.0),
            (m.mean_abs, 2.0),
            (m.var_d, 2.0 / 3.0),
            (m.var_abs, 2.0 / 3.0),
            (m.cov, 2.0 / 3.0),
        ] {
            assert!((got - want).abs() < 1e-15);
        }

        let m = moment_summary(&frame(vec![0.7; 3])).unwrap();
        assert!(m.var_d.abs() < 1e-30 && m.var_abs.abs() < 1e-30 && m.cov.abs() < 1e-30);
        assert!(moment_summary(&frame(vec![1.0])).is_err());
    }

    #[test]
    fn sensitivity_value_edge_cases() {
        let v = sensitivity_value(&frame(vec![1.0, -1.0]), 0.05).unwrap();
        assert_eq!((v.kappa, v.gamma), (0.0, 1.0));

        let v = sensitivity_value(&frame(vec![2.0, 1.0, 3.0, 0.5]), 0.05).unwrap();
        assert!(v.gamma.is_infinite());

        assert_eq!(
            sensitivity_value(&frame(vec![2.0, 2.0]), 0.05),
            Err(Error::DegenerateVariance)
        );
        assert!(matches!(
            sensitivity_value(&frame(vec![2.0]), 0.05),
            Err(Error::TooFewPairs { .. })
        ));
    }

    #[test]
    fn statistic_equals_critical_value_at_the_root() {
        let d = vec![1.2, 0.4, -0.3, 2.2, 0.9, 1.1, -0.8, 1.7, 0.2, 0.6];
        let v = sensitivity_value_of(&d, 0.05).unwrap();
        assert!(v.is_finite());
        let t = crate::dominance::fogarty_statistic(&d, v.gamma, 0.0).unwrap();
        assert!((t.statistic - normal::upper_critical(0.05)).abs() < 1e-9);
    }

    #[test]
    fn two_point_asymptotics() {
        // D = +1 w.p. 0.75, −1 otherwise
        let m = MomentSummary {
            mean_d: 0.5,
            mean_abs: 1.0,
            var_d: 0.75,
            var_abs: 0.0,
            cov: 0.0,
            count: 100,
        };
        let p = asymptotic_params(&m).unwrap();
        assert_eq!(p.kappa_limit, 0.5);
        assert!((p.design_sensitivity - 3.0).abs() < 1e-15);
        assert!((p.mu + 0.75f64.sqrt()).abs() < 1e-15);
        assert!((p.sigma2 - 0.75).abs() < 1e-15);
        assert_eq!(p.regime, Regime::PositiveMean);

        // Φ((0.5 − z·0.866/10 − 1/3) / 0.0866)
        let power = approx_power(&p, 100, 2.0, 0.05).unwrap();
        assert!((power - 0.6101259315623059).abs() < 1e-10, "{power}");
    }

    #[test]
    fn constant_and_symmetric_asymptotics() {
        let c = MomentSummary::from_values(&[0.4, 0.4, 0.4]).unwrap();
        let p = asymptotic_params(&c).unwrap();
        assert_eq!((p.kappa_limit, p.mu, p.sigma2), (1.0, 0.0, 0.0));
        assert!(p.design_sensitivity.is_infinite());

        let s = MomentSummary::from_values(&[1.0, -1.0, 2.0, -2.0]).unwrap();
        let p = asymptotic_params(&s).unwrap();
        assert_eq!(p.kappa_limit, 0.0);
        assert_eq!(p.design_sensitivity, 1.0);
        assert_eq!(p.regime, Regime::NonPositiveMean);

        let z = MomentSummary::from_values(&[0.0, 0.0]).unwrap();
        assert_eq!(asymptotic_params(&z), Err(Error::ZeroDenominator));
    }

    #[test]
    fn power_at_the_median_and_in_the_limit() {
        let p = AsymptoticParams {
            kappa_limit: 0.5,
            mu: -0.75f64.sqrt(),
            sigma2: 0.75,
            design_sensitivity: 3.0,
            regime: Regime::PositiveMean,
        };
        let count = 400;
        let mean = 0.5 + normal::upper_critical(0.05) * p.mu / 20.0;
        let gamma = kappa_to_gamma(mean).unwrap();
        assert!((approx_power(&p, count, gamma, 0.05).unwrap() - 0.5).abs() < 1e-9);
        assert!(approx_power(&p, 100_000_000, 2.8, 0.05).unwrap() >= 0.999);

        let step = AsymptoticParams { sigma2: 0.0, mu: 0.0, ..p };
        assert_eq!(approx_power(&step, 10, 2.0, 0.05).unwrap(), 1.0);
        assert_eq!(approx_power(&step, 10, 4.0, 0.05).unwrap(), 0.0);
        assert!(approx_power(&p, 0, 2.0, 0.05).is_err());
    }

    #[test]
    fn amplification() {
        assert_eq!(amplify(1.2, 2.0).unwrap(), 1.75);
        assert!(amplify(1.2, 1.2).is_err());
        assert!(amplify(1.0, 2.0).is_err());
        let far = amplify(1.2, 1e12).unwrap();
        assert!((far - 1.2).abs() < 1e-11);
        // the point lies on the curve
        let (g, l) = (2.5, 7.0);
        let d = amplify(g, l).unwrap();
        assert!(((l * d + 1.0) / (l + d) - g).abs() < 1e-14);
    }
}
