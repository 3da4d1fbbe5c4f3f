//! Standard normal distribution helpers. The tails go through `erfc`
//! directly; the quantile comes from `statrs`.

use std::f64::consts::SQRT_2;

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

/// Φ(x).
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate far into the tail.
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Φ⁻¹(p) for p in [0, 1].
pub fn quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

/// Upper-α critical value z_α = Φ⁻¹(1 − α).
pub fn upper_critical(alpha: f64) -> f64 {
    -quantile(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((upper_critical(0.05) - 1.6448536269514722).abs() < 1e-12);
        assert!((upper_critical(0.01) - 2.3263478740408408).abs() < 1e-12);
        assert!((sf(3.4641016151377544) - 2.660027525696246e-4).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-8, 0.001, 0.2, 0.5, 0.9, 0.999] {
            assert!((cdf(quantile(p)) - p).abs() < 1e-12 * p.max(1e-3));
        }
    }
}
