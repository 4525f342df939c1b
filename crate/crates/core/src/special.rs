//! Exponential integrals.

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Γ(1/4).
pub const GAMMA_QUARTER: f64 = 3.625_609_908_221_908_3;
/// Digamma ψ(1/4).
pub const DIGAMMA_QUARTER: f64 = -4.227_453_533_376_265_4;

/// Ein(z) = ∫_0^z (1 − e^{−t})/t dt, the entire part of E₁:
/// E₁(z) = −γ − log z + Ein(z).
pub fn ein(z: f64) -> f64 {
    if z <= 1.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..60 {
            term *= -z / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        e1(z) + EULER_GAMMA + z.ln()
    }
}

/// Exponential integral E₁(z) = ∫_z^∞ e^{−t}/t dt for z > 0.
pub fn e1(z: f64) -> f64 {
    assert!(z > 0.0, "E1 needs a positive argument");
    if z <= 1.0 {
        -EULER_GAMMA - z.ln() + ein(z)
    } else {
        // modified Lentz on the continued fraction
        let tiny = 1e-300;
        let mut b = z + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-z).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // E1 values from tables (Abramowitz & Stegun 5.1)
        assert!((e1(0.5) - 0.559_773_594_776_160_8).abs() < 1e-15);
        assert!((e1(1.0) - 0.219_383_934_395_520_27).abs() < 1e-15);
        assert!((e1(2.0) - 0.048_900_510_708_061_12).abs() < 1e-16);
        assert!(((e1(10.0) - 4.156_968_929_685_324e-6) / 4.156_968_929_685_324e-6).abs() < 1e-13);
    }

    #[test]
    fn branches_agree_at_one() {
        let lo = -EULER_GAMMA - 1.0f64.ln() + ein(1.0);
        let eps = 1e-9;
        let hi = e1(1.0 + eps);
        assert!((lo - hi).abs() < 1e-8);
        assert!((ein(1.0 + eps) - ein(1.0)).abs() < 1e-8);
    }

    #[test]
    fn ein_small_argument() {
        let z: f64 = 1e-6;
        assert!((ein(z) - (z - z * z / 4.0 + z * z * z / 18.0)).abs() < 1e-24);
    }
}
