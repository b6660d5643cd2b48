use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

/// AWGN capacity in bits per channel use, `log2(1 + snr) / 2`.
pub fn capacity(snr: f64) -> f64 {
    0.5 * snr.ln_1p() / LN_2
}

/// Asymptotic BP rate of homogeneous codes, `1 / ((1/snr + 1) 2 ln 2)`.
pub fn r_bp_infinity(snr: f64) -> f64 {
    1.0 / ((1.0 / snr + 1.0) * 2.0 * LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Posterior spread over the section (`phi_0`).
    Phi0,
    /// Posterior frozen on one entry (`phi_1`).
    Phi1,
}

fn g(et: f64, rate: f64, snr: f64) -> f64 {
    let d = 1.0 / snr + et;
    -(d.ln() + (1.0 - et) / d) / (2.0 * rate * LN_2)
}

/// Large-section potential per `log B` as a function of the section error
/// `Etilde = B E`: the larger of `g + 1` and `g + 1/(2 ln2 R (1/snr + Etilde))`.
pub fn phi_large_b(et: f64, rate: f64, snr: f64) -> (f64, Branch) {
    let base = g(et, rate, snr);
    let p0 = base + 1.0;
    let p1 = base + 1.0 / (2.0 * LN_2 * rate * (1.0 / snr + et));
    if p1 > p0 {
        (p1, Branch::Phi1)
    } else {
        (p0, Branch::Phi0)
    }
}

/// Section error where the two branches cross.
pub fn branch_switch(rate: f64, snr: f64) -> f64 {
    (1.0 / (2.0 * rate * LN_2) - 1.0 / snr).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_values() {
        assert!((capacity(15.0) - 2.0).abs() < 1e-15);
        assert_eq!(capacity(0.0), 0.0);
        assert!((capacity(100.0) - 3.3291).abs() < 5e-5);
    }

    #[test]
    fn bp_rate_limit_and_value() {
        assert!((r_bp_infinity(1e12) - 0.5 / LN_2).abs() < 1e-10);
        // 15 / (16 * 2 ln 2), evaluated independently
        assert!((r_bp_infinity(15.0) - 0.676_263_300_4).abs() < 1e-9);
    }

    #[test]
    fn branches_cross_at_the_switch() {
        let (r, snr) = (1.2, 15.0);
        let ec = branch_switch(r, snr);
        assert_eq!(phi_large_b(0.5 * ec, r, snr).1, Branch::Phi1);
        assert_eq!(phi_large_b(ec + 0.05, r, snr).1, Branch::Phi0);
        let base = g(ec, r, snr);
        let p1 = base + 1.0 / (2.0 * LN_2 * r * (1.0 / snr + ec));
        assert!((p1 - (base + 1.0)).abs() < 1e-12);
    }
}
