//! Pearson chi-square test against the uniform distribution.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub critical: f64,
    pub dof: usize,
    pub significance: f64,
    pub pass: bool,
}

/// Tests `counts` (events per bucket) for uniformity at `significance`.
/// Needs at least two buckets and five expected events per bucket.
pub fn chi_square_uniform(counts: &[u64], significance: f64) -> Result<ChiSquare> {
    if counts.len() < 2 {
        return Err(LabError::Invalid("need at least two buckets".into()));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(LabError::Invalid("significance must lie in (0, 1)".into()));
    }
    let total: u64 = counts.iter().sum();
    let needed = 5 * counts.len() as u64;
    if total < needed {
        return Err(LabError::InsufficientData { total, bins: counts.len(), needed });
    }
    let expected = total as f64 / counts.len() as f64;
    let statistic = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum::<f64>();
    let dof = counts.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| LabError::Invalid(e.to_string()))?;
    let critical = dist.inverse_cdf(1.0 - significance);
    Ok(ChiSquare { statistic, critical, dof, significance, pass: statistic <= critical })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pyramid_oram::{HashFamily, KeyedHash};

    #[test]
    fn equal_counts_pass_with_zero_statistic() {
        let r = chi_square_uniform(&[10; 16], 0.001).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn concentrated_mass_fails() {
        let mut counts = [0u64; 16];
        counts[3] = 10_000;
        assert!(!chi_square_uniform(&counts, 0.001).unwrap().pass);
    }

    #[test]
    fn undersampled_rejected() {
        let err = chi_square_uniform(&[1; 16], 0.01).unwrap_err();
        assert!(matches!(err, LabError::InsufficientData { total: 16, bins: 16, needed: 80 }));
        assert!(chi_square_uniform(&[100], 0.01).is_err());
    }

    #[test]
    fn reference_critical_values() {
        // Standard table: dof 1 at 0.05 is 3.841, dof 10 at 0.01 is 23.209,
        // dof 63 at 0.001 is 103.442.
        for (bins, alpha, want) in [(2, 0.05, 3.841), (11, 0.01, 23.209), (64, 0.001, 103.442)] {
            let r = chi_square_uniform(&vec![100; bins], alpha).unwrap();
            assert!((r.critical - want).abs() < 1e-3, "{bins} {alpha}: {}", r.critical);
        }
    }

    #[test]
    fn prf_buckets_are_uniform() {
        let h: KeyedHash = HashFamily::new(99).keyed(3);
        let mut counts = [0u64; 64];
        for key in 0..100_000u32 {
            counts[h.bucket(0, key, 64)] += 1;
        }
        assert!(chi_square_uniform(&counts, 0.001).unwrap().pass);
    }
}
