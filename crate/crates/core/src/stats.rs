//! Small statistics helpers for sampler verification.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Chi-square goodness-of-fit of observed counts against a discrete law.
///
/// Bins whose expected count falls below `min_expected` are pooled into the
/// nearest kept bin so the asymptotic distribution applies. Returns the
/// statistic and its p-value.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> Result<(f64, f64)> {
    if observed.len() != probs.len() || observed.is_empty() {
        return Err(Error::Domain("observed and probs must match and be nonempty".into()));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::Domain("no observations".into()));
    }
    let n = total as f64;

    // Pool adjacent bins until every expected count reaches the floor.
    let mut pooled: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        acc_o += o as f64;
        acc_e += p * n;
        if acc_e >= min_expected {
            pooled.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 || acc_o > 0.0 {
        if let Some(last) = pooled.last_mut() {
            last.0 += acc_o;
            last.1 += acc_e;
        } else {
            pooled.push((acc_o, acc_e));
        }
    }
    if pooled.len() < 2 {
        return Err(Error::Domain("fewer than 2 usable bins after pooling".into()));
    }
    let stat: f64 = pooled
        .iter()
        .map(|&(o, e)| {
            let d = o - e;
            d * d / e
        })
        .sum();
    let df = (pooled.len() - 1) as f64;
    let dist = ChiSquared::new(df).expect("df >= 1");
    let p_value = 1.0 - dist.cdf(stat);
    Ok((stat, p_value))
}
