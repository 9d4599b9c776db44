//! Rank-interaction kernels on [0,1].
//!
//! A kernel `K` is a probability density on the rank interval: `K >= 0` and
//! `∫₀¹ K = 1`. Every supported family is closed form, with exact analytic
//! derivatives and antiderivative. The discrete normalisation used by the
//! particle dynamics weights rank `k` out of `N-1` by
//! `K(k/(N-1)) / ((N-1) · s_n)` where `s_n` is the Riemann-sum normaliser.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-form kernel families.
///
/// `PowerLaw` is `K(r) = (α+1)(1-r)^α`, or `(α+1) r^α` when mirrored.
/// `SmoothCutoff` is a plateau that rolls off to zero over `[θ-ε, θ]` with a
/// quintic C² smoothstep. `UniformCutoff` is the hard top-fraction kernel
/// `K = θ⁻¹ 1[r ≤ θ]`; it is not differentiable and derivative requests on
/// it are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RankKernel {
    Constant,
    UniformCutoff {
        theta: f64,
    },
    SmoothCutoff {
        theta: f64,
        eps: f64,
    },
    PowerLaw {
        alpha: f64,
        #[serde(default)]
        mirrored: bool,
    },
}

/// What `eval` returns: the kernel value, a derivative, or the
/// antiderivative 𝒦 with 𝒦(0) = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalOrder {
    Value,
    FirstDerivative,
    SecondDerivative,
    Antiderivative,
}

impl RankKernel {
    /// Validate family parameters.
    pub fn validate(&self) -> Result<()> {
        match *self {
            RankKernel::Constant => Ok(()),
            RankKernel::UniformCutoff { theta } => {
                if theta > 0.0 && theta <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::Domain(format!(
                        "uniform cutoff needs theta in (0,1], got {theta}"
                    )))
                }
            }
            RankKernel::SmoothCutoff { theta, eps } => {
                if theta > 0.0 && theta <= 1.0 && eps > 0.0 && eps <= theta {
                    Ok(())
                } else {
                    Err(Error::Domain(format!(
                        "smooth cutoff needs 0 < eps <= theta <= 1, got theta={theta}, eps={eps}"
                    )))
                }
            }
            RankKernel::PowerLaw { alpha, .. } => {
                if alpha >= 0.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("power law needs alpha >= 0, got {alpha}")))
                }
            }
        }
    }

    /// True iff the kernel is C² on [0,1]. Power laws are C² for integer
    /// exponents 0 and 1 (polynomials) and for alpha >= 2; fractional
    /// exponents below 2 have an unbounded second derivative at an endpoint.
    pub fn is_smooth(&self) -> bool {
        match *self {
            RankKernel::Constant | RankKernel::SmoothCutoff { .. } => true,
            RankKernel::UniformCutoff { .. } => false,
            RankKernel::PowerLaw { alpha, .. } => {
                alpha >= 2.0 || alpha == 0.0 || alpha == 1.0
            }
        }
    }

    /// Evaluate `K`, `K'`, `K''`, or the antiderivative 𝒦 at `r ∈ [0,1]`.
    pub fn eval(&self, r: f64, order: EvalOrder) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("r = {r} outside [0,1]")));
        }
        if matches!(order, EvalOrder::FirstDerivative | EvalOrder::SecondDerivative)
            && matches!(self, RankKernel::UniformCutoff { .. })
        {
            return Err(Error::NonSmoothKernel(
                "uniform cutoff has no derivative at the cutoff".into(),
            ));
        }
        Ok(match *self {
            RankKernel::Constant => match order {
                EvalOrder::Value => 1.0,
                EvalOrder::Antiderivative => r,
                _ => 0.0,
            },
            RankKernel::UniformCutoff { theta } => match order {
                EvalOrder::Value => {
                    if r <= theta {
                        1.0 / theta
                    } else {
                        0.0
                    }
                }
                EvalOrder::Antiderivative => r.min(theta) / theta,
                _ => unreachable!(),
            },
            RankKernel::SmoothCutoff { theta, eps } => {
                smooth_cutoff_eval(theta, eps, r, order)
            }
            RankKernel::PowerLaw { alpha, mirrored } => {
                // Mirror: replace r by 1-r (sign flips on odd derivatives).
                let (s, sign) = if mirrored { (r, 1.0) } else { (1.0 - r, -1.0) };
                let a = alpha;
                match order {
                    EvalOrder::Value => (a + 1.0) * pow_term(s, a),
                    EvalOrder::FirstDerivative => {
                        coef_pow(sign * (a + 1.0) * a, s, a - 1.0)
                    }
                    EvalOrder::SecondDerivative => {
                        coef_pow((a + 1.0) * a * (a - 1.0), s, a - 2.0)
                    }
                    EvalOrder::Antiderivative => {
                        if mirrored {
                            s.powf(a + 1.0)
                        } else {
                            1.0 - s.powf(a + 1.0)
                        }
                    }
                }
            }
        })
    }

    /// Build the discrete rank table for `N` particles.
    pub fn discrete_table(&self, n: usize) -> Result<DiscreteKernelTable> {
        DiscreteKernelTable::build(self, n)
    }
}

/// `s^a` with `s^0 = 1` even at `s = 0`.
fn pow_term(s: f64, a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else {
        s.powf(a)
    }
}

/// `coef * s^a` where a vanishing coefficient kills the term outright, so a
/// polynomial derivative never produces `0 * inf` at an endpoint.
fn coef_pow(coef: f64, s: f64, a: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * pow_term(s, a)
    }
}

fn smooth_cutoff_eval(theta: f64, eps: f64, r: f64, order: EvalOrder) -> f64 {
    // Normaliser: plateau length + half the transition width.
    let z = theta - eps / 2.0;
    let lo = theta - eps;
    match order {
        EvalOrder::Value => {
            if r <= lo {
                1.0 / z
            } else if r >= theta {
                0.0
            } else {
                let s = (r - lo) / eps;
                smoothstep_down(s) / z
            }
        }
        EvalOrder::FirstDerivative => {
            if r <= lo || r >= theta {
                0.0
            } else {
                let s = (r - lo) / eps;
                -30.0 * s * s * (1.0 - s) * (1.0 - s) / (eps * z)
            }
        }
        EvalOrder::SecondDerivative => {
            if r <= lo || r >= theta {
                0.0
            } else {
                let s = (r - lo) / eps;
                -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (eps * eps * z)
            }
        }
        EvalOrder::Antiderivative => {
            if r <= lo {
                r / z
            } else if r >= theta {
                1.0
            } else {
                let s = (r - lo) / eps;
                (lo + eps * smoothstep_down_integral(s)) / z
            }
        }
    }
}

/// Quintic smoothstep descending from 1 at s=0 to 0 at s=1, C² at both ends.
fn smoothstep_down(s: f64) -> f64 {
    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// ∫₀ˢ smoothstep_down; equals 1/2 at s=1.
fn smoothstep_down_integral(s: f64) -> f64 {
    s - s * s * s * s * (2.5 - 3.0 * s + s * s)
}

/// Discrete rank weights for `N` particles: `weights[k-1]` is the
/// probability of interacting with the particle at proximity rank `k`.
#[derive(Debug, Clone)]
pub struct DiscreteKernelTable {
    pub n: usize,
    /// `K(k/(N-1)) / ((N-1) s_n)` for k = 1..N-1.
    pub weights: Vec<f64>,
    /// Cumulative weights; last entry is exactly 1.
    pub cdf: Vec<f64>,
    /// Riemann-sum normaliser `s_n = (1/(N-1)) Σ K(k/(N-1))`.
    pub s_n: f64,
}

impl DiscreteKernelTable {
    pub fn build(kernel: &RankKernel, n: usize) -> Result<Self> {
        kernel.validate()?;
        if n < 2 {
            return Err(Error::Domain(format!("need N >= 2, got {n}")));
        }
        let m = n - 1;
        let raw: Vec<f64> = (1..=m)
            .map(|k| kernel.eval(k as f64 / m as f64, EvalOrder::Value))
            .collect::<Result<_>>()?;
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::DegenerateKernel { n });
        }
        let s_n = sum / m as f64;
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mut cdf = Vec::with_capacity(m);
        let mut acc = 0.0;
        for &w in &weights {
            acc += w;
            cdf.push(acc);
        }
        // Pin the last entry so sampling can never fall off the end.
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self { n, weights, cdf, s_n })
    }

    /// Invert the cdf at `u ∈ [0,1)`: smallest rank `k` with `cdf[k] > u`.
    /// Ranks are 1-based; zero-weight ranks are never returned.
    pub fn sample_rank(&self, u: f64) -> usize {
        debug_assert!((0.0..1.0).contains(&u));
        // Binary search for the first cdf entry strictly above u.
        let mut lo = 0usize;
        let mut hi = self.cdf.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.cdf[mid] > u {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        // Equal cumulative values resolve toward the smaller rank; the pinned
        // last entry can otherwise land on a trailing zero-weight rank.
        while lo > 0 && self.weights[lo] == 0.0 {
            lo -= 1;
        }
        lo + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_kernel_values() {
        let k = RankKernel::Constant;
        assert_eq!(k.eval(0.3, EvalOrder::Value).unwrap(), 1.0);
        assert_eq!(k.eval(0.7, EvalOrder::Antiderivative).unwrap(), 0.7);
    }

    #[test]
    fn power_law_value() {
        // K(r) = 2(1-r) at r = 0.25.
        let k = RankKernel::PowerLaw { alpha: 1.0, mirrored: false };
        assert_abs_diff_eq!(k.eval(0.25, EvalOrder::Value).unwrap(), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            k.eval(0.25, EvalOrder::FirstDerivative).unwrap(),
            -2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn power_law_second_derivative_no_nan_at_endpoint() {
        // alpha = 1 makes the K'' coefficient vanish; no 0 * inf.
        let k = RankKernel::PowerLaw { alpha: 1.0, mirrored: false };
        assert_eq!(k.eval(1.0, EvalOrder::SecondDerivative).unwrap(), 0.0);
    }

    #[test]
    fn domain_rejected() {
        let k = RankKernel::Constant;
        assert!(matches!(k.eval(1.5, EvalOrder::Value), Err(Error::Domain(_))));
    }

    #[test]
    fn uniform_cutoff_rejects_derivatives() {
        let k = RankKernel::UniformCutoff { theta: 0.5 };
        assert!(matches!(
            k.eval(0.2, EvalOrder::FirstDerivative),
            Err(Error::NonSmoothKernel(_))
        ));
    }

    #[test]
    fn antiderivative_endpoints() {
        for k in [
            RankKernel::Constant,
            RankKernel::UniformCutoff { theta: 0.4 },
            RankKernel::SmoothCutoff { theta: 0.6, eps: 0.2 },
            RankKernel::PowerLaw { alpha: 2.5, mirrored: false },
            RankKernel::PowerLaw { alpha: 3.0, mirrored: true },
        ] {
            assert_eq!(k.eval(0.0, EvalOrder::Antiderivative).unwrap(), 0.0);
            assert_abs_diff_eq!(
                k.eval(1.0, EvalOrder::Antiderivative).unwrap(),
                1.0,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn constant_table_n5() {
        let t = RankKernel::Constant.discrete_table(5).unwrap();
        assert_abs_diff_eq!(t.s_n, 1.0, epsilon = 1e-15);
        for w in &t.weights {
            assert_abs_diff_eq!(*w, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn increasing_linear_table_n5() {
        // K(r) = 2r: s_n = (1/4) Σ 2k/4 = 5/4; weights ∝ k.
        let t = RankKernel::PowerLaw { alpha: 1.0, mirrored: true }
            .discrete_table(5)
            .unwrap();
        assert_abs_diff_eq!(t.s_n, 1.25, epsilon = 1e-15);
        let expect = [0.1, 0.2, 0.3, 0.4];
        for (w, e) in t.weights.iter().zip(expect) {
            assert_abs_diff_eq!(*w, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn cutoff_table_n3() {
        // Grid points 1/2 and 1; theta = 0.5 keeps only the first.
        let t = RankKernel::UniformCutoff { theta: 0.5 }.discrete_table(3).unwrap();
        assert_eq!(t.weights, vec![1.0, 0.0]);
    }

    #[test]
    fn degenerate_cutoff() {
        // theta below the first grid point 1/(N-1).
        let r = RankKernel::UniformCutoff { theta: 0.1 }.discrete_table(5);
        assert!(matches!(r, Err(Error::DegenerateKernel { n: 5 })));
    }

    #[test]
    fn sample_rank_bins() {
        let t = RankKernel::Constant.discrete_table(5).unwrap();
        assert_eq!(t.sample_rank(0.0), 1);
        assert_eq!(t.sample_rank(0.99), 4);
    }

    #[test]
    fn sample_rank_skips_zero_weight() {
        let t = RankKernel::UniformCutoff { theta: 0.5 }.discrete_table(3).unwrap();
        assert_eq!(t.sample_rank(0.5), 1);
        assert_eq!(t.sample_rank(0.999), 1);
    }
}
