//! Bernstein polynomials and the 1/N expansions behind the kinetic limit.
//!
//! Everything here is exact summation against binomial weights: the Bernstein
//! operator `B_n(f;x)`, shifted binomial expectations of a rank kernel, and
//! the second-order expansion of the discrete normaliser `S^N(K)`. Binomial
//! weights use a mode-anchored ratio recurrence so degrees up to 10⁵ stay
//! finite and accurate, and sums are Kahan-compensated.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernel::{EvalOrder, RankKernel};

/// One expansion check: the exact sum, its leading term, the 1/N-corrected
/// term, and both residuals.
#[derive(Debug, Clone, Copy)]
pub struct ExpansionReport {
    pub size: usize,
    pub lhs: f64,
    pub leading: f64,
    pub corrected: f64,
    pub residual_leading: f64,
    pub residual_corrected: f64,
}

impl ExpansionReport {
    fn new(size: usize, lhs: f64, leading: f64, corrected: f64) -> Self {
        Self {
            size,
            lhs,
            leading,
            corrected,
            residual_leading: (lhs - leading).abs(),
            residual_corrected: (lhs - corrected).abs(),
        }
    }
}

/// Index shifts of the kernel argument inside the binomial sum. These are a
/// closed list: each corresponds to one combinatorial counting of particles
/// already inside the ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shift {
    /// (0,0): plain Bernstein sampling at R/M.
    None,
    /// (1,1): one fixed particle inside the ball.
    PlusOne,
    /// (2,2): two fixed particles inside the ball.
    PlusTwoTwo,
    /// (1,2): one inside, one outside.
    PlusOneTwo,
}

impl Shift {
    pub fn offsets(self) -> (usize, usize) {
        match self {
            Shift::None => (0, 0),
            Shift::PlusOne => (1, 1),
            Shift::PlusTwoTwo => (2, 2),
            Shift::PlusOneTwo => (1, 2),
        }
    }
}

/// Which side of the ball the spectator particle sits on in the two-case
/// rank expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallCase {
    InsideBall,
    OutsideBall,
}

/// Evaluate the n-th Bernstein polynomial of `f` at `x`:
/// `B_n(f;x) = Σ f(i/n) C(n,i) x^i (1-x)^(n-i)`.
pub fn bernstein_eval(f: &dyn Fn(f64) -> f64, n: usize, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0,1]")));
    }
    if n < 1 {
        return Err(Error::Domain("degree must be >= 1".into()));
    }
    if x == 0.0 {
        return Ok(f(0.0));
    }
    if x == 1.0 {
        return Ok(f(1.0));
    }
    let weights = BinomialWeights::new(n, x);
    let mut sum = KahanSum::default();
    for i in 0..=n {
        sum.add(f(i as f64 / n as f64) * weights.at(i));
    }
    Ok(sum.value())
}

/// `Σ_{R=0}^{M} K((R+a)/(M+b)) C(M,R) p^R (1-p)^(M-R)` for the closed list
/// of shifts `(a,b)` appearing in the rank expansions.
pub fn shifted_binomial_expectation(
    kernel: &RankKernel,
    p: f64,
    m: usize,
    shift: Shift,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} outside [0,1]")));
    }
    if m < 1 {
        return Err(Error::Domain("M must be >= 1".into()));
    }
    let (a, b) = shift.offsets();
    let arg = |r: usize| (r + a) as f64 / (m + b) as f64;
    if p == 0.0 {
        return kernel.eval(arg(0), EvalOrder::Value);
    }
    if p == 1.0 {
        return kernel.eval(arg(m), EvalOrder::Value);
    }
    let weights = BinomialWeights::new(m, p);
    let mut sum = KahanSum::default();
    for r in 0..=m {
        sum.add(kernel.eval(arg(r), EvalOrder::Value)? * weights.at(r));
    }
    Ok(sum.value())
}

/// Check the first-order Bernstein expansion
/// `B_n(f;x) = f(x) + x(1-x) f''(x)/(2n) + o(1/n)`.
///
/// The caller supplies the second derivative; `f` must be C² for the
/// correction to mean anything.
pub fn lorentz_expansion_check(
    f: &dyn Fn(f64) -> f64,
    d2f: &dyn Fn(f64) -> f64,
    x: f64,
    n: usize,
) -> Result<ExpansionReport> {
    if !(0.0 < x && x < 1.0) {
        return Err(Error::Domain(format!("x = {x} must be interior to (0,1)")));
    }
    let lhs = bernstein_eval(f, n, x)?;
    let leading = f(x);
    let corrected = leading + x * (1.0 - x) * d2f(x) / (2.0 * n as f64);
    Ok(ExpansionReport::new(n, lhs, leading, corrected))
}

/// Check the two-case rank expansion against the exact shifted sum with
/// `M = N - 3`:
/// inside: `K(p) + 2(1-p)K'(p)/N + p(1-p)K''(p)/(2N)`;
/// outside: the same minus `K'(p)/N`.
pub fn lemma_expansion_check(
    kernel: &RankKernel,
    p: f64,
    n: usize,
    case: BallCase,
) -> Result<ExpansionReport> {
    if !kernel.is_smooth() {
        return Err(Error::NonSmoothKernel(
            "rank expansion checks need a C² kernel".into(),
        ));
    }
    if !(0.0 < p && p < 1.0) {
        return Err(Error::Domain(format!("p = {p} must be interior to (0,1)")));
    }
    if n < 4 {
        return Err(Error::Domain("need N >= 4 so that M = N - 3 >= 1".into()));
    }
    let m = n - 3;
    let shift = match case {
        BallCase::InsideBall => Shift::PlusTwoTwo,
        BallCase::OutsideBall => Shift::PlusOneTwo,
    };
    let lhs = shifted_binomial_expectation(kernel, p, m, shift)?;
    let k0 = kernel.eval(p, EvalOrder::Value)?;
    let k1 = kernel.eval(p, EvalOrder::FirstDerivative)?;
    let k2 = kernel.eval(p, EvalOrder::SecondDerivative)?;
    let nf = n as f64;
    let mut corrected = k0 + 2.0 * (1.0 - p) * k1 / nf + p * (1.0 - p) * k2 / (2.0 * nf);
    if case == BallCase::OutsideBall {
        corrected -= k1 / nf;
    }
    Ok(ExpansionReport::new(n, lhs, k0, corrected))
}

/// Check `S^N(K) = 1 + (K(1) - K(0))/(2N) + o(1/N)` against the exact
/// discrete normaliser.
pub fn sn_expansion_check(kernel: &RankKernel, n: usize) -> Result<ExpansionReport> {
    let table = kernel.discrete_table(n)?;
    let k0 = kernel.eval(0.0, EvalOrder::Value)?;
    let k1 = kernel.eval(1.0, EvalOrder::Value)?;
    let corrected = 1.0 + (k1 - k0) / (2.0 * n as f64);
    Ok(ExpansionReport::new(n, table.s_n, 1.0, corrected))
}

/// Binomial weights `C(n,i) x^i (1-x)^(n-i)`.
///
/// The log-gamma form alone loses ~1e-13 relative accuracy; instead the
/// weight at the mode is seeded once through log-gamma (underflow-free) and
/// the rest follow the exact ratio recurrence, after which the whole vector
/// is normalised to sum exactly 1. Error stays at a few ulps near the mode
/// and only grows in the negligible tails.
struct BinomialWeights {
    w: Vec<f64>,
}

impl BinomialWeights {
    fn new(n: usize, x: f64) -> Self {
        debug_assert!(x > 0.0 && x < 1.0);
        let q = 1.0 - x;
        let mode = (((n + 1) as f64) * x).floor().min(n as f64) as usize;
        let log_w_mode = ln_gamma(n as f64 + 1.0)
            - ln_gamma(mode as f64 + 1.0)
            - ln_gamma((n - mode) as f64 + 1.0)
            + mode as f64 * x.ln()
            + (n - mode) as f64 * q.ln();
        let mut w = vec![0.0; n + 1];
        w[mode] = log_w_mode.exp();
        for i in mode..n {
            // w_{i+1} / w_i = (n-i)/(i+1) * x/q
            w[i + 1] = w[i] * ((n - i) as f64 * x) / ((i + 1) as f64 * q);
        }
        for i in (0..mode).rev() {
            w[i] = w[i + 1] * ((i + 1) as f64 * q) / ((n - i) as f64 * x);
        }
        let mut total = KahanSum::default();
        for &v in &w {
            total.add(v);
        }
        let total = total.value();
        for v in &mut w {
            *v /= total;
        }
        Self { w }
    }

    fn at(&self, i: usize) -> f64 {
        self.w[i]
    }
}

#[derive(Default)]
struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_reproduced() {
        for n in [1, 7, 100] {
            for x in [0.0, 0.3, 1.0] {
                assert_abs_diff_eq!(
                    bernstein_eval(&|_| 4.2, n, x).unwrap(),
                    4.2,
                    epsilon = 1e-13
                );
            }
        }
    }

    #[test]
    fn linear_precision() {
        for n in [2, 17, 500] {
            for x in [0.1, 0.5, 0.9] {
                assert_abs_diff_eq!(bernstein_eval(&|t| t, n, x).unwrap(), x, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn square_identity() {
        // B_n(t²;x) = x² + x(1-x)/n; at n = 10, x = 0.5 this is 0.275.
        let v = bernstein_eval(&|t| t * t, 10, 0.5).unwrap();
        assert_abs_diff_eq!(v, 0.275, epsilon = 1e-14);
    }

    #[test]
    fn large_degree_stable() {
        let v = bernstein_eval(&|t| t * t, 10_000, 0.3).unwrap();
        assert_abs_diff_eq!(v, 0.09 + 0.3 * 0.7 / 10_000.0, epsilon = 1e-10);
    }

    #[test]
    fn lorentz_exact_for_square() {
        for n in [3, 40, 777] {
            let rep =
                lorentz_expansion_check(&|t| t * t, &|_| 2.0, 0.37, n).unwrap();
            assert!(rep.residual_corrected < 1e-13, "n = {n}: {rep:?}");
        }
    }

    #[test]
    fn lorentz_cubic_ladder() {
        // o(1/n): n * residual at n = 1600 at most half of n = 400. The
        // point must avoid x = 1/2, where the n⁻² coefficient of B_n(t³)
        // (proportional to 1 - 2x) vanishes and the residual is pure noise.
        let res = |n: usize| {
            let rep =
                lorentz_expansion_check(&|t| t * t * t, &|t| 6.0 * t, 0.3, n).unwrap();
            n as f64 * rep.residual_corrected
        };
        assert!(res(1600) <= 0.5 * res(400));

        // At x = 1/2 the corrected expansion of t³ is exact up to rounding.
        let rep = lorentz_expansion_check(&|t| t * t * t, &|t| 6.0 * t, 0.5, 400).unwrap();
        assert!(rep.residual_corrected < 1e-13, "{rep:?}");
    }

    #[test]
    fn shifted_constant_is_one() {
        let k = RankKernel::Constant;
        for shift in [Shift::None, Shift::PlusOne, Shift::PlusTwoTwo, Shift::PlusOneTwo] {
            let v = shifted_binomial_expectation(&k, 0.37, 12, shift).unwrap();
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn shifted_p_zero() {
        let k = RankKernel::PowerLaw { alpha: 2.0, mirrored: false };
        let m = 9;
        let v = shifted_binomial_expectation(&k, 0.0, m, Shift::PlusOne).unwrap();
        let expect = k.eval(1.0 / (m as f64 + 1.0), EvalOrder::Value).unwrap();
        assert_abs_diff_eq!(v, expect, epsilon = 1e-14);
    }

    #[test]
    fn shifted_hand_enumeration() {
        // K(r) = 2(1-r), p = 0.5, M = 2, shift (1,1): 1/3 + 1/3 + 0 = 2/3.
        let k = RankKernel::PowerLaw { alpha: 1.0, mirrored: false };
        let v = shifted_binomial_expectation(&k, 0.5, 2, Shift::PlusOne).unwrap();
        assert_abs_diff_eq!(v, 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn shift_none_matches_bernstein() {
        let k = RankKernel::SmoothCutoff { theta: 0.8, eps: 0.3 };
        for (p, m) in [(0.2, 25), (0.6, 100)] {
            let a = shifted_binomial_expectation(&k, p, m, Shift::None).unwrap();
            let b = bernstein_eval(&|t| k.eval(t, EvalOrder::Value).unwrap(), m, p).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn lemma_constant_kernel_exact() {
        for n in [10, 100] {
            for case in [BallCase::InsideBall, BallCase::OutsideBall] {
                let rep = lemma_expansion_check(&RankKernel::Constant, 0.4, n, case).unwrap();
                assert!(rep.residual_corrected < 1e-13);
            }
        }
    }

    #[test]
    fn lemma_cases_differ_by_kprime_over_n() {
        let k = RankKernel::PowerLaw { alpha: 3.0, mirrored: false };
        let (p, n) = (0.35, 50);
        let inside = lemma_expansion_check(&k, p, n, BallCase::InsideBall).unwrap();
        let outside = lemma_expansion_check(&k, p, n, BallCase::OutsideBall).unwrap();
        let k1 = k.eval(p, EvalOrder::FirstDerivative).unwrap();
        assert_abs_diff_eq!(
            outside.corrected - inside.corrected,
            -k1 / n as f64,
            epsilon = 1e-15
        );
    }

    #[test]
    fn lemma_ladder_smooth_kernel() {
        let k = RankKernel::PowerLaw { alpha: 3.0, mirrored: false };
        for case in [BallCase::InsideBall, BallCase::OutsideBall] {
            let res = |n: usize| {
                n as f64
                    * lemma_expansion_check(&k, 0.4, n, case)
                        .unwrap()
                        .residual_corrected
            };
            assert!(res(3200) <= 0.5 * res(800));
        }
    }

    #[test]
    fn lemma_rejects_nonsmooth() {
        let k = RankKernel::UniformCutoff { theta: 0.5 };
        assert!(matches!(
            lemma_expansion_check(&k, 0.4, 100, BallCase::InsideBall),
            Err(Error::NonSmoothKernel(_))
        ));
    }

    #[test]
    fn sn_constant_exact() {
        let rep = sn_expansion_check(&RankKernel::Constant, 17).unwrap();
        assert_eq!(rep.lhs, 1.0);
        assert!(rep.residual_corrected < 1e-15);
    }

    #[test]
    fn sn_linear_hand_values() {
        // K(r) = 2r, N = 5: S⁵ = 5/4, corrected = 1.2, residual 0.05.
        let k = RankKernel::PowerLaw { alpha: 1.0, mirrored: true };
        let rep = sn_expansion_check(&k, 5).unwrap();
        assert_abs_diff_eq!(rep.lhs, 1.25, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.corrected, 1.2, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.residual_corrected, 0.05, epsilon = 1e-14);
    }

    #[test]
    fn sn_ladder_smooth_kernel() {
        let k = RankKernel::PowerLaw { alpha: 2.0, mirrored: false };
        let res = |n: usize| n as f64 * sn_expansion_check(&k, n).unwrap().residual_corrected;
        assert!(res(400) <= 0.5 * res(100));
    }
}
