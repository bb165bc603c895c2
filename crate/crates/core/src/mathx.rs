//! Small numeric helpers shared by the enumeration and asymptotic code.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use num_bigint::BigUint;
use num_traits::One;
use statrs::function::factorial::ln_factorial;

/// `ln C(n, k)`, `-inf` when `k > n`.
pub fn ln_binom(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Cached `ln k!` for `k <= n`.
#[derive(Debug, Clone)]
pub struct LnFact(Vec<f64>);

impl LnFact {
    pub fn new(n: usize) -> Self {
        LnFact((0..=n as u64).map(ln_factorial).collect())
    }

    #[inline]
    pub fn binom(&self, n: usize, k: usize) -> f64 {
        if k > n {
            f64::NEG_INFINITY
        } else {
            self.0[n] - self.0[k] - self.0[n - k]
        }
    }
}

pub fn binom_exact(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::default();
    }
    let k = k.min(n - k);
    let mut r = BigUint::one();
    for i in 0..k {
        r *= n - i;
        r /= i + 1;
    }
    r
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Running log-sum-exp.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    sum: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        LogSum { max: f64::NEG_INFINITY, sum: 0.0 }
    }
}

impl LogSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Binary entropy in nats, `H(0) = H(1) = 0`.
#[inline]
pub fn entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.ln() - (1.0 - x) * (1.0 - x).ln()
    }
}

/// Result of [`nelder_mead`].
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

struct Objective<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<F> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let v = (self.0)(x);
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    }
}

/// Derivative-free minimization with argmin's Nelder–Mead, started from an
/// axis-aligned simplex of edge `step`. Non-finite values are treated as
/// `+inf`. `tol` bounds the spread of simplex values.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize, tol: f64) -> Minimum {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push(x);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(tol).expect("tolerance is non-negative");
    let obj = Objective(f);
    // an iteration costs one or two evaluations outside of shrink steps
    let res = Executor::new(obj, solver)
        .configure(|st| st.max_iters((max_evals / 2).max(1) as u64))
        .run()
        .expect("cost function never fails");
    let st = res.state();
    let x = st.get_best_param().cloned().unwrap_or_else(|| x0.to_vec());
    let value = st.get_best_cost();
    let evals = st.get_func_counts().get("cost_count").copied().unwrap_or(0) as usize;
    Minimum { x, value, evals }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials_agree() {
        let t = LnFact::new(300);
        for n in [0usize, 1, 7, 40, 300] {
            for k in 0..=n {
                let exact = binom_exact(n as u64, k as u64).to_string().parse::<f64>().unwrap().ln();
                assert!((t.binom(n, k) - exact).abs() < 1e-9 * exact.max(1.0));
                assert!((ln_binom(n as u64, k as u64) - exact).abs() < 1e-9 * exact.max(1.0));
            }
        }
    }

    #[test]
    fn logsum() {
        let mut s = LogSum::default();
        for x in [-1000.0, 3.0, 2.0, -5.0] {
            s.add(x);
        }
        let direct = (3.0f64.exp() + 2.0f64.exp() + (-5.0f64).exp()).ln();
        assert!((s.value() - direct).abs() < 1e-12);
        assert_eq!(LogSum::default().value(), f64::NEG_INFINITY);
        assert!((log_add(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let m = nelder_mead(|x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), &[-1.2, 1.0], 0.5, 20_000, 1e-14);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }
}
