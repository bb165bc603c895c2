//! Quadratic permutation polynomials `f(x) = f1 x + f2 x^2 mod M`.
//!
//! ```
//! use turbo3d::qpp::Qpp;
//! let f = Qpp::new(15, 192, 256).unwrap();
//! let g = f.quadratic_inverse().unwrap();
//! assert!((0..256).all(|x| g.eval(f.eval(x)) == x));
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prime factorization `M = prod p^e`.
pub type Factorization = BTreeMap<u64, u32>;

pub fn factorize(mut m: u64) -> Factorization {
    let mut out = BTreeMap::new();
    let mut p = 2u64;
    while p * p <= m {
        while m % p == 0 {
            *out.entry(p).or_insert(0) += 1;
            m /= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if m > 1 {
        *out.entry(m).or_insert(0) += 1;
    }
    out
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Permutation-polynomial test for `f1 x + f2 x^2` over `Z_M`.
pub fn is_qpp(f1: u64, f2: u64, m: u64) -> bool {
    if m < 2 {
        return m == 1;
    }
    let (f1, f2) = (f1 % m, f2 % m);
    let fac = factorize(m);
    let n2 = fac.get(&2).copied().unwrap_or(0);
    if n2 != 1 {
        gcd(f1, m) == 1 && fac.keys().all(|&p| f2 % p == 0)
    } else {
        (f1 + f2) % 2 == 1 && gcd(f1, m / 2) == 1 && fac.keys().filter(|&&p| p != 2).all(|&p| f2 % p == 0)
    }
}

/// Number of pairs `(f1, f2)` with `f2 != 0` that give a permutation.
pub fn count_qpps(m: u64) -> u64 {
    let mut n = 0;
    for f1 in 0..m {
        for f2 in 1..m {
            if is_qpp(f1, f2, m) {
                n += 1;
            }
        }
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Qpp {
    pub f1: u64,
    pub f2: u64,
    pub m: u64,
}

impl Qpp {
    pub fn new(f1: u64, f2: u64, m: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("modulus must be positive".into()));
        }
        let (f1, f2) = (f1 % m, f2 % m);
        if !is_qpp(f1, f2, m) {
            return Err(Error::NotPermutation { f1, f2, m });
        }
        Ok(Qpp { f1, f2, m })
    }

    pub fn identity(m: u64) -> Self {
        Qpp { f1: 1 % m.max(1), f2: 0, m }
    }

    /// Parses `"f1,f2 mod M"`.
    pub fn parse(s: &str) -> Result<Self> {
        let (coef, m) = s
            .split_once("mod")
            .ok_or_else(|| Error::Parse(format!("expected 'f1,f2 mod M', got '{s}'")))?;
        let (a, b) = coef
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("expected 'f1,f2 mod M', got '{s}'")))?;
        let num = |t: &str| t.trim().parse::<u64>().map_err(|e| Error::Parse(format!("'{t}': {e}")));
        Self::new(num(a)?, num(b)?, num(m)?)
    }

    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        let m = self.m as u128;
        let x = x as u128 % m;
        ((self.f1 as u128 * x + self.f2 as u128 * (x * x % m)) % m) as u64
    }

    /// Evaluates at a possibly negative argument, reduced modulo `M`.
    pub fn eval_i(&self, x: i64) -> u64 {
        self.eval(x.rem_euclid(self.m as i64) as u64)
    }

    /// `[f(0), f(1), ..., f(M-1)]`.
    pub fn permutation(&self) -> Vec<usize> {
        (0..self.m).map(|x| self.eval(x) as usize).collect()
    }

    /// A QPP `g` with `g(f(x)) = x`, when one exists. The representative
    /// with the smallest `g2` is returned.
    pub fn quadratic_inverse(&self) -> Option<Qpp> {
        let m = self.m;
        if m == 1 {
            return Some(*self);
        }
        let perm = self.permutation();
        let mut inv = vec![0u64; m as usize];
        for (x, &y) in perm.iter().enumerate() {
            inv[y] = x as u64;
        }
        // g(1) = g1 + g2 = a, g(2) = 2 g1 + 4 g2 = b, hence 2 g2 = b - 2a
        let a = inv[1];
        let b = inv[2 % m as usize];
        let rhs = (b + 2 * m - (2 * a) % m) % m;
        let mut best: Option<Qpp> = None;
        for g2 in solve_linear_congruence(2, rhs, m) {
            let g1 = (a + m - g2) % m;
            let g = Qpp { f1: g1, f2: g2, m };
            if (0..m).all(|y| g.eval(y) == inv[y as usize]) {
                best = match best {
                    Some(q) if q.f2 <= g2 => Some(q),
                    _ => Some(g),
                };
            }
        }
        best
    }

    pub fn factorization(&self) -> Factorization {
        factorize(self.m)
    }
}

impl std::fmt::Display for Qpp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{} mod {}", self.f1, self.f2, self.m)
    }
}

/// All `x` in `Z_m` with `a x = b (mod m)`.
fn solve_linear_congruence(a: u64, b: u64, m: u64) -> Vec<u64> {
    let d = gcd(a % m, m);
    let d = if d == 0 { m } else { d };
    if b % d != 0 {
        return vec![];
    }
    let (a1, b1, m1) = (a / d, b / d, m / d);
    let x0 = if m1 == 1 { 0 } else { (mod_inverse(a1 % m1, m1).unwrap() as u128 * b1 as u128 % m1 as u128) as u64 };
    (0..d).map(|k| x0 + k * m1).collect()
}

fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

/// Quasi-cyclic period of a 3-dimensional turbo code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuasiCyclicPeriod {
    /// The period `p`.
    pub period: u64,
    /// The multiplier `l`.
    pub multiplier: u64,
    /// The base `lcm(...)` before multiplying by `l`.
    pub base: u64,
}

/// Period for regular patch selection with `1/lambda = inv_lambda`.
pub fn quasi_cyclic_period(f: &Qpp, ftilde: &Qpp, inv_lambda: u64) -> Result<QuasiCyclicPeriod> {
    let k = f.m;
    let nc = ftilde.m;
    if inv_lambda == 0 || k % inv_lambda != 0 || nc * inv_lambda != 2 * k {
        return Err(Error::InvalidConfig("need (1/lambda) | K and N_c = 2 lambda K".into()));
    }
    let g1 = k / gcd((2 * f.f2) % k, k);
    let g3 = k / gcd((2 * ftilde.f2) % nc, nc);
    let base = lcm(lcm(g1, inv_lambda), g3);
    // 2 lambda pt ((f1 - 1) l + f2 pt l^2) = 0 (mod N_c)
    let two_lambda_pt = 2 * base / inv_lambda;
    let ncu = nc as u128;
    for l in 1..=nc {
        let inner = ((f.f1 + k - 1) % k) as u128 * l as u128 + f.f2 as u128 * base as u128 % ncu * (l as u128 * l as u128 % ncu);
        if (two_lambda_pt as u128 % ncu) * (inner % ncu) % ncu == 0 {
            return Ok(QuasiCyclicPeriod { period: l * base, multiplier: l, base });
        }
    }
    unreachable!("l = N_c always solves the congruence")
}

/// Period of a two-dimensional turbo code with QPP interleaver `f`.
pub fn turbo_quasi_cyclic_period(f: &Qpp) -> u64 {
    f.m / gcd((2 * f.f2) % f.m, f.m)
}

/// Permutation as text: one target index per line.
pub fn permutation_to_text(perm: &[usize]) -> String {
    let mut s = String::with_capacity(perm.len() * 5);
    for p in perm {
        s.push_str(&p.to_string());
        s.push('\n');
    }
    s
}

pub fn permutation_from_text(text: &str) -> Result<Vec<usize>> {
    let perm: Vec<usize> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<usize>().map_err(|e| Error::Parse(format!("'{l}': {e}"))))
        .collect::<Result<_>>()?;
    let mut seen = vec![false; perm.len()];
    for &p in &perm {
        if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Parse("not a permutation".into()));
        }
    }
    Ok(perm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bijective(f1: u64, f2: u64, m: u64) -> bool {
        let mut seen = vec![false; m as usize];
        for x in 0..m {
            let y = ((f1 * x + f2 * x * x) % m) as usize;
            if seen[y] {
                return false;
            }
            seen[y] = true;
        }
        true
    }

    #[test]
    fn factorizations() {
        assert_eq!(factorize(3888), BTreeMap::from([(2, 4), (3, 5)]));
        assert!(factorize(1).is_empty());
        assert_eq!(factorize(1504), BTreeMap::from([(2, 5), (47, 1)]));
    }

    #[test]
    fn validity_matches_brute_force() {
        for m in 2..=64u64 {
            for f1 in 0..m {
                for f2 in 0..m {
                    assert_eq!(is_qpp(f1, f2, m), bijective(f1, f2, m), "({f1},{f2}) mod {m}");
                }
            }
        }
    }

    #[test]
    fn known_pairs() {
        assert!(is_qpp(15, 192, 256));
        assert!(!is_qpp(2, 2, 8));
        assert_eq!(count_qpps(256), 16256);
        assert!(Qpp::new(465, 224, 1024).unwrap().quadratic_inverse().is_some());
        assert_eq!(Qpp::identity(64).quadratic_inverse(), Some(Qpp::identity(64)));
    }

    #[test]
    fn half_modulus_quadratic_term() {
        for k in 2..=10u32 {
            let m = 1u64 << k;
            for f1 in (1..m).step_by(2) {
                assert!(bijective(f1, m / 2, m), "{f1} mod {m}");
            }
        }
    }

    #[test]
    fn inverse_matches_exhaustive_scan() {
        for m in 2..=128u64 {
            for f1 in 0..m {
                for f2 in 0..m {
                    if !is_qpp(f1, f2, m) {
                        continue;
                    }
                    let f = Qpp { f1, f2, m };
                    let perm = f.permutation();
                    let scan = (0..m).any(|g1| {
                        (0..m).any(|g2| {
                            is_qpp(g1, g2, m)
                                && (0..m).all(|x| (g1 * perm[x as usize] as u64 + g2 * (perm[x as usize] as u64).pow(2)) % m == x)
                        })
                    });
                    let inv = f.quadratic_inverse();
                    assert_eq!(inv.is_some(), scan, "({f1},{f2}) mod {m}");
                    if let Some(g) = inv {
                        assert!((0..m).all(|x| g.eval(f.eval(x)) == x));
                    }
                }
            }
        }
    }

    #[test]
    fn parse_and_text_roundtrip() {
        let q = Qpp::parse("15, 192 mod 256").unwrap();
        assert_eq!(q, Qpp::new(15, 192, 256).unwrap());
        assert_eq!(Qpp::parse(&q.to_string()).unwrap(), q);
        let perm = q.permutation();
        assert_eq!(permutation_from_text(&permutation_to_text(&perm)).unwrap(), perm);
        assert!(permutation_from_text("0\n0\n").is_err());
    }

    #[test]
    fn linear_period() {
        let f = Qpp::new(5, 0, 64).unwrap();
        let ft = Qpp::new(3, 0, 32).unwrap();
        let p = quasi_cyclic_period(&f, &ft, 4).unwrap();
        assert_eq!(p.base, 4);
        // 2 lambda 4 (f1 - 1) l = 8 l = 0 mod 32
        assert_eq!(p.multiplier, 4);
        assert_eq!(64 % p.period, 0);
        assert_eq!(turbo_quasi_cyclic_period(&Qpp::new(7, 16, 64).unwrap()), 2);
    }
}
