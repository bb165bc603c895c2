//! Weight enumerators of constituent codes and of 3-dimensional turbo code
//! ensembles under uniform interleaving.
//!
//! Constituent tables are produced by a forward dynamic program over the
//! trellis that counts paths by input weight and parity weight. The same
//! program, with the parity weight split according to the patch selection
//! pattern, gives the split enumerators needed for regular patterns.
//!
//! Ensemble enumerators are truncated at a maximum codeword weight `h_max`.
//! Truncation is sound: every term that can reach a codeword weight
//! `h <= h_max` is kept, using a lower bound on the patch output weight as a
//! function of its input weight.
//!
//! ```
//! use turbo3d::ensemble::{constituent_iowe, Scalar};
//! use turbo3d::trellis::{Trellis, Generator, Termination};
//! let t = Trellis::new(Generator::identity()).unwrap();
//! let a = constituent_iowe(&t, 3, Termination::Open, 3, 3).unwrap();
//! assert_eq!(a.count(2, 2).round(), 3.0);
//! assert_eq!(a.count(2, 1), 0.0);
//! ```

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::encoder::{keep_fractions, patch_mask, Lambda, PatternMode, Rate, Terminations};
use crate::error::{Error, Result};
use crate::mathx::{binom_exact, LnFact};
use crate::trellis::{Generator, Termination, Trellis};

/// Values the enumeration pipeline can run on.
pub trait Scalar: Clone + Send + Sync + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn add_assign(&mut self, o: &Self);
    fn mul(&self, o: &Self) -> Self;
    fn ln(&self) -> f64;
    /// `prod C(n, k)` over `num` divided by the same over `den`.
    fn binom_ratio(num: &[(usize, usize)], den: &[(usize, usize)], lf: &LnFact) -> Self;
    /// `e^{ln_factor}` (floating) or exactly one (exact).
    fn exp_factor(ln_factor: f64) -> Self;
    /// Whether the representation can overflow.
    const FLOATING: bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    #[inline]
    fn add_assign(&mut self, o: &Self) {
        *self += *o;
    }
    #[inline]
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn ln(&self) -> f64 {
        f64::ln(*self)
    }
    fn binom_ratio(num: &[(usize, usize)], den: &[(usize, usize)], lf: &LnFact) -> Self {
        let l: f64 = num.iter().map(|&(n, k)| lf.binom(n, k)).sum::<f64>()
            - den.iter().map(|&(n, k)| lf.binom(n, k)).sum::<f64>();
        if l.is_nan() {
            0.0
        } else {
            l.exp()
        }
    }
    fn exp_factor(ln_factor: f64) -> Self {
        ln_factor.exp()
    }
    const FLOATING: bool = true;
}

impl Scalar for BigRational {
    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }
    fn one() -> Self {
        <BigRational as num_traits::One>::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add_assign(&mut self, o: &Self) {
        if !Zero::is_zero(o) {
            *self += o;
        }
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn ln(&self) -> f64 {
        rational_ln(self)
    }
    fn binom_ratio(num: &[(usize, usize)], den: &[(usize, usize)], _lf: &LnFact) -> Self {
        let mut a = BigUint::from(1u32);
        for &(n, k) in num {
            a *= binom_exact(n as u64, k as u64);
        }
        let mut b = BigUint::from(1u32);
        for &(n, k) in den {
            b *= binom_exact(n as u64, k as u64);
        }
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }
    fn exp_factor(_ln_factor: f64) -> Self {
        Self::one()
    }
    const FLOATING: bool = false;
}

/// Natural log of a positive rational, accurate for huge numerators and
/// denominators.
pub fn rational_ln(x: &BigRational) -> f64 {
    if Zero::is_zero(x) {
        return f64::NEG_INFINITY;
    }
    let ln_big = |v: &BigInt| -> f64 {
        let bits = v.bits();
        if bits < 1000 {
            v.to_f64().unwrap().abs().ln()
        } else {
            let shift = bits - 900;
            let top: BigInt = v >> shift;
            top.to_f64().unwrap().abs().ln() + shift as f64 * std::f64::consts::LN_2
        }
    };
    ln_big(x.numer()) - ln_big(x.denom())
}

/// Ragged table of rows, each a contiguous slice indexed by the last weight.
#[derive(Debug, Clone)]
struct Layout {
    offs: Vec<usize>,
    lens: Vec<usize>,
    row_w: Vec<usize>,
    // per row, index (mask << 2) | (u << 1) | z -> (target row, shift)
    trans: Vec<[Option<(usize, usize)>; 8]>,
    size: usize,
}

impl Layout {
    fn finish(lens: Vec<usize>, row_w: Vec<usize>, trans: Vec<[Option<(usize, usize)>; 8]>) -> Self {
        let mut offs = Vec::with_capacity(lens.len());
        let mut size = 0;
        for &l in &lens {
            offs.push(size);
            size += l;
        }
        Layout { offs, lens, row_w, trans, size }
    }

    /// Rows `w = 0..=w_max`, row `w` holding parity weights `0..=qlim[w]`.
    fn plain(qlim: &[usize]) -> Self {
        let w_max = qlim.len() - 1;
        let lens: Vec<usize> = qlim.iter().map(|&q| q + 1).collect();
        let row_w: Vec<usize> = (0..=w_max).collect();
        let trans = (0..=w_max)
            .map(|w| {
                let mut t = [None; 8];
                for idx in 0..8 {
                    let u = (idx >> 1) & 1;
                    let z = idx & 1;
                    if w + u <= w_max {
                        t[idx] = Some((w + u, z));
                    }
                }
                t
            })
            .collect();
        Self::finish(lens, row_w, trans)
    }

    /// Rows `(w, m)`, each holding `n = 0..=nlim(w, m)`.
    fn split(w_max: usize, m_lim: impl Fn(usize) -> Option<usize>, n_lim: impl Fn(usize, usize) -> usize) -> (Self, Vec<Vec<usize>>) {
        let mut ids: Vec<Vec<usize>> = Vec::with_capacity(w_max + 1);
        let mut lens = Vec::new();
        let mut row_w = Vec::new();
        let mut keys = Vec::new();
        for w in 0..=w_max {
            let mut row = Vec::new();
            if let Some(mm) = m_lim(w) {
                for m in 0..=mm {
                    row.push(lens.len());
                    lens.push(n_lim(w, m) + 1);
                    row_w.push(w);
                    keys.push((w, m));
                }
            }
            ids.push(row);
        }
        let find = |w: usize, m: usize| -> Option<usize> { ids.get(w).and_then(|r| r.get(m)).copied() };
        let trans = keys
            .iter()
            .map(|&(w, m)| {
                let mut t = [None; 8];
                for idx in 0..8 {
                    let mask = idx >> 2;
                    let u = (idx >> 1) & 1;
                    let z = idx & 1;
                    t[idx] = if mask == 0 { find(w + u, m + z).map(|r| (r, 0)) } else { find(w + u, m).map(|r| (r, z)) };
                }
                t
            })
            .collect();
        (Self::finish(lens, row_w, trans), ids)
    }
}

/// Forward path count over `k` steps; `u1` multiplies every step with a one
/// input (input-weight tilt).
fn dp<S: Scalar>(tr: &Trellis, k: usize, mode: Termination, layout: &Layout, mask: &[bool], u1: &S) -> Vec<S> {
    let ns = tr.num_states();
    let starts: Vec<u32> = match mode {
        Termination::Tailbiting => (0..ns as u32).collect(),
        _ => vec![0],
    };
    let mut total = vec![S::zero(); layout.size];
    let tilt = !u1.is_zero() && S::FLOATING;
    for &start in &starts {
        let mut cur = vec![vec![S::zero(); layout.size]; ns];
        let mut nxt = vec![vec![S::zero(); layout.size]; ns];
        let mut active = vec![false; ns];
        cur[start as usize][layout.offs[0]] = S::one();
        active[start as usize] = true;
        for t in 0..k {
            let mb = mask.get(t).copied().unwrap_or(false) as usize;
            for v in nxt.iter_mut() {
                for x in v.iter_mut() {
                    *x = S::zero();
                }
            }
            let mut nact = vec![false; ns];
            for s in 0..ns {
                if !active[s] {
                    continue;
                }
                for u in 0..2u8 {
                    let s2 = tr.next_state(s as u32, u) as usize;
                    let z = tr.output(s as u32, u) as usize;
                    let idx = (mb << 2) | ((u as usize) << 1) | z;
                    nact[s2] = true;
                    let (src_all, dst_all) = (&cur[s], &mut nxt[s2]);
                    for r in 0..layout.lens.len() {
                        if layout.row_w[r] > t {
                            continue;
                        }
                        let Some((r2, sh)) = layout.trans[r][idx] else { continue };
                        let len = layout.lens[r].min(layout.lens[r2].saturating_sub(sh));
                        if len == 0 {
                            continue;
                        }
                        let src = &src_all[layout.offs[r]..layout.offs[r] + len];
                        let dst = &mut dst_all[layout.offs[r2] + sh..layout.offs[r2] + sh + len];
                        if u == 1 && tilt {
                            for (d, x) in dst.iter_mut().zip(src) {
                                d.add_assign(&x.mul(u1));
                            }
                        } else {
                            for (d, x) in dst.iter_mut().zip(src) {
                                d.add_assign(x);
                            }
                        }
                    }
                }
            }
            std::mem::swap(&mut cur, &mut nxt);
            active = nact;
        }
        let ends: Vec<usize> = match mode {
            Termination::Open => (0..ns).collect(),
            Termination::Dual => vec![0],
            Termination::Tailbiting => vec![start as usize],
        };
        for e in ends {
            for (d, x) in total.iter_mut().zip(&cur[e]) {
                d.add_assign(x);
            }
        }
    }
    total
}

/// Input tilt `beta` keeping `C(k, w) e^{-beta w}` inside the f64 range for
/// `w <= w_max`, or `None` when impossible.
fn choose_tilt(k: usize, w_max: usize, extra: f64, lf: &LnFact) -> Option<f64> {
    const CAP: f64 = 680.0;
    let mut beta: f64 = 0.0;
    for w in 1..=w_max.min(k) {
        let v = lf.binom(k, w) + extra;
        if v > CAP {
            beta = beta.max((v - CAP) / w as f64);
        }
    }
    (beta * w_max as f64 <= CAP).then_some(beta)
}

/// Input-output weight enumerator `A_{w,h}` of a rate-1 constituent code.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IoweTable {
    pub k: usize,
    pub w_max: usize,
    pub h_max: usize,
    pub mode: Termination,
    /// True when entries beyond `(w_max, h_max)` were dropped.
    pub truncated: bool,
    ln: Vec<f64>,
    #[serde(skip)]
    exact: Option<Vec<BigRational>>,
}

impl IoweTable {
    fn idx(&self, w: usize, h: usize) -> usize {
        w * (self.h_max + 1) + h
    }

    /// `ln A_{w,h}` (`-inf` for zero or out of range).
    pub fn ln_count(&self, w: usize, h: usize) -> f64 {
        if w > self.w_max || h > self.h_max {
            return f64::NEG_INFINITY;
        }
        self.ln[self.idx(w, h)]
    }

    pub fn count(&self, w: usize, h: usize) -> f64 {
        self.ln_count(w, h).exp()
    }

    pub fn exact(&self, w: usize, h: usize) -> Option<BigRational> {
        if w > self.w_max || h > self.h_max {
            return Some(<BigRational as Zero>::zero());
        }
        self.exact.as_ref().map(|e| e[self.idx(w, h)].clone())
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// `ln A_h = ln sum_w A_{w,h}`.
    pub fn ln_weight_enumerator(&self) -> Vec<f64> {
        (0..=self.h_max)
            .map(|h| {
                let mut s = crate::mathx::LogSum::default();
                for w in 0..=self.w_max {
                    s.add(self.ln_count(w, h));
                }
                s.value()
            })
            .collect()
    }

    /// CSV with header `w,h,log_count`; zero entries are omitted.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("w,h,log_count\n");
        for w in 0..=self.w_max {
            for h in 0..=self.h_max {
                let v = self.ln_count(w, h);
                if v > f64::NEG_INFINITY {
                    s.push_str(&format!("{w},{h},{v:.17e}\n"));
                }
            }
        }
        s
    }

    pub fn from_csv(text: &str, k: usize, mode: Termination) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with('w')) {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 fields", i + 1)));
            }
            let w: usize = f[0].trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            let h: usize = f[1].trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            let v: f64 = f[2].trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            entries.push((w, h, v));
        }
        let w_max = entries.iter().map(|e| e.0).max().unwrap_or(0);
        let h_max = entries.iter().map(|e| e.1).max().unwrap_or(0);
        let mut t = IoweTable { k, w_max, h_max, mode, truncated: false, ln: vec![f64::NEG_INFINITY; (w_max + 1) * (h_max + 1)], exact: None };
        for (w, h, v) in entries {
            let i = t.idx(w, h);
            t.ln[i] = v;
        }
        Ok(t)
    }
}

fn check_len(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("block length must be positive".into()));
    }
    Ok(())
}

/// Constituent IOWE for input weights `<= w_max` and parity weights
/// `<= h_max`, computed in floating point (log domain on output).
pub fn constituent_iowe(tr: &Trellis, k: usize, mode: Termination, w_max: usize, h_max: usize) -> Result<IoweTable> {
    check_len(k)?;
    let w_max = w_max.min(k);
    let h_max = h_max.min(k);
    let lf = LnFact::new(k + 1);
    let extra = tr.memory() as f64 * std::f64::consts::LN_2;
    let beta = choose_tilt(k, w_max, extra, &lf)
        .ok_or_else(|| Error::Numerical("enumerator range exceeds floating-point capacity".into()))?;
    let layout = Layout::plain(&vec![h_max; w_max + 1]);
    let raw: Vec<f64> = dp(tr, k, mode, &layout, &[], &(-beta).exp());
    let mut ln = vec![f64::NEG_INFINITY; (w_max + 1) * (h_max + 1)];
    for w in 0..=w_max {
        for h in 0..=h_max {
            let v = raw[layout.offs[w] + h];
            if v > 0.0 {
                ln[w * (h_max + 1) + h] = v.ln() + beta * w as f64;
            }
        }
    }
    Ok(IoweTable { k, w_max, h_max, mode, truncated: w_max < k || h_max < k, ln, exact: None })
}

/// Exact constituent IOWE (big integers), intended for small `k`.
pub fn constituent_iowe_exact(tr: &Trellis, k: usize, mode: Termination, w_max: usize, h_max: usize) -> Result<IoweTable> {
    check_len(k)?;
    let w_max = w_max.min(k);
    let h_max = h_max.min(k);
    let layout = Layout::plain(&vec![h_max; w_max + 1]);
    let raw: Vec<BigRational> = dp(tr, k, mode, &layout, &[], &<BigRational as Scalar>::one());
    let ln = raw.iter().map(rational_ln).collect();
    Ok(IoweTable { k, w_max, h_max, mode, truncated: w_max < k || h_max < k, ln, exact: Some(raw) })
}

/// Split enumerator `A_{w,(m,n)}`: `m` counts parity ones at unselected
/// positions and `n` at selected ones.
#[derive(Debug, Clone)]
pub struct SplitIowe {
    pub w_max: usize,
    pub m_max: usize,
    pub n_max: usize,
    ln: Vec<f64>,
}

impl SplitIowe {
    pub fn ln_count(&self, w: usize, m: usize, n: usize) -> f64 {
        if w > self.w_max || m > self.m_max || n > self.n_max {
            return f64::NEG_INFINITY;
        }
        self.ln[(w * (self.m_max + 1) + m) * (self.n_max + 1) + n]
    }

    pub fn count(&self, w: usize, m: usize, n: usize) -> f64 {
        self.ln_count(w, m, n).exp()
    }
}

/// Split enumerator for parity selection `mask[t]` at trellis step `t`.
pub fn split_iowe(tr: &Trellis, k: usize, mode: Termination, mask: &[bool], w_max: usize, m_max: usize, n_max: usize) -> Result<SplitIowe> {
    check_len(k)?;
    if mask.len() < k {
        return Err(Error::InvalidInput("mask shorter than block".into()));
    }
    let (w_max, m_max, n_max) = (w_max.min(k), m_max.min(k), n_max.min(k));
    let lf = LnFact::new(k + 1);
    let beta = choose_tilt(k, w_max, tr.memory() as f64 * std::f64::consts::LN_2, &lf)
        .ok_or_else(|| Error::Numerical("enumerator range exceeds floating-point capacity".into()))?;
    let (layout, ids) = Layout::split(w_max, |_| Some(m_max), |_, _| n_max);
    let raw: Vec<f64> = dp(tr, k, mode, &layout, mask, &(-beta).exp());
    let mut ln = vec![f64::NEG_INFINITY; (w_max + 1) * (m_max + 1) * (n_max + 1)];
    for w in 0..=w_max {
        for m in 0..=m_max {
            let r = ids[w][m];
            for n in 0..=n_max {
                let v = raw[layout.offs[r] + n];
                if v > 0.0 {
                    ln[(w * (m_max + 1) + m) * (n_max + 1) + n] = v.ln() + beta * w as f64;
                }
            }
        }
    }
    Ok(SplitIowe { w_max, m_max, n_max, ln })
}

/// `Ā_{w,h'}` of the ensemble obtained by keeping `round(δN)` of `N`
/// positions uniformly at random.
pub fn puncture_average(table: &IoweTable, n: usize, delta: f64) -> Result<IoweTable> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidInput(format!("puncturing fraction {delta} outside (0, 1]")));
    }
    let kept = (delta * n as f64).round() as usize;
    let lf = LnFact::new(n + 1);
    let mut out = IoweTable { ln: vec![f64::NEG_INFINITY; table.ln.len()], exact: None, ..table.clone() };
    for w in 0..=table.w_max {
        for hp in 0..=table.h_max {
            let mut s = crate::mathx::LogSum::default();
            for h in hp..=table.h_max.min(n) {
                let a = table.ln_count(w, h);
                if a == f64::NEG_INFINITY || kept < hp || n - h < kept - hp {
                    continue;
                }
                s.add(a + lf.binom(h, hp) + lf.binom(n - h, kept - hp) - lf.binom(n, kept));
            }
            let i = out.idx(w, hp);
            out.ln[i] = s.value();
        }
    }
    Ok(out)
}

/// How the patch selection pattern is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Averaged over all patterns with `2λK` ones.
    Random,
    /// The regular pattern `[1100..0]`.
    Regular,
}

/// An ensemble of 3-dimensional turbo codes with uniform interleavers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub k: usize,
    pub lambda: Lambda,
    pub selection: Selection,
    pub generator: Generator,
    pub patch_generator: Generator,
    pub termination: Terminations,
    /// Target rate; `None` is the unpunctured rate 1/3.
    pub rate: Option<Rate>,
    /// Index the patch enumerator by `h - w + q` instead of `h - w - m`.
    #[serde(default)]
    pub literal_patch_index: bool,
}

impl EnsembleSpec {
    pub fn new(k: usize, lambda: Lambda, selection: Selection) -> Self {
        EnsembleSpec {
            k,
            lambda,
            selection,
            generator: Generator::umts(),
            patch_generator: Generator::patch(),
            termination: Terminations::all(Termination::Dual),
            rate: None,
            literal_patch_index: false,
        }
    }

    pub fn termination(mut self, t: Termination) -> Self {
        self.termination = Terminations::all(t);
        self
    }

    pub fn rate(mut self, r: Rate) -> Self {
        self.rate = Some(r);
        self
    }

    fn patch_len(&self) -> Result<usize> {
        self.lambda.patch_len(self.k).ok_or_else(|| Error::InvalidConfig("2 λ K is not an integer".into()))
    }
}

/// Ensemble-average enumerator `Ā_{w,h}` for `h <= h_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleWe {
    pub h_max: usize,
    /// `ln Ā_{w,h}`, indexed `[w][h]`.
    pub ln_awh: Vec<Vec<f64>>,
    /// `ln Ā_h`.
    pub ln_ah: Vec<f64>,
    /// False when puncturing forced an approximate truncation.
    pub exact_truncation: bool,
}

struct Pruning {
    h_pre: usize,
    // nlim[b]: largest patch input weight whose output can stay within budget b
    nlim: Vec<usize>,
    // qlim[w]: largest constituent parity weight reachable for input weight w
    qlim: Vec<usize>,
}

/// Weights the puncturing keeps, as `(stream length, kept count)`.
struct Thinning {
    ch: Option<(usize, usize)>,
    c: Option<(usize, usize)>,
}

fn thinning(spec: &EnsembleSpec, nc: usize) -> Result<Thinning> {
    let Some(rate) = spec.rate else { return Ok(Thinning { ch: None, c: None }) };
    let kf = keep_fractions(spec.lambda, rate)?;
    let lch = 2 * spec.k - nc;
    let keep = |len: usize, f: (u32, u32)| -> Option<(usize, usize)> {
        (f.0 != f.1).then(|| (len, (len as f64 * f.0 as f64 / f.1 as f64).round() as usize))
    };
    Ok(Thinning { ch: keep(lch, kf.ch), c: keep(nc, kf.c) })
}

struct Pipeline<'a, S: Scalar> {
    spec: &'a EnsembleSpec,
    lf: LnFact,
    upper: Trellis,
    patch: Trellis,
    nc: usize,
    h_max: usize,
    exact_region: bool,
    _s: std::marker::PhantomData<S>,
}

impl<'a, S: Scalar> Pipeline<'a, S> {
    fn new(spec: &'a EnsembleSpec, h_max: usize, exact_region: bool) -> Result<Self> {
        check_len(spec.k)?;
        let nc = spec.patch_len()?;
        let upper = Trellis::new(spec.generator)?;
        let patch = Trellis::new(spec.patch_generator)?;
        let lf = LnFact::new(4 * spec.k + 4);
        Ok(Pipeline { spec, lf, upper, patch, nc, h_max, exact_region, _s: std::marker::PhantomData })
    }

    /// Patch probabilities `P_{n,h} = A^c_{n,h} / C(N_c, n)` and the pruning
    /// bounds derived from them.
    fn patch_stage(&self, h_pre: usize) -> Result<(Vec<Vec<S>>, Pruning)> {
        let nc = self.nc;
        let fb_weight = self.spec.patch_generator.feedback.count_ones() as usize;
        let n_cap = if self.exact_region || self.spec.patch_generator.feedforward != 1 {
            nc
        } else {
            nc.min(fb_weight * h_pre)
        };
        let hp = h_pre.min(nc);
        let probs: Vec<Vec<S>> = if nc == 0 {
            vec![vec![S::one()]]
        } else {
            let extra = self.patch.memory() as f64 * std::f64::consts::LN_2;
            let beta = if S::FLOATING {
                choose_tilt(nc, n_cap, extra, &self.lf)
                    .ok_or_else(|| Error::Numerical("patch enumerator exceeds floating-point range".into()))?
            } else {
                0.0
            };
            let layout = Layout::plain(&vec![hp; n_cap + 1]);
            let raw: Vec<S> = dp(&self.patch, nc, self.spec.termination.patch, &layout, &[], &S::exp_factor(-beta));
            (0..=n_cap)
                .map(|n| {
                    let f = S::binom_ratio(&[], &[(nc, n)], &self.lf).mul(&S::exp_factor(beta * n as f64));
                    (0..=hp).map(|h| raw[layout.offs[n] + h].mul(&f)).collect()
                })
                .collect()
        };
        let h = h_pre;
        let inf = h + 1;
        let min_out: Vec<usize> = probs.iter().map(|row| row.iter().position(|x| !x.is_zero()).unwrap_or(inf)).collect();
        let mut g = vec![inf; min_out.len()];
        let mut run = inf;
        for n in (0..min_out.len()).rev() {
            if !self.exact_region {
                run = run.min(min_out[n]);
            } else {
                run = 0;
            }
            g[n] = run;
        }
        let nlim: Vec<usize> = (0..=h).map(|b| g.iter().rposition(|&x| x <= b).unwrap_or(0)).collect();
        // G(q) = min_{n <= q} (q - n + g(n))
        let gq = |q: usize| -> usize { (0..=q.min(g.len() - 1)).map(|n| q - n + g[n]).min().unwrap() };
        let w_max = h.min(self.spec.k);
        let mut qlim = Vec::with_capacity(w_max + 1);
        let q_abs = 2 * self.spec.k;
        for w in 0..=w_max {
            let budget = h - w;
            let mut q = 0;
            while q < q_abs && gq(q + 1) <= budget {
                q += 1;
            }
            qlim.push(q);
        }
        Ok((probs, Pruning { h_pre, nlim, qlim }))
    }

    fn masks(&self) -> Result<(Vec<bool>, Vec<bool>)> {
        let m = patch_mask(self.spec.k, self.spec.lambda, PatternMode::Regular)?;
        let a = (0..self.spec.k).map(|t| m[2 * t]).collect();
        let b = (0..self.spec.k).map(|t| m[2 * t + 1]).collect();
        Ok((a, b))
    }

    fn conv_factor(&self, w: usize, beta: f64) -> (S, S) {
        let k = self.spec.k;
        if S::FLOATING {
            let f = S::exp_factor(beta * w as f64 - 0.5 * self.lf.binom(k, w));
            (f.clone(), f)
        } else {
            (S::binom_ratio(&[], &[(k, w)], &self.lf), S::one())
        }
    }

    fn constituent_beta(&self, w_max: usize) -> Result<f64> {
        if !S::FLOATING {
            return Ok(0.0);
        }
        choose_tilt(self.spec.k, w_max, self.upper.memory() as f64 * std::f64::consts::LN_2, &self.lf)
            .ok_or_else(|| Error::Numerical("constituent enumerator exceeds floating-point range".into()))
    }

    /// `J_w(m, n)`: average number of weight-`w` inputs whose direct parity
    /// has weight `m` and whose patch input has weight `n`.
    fn j_stage(&self, pr: &Pruning) -> Result<(Layout, Vec<Vec<usize>>, Vec<S>)> {
        let k = self.spec.k;
        let h = pr.h_pre;
        let w_max = h.min(k);
        let lch = 2 * k - self.nc;
        let nlim = |b: usize| pr.nlim[b];
        let (jl, jids) = Layout::split(w_max, |w| Some((h - w).min(lch)), |w, m| nlim(h - w - m).min(self.nc));
        let mut j = vec![S::zero(); jl.size];
        let ta = self.spec.termination.upper;
        let tb = self.spec.termination.lower;
        match self.spec.selection {
            Selection::Random => {
                let beta = self.constituent_beta(w_max)?;
                let pl = Layout::plain(&pr.qlim.iter().map(|&q| q.min(k)).collect::<Vec<_>>());
                let a: Vec<S> = dp(&self.upper, k, ta, &pl, &[], &S::exp_factor(-beta));
                let b: Vec<S> = if ta == tb { a.clone() } else { dp(&self.upper, k, tb, &pl, &[], &S::exp_factor(-beta)) };
                for w in 0..=w_max {
                    let (fa, fb) = self.conv_factor(w, beta);
                    let qa_len = pl.lens[w];
                    let ra: Vec<S> = a[pl.offs[w]..pl.offs[w] + qa_len].iter().map(|x| x.mul(&fa)).collect();
                    let rb: Vec<S> = b[pl.offs[w]..pl.offs[w] + qa_len].iter().map(|x| x.mul(&fb)).collect();
                    let t_len = pr.qlim[w] + 1;
                    let mut t = vec![S::zero(); t_len];
                    for (i, x) in ra.iter().enumerate() {
                        if x.is_zero() {
                            continue;
                        }
                        for (jdx, y) in rb.iter().enumerate().take(t_len - i) {
                            if !y.is_zero() {
                                t[i + jdx].add_assign(&x.mul(y));
                            }
                        }
                    }
                    for (m, &r) in jids[w].iter().enumerate() {
                        for n in 0..jl.lens[r] {
                            let q = m + n;
                            if q >= t_len || t[q].is_zero() {
                                continue;
                            }
                            let hg = S::binom_ratio(&[(q, n), (2 * k - q, self.nc - n)], &[(2 * k, self.nc)], &self.lf);
                            j[jl.offs[r] + n] = t[q].mul(&hg);
                        }
                    }
                }
            }
            Selection::Regular => {
                let beta = self.constituent_beta(w_max)?;
                let (ma, mb) = self.masks()?;
                let a: Vec<S> = dp(&self.upper, k, ta, &jl, &ma, &S::exp_factor(-beta));
                let b: Vec<S> = if ta == tb && ma == mb { a.clone() } else { dp(&self.upper, k, tb, &jl, &mb, &S::exp_factor(-beta)) };
                for w in 0..=w_max {
                    let (fa, fb) = self.conv_factor(w, beta);
                    let rows = &jids[w];
                    let scaled = |src: &[S], f: &S| -> Vec<Vec<S>> {
                        rows.iter().map(|&r| src[jl.offs[r]..jl.offs[r] + jl.lens[r]].iter().map(|x| x.mul(f)).collect()).collect()
                    };
                    let ra = scaled(&a, &fa);
                    let rb = scaled(&b, &fb);
                    for (m1, x_row) in ra.iter().enumerate() {
                        for (m2, y_row) in rb.iter().enumerate() {
                            let m = m1 + m2;
                            if m >= rows.len() {
                                break;
                            }
                            let r = rows[m];
                            let lt = jl.lens[r];
                            let out = &mut j[jl.offs[r]..jl.offs[r] + lt];
                            for (n1, x) in x_row.iter().enumerate().take(lt) {
                                if x.is_zero() {
                                    continue;
                                }
                                for (n2, y) in y_row.iter().enumerate().take(lt - n1) {
                                    if !y.is_zero() {
                                        out[n1 + n2].add_assign(&x.mul(y));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((jl, jids, j))
    }

    fn run(&self) -> Result<(Vec<Vec<S>>, bool)> {
        let th = thinning(self.spec, self.nc)?;
        let punctured = th.ch.is_some() || th.c.is_some();
        let h = self.h_max;
        let h_pre = if self.exact_region {
            3 * self.spec.k
        } else if punctured {
            let dmin = [th.ch, th.c].iter().flatten().map(|&(l, kp)| kp as f64 / l.max(1) as f64).fold(1.0, f64::min);
            ((h as f64 / dmin.max(1e-3)) * 1.25).ceil() as usize + 4
        } else {
            h
        };
        let (mut probs, pr) = self.patch_stage(h_pre)?;
        let (jl, jids, mut j) = self.j_stage(&pr)?;

        if let Some((l, kp)) = th.ch {
            let mut out = vec![S::zero(); j.len()];
            for rows in &jids {
                for (m, &r) in rows.iter().enumerate() {
                    for mp in 0..=m {
                        let f = S::binom_ratio(&[(m, mp), (l - m, kp.saturating_sub(mp))], &[(l, kp)], &self.lf);
                        if f.is_zero() || kp < mp || l - m < kp - mp {
                            continue;
                        }
                        let r2 = rows[mp];
                        for n in 0..jl.lens[r].min(jl.lens[r2]) {
                            let v = j[jl.offs[r] + n].mul(&f);
                            out[jl.offs[r2] + n].add_assign(&v);
                        }
                    }
                }
            }
            j = out;
        }
        if let Some((l, kp)) = th.c {
            probs = probs
                .iter()
                .map(|row| {
                    (0..row.len())
                        .map(|hp| {
                            let mut s = S::zero();
                            for (hh, x) in row.iter().enumerate().skip(hp) {
                                if x.is_zero() || kp < hp || l - hh < kp - hp {
                                    continue;
                                }
                                s.add_assign(&x.mul(&S::binom_ratio(&[(hh, hp), (l - hh, kp - hp)], &[(l, kp)], &self.lf)));
                            }
                            s
                        })
                        .collect()
                })
                .collect();
        }

        let h_out = if self.exact_region { 3 * self.spec.k } else { h };
        let w_max = h_out.min(self.spec.k);
        let mut out = vec![vec![S::zero(); h_out + 1]; w_max + 1];
        for (w, rows) in jids.iter().enumerate().take(w_max + 1) {
            for (m, &r) in rows.iter().enumerate() {
                for n in 0..jl.lens[r] {
                    let x = &j[jl.offs[r] + n];
                    if x.is_zero() || n >= probs.len() {
                        continue;
                    }
                    for (hc, p) in probs[n].iter().enumerate() {
                        if p.is_zero() {
                            continue;
                        }
                        let tot = if self.spec.literal_patch_index {
                            (hc + w).checked_sub(m + n)
                        } else {
                            Some(w + m + hc)
                        };
                        match tot {
                            Some(t) if t <= h_out => out[w][t].add_assign(&x.mul(p)),
                            _ => {}
                        }
                    }
                }
            }
        }
        Ok((out, !punctured))
    }
}

/// Ensemble enumerator truncated at codeword weight `h_max`.
pub fn ensemble_we(spec: &EnsembleSpec, h_max: usize) -> Result<EnsembleWe> {
    let p = Pipeline::<f64>::new(spec, h_max, false)?;
    let (tab, exact_truncation) = p.run()?;
    let ln_awh: Vec<Vec<f64>> = tab.iter().map(|r| r.iter().map(|&x| x.ln()).collect()).collect();
    let ln_ah = (0..=h_max)
        .map(|h| {
            let mut s = crate::mathx::LogSum::default();
            for r in &ln_awh {
                s.add(r[h]);
            }
            s.value()
        })
        .collect();
    Ok(EnsembleWe { h_max, ln_awh, ln_ah, exact_truncation })
}

/// Complete ensemble enumerator in exact rational arithmetic, indexed
/// `[w][h]` for `h <= 3K`.
pub fn ensemble_we_exact(spec: &EnsembleSpec) -> Result<Vec<Vec<BigRational>>> {
    if spec.k > 24 {
        return Err(Error::InvalidInput("exact ensemble enumeration is limited to K <= 24".into()));
    }
    let p = Pipeline::<BigRational>::new(spec, 3 * spec.k, true)?;
    Ok(p.run()?.0)
}

/// Eq-(2)-style ensemble with an averaged patch pattern.
pub fn ensemble_iowe_random_p(spec: &EnsembleSpec, h_max: usize) -> Result<EnsembleWe> {
    let mut s = spec.clone();
    s.selection = Selection::Random;
    ensemble_we(&s, h_max)
}

/// Ensemble with the regular patch pattern.
pub fn ensemble_iowe_regular_p(spec: &EnsembleSpec, h_max: usize) -> Result<EnsembleWe> {
    let mut s = spec.clone();
    s.selection = Selection::Regular;
    ensemble_we(&s, h_max)
}

/// Outcome of [`prob_lb_dmin`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LowerBound {
    /// The largest `d` with `sum_{h=1}^{d-1} Ā_h <= ε`.
    Certified(usize),
    /// The partial sum stayed below `ε` up to the truncation weight, so the
    /// bound is at least this value.
    AtLeast(usize),
}

/// Probabilistic lower bound from a truncated weight enumerator `ln Ā_h`
/// (`h = 0..=h_max`).
pub fn prob_lb_dmin(ln_ah: &[f64], eps: f64) -> LowerBound {
    let mut acc = 0.0;
    for (h, &v) in ln_ah.iter().enumerate().skip(1) {
        acc += v.exp();
        if acc > eps {
            return LowerBound::Certified(h);
        }
    }
    LowerBound::AtLeast(ln_ah.len())
}

/// Lower-bound report with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub spec: EnsembleSpec,
    pub eps: f64,
    pub d: usize,
    pub certified: bool,
    /// Truncation at which the result was obtained.
    pub h_max: usize,
    pub exact_truncation: bool,
    /// `(h_max, ln Ā_h)` of the final round.
    pub ln_ah: Vec<f64>,
}

/// Runs [`ensemble_we`] with `h_max` doubled from `h_start` until the bound
/// is certified or `h_limit` is reached.
pub fn lower_bound(spec: &EnsembleSpec, eps: f64, h_start: usize, h_limit: usize) -> Result<BoundReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput("ε must lie in (0, 1)".into()));
    }
    let mut h = h_start.max(4);
    loop {
        let we = ensemble_we(spec, h)?;
        let lb = prob_lb_dmin(&we.ln_ah, eps);
        match lb {
            LowerBound::Certified(d) => {
                return Ok(BoundReport { spec: spec.clone(), eps, d, certified: true, h_max: h, exact_truncation: we.exact_truncation, ln_ah: we.ln_ah })
            }
            LowerBound::AtLeast(d) if h >= h_limit => {
                return Ok(BoundReport { spec: spec.clone(), eps, d, certified: false, h_max: h, exact_truncation: we.exact_truncation, ln_ah: we.ln_ah })
            }
            _ => h = (2 * h).min(h_limit),
        }
    }
}
