//! Asymptotic weight spectra: normalized exponents of constituent
//! enumerators, the spectral shape of 3D turbo ensembles, the growth-rate
//! coefficient and an upper bound on the ML decoding threshold.
//!
//! The asymptotic IOWE of a convolutional encoder is obtained from the
//! tilted transfer matrix `M(s,t)` whose entries are `e^{s u + t z}` summed
//! over trellis edges. With `Λ(s,t) = ln ρ(M(s,t))`,
//! `a(α, β) = inf_{s,t} Λ(s,t) − α s − β t`, and the infimum is attained
//! where `∇Λ = (α, β)`. The spectral shape optimizer uses the tilts directly
//! as coordinates so that no inner minimization is needed.
//!
//! ```
//! use turbo3d::asymptotic::acc_asym_iowe;
//! assert_eq!(acc_asym_iowe(0.0, 0.3), 0.0);
//! assert!((acc_asym_iowe(0.2, 0.3) - acc_asym_iowe(0.2, 0.7)).abs() < 1e-12);
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{keep_fractions, Lambda, Rate};
use crate::error::{Error, Result};
use crate::mathx::{entropy, nelder_mead};
use crate::trellis::Trellis;

/// Binary entropy in nats.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidInput(format!("entropy argument {x} outside [0, 1]")));
    }
    Ok(entropy(x))
}

/// `den · H(num / den)`, zero when `den` vanishes.
#[inline]
fn weighted_h(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        0.0
    } else {
        den * entropy((num / den).clamp(0.0, 1.0))
    }
}

/// Asymptotic IOWE of the accumulator (and of `1/(1+D^2)`), `-inf` outside
/// its domain.
pub fn acc_asym_iowe(alpha: f64, beta: f64) -> f64 {
    const EPS: f64 = 1e-12;
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
        return f64::NEG_INFINITY;
    }
    if alpha == 0.0 {
        return 0.0;
    }
    if alpha > 2.0 * (1.0 - beta) + EPS || alpha > 2.0 * beta + EPS {
        return f64::NEG_INFINITY;
    }
    weighted_h(alpha / 2.0, 1.0 - beta) + weighted_h(alpha / 2.0, beta)
}

/// Value and gradient of `Λ(s,t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltPoint {
    pub lambda: f64,
    /// `∂Λ/∂s`: normalized input weight.
    pub omega: f64,
    /// `∂Λ/∂t`: normalized parity weight.
    pub iota: f64,
    /// `|M x − ρ x| / |ρ x|` of the returned eigenvector.
    pub residual: f64,
}

/// Edge list of a rate-1 trellis, used to build `M(s,t)`.
#[derive(Debug, Clone)]
pub struct Tilted {
    ns: usize,
    edges: Vec<(usize, usize, f64, f64)>,
}

impl Tilted {
    pub fn new(tr: &Trellis) -> Self {
        let ns = tr.num_states();
        let mut edges = Vec::with_capacity(2 * ns);
        for s in 0..ns as u32 {
            for u in 0..2u8 {
                edges.push((s as usize, tr.next_state(s, u) as usize, u as f64, tr.output(s, u) as f64));
            }
        }
        Tilted { ns, edges }
    }

    pub fn eval(&self, s: f64, t: f64) -> TiltPoint {
        let n = self.ns;
        // subtract the largest exponent to keep entries bounded
        let shift = self.edges.iter().map(|e| s * e.2 + t * e.3).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.edges.iter().map(|e| (s * e.2 + t * e.3 - shift).exp()).collect();
        let mut m = vec![0.0; n * n];
        for (e, &x) in self.edges.iter().zip(&w) {
            m[e.0 * n + e.1] += x;
        }
        let c = (0..n).map(|i| m[i * n..(i + 1) * n].iter().sum::<f64>()).fold(0.0, f64::max);
        let mut b = m.clone();
        for i in 0..n {
            b[i * n + i] += c;
        }
        let mut tmp = vec![0.0; n * n];
        for _ in 0..48 {
            for i in 0..n {
                for j in 0..n {
                    tmp[i * n + j] = (0..n).map(|k| b[i * n + k] * b[k * n + j]).sum();
                }
            }
            let mx = tmp.iter().cloned().fold(0.0, f64::max);
            for (d, x) in b.iter_mut().zip(&tmp) {
                *d = x / mx;
            }
        }
        let x: Vec<f64> = (0..n).map(|i| b[i * n..(i + 1) * n].iter().sum()).collect();
        let y: Vec<f64> = (0..n).map(|j| (0..n).map(|i| b[i * n + j]).sum()).collect();
        let mx: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i * n + j] * x[j]).sum()).collect();
        let yx: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum();
        let rho = y.iter().zip(&mx).map(|(a, b)| a * b).sum::<f64>() / yx;
        let (mut ds, mut dt) = (0.0, 0.0);
        for (e, &wt) in self.edges.iter().zip(&w) {
            let v = y[e.0] * wt * x[e.1];
            ds += v * e.2;
            dt += v * e.3;
        }
        let norm = rho * yx;
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let residual = mx.iter().zip(&x).map(|(a, b)| (a - rho * b).powi(2)).sum::<f64>().sqrt() / (rho * xn);
        TiltPoint { lambda: rho.ln() + shift, omega: ds / norm, iota: dt / norm, residual }
    }
}

/// Asymptotic IOWE value with the tilt that attains it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymPoint {
    pub value: f64,
    pub s: f64,
    pub t: f64,
    /// Distance between `∇Λ(s,t)` and `(α, β)`.
    pub residual: f64,
}

/// Asymptotic IOWE `a(α, β)` of a rate-1 convolutional encoder.
pub fn conv_asym_iowe(tr: &Trellis, alpha: f64, beta: f64) -> AsymPoint {
    conv_asym_iowe_tilted(&Tilted::new(tr), alpha, beta)
}

pub fn conv_asym_iowe_tilted(tt: &Tilted, alpha: f64, beta: f64) -> AsymPoint {
    let none = AsymPoint { value: f64::NEG_INFINITY, s: f64::NAN, t: f64::NAN, residual: f64::NAN };
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
        return none;
    }
    let solve = |bound: f64| {
        let g = |v: &[f64]| {
            let (s, t) = (v[0].clamp(-bound, bound), v[1].clamp(-bound, bound));
            tt.eval(s, t).lambda - alpha * s - beta * t
        };
        let mut best = nelder_mead(g, &[0.0, 0.0], 1.0, 6000, 1e-15);
        for step in [2.0, 0.3] {
            let m = nelder_mead(g, &best.x, step, 6000, 1e-15);
            if m.value <= best.value {
                best = m;
            }
        }
        (best.x[0].clamp(-bound, bound), best.x[1].clamp(-bound, bound), best.value)
    };
    let (_, _, v40) = solve(40.0);
    let (s, t, v80) = solve(80.0);
    if v40 - v80 > 1e-6 {
        return none;
    }
    let p = tt.eval(s, t);
    AsymPoint { value: v80, s, t, residual: ((p.omega - alpha).powi(2) + (p.iota - beta).powi(2)).sqrt() }
}

/// Evaluator for `a(α, β)` of a constituent.
#[derive(Debug, Clone)]
pub enum AsymIowe {
    /// Closed form of the accumulator.
    ClosedForm,
    /// Legendre dual of the tilted spectral radius.
    Numeric(Tilted),
}

impl AsymIowe {
    pub fn eval(&self, alpha: f64, beta: f64) -> f64 {
        match self {
            AsymIowe::ClosedForm => acc_asym_iowe(alpha, beta),
            AsymIowe::Numeric(t) => conv_asym_iowe_tilted(t, alpha, beta).value,
        }
    }
}

/// Optimizer coordinates reported with each spectral shape sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSample {
    pub rho: f64,
    pub r: f64,
    pub omega: f64,
    pub iota: f64,
    pub mu: f64,
    pub beta_c: f64,
    pub eta_ch: f64,
    pub eta_c: f64,
    /// True when the returned point satisfies all constraints.
    pub feasible: bool,
}

/// The optimization problem behind `r(ρ)` for one `(λ, R)`.
#[derive(Debug, Clone)]
pub struct ShapeProblem {
    pub lambda: f64,
    pub rate: f64,
    pub delta_ch: f64,
    pub delta_c: f64,
    punctured: bool,
    tilt: Tilted,
}

const PENALTY: f64 = 20.0;

fn pick(lo: f64, hi: f64, y: f64) -> f64 {
    lo + (hi - lo) / (1.0 + (-y).exp())
}

/// Exponent of the hypergeometric thinning of a stream with one-density
/// `beta`, kept fraction `delta` and kept one-density `eta`.
fn thin(beta: f64, eta: f64, delta: f64) -> f64 {
    weighted_h(eta, beta) + weighted_h(delta - eta, 1.0 - beta) - entropy(delta)
}

impl ShapeProblem {
    /// `rate = None` is the unpunctured rate-1/3 ensemble; otherwise the
    /// kept fractions follow the puncturing strategy of the encoder.
    pub fn new(tr: &Trellis, lambda: Lambda, rate: Option<Rate>) -> Result<Self> {
        if lambda.is_zero() {
            return Err(Error::InvalidInput("spectral shape needs λ > 0".into()));
        }
        let (r, dch, dc, punctured) = match rate {
            None => (1.0 / 3.0, 1.0, 1.0, false),
            Some(rt) => {
                let k = keep_fractions(lambda, rt)?;
                let f = |x: (u32, u32)| x.0 as f64 / x.1 as f64;
                let p = k.ch != (1, 1) || k.c != (1, 1);
                (rt.value(), f(k.ch), f(k.c), p)
            }
        };
        Ok(ShapeProblem { lambda: lambda.value(), rate: r, delta_ch: dch, delta_c: dc, punctured, tilt: Tilted::new(tr) })
    }

    /// Penalized objective and the point it maps to.
    /// Penalized objective at tilt `(s, t)`, maximized over the remaining
    /// coordinates; `fine` refines the inner grid search locally.
    fn objective(&self, rho: f64, st: &[f64], fine: bool) -> (f64, ShapeSample, Vec<f64>) {
        let tp = self.tilt.eval(st[0], st[1]);
        let inner = |y: &[f64]| self.inner(rho, &tp, st, y);
        let grid: Vec<Vec<f64>> = if self.punctured {
            const G: [f64; 5] = [-5.0, -2.0, 0.0, 2.0, 5.0];
            (0..125).map(|i| vec![G[i % 5], G[(i / 5) % 5], G[i / 25]]).collect()
        } else {
            (0..=32).map(|i| vec![-8.0 + 0.5 * i as f64]).collect()
        };
        let mut best = grid.into_iter().map(|y| (inner(&y).0, y)).max_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
        if fine && best.0.is_finite() {
            let m = nelder_mead(|y| -inner(y).0, &best.1, 0.5, 600, 1e-13);
            if -m.value > best.0 {
                best = (-m.value, m.x);
            }
        }
        let (o, smp) = inner(&best.1);
        (o, smp, best.1)
    }

    fn inner(&self, rho: f64, tp: &TiltPoint, st: &[f64], v: &[f64]) -> (f64, ShapeSample) {
        let lam = self.lambda;
        let (om, io) = (tp.omega.clamp(0.0, 1.0), tp.iota.clamp(0.0, 1.0));
        let a = tp.lambda - st[0] * tp.omega - st[1] * tp.iota;
        let (mlo, mhi) = if lam >= 1.0 { (io, io) } else { (((lam - 1.0 + io) / lam).max(0.0), (io / lam).min(1.0)) };
        let mut pen = 0.0;
        let mut smp = ShapeSample { rho, r: f64::NEG_INFINITY, omega: om, iota: io, mu: 0.0, beta_c: 0.0, eta_ch: 0.0, eta_c: 0.0, feasible: false };
        let common = |mu: f64| -> f64 {
            2.0 * a + 2.0 * weighted_h(lam * mu, io) + 2.0 * weighted_h(lam * (1.0 - mu), 1.0 - io)
                - entropy(om)
                - 2.0 * entropy(lam)
                - 2.0 * lam * entropy(mu)
        };
        let f;
        if !self.punctured {
            let b = (3.0 * rho - om - 2.0 * io) / (2.0 * lam);
            let (lo2, hi2) = (mlo.max(-2.0 * b), mhi.min((1.0 - b) / 1.5));
            let mu = if lo2 <= hi2 { pick(lo2, hi2, v[0]) } else { pick(mlo, mhi, v[0]) };
            let bc_raw = b + mu;
            let bc = bc_raw.max(mu / 2.0).min(1.0 - mu / 2.0);
            pen += (bc - bc_raw).abs();
            let ac = acc_asym_iowe(mu, bc);
            f = common(mu) + 2.0 * lam * ac;
            smp.mu = mu;
            smp.beta_c = bc;
            smp.eta_c = bc;
            smp.eta_ch = if lam < 1.0 { (io - lam * mu) / (1.0 - lam) } else { 0.0 };
        } else if self.delta_c >= 1.0 && lam < 1.0 {
            // patch output fully kept: its weight is tied to ρ
            let mu = pick(mlo, mhi, v[0]);
            let target = rho / self.rate - om;
            let dch = self.delta_ch;
            let l = 2.0 * (1.0 - lam);
            let bch = ((io - lam * mu) / (1.0 - lam)).clamp(0.0, 1.0);
            let (ilo, ihi) = ((dch - (1.0 - bch)).max(0.0), bch.min(dch));
            // β_c = (target − l η_ch) / 2λ must lie in [μ/2, 1 − μ/2]
            let (ilo2, ihi2) = (ilo.max((target - 2.0 * lam * (1.0 - mu / 2.0)) / l), ihi.min((target - lam * mu) / l));
            let eta_ch = if ilo2 <= ihi2 { pick(ilo2, ihi2, v[1]) } else { pick(ilo, ihi, v[1]) };
            let bc_raw = (target - l * eta_ch) / (2.0 * lam);
            let bc = bc_raw.max(mu / 2.0).min(1.0 - mu / 2.0);
            pen += (bc - bc_raw).abs();
            f = common(mu) + 2.0 * lam * acc_asym_iowe(mu, bc) + l * thin(bch, eta_ch, dch);
            smp.mu = mu;
            smp.beta_c = bc;
            smp.eta_ch = eta_ch;
            smp.eta_c = bc;
        } else {
            let mu = pick(mlo, mhi, v[0]);
            let bc = pick(mu / 2.0, 1.0 - mu / 2.0, v[1]);
            let target = rho / self.rate - om;
            let (dch, dc) = (self.delta_ch, self.delta_c);
            let (jlo, jhi) = ((dc - (1.0 - bc)).max(0.0), bc.min(dc));
            let (eta_ch, ch_term);
            if lam < 1.0 {
                let bch_v = ((io - lam * mu) / (1.0 - lam)).clamp(0.0, 1.0);
                let (ilo, ihi) = ((dch - (1.0 - bch_v)).max(0.0), bch_v.min(dch));
                let l = 2.0 * (1.0 - lam);
                let (ilo2, ihi2) = (ilo.max((target - 2.0 * lam * jhi) / l), ihi.min((target - 2.0 * lam * jlo) / l));
                eta_ch = if ilo2 <= ihi2 { pick(ilo2, ihi2, v[2]) } else { pick(ilo, ihi, v[2]) };
                ch_term = l * thin(bch_v, eta_ch, dch);
            } else {
                eta_ch = 0.0;
                ch_term = 0.0;
            }
            let ec_raw = (target - 2.0 * (1.0 - lam) * eta_ch) / (2.0 * lam);
            let ec = ec_raw.max(jlo).min(jhi);
            pen += (ec - ec_raw).abs();
            f = common(mu) + 2.0 * lam * acc_asym_iowe(mu, bc) + ch_term + 2.0 * lam * thin(bc, ec, dc);
            smp.mu = mu;
            smp.beta_c = bc;
            smp.eta_ch = eta_ch;
            smp.eta_c = ec;
        }
        let r = self.rate * f;
        smp.r = r;
        smp.feasible = pen < 1e-7 && r.is_finite();
        (r - PENALTY * pen, smp)
    }

    /// `r(ρ)` with optimizer diagnostics; `warm` seeds the tilt search.
    pub fn sample_from(&self, rho: f64, warm: Option<&[f64]>) -> (ShapeSample, Vec<f64>) {
        let neg = |v: &[f64], fine: bool| -> f64 {
            let o = self.objective(rho, v, fine).0;
            if o.is_finite() {
                -o
            } else {
                f64::INFINITY
            }
        };
        let (ni, nj) = if self.punctured { (26, 18) } else { (52, 36) };
        let mut seeds: Vec<(f64, Vec<f64>)> = Vec::new();
        for i in 0..=ni {
            for j in 0..=nj {
                let v = vec![-22.0 + 28.0 * i as f64 / ni as f64, -14.0 + 18.0 * j as f64 / nj as f64];
                seeds.push((neg(&v, false), v));
            }
        }
        seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
        seeds.truncate(6);
        if let Some(w) = warm {
            seeds.push((neg(w, false), w.to_vec()));
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for (_, v) in seeds {
            let f = |x: &[f64]| neg(x, true);
            let mut m = nelder_mead(f, &v, 1.0, 1500, 1e-13);
            let m2 = nelder_mead(f, &m.x, 0.2, 1500, 1e-14);
            if m2.value <= m.value {
                m = m2;
            }
            if best.as_ref().is_none_or(|b| m.value < b.0) {
                best = Some((m.value, m.x));
            }
        }
        let (_, x) = best.unwrap();
        let (_, smp, _) = self.objective(rho, &x, true);
        let smp = if smp.feasible { smp } else { ShapeSample { r: f64::NEG_INFINITY, ..smp } };
        (smp, x)
    }

    /// Best point for a fixed tilt `(s, t)`.
    pub fn evaluate_at(&self, rho: f64, s: f64, t: f64) -> ShapeSample {
        self.objective(rho, &[s, t], true).1
    }

    pub fn sample(&self, rho: f64) -> ShapeSample {
        self.sample_from(rho, None).0
    }
}

/// Unpunctured `r(ρ)` for the 3D ensemble with constituent `tr`.
pub fn spectral_shape(rho: f64, lambda: Lambda, tr: &Trellis) -> Result<ShapeSample> {
    check_rho(rho)?;
    Ok(ShapeProblem::new(tr, lambda, None)?.sample(rho))
}

/// `r(ρ)` with the stream kept fractions `δ_ch` and `δ_c`.
pub fn spectral_shape_punctured(rho: f64, lambda: Lambda, rate: Rate, tr: &Trellis) -> Result<ShapeSample> {
    check_rho(rho)?;
    Ok(ShapeProblem::new(tr, lambda, Some(rate))?.sample(rho))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidInput(format!("ρ = {rho} outside (0, 1)")));
    }
    Ok(())
}

/// Sampled spectral shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralShape {
    pub lambda: f64,
    pub rate: f64,
    pub samples: Vec<ShapeSample>,
}

impl SpectralShape {
    /// Samples `r` on `grid` (in parallel, deterministic order).
    pub fn compute(problem: &ShapeProblem, grid: &[f64]) -> Self {
        let samples = grid.par_iter().map(|&rho| problem.sample(rho)).collect();
        SpectralShape { lambda: problem.lambda, rate: problem.rate, samples }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,r,omega,iota,mu,beta_c,eta_ch,eta_c\n");
        for p in &self.samples {
            s.push_str(&format!("{},{},{},{},{},{},{},{}\n", p.rho, p.r, p.omega, p.iota, p.mu, p.beta_c, p.eta_ch, p.eta_c));
        }
        s
    }
}

/// Growth-rate coefficient estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rho0 {
    pub rho0: f64,
    /// False when no positive sample was found on the scanned range.
    pub found: bool,
}

/// Smallest `ρ` with `r(ρ) > tol`, found by following the positive branch
/// of `r` downward from `rho_start` (warm-started optimizer) and bisecting
/// the crossing. `found == false` means `r` stayed positive down to
/// `rho_min` (reported as `rho0 = 0`) or was not positive at `rho_start`.
pub fn rho0(problem: &ShapeProblem, tol: f64, rho_start: f64, rho_min: f64) -> Rho0 {
    let (s0, mut x) = problem.sample_from(rho_start, None);
    if s0.r <= tol {
        return Rho0 { rho0: 0.0, found: false };
    }
    let mut hi = rho_start;
    loop {
        let lo = (hi * 0.95).min(hi - 5e-4);
        if lo < rho_min {
            return Rho0 { rho0: 0.0, found: false };
        }
        let (smp, x2) = problem.sample_from(lo, Some(&x));
        if smp.r > tol {
            hi = lo;
            x = x2;
            continue;
        }
        let mut lo = lo;
        for _ in 0..10 {
            let mid = 0.5 * (lo + hi);
            let (smp, x2) = problem.sample_from(mid, Some(&x));
            if smp.r > tol {
                hi = mid;
                x = x2;
            } else {
                lo = mid;
            }
        }
        return Rho0 { rho0: hi, found: true };
    }
}

/// Upper bound on the ML decoding threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlThreshold {
    pub linear: f64,
    pub db: f64,
    pub rho_star: f64,
    /// True when no sample had `r > 0` (the bound degenerates).
    pub degenerate: bool,
}

fn ml_term(rho: f64, r: f64) -> f64 {
    (1.0 - (-2.0 * r).exp()) * (1.0 - rho) / (2.0 * rho)
}

/// Evaluates the bound from a sampled shape.
pub fn ml_threshold_from(shape: &SpectralShape, rate: f64) -> MlThreshold {
    let best = shape
        .samples
        .iter()
        .filter(|p| p.r.is_finite())
        .map(|p| (ml_term(p.rho, p.r), p.rho))
        .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let linear = best.0.max(0.0) / rate;
    MlThreshold { linear, db: 10.0 * linear.log10(), rho_star: best.1, degenerate: best.0 <= 0.0 }
}

/// Grid evaluation followed by golden-section refinement of the maximizer.
pub fn ml_threshold(problem: &ShapeProblem, step: f64) -> MlThreshold {
    let grid: Vec<f64> = (1..).map(|k| k as f64 * step).take_while(|&r| r < 1.0).collect();
    let shape = SpectralShape::compute(problem, &grid);
    let coarse = ml_threshold_from(&shape, problem.rate);
    if coarse.degenerate {
        return coarse;
    }
    let term = |rho: f64| {
        let r = problem.sample(rho).r;
        if r.is_finite() {
            ml_term(rho, r)
        } else {
            f64::NEG_INFINITY
        }
    };
    let (mut a, mut b) = ((coarse.rho_star - step).max(step / 4.0), (coarse.rho_star + step).min(1.0 - step / 4.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (term(c), term(d));
    for _ in 0..24 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = term(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = term(d);
        }
    }
    let (v, rho) = if fc > fd { (fc, c) } else { (fd, d) };
    let best = if v / problem.rate > coarse.linear { (v / problem.rate, rho) } else { (coarse.linear, coarse.rho_star) };
    MlThreshold { linear: best.0, db: 10.0 * best.0.log10(), rho_star: best.1, degenerate: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::constituent_iowe;
    use crate::trellis::{Generator, Termination};

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert!((binary_entropy(0.5).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((binary_entropy(0.11).unwrap() - 0.3466).abs() < 1e-3);
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn uniform_point_of_umts() {
        let t = Trellis::new(Generator::umts()).unwrap();
        let p = Tilted::new(&t).eval(0.0, 0.0);
        assert!((p.lambda - 2f64.ln()).abs() < 1e-12);
        assert!((p.omega - 0.5).abs() < 1e-9 && (p.iota - 0.5).abs() < 1e-9);
        let a = conv_asym_iowe(&t, 0.5, 0.5);
        assert!((a.value - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn identity_encoder_is_diagonal() {
        let t = Trellis::new(Generator::identity()).unwrap();
        for x in [0.1, 0.3, 0.5] {
            assert!((conv_asym_iowe(&t, x, x).value - entropy(x)).abs() < 1e-6);
            assert_eq!(conv_asym_iowe(&t, x, x + 0.1).value, f64::NEG_INFINITY);
        }
        assert!(conv_asym_iowe(&t, 0.0, 0.0).value.abs() < 1e-9);
    }

    #[test]
    fn patch_numeric_matches_closed_form() {
        let t = Trellis::new(Generator::patch()).unwrap();
        for (a, b) in [(0.2, 0.5), (0.1, 0.3), (0.4, 0.6), (0.05, 0.1)] {
            let n = conv_asym_iowe(&t, a, b).value;
            assert!((n - acc_asym_iowe(a, b)).abs() < 1e-6, "{a} {b} {n}");
        }
    }

    /// Fits `f(N) = a + c ln N / N + d / N` through three lengths.
    fn extrapolate(ns: &[usize; 3], f: &[f64; 3]) -> f64 {
        let rows: Vec<[f64; 3]> = ns.iter().map(|&n| [1.0, (n as f64).ln() / n as f64, 1.0 / n as f64]).collect();
        let det = |m: &[[f64; 3]]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let mut m0 = rows.clone();
        for i in 0..3 {
            m0[i][0] = f[i];
        }
        det(&m0) / det(&rows)
    }

    #[test]
    fn closed_form_against_finite_dp() {
        let t = Trellis::new(Generator::patch()).unwrap();
        let ns = [128, 256, 512];
        let tabs: Vec<_> = ns.iter().map(|&n| constituent_iowe(&t, n, Termination::Open, n, n).unwrap()).collect();
        for (a, b) in [(0.2, 0.5), (0.25, 0.5), (0.3, 0.4)] {
            let f: Vec<f64> = ns
                .iter()
                .zip(&tabs)
                .map(|(&n, tab)| tab.ln_count((a * n as f64).round() as usize, (b * n as f64).round() as usize) / n as f64)
                .collect();
            let e = extrapolate(&ns, &[f[0], f[1], f[2]]);
            assert!((e - acc_asym_iowe(a, b)).abs() < 0.01, "({a},{b}) {e}");
        }
    }
}
