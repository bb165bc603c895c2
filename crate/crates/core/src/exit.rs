//! EXIT-chart analysis of the 3D turbo decoder on the AWGN channel.
//!
//! The inner side is the patch decoder alone; the outer side is the
//! two-constituent turbo decoder iterated until its extrinsic output on
//! the patch-routed parity bits stops improving. Both sides see a
//! Gaussian a-priori channel parameterized by mutual information, and
//! every measurement assumes the all-zero codeword.
//!
//! Noise samples are drawn once per [`ExitSetup`], so curves evaluated at
//! different `E_b/N_0` share their random numbers and the tunnel test is
//! monotone in SNR up to decoder effects.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decode::{ebn0_to_sigma, siso, Algorithm, SisoOutput, SisoTrellis};
use crate::encoder::{keep_fractions, patch_mask, random_permutation, Lambda, PatternMode, Rate};
use crate::error::{Error, Result};
use crate::trellis::{Generator, Termination, Trellis};

// ten Brink's fit of the J-function
const J_SPLIT: f64 = 1.6363;
const J_A1: f64 = -0.0421061;
const J_B1: f64 = 0.209252;
const J_C1: f64 = -0.00640081;
const J_A2: f64 = 0.00181491;
const J_B2: f64 = -0.142675;
const J_C2: f64 = -0.0822054;
const J_D2: f64 = 0.0549608;

/// Mutual information between a bit and a consistent Gaussian LLR of
/// standard deviation `sigma`.
pub fn j_function(sigma: f64) -> f64 {
    let s = sigma.max(0.0);
    if s <= J_SPLIT {
        J_A1 * s.powi(3) + J_B1 * s * s + J_C1 * s
    } else if s < 10.0 {
        1.0 - (J_A2 * s.powi(3) + J_B2 * s * s + J_C2 * s + J_D2).exp()
    } else {
        1.0
    }
}

/// Inverse of [`j_function`] by bisection on `[0, 10]`.
pub fn j_inverse(mi: f64) -> f64 {
    let mi = mi.clamp(0.0, 1.0);
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if j_function(mid) < mi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Time-average mutual information of LLRs under the all-zero word,
/// with its standard error.
pub fn mutual_information(llr: &[f32]) -> (f64, f64) {
    if llr.is_empty() {
        return (0.0, 0.0);
    }
    let n = llr.len() as f64;
    let (mut s, mut s2) = (0.0, 0.0);
    for &l in llr {
        // log2(1 + e^-l), stable for both signs
        let l = l as f64;
        let sp = if l > 0.0 { (-l).exp().ln_1p() } else { -l + l.exp().ln_1p() };
        let v = 1.0 - sp / std::f64::consts::LN_2;
        s += v;
        s2 += v * v;
    }
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitSide {
    /// Patch decoder.
    Inner,
    /// Turbo decoder run to local convergence.
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitConfig {
    /// Information bits per Monte Carlo block.
    pub block: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Scale on extrinsics exchanged inside the outer decoder.
    pub scale: f32,
    /// Iteration cap for the outer decoder.
    pub max_outer_iter: usize,
    /// Outer decoding stops once the extrinsic MI moves less than this.
    pub converge_tol: f64,
}

impl Default for ExitConfig {
    fn default() -> Self {
        ExitConfig { block: 100_000, seed: 1, algorithm: Algorithm::LogMap, scale: 1.0, max_outer_iter: 40, converge_tol: 1e-4 }
    }
}

/// Smallest block accepted; below it the MI estimates are too noisy to
/// resolve a tunnel.
pub const EXIT_MIN_BLOCK: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitPoint {
    pub i_a: f64,
    pub i_e: f64,
    /// Standard error of `i_e`.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitCurve {
    pub side: ExitSide,
    pub ebn0_db: f64,
    pub points: Vec<ExitPoint>,
}

impl ExitCurve {
    /// Piecewise-linear interpolation of `I_E` at `i_a`.
    pub fn at(&self, i_a: f64) -> f64 {
        let p = &self.points;
        match p.iter().position(|q| q.i_a >= i_a) {
            None => p.last().map_or(0.0, |q| q.i_e),
            Some(0) => p[0].i_e,
            Some(j) => {
                let (a, b) = (p[j - 1], p[j]);
                a.i_e + (b.i_e - a.i_e) * (i_a - a.i_a) / (b.i_a - a.i_a)
            }
        }
    }

    pub const CSV_HEADER: &'static str = "I_A,I_E";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for p in &self.points {
            s.push_str(&format!("{:.6},{:.6}\n", p.i_a, p.i_e));
        }
        s
    }
}

/// Evenly spaced grid on `[0, 1]` with `n` intervals.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Code structure and frozen noise for one `(λ, R)` pair.
#[derive(Debug, Clone)]
pub struct ExitSetup {
    pub lambda: Lambda,
    pub rate: Rate,
    pub cfg: ExitConfig,
    constituent: SisoTrellis,
    patch: SisoTrellis,
    pi: Vec<usize>,
    /// Per constituent section: `Some(j)` for x^p index j, else `None`.
    slot_a: Vec<Option<usize>>,
    slot_b: Vec<Option<usize>>,
    /// Per constituent section: channel-stream index when not routed.
    ch_a: Vec<usize>,
    ch_b: Vec<usize>,
    keep_ch: Vec<bool>,
    keep_c: Vec<bool>,
    n_sys: Vec<f32>,
    n_ch: Vec<f32>,
    n_c: Vec<f32>,
    n_prior_outer: Vec<f32>,
    n_prior_inner: Vec<f32>,
}

fn normals(n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect::<Vec<f64>>().into_iter().map(|x| x as f32).collect()
}

fn keep_mask(n: usize, frac: (u32, u32), rng: &mut ChaCha8Rng) -> Vec<bool> {
    let kept = ((n as u64 * frac.0 as u64 + frac.1 as u64 / 2) / frac.1 as u64) as usize;
    let mut m = vec![false; n];
    for i in sample(rng, n, kept.min(n)) {
        m[i] = true;
    }
    m
}

impl ExitSetup {
    /// Open-terminated UMTS constituents, the 1/(1+D²) patch, a regular
    /// routing pattern and random puncturing to `rate`.
    pub fn new(lambda: Lambda, rate: Rate, cfg: ExitConfig) -> Result<Self> {
        let k = cfg.block;
        if k < EXIT_MIN_BLOCK {
            return Err(Error::InvalidInput(format!("MC block {k} below {EXIT_MIN_BLOCK}; I_E standard error would exceed ~0.01")));
        }
        let nc = lambda.patch_len(k).ok_or_else(|| Error::InvalidConfig(format!("block {k} not compatible with lambda {lambda}")))?;
        let kf = keep_fractions(lambda, rate)?;
        let mask = patch_mask(k, lambda, PatternMode::Regular)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let pi = random_permutation(k, cfg.seed ^ 0x5eed);
        let (mut jp, mut jc) = (0, 0);
        let mut slot = vec![None; 2 * k];
        let mut chi = vec![0; 2 * k];
        for i in 0..2 * k {
            if mask[i] {
                slot[i] = Some(jp);
                jp += 1;
            } else {
                chi[i] = jc;
                jc += 1;
            }
        }
        let n_ch_len = 2 * k - nc;
        let keep_ch = keep_mask(n_ch_len, kf.ch, &mut rng);
        let keep_c = keep_mask(nc, kf.c, &mut rng);
        Ok(ExitSetup {
            lambda,
            rate,
            cfg,
            constituent: SisoTrellis::new(&Trellis::new(Generator::umts())?),
            patch: SisoTrellis::new(&Trellis::new(Generator::patch())?),
            slot_a: (0..k).map(|t| slot[2 * t]).collect(),
            slot_b: (0..k).map(|t| slot[2 * t + 1]).collect(),
            ch_a: (0..k).map(|t| chi[2 * t]).collect(),
            ch_b: (0..k).map(|t| chi[2 * t + 1]).collect(),
            pi,
            keep_ch,
            keep_c,
            n_sys: normals(k, &mut rng),
            n_ch: normals(n_ch_len, &mut rng),
            n_c: normals(nc, &mut rng),
            n_prior_outer: normals(nc, &mut rng),
            n_prior_inner: normals(nc, &mut rng),
        })
    }

    fn channel(&self, noise: &[f32], keep: Option<&[bool]>, sigma: f64) -> Vec<f32> {
        let (m, s) = ((2.0 / (sigma * sigma)) as f32, (2.0 / sigma) as f32);
        noise.iter().enumerate().map(|(i, &n)| if keep.is_none_or(|k| k[i]) { m + s * n } else { 0.0 }).collect()
    }

    fn prior(noise: &[f32], i_a: f64) -> Vec<f32> {
        let sa = j_inverse(i_a) as f32;
        noise.iter().map(|&n| sa * sa / 2.0 + sa * n).collect()
    }

    fn sigma(&self, ebn0_db: f64) -> f64 {
        ebn0_to_sigma(ebn0_db, self.rate.value())
    }

    /// Patch decoder extrinsic MI for a-priori MI `i_a` on its input.
    pub fn inner_point(&self, ebn0_db: f64, i_a: f64) -> ExitPoint {
        let lc = self.channel(&self.n_c, Some(&self.keep_c), self.sigma(ebn0_db));
        let lu = Self::prior(&self.n_prior_inner, i_a);
        let mut out = SisoOutput::default();
        siso(&self.patch, Termination::Open, &lu, &lc, self.cfg.algorithm, &mut out);
        let e: Vec<f32> = out.app_u.iter().zip(&lu).map(|(a, l)| a - l).collect();
        let (i_e, stderr) = mutual_information(&e);
        ExitPoint { i_a, i_e, stderr }
    }

    /// Outer turbo decoder extrinsic MI on x^p for a-priori MI `i_a`.
    pub fn outer_point(&self, ebn0_db: f64, i_a: f64) -> ExitPoint {
        self.outer_run(ebn0_db, i_a).0
    }

    /// Outer decoding; also returns the a-posteriori MI of the
    /// information bits.
    fn outer_run(&self, ebn0_db: f64, i_a: f64) -> (ExitPoint, f64) {
        let k = self.cfg.block;
        let sigma = self.sigma(ebn0_db);
        let sys = self.channel(&self.n_sys, None, sigma);
        let ch = self.channel(&self.n_ch, Some(&self.keep_ch), sigma);
        let prior = Self::prior(&self.n_prior_outer, i_a);
        let nc = prior.len();
        let parity = |slots: &[Option<usize>], chs: &[usize]| -> Vec<f32> {
            slots.iter().zip(chs).map(|(s, &j)| match s { Some(p) => prior[*p], None => ch[j] }).collect()
        };
        let lp_a = parity(&self.slot_a, &self.ch_a);
        let lp_b = parity(&self.slot_b, &self.ch_b);
        let (alg, sc) = (self.cfg.algorithm, self.cfg.scale);
        let mut ext_ba = vec![0f32; k];
        let mut lu = vec![0f32; k];
        let mut oa = SisoOutput::default();
        let mut ob = SisoOutput::default();
        let mut e = vec![0f32; nc];
        let mut best = (0.0, 0.0);
        let mut info = 0.0;
        for it in 0..self.cfg.max_outer_iter {
            for i in 0..k {
                lu[i] = sys[i] + ext_ba[i];
            }
            siso(&self.constituent, Termination::Open, &lu, &lp_a, alg, &mut oa);
            let mut lub = vec![0f32; k];
            for i in 0..k {
                lub[self.pi[i]] = sys[i] + sc * (oa.app_u[i] - lu[i]);
            }
            siso(&self.constituent, Termination::Open, &lub, &lp_b, alg, &mut ob);
            for i in 0..k {
                ext_ba[i] = sc * (ob.app_u[self.pi[i]] - lub[self.pi[i]]);
            }
            for t in 0..k {
                if let Some(j) = self.slot_a[t] {
                    e[j] = sc * (oa.app_p[t] - lp_a[t]);
                }
                if let Some(j) = self.slot_b[t] {
                    e[j] = sc * (ob.app_p[t] - lp_b[t]);
                }
            }
            let app: Vec<f32> = (0..k).map(|i| ob.app_u[self.pi[i]]).collect();
            let mi = mutual_information(&app).0;
            let m = if nc > 0 { mutual_information(&e) } else { (mi, 0.0) };
            let gain = m.0 - best.0;
            if it == 0 || gain > 0.0 {
                best = m;
                info = mi;
            }
            if it > 0 && gain < self.cfg.converge_tol {
                break;
            }
        }
        (ExitPoint { i_a, i_e: best.0, stderr: best.1 }, info)
    }

    pub fn curve(&self, side: ExitSide, ebn0_db: f64, grid: &[f64]) -> Result<ExitCurve> {
        if grid.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::InvalidInput("EXIT grid must lie in [0, 1]".into()));
        }
        let points = grid
            .iter()
            .map(|&i| match side {
                ExitSide::Inner => self.inner_point(ebn0_db, i),
                ExitSide::Outer => self.outer_point(ebn0_db, i),
            })
            .collect();
        Ok(ExitCurve { side, ebn0_db, points })
    }

    /// Whether the decoding trajectory passes through the tunnel at
    /// `ebn0_db`. The outer side is simulated at every step and the inner
    /// side interpolated from a 101-point curve; the trajectory must reach
    /// outer output `reach` before it stalls.
    ///
    /// Without a patch (λ = 0) there is no exchange with an inner code; the
    /// test is then whether the turbo decoder alone drives the
    /// information-bit MI to `reach`.
    pub fn tunnel_open(&self, ebn0_db: f64, reach: f64) -> bool {
        if self.lambda.is_zero() {
            return self.outer_run(ebn0_db, 0.0).1 >= reach;
        }
        let Ok(inner) = self.curve(ExitSide::Inner, ebn0_db, &uniform_grid(100)) else {
            return false;
        };
        let mut y = 0.0;
        for _ in 0..MAX_TRAJECTORY_STEPS {
            let x = self.outer_point(ebn0_db, y).i_e;
            if x >= reach {
                return true;
            }
            let next = inner.at(x);
            if next <= y + STALL {
                return false;
            }
            y = next;
        }
        false
    }
}

const MAX_TRAJECTORY_STEPS: usize = 200;
const STALL: f64 = 1e-4;

/// Decoding trajectory through the two curves starting at zero a-priori
/// information, as (outer input, outer output) pairs.
pub fn trajectory(inner: &ExitCurve, outer: &ExitCurve, steps: usize) -> Vec<(f64, f64)> {
    let mut y = 0.0;
    let mut out = Vec::new();
    for _ in 0..steps {
        let x = outer.at(y);
        out.push((y, x));
        let next = inner.at(x);
        if next <= y + 1e-6 {
            break;
        }
        y = next;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitThreshold {
    pub ebn0_db: f64,
    pub evaluations: usize,
}

/// Smallest `E_b/N_0` in `[lo, hi]` with an open tunnel, by bisection to
/// `tol` dB.
pub fn exit_threshold(setup: &ExitSetup, lo: f64, hi: f64, tol: f64) -> Result<ExitThreshold> {
    let reach = 0.99;
    let mut evaluations = 0;
    let mut open = |s: f64| {
        evaluations += 1;
        setup.tunnel_open(s, reach)
    };
    if open(lo) {
        return Err(Error::InvalidInput(format!("tunnel already open at {lo} dB")));
    }
    if !open(hi) {
        return Err(Error::InvalidInput(format!("tunnel still closed at {hi} dB")));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if open(m) {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(ExitThreshold { ebn0_db: 0.5 * (a + b), evaluations })
}
