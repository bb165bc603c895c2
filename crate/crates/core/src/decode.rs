//! Iterative decoding over the AWGN channel: a BCJR soft-in soft-out
//! module, the three-decoder schedule of the 3D turbo code, a seeded
//! Monte Carlo frame-error-rate runner and an exhaustive ML oracle for
//! short codes.
//!
//! LLRs are `ln P(0)/P(1)`; BPSK maps `0 -> +1`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{Code3d, Layout};
use crate::error::{Error, Result};
use crate::trellis::{Termination, Trellis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Max-log approximation.
    #[default]
    MaxLog,
    /// Exact `max*` (Jacobian logarithm).
    LogMap,
}

const FLOOR: f32 = -1.0e30;
const WARMUP: usize = 64;

/// Trellis tables flattened for the recursions.
#[derive(Debug, Clone)]
pub struct SisoTrellis {
    ns: usize,
    next: Vec<[usize; 2]>,
    parity: Vec<[u8; 2]>,
}

impl SisoTrellis {
    pub fn new(tr: &Trellis) -> Self {
        let ns = tr.num_states();
        let next = (0..ns as u32).map(|s| [tr.next_state(s, 0) as usize, tr.next_state(s, 1) as usize]).collect();
        let parity = (0..ns as u32).map(|s| [tr.output(s, 0), tr.output(s, 1)]).collect();
        SisoTrellis { ns, next, parity }
    }
}

/// A-posteriori LLRs of the input and parity bits.
#[derive(Debug, Clone, Default)]
pub struct SisoOutput {
    pub app_u: Vec<f32>,
    pub app_p: Vec<f32>,
}

#[inline(always)]
fn mx<const EXACT: bool>(a: f32, b: f32) -> f32 {
    if EXACT {
        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
        if lo <= FLOOR {
            hi
        } else {
            hi + (-(hi - lo)).exp().ln_1p()
        }
    } else {
        a.max(b)
    }
}

#[inline(always)]
fn metric(u: usize, p: u8, lu: f32, lp: f32) -> f32 {
    // log-likelihood up to a per-section constant
    -((u as f32) * lu + (p as f32) * lp)
}

fn bcjr<const EXACT: bool>(t: &SisoTrellis, term: Termination, lu: &[f32], lp: &[f32], out: &mut SisoOutput) {
    let n = lu.len();
    let ns = t.ns;
    out.app_u.resize(n, 0.0);
    out.app_p.resize(n, 0.0);
    if n == 0 {
        return;
    }
    let step_fwd = |a: &[f32], b: &mut [f32], i: usize| {
        b.fill(FLOOR);
        for s in 0..ns {
            if a[s] <= FLOOR {
                continue;
            }
            for u in 0..2 {
                let j = t.next[s][u];
                b[j] = mx::<EXACT>(b[j], a[s] + metric(u, t.parity[s][u], lu[i], lp[i]));
            }
        }
        let m = b.iter().copied().fold(FLOOR, f32::max);
        b.iter_mut().for_each(|x| *x -= m);
    };
    let step_bwd = |b1: &[f32], b: &mut [f32], i: usize| {
        for s in 0..ns {
            let mut v = FLOOR;
            for u in 0..2 {
                v = mx::<EXACT>(v, b1[t.next[s][u]] + metric(u, t.parity[s][u], lu[i], lp[i]));
            }
            b[s] = v;
        }
        let m = b.iter().copied().fold(FLOOR, f32::max);
        b.iter_mut().for_each(|x| *x -= m);
    };
    let mut alpha = vec![FLOOR; (n + 1) * ns];
    let mut beta_end = vec![FLOOR; ns];
    match term {
        Termination::Tailbiting => {
            let mut a = vec![0.0f32; ns];
            let mut b = vec![0.0f32; ns];
            for w in 0..WARMUP.max(n) {
                let i = (n - WARMUP.max(n) % n + w) % n;
                step_fwd(&a, &mut b, i);
                std::mem::swap(&mut a, &mut b);
            }
            alpha[..ns].copy_from_slice(&a);
            let mut c = vec![0.0f32; ns];
            for w in (0..WARMUP.max(n)).rev() {
                step_bwd(&c, &mut b, w % n);
                std::mem::swap(&mut c, &mut b);
            }
            beta_end.copy_from_slice(&c);
        }
        Termination::Dual => {
            alpha[0] = 0.0;
            beta_end[0] = 0.0;
        }
        Termination::Open => {
            alpha[0] = 0.0;
            beta_end.fill(0.0);
        }
    }
    for i in 0..n {
        let (a, b) = alpha.split_at_mut((i + 1) * ns);
        step_fwd(&a[i * ns..], &mut b[..ns], i);
    }
    let mut beta = beta_end;
    let mut prev = vec![0.0f32; ns];
    for i in (0..n).rev() {
        let a = &alpha[i * ns..(i + 1) * ns];
        let (mut u0, mut u1, mut p0, mut p1) = (FLOOR, FLOOR, FLOOR, FLOOR);
        for s in 0..ns {
            if a[s] <= FLOOR {
                continue;
            }
            for u in 0..2 {
                let p = t.parity[s][u];
                let m = a[s] + metric(u, p, lu[i], lp[i]) + beta[t.next[s][u]];
                if u == 0 {
                    u0 = mx::<EXACT>(u0, m);
                } else {
                    u1 = mx::<EXACT>(u1, m);
                }
                if p == 0 {
                    p0 = mx::<EXACT>(p0, m);
                } else {
                    p1 = mx::<EXACT>(p1, m);
                }
            }
        }
        out.app_u[i] = u0 - u1;
        out.app_p[i] = p0 - p1;
        step_bwd(&beta, &mut prev, i);
        std::mem::swap(&mut beta, &mut prev);
    }
}

/// Runs the BCJR recursions. `lu` and `lp` are the total (channel plus
/// a-priori) LLRs of the input and parity bit of each section.
pub fn siso(t: &SisoTrellis, term: Termination, lu: &[f32], lp: &[f32], alg: Algorithm, out: &mut SisoOutput) {
    assert_eq!(lu.len(), lp.len(), "one parity LLR per section");
    match alg {
        Algorithm::MaxLog => bcjr::<false>(t, term, lu, lp, out),
        Algorithm::LogMap => bcjr::<true>(t, term, lu, lp, out),
    }
}

/// Extrinsic LLRs of the input bits: `scale * (APP - lu)`.
pub fn siso_extrinsic(tr: &Trellis, term: Termination, lu: &[f32], lp: &[f32], alg: Algorithm, scale: f32) -> Vec<f32> {
    let mut out = SisoOutput::default();
    siso(&SisoTrellis::new(tr), term, lu, lp, alg, &mut out);
    out.app_u.iter().zip(lu).map(|(a, l)| scale * (a - l)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub max_iter: usize,
    /// Multiplier on every extrinsic message.
    pub scale: f32,
    pub algorithm: Algorithm,
    pub early_stop: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { max_iter: 16, scale: 0.75, algorithm: Algorithm::MaxLog, early_stop: true }
    }
}

/// Received LLRs split by stream; punctured positions hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrFrame {
    pub sys: Vec<f32>,
    /// Over `x^ch`.
    pub ch: Vec<f32>,
    /// Over `x_c`.
    pub c: Vec<f32>,
}

impl LlrFrame {
    /// Scatters LLRs of the transmitted bits (in [`Code3d::transmit`]
    /// order) into stream buffers.
    pub fn from_transmitted(code: &Code3d, layout: &Layout, llr: &[f32]) -> Result<Self> {
        if llr.len() != layout.len() {
            return Err(Error::InvalidInput(format!("expected {} LLRs, got {}", layout.len(), llr.len())));
        }
        let k = code.k();
        let sys = llr[..k].to_vec();
        let mut ch = vec![0.0; code.channel_positions().len()];
        for (&j, &l) in layout.ch.iter().zip(&llr[k..]) {
            ch[j] = l;
        }
        let mut c = vec![0.0; code.patch_len()];
        for (&j, &l) in layout.c.iter().zip(&llr[k + layout.ch.len()..]) {
            c[j] = l;
        }
        Ok(LlrFrame { sys, ch, c })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub u: Vec<u8>,
    pub iterations: usize,
    /// Whether the early-stop test passed.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Patch(usize),
    Channel(usize),
}

/// Decoder for one code, with interleaver bookkeeping precomputed.
#[derive(Debug, Clone)]
pub struct Decoder3d<'a> {
    code: &'a Code3d,
    pub cfg: DecoderConfig,
    constituent: SisoTrellis,
    patch: SisoTrellis,
    slot_a: Vec<Slot>,
    slot_b: Vec<Slot>,
}

#[derive(Default)]
struct Work {
    lu_a: Vec<f32>,
    lp_a: Vec<f32>,
    lu_b: Vec<f32>,
    lp_b: Vec<f32>,
    lu_c: Vec<f32>,
    ext_ab: Vec<f32>,
    ext_ba: Vec<f32>,
    pe: Vec<f32>,
    ce: Vec<f32>,
    oa: SisoOutput,
    ob: SisoOutput,
    oc: SisoOutput,
}

impl<'a> Decoder3d<'a> {
    pub fn new(code: &'a Code3d, cfg: DecoderConfig) -> Self {
        let k = code.k();
        let mut slots = vec![Slot::Channel(0); 2 * k];
        for (j, &i) in code.patch_positions().iter().enumerate() {
            slots[i] = Slot::Patch(j);
        }
        for (j, &i) in code.channel_positions().iter().enumerate() {
            slots[i] = Slot::Channel(j);
        }
        let slot_a = (0..k).map(|t| slots[2 * t]).collect();
        let slot_b = (0..k).map(|t| slots[2 * t + 1]).collect();
        Decoder3d {
            code,
            cfg,
            constituent: SisoTrellis::new(&code.constituent),
            patch: SisoTrellis::new(&code.patch),
            slot_a,
            slot_b,
        }
    }

    pub fn decode(&self, frame: &LlrFrame) -> Decoded {
        self.decode_with_prior(frame, None)
    }

    /// Decodes with an optional extra a-priori on the systematic bits
    /// (used by the impulse method).
    pub fn decode_with_prior(&self, frame: &LlrFrame, prior: Option<&[f32]>) -> Decoded {
        self.decode_observed(frame, prior, |_| ())
    }

    /// Like [`Self::decode_with_prior`], handing the hard decisions of
    /// every iteration to `observe`.
    pub fn decode_observed(&self, frame: &LlrFrame, prior: Option<&[f32]>, mut observe: impl FnMut(&[u8])) -> Decoded {
        let code = self.code;
        let (k, nc) = (code.k(), code.patch_len());
        let c = &self.cfg;
        let term = code.cfg.termination;
        let pi = code.interleaver();
        let pic = code.patch_interleaver();
        let mut w = Work {
            lu_a: vec![0.0; k],
            lp_a: vec![0.0; k],
            lu_b: vec![0.0; k],
            lp_b: vec![0.0; k],
            lu_c: vec![0.0; nc],
            ext_ab: vec![0.0; k],
            ext_ba: vec![0.0; k],
            pe: vec![0.0; nc],
            ce: vec![0.0; nc],
            ..Default::default()
        };
        let sys: Vec<f32> = match prior {
            Some(p) => frame.sys.iter().zip(p).map(|(a, b)| a + b).collect(),
            None => frame.sys.clone(),
        };
        let mut u = vec![0u8; k];
        let mut iterations = 0;
        let mut converged = false;
        for it in 1..=c.max_iter {
            iterations = it;
            if nc > 0 {
                for j in 0..nc {
                    w.lu_c[pic[j]] = w.pe[j];
                }
                siso(&self.patch, term.patch, &w.lu_c, &frame.c, c.algorithm, &mut w.oc);
                for j in 0..nc {
                    w.ce[j] = c.scale * (w.oc.app_u[pic[j]] - w.lu_c[pic[j]]);
                }
            }
            let fill = |slots: &[Slot], lp: &mut [f32], ce: &[f32]| {
                for (l, s) in lp.iter_mut().zip(slots) {
                    *l = match *s {
                        Slot::Patch(j) => ce[j],
                        Slot::Channel(j) => frame.ch[j],
                    };
                }
            };
            for i in 0..k {
                w.lu_a[i] = sys[i] + w.ext_ba[i];
            }
            fill(&self.slot_a, &mut w.lp_a, &w.ce);
            siso(&self.constituent, term.upper, &w.lu_a, &w.lp_a, c.algorithm, &mut w.oa);
            for i in 0..k {
                w.ext_ab[i] = c.scale * (w.oa.app_u[i] - w.lu_a[i]);
                if let Slot::Patch(j) = self.slot_a[i] {
                    w.pe[j] = c.scale * (w.oa.app_p[i] - w.lp_a[i]);
                }
            }
            for i in 0..k {
                w.lu_b[pi[i]] = sys[i] + w.ext_ab[i];
            }
            fill(&self.slot_b, &mut w.lp_b, &w.ce);
            siso(&self.constituent, term.lower, &w.lu_b, &w.lp_b, c.algorithm, &mut w.ob);
            for i in 0..k {
                w.ext_ba[i] = c.scale * (w.ob.app_u[pi[i]] - w.lu_b[pi[i]]);
            }
            for t in 0..k {
                if let Slot::Patch(j) = self.slot_b[t] {
                    w.pe[j] = c.scale * (w.ob.app_p[t] - w.lp_b[t]);
                }
            }
            for i in 0..k {
                u[i] = (w.ob.app_u[pi[i]] < 0.0) as u8;
            }
            observe(&u);
            if c.early_stop && self.consistent(&u, &w) {
                converged = true;
                break;
            }
        }
        Decoded { u, iterations, converged }
    }

    /// Whether `u` re-encodes to the sign pattern of every a-posteriori
    /// parity LLR.
    fn consistent(&self, u: &[u8], w: &Work) -> bool {
        let Ok(cw) = self.code.encode_unchecked(u) else {
            return false;
        };
        let sign_ok = |bits: &[u8], app: &[f32]| bits.iter().zip(app).all(|(&b, &l)| (l < 0.0) == (b == 1));
        self.code.is_terminated(u).unwrap_or(false)
            && sign_ok(&cw.x_a, &w.oa.app_p)
            && sign_ok(&cw.x_b, &w.ob.app_p)
            && (w.oc.app_p.is_empty() || sign_ok(&cw.x_c, &w.oc.app_p))
    }
}

/// Noise standard deviation for unit-energy BPSK at `E_b/N_0` (dB) and
/// code rate `rate`.
pub fn ebn0_to_sigma(ebn0_db: f64, rate: f64) -> f64 {
    (1.0 / (2.0 * rate * 10f64.powf(ebn0_db / 10.0))).sqrt()
}

/// BPSK over AWGN, returning channel LLRs `2y/sigma^2`.
pub fn awgn_llr(bits: &[u8], sigma: f64, rng: &mut impl rand::Rng) -> Vec<f32> {
    let g = 2.0 / (sigma * sigma);
    bits.iter()
        .map(|&b| {
            let n: f64 = StandardNormal.sample(rng);
            let y = 1.0 - 2.0 * b as f64 + sigma * n;
            (g * y) as f32
        })
        .collect()
}

/// Transmits `bits` at `E_s/N_0` (dB) with a generator seeded by `seed`.
pub fn awgn_transmit(code: &Code3d, layout: &Layout, bits: &[u8], esn0_db: f64, seed: u64) -> Result<LlrFrame> {
    let sigma = (1.0 / (2.0 * 10f64.powf(esn0_db / 10.0))).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LlrFrame::from_transmitted(code, layout, &awgn_llr(bits, sigma, &mut rng))
}

/// Per-frame generator: the stream depends only on `(seed, point, frame)`.
pub fn frame_rng(seed: u64, point: usize, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 40) ^ frame);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerConfig {
    pub snr_db: Vec<f64>,
    pub max_frames: u64,
    pub max_errors: u64,
    pub seed: u64,
    /// Frames per batch; stopping is checked between batches.
    pub batch: u64,
    pub decoder: DecoderConfig,
}

impl Default for FerConfig {
    fn default() -> Self {
        FerConfig { snr_db: vec![1.0], max_frames: 10_000, max_errors: 100, seed: 1, batch: 256, decoder: DecoderConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerRecord {
    pub snr_db: f64,
    pub frames: u64,
    pub frame_errors: u64,
    pub bit_errors: u64,
    pub avg_iters: f64,
    pub seed: u64,
}

impl FerRecord {
    pub fn fer(&self) -> f64 {
        self.frame_errors as f64 / self.frames.max(1) as f64
    }

    pub const CSV_HEADER: &'static str = "snr_db,frames,frame_errors,bit_errors,avg_iters,seed";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{:.4},{}", self.snr_db, self.frames, self.frame_errors, self.bit_errors, self.avg_iters, self.seed)
    }
}

/// One simulated frame: (bit errors, iterations).
fn simulate_frame(code: &Code3d, layout: &Layout, dec: &Decoder3d, sigma: f64, mut rng: ChaCha8Rng) -> Result<(u64, u64)> {
    use rand::Rng;
    let info: Vec<u8> = (0..code.info_len()).map(|_| rng.random_range(0..2u8)).collect();
    let u = code.terminate(&info)?;
    let cw = code.encode(&u)?;
    let tx = code.transmit(&cw, layout);
    let frame = LlrFrame::from_transmitted(code, layout, &awgn_llr(&tx, sigma, &mut rng))?;
    let d = dec.decode(&frame);
    let got = code.extract_info(&d.u);
    let errs = got.iter().zip(&info).filter(|(a, b)| a != b).count() as u64;
    Ok((errs, d.iterations as u64))
}

/// Monte Carlo FER over `cfg.snr_db`, with `E_b/N_0` referred to the
/// actual rate of `layout`. Results do not depend on the worker count.
pub fn run_fer(code: &Code3d, layout: &Layout, cfg: &FerConfig) -> Result<Vec<FerRecord>> {
    if cfg.batch == 0 {
        return Err(Error::InvalidInput("batch must be positive".into()));
    }
    let rate = code.actual_rate(layout);
    let dec = Decoder3d::new(code, cfg.decoder);
    let mut out = Vec::with_capacity(cfg.snr_db.len());
    for (point, &snr) in cfg.snr_db.iter().enumerate() {
        let sigma = ebn0_to_sigma(snr, rate);
        let (mut frames, mut fe, mut be, mut iters) = (0u64, 0u64, 0u64, 0u64);
        while frames < cfg.max_frames && fe < cfg.max_errors {
            let n = cfg.batch.min(cfg.max_frames - frames);
            let res: Result<Vec<(u64, u64)>> =
                (frames..frames + n).into_par_iter().map(|f| simulate_frame(code, layout, &dec, sigma, frame_rng(cfg.seed, point, f))).collect();
            for (e, it) in res? {
                fe += (e > 0) as u64;
                be += e;
                iters += it;
            }
            frames += n;
        }
        out.push(FerRecord { snr_db: snr, frames, frame_errors: fe, bit_errors: be, avg_iters: iters as f64 / frames.max(1) as f64, seed: cfg.seed });
    }
    Ok(out)
}

/// `E_b/N_0` at which the FER curve crosses `target`, by log-linear
/// interpolation between the first bracketing pair of points.
pub fn crossing_db(records: &[FerRecord], target: f64) -> Option<f64> {
    records.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        let (fa, fb) = (a.fer(), b.fer());
        if fa >= target && fb < target && fb > 0.0 {
            let t = (fa.ln() - target.ln()) / (fa.ln() - fb.ln());
            Some(a.snr_db + t * (b.snr_db - a.snr_db))
        } else {
            None
        }
    })
}

/// Exhaustive maximum-likelihood decoder over the full codebook.
#[derive(Debug, Clone)]
pub struct MlDecoder {
    /// Transmitted words, one per information word.
    words: Vec<Vec<u8>>,
    inputs: Vec<Vec<u8>>,
}

/// Largest number of information bits accepted by [`MlDecoder`].
pub const ML_MAX_INFO: usize = 16;

impl MlDecoder {
    pub fn new(code: &Code3d, layout: &Layout) -> Result<Self> {
        let n = code.info_len();
        if n > ML_MAX_INFO {
            return Err(Error::InvalidInput(format!("ML decoding needs at most {ML_MAX_INFO} information bits")));
        }
        let mut words = Vec::with_capacity(1 << n);
        let mut inputs = Vec::with_capacity(1 << n);
        for m in 0u32..1 << n {
            let info: Vec<u8> = (0..n).map(|i| ((m >> i) & 1) as u8).collect();
            let u = code.terminate(&info)?;
            let cw = code.encode(&u)?;
            words.push(code.transmit(&cw, layout));
            inputs.push(u);
        }
        Ok(MlDecoder { words, inputs })
    }

    /// Input word of the most likely codeword for transmitted-order LLRs.
    pub fn decode(&self, llr: &[f32]) -> &[u8] {
        let cost = |w: &[u8]| -> f32 { w.iter().zip(llr).map(|(&b, &l)| if b == 1 { l } else { 0.0 }).sum() };
        let best = (0..self.words.len()).min_by(|&a, &b| cost(&self.words[a]).total_cmp(&cost(&self.words[b]))).unwrap_or(0);
        &self.inputs[best]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{Code3dConfig, Interleaver, Lambda};
    use crate::trellis::Generator;

    fn umts() -> Trellis {
        Trellis::new(Generator::umts()).unwrap()
    }

    #[test]
    fn zero_inputs_give_zero_extrinsics() {
        for alg in [Algorithm::MaxLog, Algorithm::LogMap] {
            let e = siso_extrinsic(&umts(), Termination::Open, &[0.0; 12], &[0.0; 12], alg, 1.0);
            assert!(e.iter().all(|&x| x.abs() < 1e-6));
        }
    }

    #[test]
    fn one_section_by_hand() {
        // identity encoder: output bit = input bit, extrinsic is the parity LLR
        let t = Trellis::new(Generator::identity()).unwrap();
        let e = siso_extrinsic(&t, Termination::Open, &[0.3], &[-1.7], Algorithm::MaxLog, 1.0);
        assert!((e[0] + 1.7).abs() < 1e-6);
        // one section of 13/15 from state 0: input u gives parity u
        let e = siso_extrinsic(&umts(), Termination::Open, &[0.5], &[2.0], Algorithm::MaxLog, 1.0);
        assert!((e[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn maxlog_is_scale_invariant() {
        let lu: Vec<f32> = (0..20).map(|i| ((i * 7 % 11) as f32 - 5.0) * 0.3).collect();
        let lp: Vec<f32> = (0..20).map(|i| ((i * 5 % 13) as f32 - 6.0) * 0.25).collect();
        let a = siso_extrinsic(&umts(), Termination::Dual, &lu, &lp, Algorithm::MaxLog, 1.0);
        let s: Vec<f32> = lu.iter().map(|x| x * 4.0).collect();
        let q: Vec<f32> = lp.iter().map(|x| x * 4.0).collect();
        let b = siso_extrinsic(&umts(), Termination::Dual, &s, &q, Algorithm::MaxLog, 1.0);
        for (x, y) in a.iter().zip(&b) {
            assert!((4.0 * x - y).abs() < 1e-3);
        }
    }

    #[test]
    fn noiseless_round_trip() {
        for lambda in ["0", "1/4", "1/2", "1"] {
            for t in [Termination::Dual, Termination::Tailbiting] {
                let k = 40;
                let cfg = Code3dConfig::new(k, lambda.parse::<Lambda>().unwrap())
                    .interleaver(Interleaver::Random { seed: 3 })
                    .patch_interleaver(Interleaver::Random { seed: 4 })
                    .termination(t);
                let code = Code3d::new(cfg).unwrap();
                let layout = code.default_layout();
                let info: Vec<u8> = (0..code.info_len()).map(|i| ((i * 5 + 1) % 3 == 0) as u8).collect();
                let Ok(u) = code.terminate(&info) else { continue };
                let Ok(cw) = code.encode(&u) else { continue };
                let llr: Vec<f32> = code.transmit(&cw, &layout).iter().map(|&b| if b == 1 { -20.0 } else { 20.0 }).collect();
                let d = Decoder3d::new(&code, DecoderConfig::default()).decode(&LlrFrame::from_transmitted(&code, &layout, &llr).unwrap());
                assert_eq!(d.u, u, "lambda {lambda} {t:?}");
                assert_eq!(d.iterations, 1);
            }
        }
    }
}
