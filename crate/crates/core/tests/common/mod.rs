#![allow(dead_code)]
//! Brute-force oracles shared by the integration tests.

use num_bigint::BigInt;
use num_rational::BigRational;
use turbo3d::trellis::{weight, Generator, Termination, Trellis};

pub fn bits(x: u64, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((x >> i) & 1) as u8).collect()
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Parity sequences of all valid paths for `input` under `mode`.
pub fn paths(tr: &Trellis, input: &[u8], mode: Termination) -> Vec<Vec<u8>> {
    let starts: Vec<u32> = if mode == Termination::Tailbiting { (0..tr.num_states() as u32).collect() } else { vec![0] };
    starts
        .into_iter()
        .filter_map(|s| {
            let (p, e) = tr.run(s, input);
            let ok = match mode {
                Termination::Open => true,
                Termination::Dual => e == 0,
                Termination::Tailbiting => e == s,
            };
            ok.then_some(p)
        })
        .collect()
}

/// Ensemble-average `Ā_{w,h}` by enumerating every interleaver, patch
/// permutation and (for `regular == false`) every selection pattern.
pub fn exhaustive_ensemble(k: usize, nc: usize, regular: bool, mode: Termination) -> Vec<Vec<BigRational>> {
    let tr = Trellis::new(Generator::umts()).unwrap();
    let patch = Trellis::new(Generator::patch()).unwrap();
    let n = 2 * k;
    let patterns: Vec<Vec<bool>> = if regular {
        let period = if nc == 0 { n } else { n / (nc / 2) };
        vec![(0..n).map(|i| nc > 0 && i % period < 2).collect()]
    } else {
        (0u64..1 << n).filter(|x| x.count_ones() as usize == nc).map(|x| (0..n).map(|i| (x >> i) & 1 == 1).collect()).collect()
    };
    // patch output weight histogram over all patch permutations, per input
    let pc = permutations(nc);
    let memo: Vec<Vec<u64>> = (0u64..1 << nc)
        .map(|x| {
            let v = bits(x, nc);
            let mut hist = vec![0u64; nc + 1];
            for p in &pc {
                let mut y = vec![0u8; nc];
                for i in 0..nc {
                    y[p[i]] = v[i];
                }
                for par in paths(&patch, &y, mode) {
                    hist[weight(&par)] += 1;
                }
            }
            hist
        })
        .collect();
    let mut count = vec![vec![0u64; 3 * k + 1]; k + 1];
    let perms = permutations(k);
    for pi in &perms {
        for x in 0u64..1 << k {
            let u = bits(x, k);
            let mut ub = vec![0u8; k];
            for i in 0..k {
                ub[pi[i]] = u[i];
            }
            for xa in paths(&tr, &u, mode) {
                for xb in paths(&tr, &ub, mode) {
                    let tc: Vec<u8> = (0..n).map(|i| if i % 2 == 0 { xa[i / 2] } else { xb[i / 2] }).collect();
                    for p in &patterns {
                        let mut key = 0usize;
                        let mut j = 0;
                        let mut ch = 0;
                        for i in 0..n {
                            if p[i] {
                                key |= (tc[i] as usize) << j;
                                j += 1;
                            } else {
                                ch += tc[i] as usize;
                            }
                        }
                        let w = weight(&u);
                        for (hc, &c) in memo[key].iter().enumerate() {
                            count[w][w + ch + hc] += c;
                        }
                    }
                }
            }
        }
    }
    let den = BigInt::from(perms.len() as u64) * BigInt::from(patterns.len() as u64) * BigInt::from(pc.len() as u64);
    count.into_iter().map(|r| r.into_iter().map(|c| BigRational::new(BigInt::from(c), den.clone())).collect()).collect()
}

/// Word error rates `(ML, iterative)` of a K = 16, λ = 1/4 code with open
/// termination at 1 dB, over the same `frames` noise realizations.
pub fn ml_agreement(frames: u64) -> (f64, f64) {
    use rand::Rng;
    use rayon::prelude::*;
    use turbo3d::decode::{awgn_llr, ebn0_to_sigma, frame_rng, Decoder3d, DecoderConfig, LlrFrame, MlDecoder};
    use turbo3d::encoder::{Code3d, Code3dConfig, Interleaver};

    let code = Code3d::new(
        Code3dConfig::new(16, "1/4".parse().unwrap())
            .interleaver(Interleaver::Random { seed: 1 })
            .patch_interleaver(Interleaver::Random { seed: 101 })
            .termination(Termination::Open),
    )
    .unwrap();
    let layout = code.default_layout();
    let ml = MlDecoder::new(&code, &layout).unwrap();
    let dec = Decoder3d::new(&code, DecoderConfig::default());
    let sigma = ebn0_to_sigma(1.0, code.actual_rate(&layout));
    let (e_ml, e_it) = (0..frames)
        .into_par_iter()
        .map(|f| {
            let mut rng = frame_rng(16, 0, f);
            let info: Vec<u8> = (0..code.info_len()).map(|_| rng.random_range(0..2)).collect();
            let u = code.terminate(&info).unwrap();
            let llr = awgn_llr(&code.transmit(&code.encode(&u).unwrap(), &layout), sigma, &mut rng);
            let it = dec.decode(&LlrFrame::from_transmitted(&code, &layout, &llr).unwrap()).u;
            ((ml.decode(&llr) != &u[..]) as u64, (it != u) as u64)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    (e_ml as f64 / frames as f64, e_it as f64 / frames as f64)
}
