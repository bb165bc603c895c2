use proptest::prelude::*;
use turbo3d::asymptotic::conv_asym_iowe;
use turbo3d::decode::{siso_extrinsic, Algorithm, Decoder3d, DecoderConfig, LlrFrame};
use turbo3d::distance::{exhaustive_dmin, impulse_dmin, verify_report, CriticalTemplate, ImpulseConfig, QppPair};
use turbo3d::encoder::{Code3d, Code3dConfig, Interleaver, Lambda, PatternMode};
use turbo3d::ensemble::{ensemble_we, ensemble_we_exact, prob_lb_dmin, rational_ln, EnsembleSpec, LowerBound, Selection};
use turbo3d::qpp::Qpp;
use turbo3d::trellis::{Generator, Termination, Trellis};

fn xor(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

fn bits(n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, n)
}

fn generator() -> impl Strategy<Value = Generator> {
    prop_oneof![Just(Generator::umts()), Just(Generator::patch()), Just(Generator::identity()), Just(Generator::new(0o17, 0o13).unwrap())]
}

fn small_code(k: usize, lambda: &str, seed: u64, t: Termination) -> Code3d {
    Code3d::new(
        Code3dConfig::new(k, lambda.parse().unwrap())
            .interleaver(Interleaver::Random { seed })
            .patch_interleaver(Interleaver::Random { seed: seed ^ 0x55 })
            .pattern(PatternMode::Random { seed: seed + 7 })
            .termination(t),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parity_is_linear(g in generator(), u in bits(40), v in bits(40)) {
        let t = Trellis::new(g).unwrap();
        let (pu, _) = t.run(0, &u);
        let (pv, _) = t.run(0, &v);
        let (puv, _) = t.run(0, &xor(&u, &v));
        prop_assert_eq!(puv, xor(&pu, &pv));
    }

    #[test]
    fn tailbiting_closes(g in generator(), u in bits(30)) {
        let t = Trellis::new(g).unwrap();
        if let Ok(e) = t.encode(&u, Termination::Tailbiting) {
            prop_assert_eq!(e.start_state, e.end_state);
        }
    }

    #[test]
    fn dual_tail_reaches_zero(g in generator(), u in bits(25)) {
        let t = Trellis::new(g).unwrap();
        let e = t.encode(&u, Termination::Dual).unwrap();
        let mut full = u.clone();
        full.extend(&e.tail_input);
        prop_assert_eq!(t.end_state(0, &full), 0);
    }

    #[test]
    fn qpp_residues_mod_four(k in 1u64..40, f1 in 0u64..160, f2 in 1u64..160, x in 0u64..160, j in 0u64..40) {
        let m = 4 * k;
        let Ok(q) = Qpp::new(f1 % m, f2 % m, m) else { return Ok(()) };
        let (x1, x2) = (x % m, (x + 4 * j) % m);
        prop_assert_eq!(q.eval(x1) % 4, q.eval(x2) % 4);
    }

    #[test]
    fn quadratic_inverse_inverts(m in 2u64..300, f1 in 0u64..300, f2 in 0u64..300) {
        let Ok(q) = Qpp::new(f1 % m, f2 % m, m) else { return Ok(()) };
        if let Some(g) = q.quadratic_inverse() {
            for x in 0..m {
                prop_assert_eq!(g.eval(q.eval(x)), x);
            }
        }
    }

    #[test]
    fn code3d_is_linear(seed in 0u64..1000, a in bits(48), b in bits(48)) {
        let c = small_code(48, "1/4", seed, Termination::Dual);
        let n = c.info_len();
        let u = c.terminate(&a[..n]).unwrap();
        let v = c.terminate(&b[..n]).unwrap();
        let (cu, cv, cuv) = (c.encode(&u).unwrap(), c.encode(&v).unwrap(), c.encode(&xor(&u, &v)).unwrap());
        prop_assert_eq!(cuv.x_tc, xor(&cu.x_tc, &cv.x_tc));
        prop_assert_eq!(cuv.x_c, xor(&cu.x_c, &cv.x_c));
    }

    #[test]
    fn multiplexer_round_trip(seed in 0u64..1000, u in bits(32), lam in prop_oneof![Just("1/4"), Just("1/2"), Just("1"), Just("0")]) {
        let c = small_code(32, lam, seed, Termination::Open);
        let cw = c.encode(&u).unwrap();
        prop_assert_eq!(c.merge(&cw.x_p, &cw.x_ch), cw.x_tc.clone());
        prop_assert_eq!(cw.x_tc_weight(), cw.x_p_weight() + cw.x_ch_weight());
    }

    #[test]
    fn dual_rate_matches_formula(q in 4usize..40, lam in prop_oneof![Just((1u32, 4usize)), Just((1, 2)), Just((1, 1))]) {
        let k = 4 * q;
        let c = small_code(k, &format!("{}/{}", lam.0, lam.1), q as u64, Termination::Dual);
        let l = c.default_layout();
        prop_assert_eq!(l.len(), 3 * k);
        prop_assert!((c.actual_rate(&l) - c.info_len() as f64 / (3 * k) as f64).abs() < 1e-12);
        // at full patching the tail constraints can be linearly dependent
        if lam.0 as usize == lam.1 {
            prop_assert!((k - 8..=k - 6).contains(&c.info_len()));
        } else {
            prop_assert_eq!(c.info_len(), k - 8);
        }
    }

    #[test]
    fn asymptotic_iowe_concave(a1 in 0.05f64..0.6, b1 in 0.15f64..0.6, a2 in 0.05f64..0.6, b2 in 0.15f64..0.6) {
        let t = Trellis::new(Generator::umts()).unwrap();
        let (p, q) = (conv_asym_iowe(&t, a1, b1).value, conv_asym_iowe(&t, a2, b2).value);
        let m = conv_asym_iowe(&t, 0.5 * (a1 + a2), 0.5 * (b1 + b2)).value;
        prop_assert!(m >= 0.5 * (p + q) - 1e-4, "{} < {}", m, 0.5 * (p + q));
    }

    #[test]
    fn maxlog_scale_invariance(lu in prop::collection::vec(-8.0f32..8.0, 20), lp in prop::collection::vec(-8.0f32..8.0, 20), e in -3i32..4) {
        let t = Trellis::new(Generator::umts()).unwrap();
        let s = 2f32.powi(e);
        let base = siso_extrinsic(&t, Termination::Dual, &lu, &lp, Algorithm::MaxLog, 1.0);
        let su: Vec<f32> = lu.iter().map(|x| x * s).collect();
        let sp: Vec<f32> = lp.iter().map(|x| x * s).collect();
        let scaled = siso_extrinsic(&t, Termination::Dual, &su, &sp, Algorithm::MaxLog, 1.0);
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((a * s - b).abs() <= 1e-4 * (1.0 + b.abs()), "{} vs {}", a * s, b);
        }
    }

    #[test]
    fn noiseless_frames_decode(seed in 0u64..200, info in bits(64)) {
        let c = small_code(64, "1/4", seed, Termination::Dual);
        let l = c.default_layout();
        let u = c.terminate(&info[..c.info_len()]).unwrap();
        let tx = c.transmit(&c.encode(&u).unwrap(), &l);
        let llr: Vec<f32> = tx.iter().map(|&b| if b == 0 { 30.0 } else { -30.0 }).collect();
        let d = Decoder3d::new(&c, DecoderConfig::default()).decode(&LlrFrame::from_transmitted(&c, &l, &llr).unwrap());
        prop_assert_eq!(d.u, u);
        prop_assert_eq!(d.iterations, 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Whenever 16 f2 = 0 (mod K), 27 does not divide K and 4 g2 = 0, every
    /// weight-64 template congruence holds at every x = 1 (mod 4).
    #[test]
    fn fig10_congruences_close(k in prop_oneof![Just(64u64), Just(128), Just(192), Just(320), Just(448), Just(512), Just(640)], f1 in 1u64..640, c in 1u64..16) {
        let f2 = (c * k / 16) % k;
        let Ok(f) = Qpp::new(f1 % k, f2, k) else { return Ok(()) };
        let Ok(q) = QppPair::new(f) else { return Ok(()) };
        prop_assume!((4 * q.g.f2) % k == 0 && k % 27 != 0);
        let t = CriticalTemplate::FIG10;
        for x in (1..k as i64).step_by(4) {
            prop_assert_eq!(t.first_failing(&q, x), None, "x = {}", x);
        }
    }

    #[test]
    fn bound_monotone_in_eps(k in 8usize..40, e1 in 0.01f64..2.0, e2 in 0.01f64..2.0) {
        let spec = EnsembleSpec::new(4 * k, "1/4".parse().unwrap(), Selection::Regular);
        let we = ensemble_we(&spec, 40).unwrap();
        let d = |e: f64| match prob_lb_dmin(&we.ln_ah, e) { LowerBound::Certified(d) | LowerBound::AtLeast(d) => d };
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(d(lo) <= d(hi));
    }
}

#[test]
fn truncation_never_lowers_bound() {
    for k in [64usize, 128, 256] {
        let spec = EnsembleSpec::new(k, "1/4".parse().unwrap(), Selection::Regular);
        let mut prev = 0;
        for h in [8usize, 16, 24, 32, 48] {
            let we = ensemble_we(&spec, h).unwrap();
            let d = match prob_lb_dmin(&we.ln_ah, 0.5) {
                LowerBound::Certified(d) | LowerBound::AtLeast(d) => d,
            };
            assert!(d >= prev, "K={k} h_max={h}: {d} < {prev}");
            prev = d;
        }
    }
}

#[test]
fn exact_and_log_ensembles_agree() {
    for (k, lam) in [(8usize, "1/4"), (6, "1/2"), (4, "1")] {
        for sel in [Selection::Regular, Selection::Random] {
            let spec = EnsembleSpec::new(k, lam.parse::<Lambda>().unwrap(), sel).termination(Termination::Dual);
            let exact = ensemble_we_exact(&spec).unwrap();
            let float = ensemble_we(&spec, 3 * k).unwrap();
            for w in 0..=k {
                for h in 0..=3 * k {
                    let (e, f) = (rational_ln(&exact[w][h]), float.ln_awh[w][h]);
                    if e.is_finite() || f.is_finite() {
                        assert!((e.exp() - f.exp()).abs() <= 1e-9 * e.exp().max(1e-300), "K={k} λ={lam} w={w} h={h}: {e} vs {f}");
                    }
                    if h < w {
                        assert!(!e.is_finite(), "systematic code has weight below input weight");
                    }
                }
            }
        }
    }
}

#[test]
fn impulse_never_undercuts_exhaustive() {
    let mut agree = 0;
    let n = 100;
    for seed in 0..n {
        let c = small_code(16, "1/4", 1000 + seed, Termination::Dual);
        let l = c.default_layout();
        let ex = exhaustive_dmin(&c, &l).unwrap();
        let Ok(im) = impulse_dmin(&c, &l, &ImpulseConfig::standard(), None) else { continue };
        assert!(verify_report(&c, &l, &im), "seed {seed}: unverified witness");
        assert!(im.estimate >= ex.estimate, "seed {seed}: {} < {}", im.estimate, ex.estimate);
        agree += (im.estimate == ex.estimate) as usize;
    }
    assert!(agree >= 95, "impulse matched exhaustive on {agree}/{n}");
}
