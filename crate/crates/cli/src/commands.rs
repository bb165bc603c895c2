use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use turbo3d::asymptotic::{ml_threshold, rho0, ShapeProblem, SpectralShape};
use turbo3d::decode::{run_fer, Algorithm, DecoderConfig, FerConfig, FerRecord};
use turbo3d::distance::{
    build_critical_codeword, exhaustive_dmin, find_critical_codeword, impulse_dmin, lemma2_margin, search_puncture_patterns,
    theorem1_cap, theorem2_applies, theorem3_check, umts_trellis, verify_report, ConvergenceFilter, CriticalTemplate, ImpulseConfig,
    PunctureBudget,
};
use turbo3d::encoder::{mask_from_string, Code3d, Code3dConfig, Interleaver, Lambda, Layout, PatternMode, Rate, RatePattern};
use turbo3d::ensemble::{constituent_iowe, ensemble_we, lower_bound, EnsembleSpec, Selection};
use turbo3d::exit::{exit_threshold, uniform_grid, ExitConfig, ExitSetup, ExitSide};
use turbo3d::qpp::{count_qpps, quasi_cyclic_period, Qpp};
use turbo3d::trellis::{Generator, Termination, Trellis};

use crate::Output;

#[derive(Subcommand, Serialize, Deserialize, Debug, Clone)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Cmd {
    /// Check, count or invert quadratic permutation polynomials.
    Qpp(QppArgs),
    /// Constituent or ensemble-average weight enumerators.
    Enumerate(EnumerateArgs),
    /// Probabilistic lower bound on the minimum distance of an ensemble.
    BoundDmin(BoundArgs),
    /// Asymptotic spectral shape and its growth-rate coefficient.
    SpectralShape(ShapeArgs),
    /// Upper bound on the ML decoding threshold from the spectral shape.
    MlThreshold(MlArgs),
    /// Minimum distance estimate backed by a verified codeword.
    EstimateDmin(DminArgs),
    /// Distance caps that apply to a length and QPP interleaver.
    CheckBounds(CheckArgs),
    /// Build and verify a low-weight codeword from a path template.
    CriticalCodeword(CritArgs),
    /// Iterative decoding threshold from EXIT curves.
    ExitThreshold(ExitArgs),
    /// Monte Carlo frame error rate over AWGN.
    Simulate(SimArgs),
    /// Rank periodic puncturing patterns by estimated minimum distance.
    SearchPuncture(PunctureArgs),
}

impl Cmd {
    pub fn name(&self) -> &'static str {
        match self {
            Cmd::Qpp(_) => "qpp",
            Cmd::Enumerate(_) => "enumerate",
            Cmd::BoundDmin(_) => "bound-dmin",
            Cmd::SpectralShape(_) => "spectral-shape",
            Cmd::MlThreshold(_) => "ml-threshold",
            Cmd::EstimateDmin(_) => "estimate-dmin",
            Cmd::CheckBounds(_) => "check-bounds",
            Cmd::CriticalCodeword(_) => "critical-codeword",
            Cmd::ExitThreshold(_) => "exit-threshold",
            Cmd::Simulate(_) => "simulate",
            Cmd::SearchPuncture(_) => "search-puncture",
        }
    }
}

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum PatternArg {
    Regular,
    Random,
}

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum AlgArg {
    MaxLog,
    LogMap,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Self {
        match a {
            AlgArg::MaxLog => Algorithm::MaxLog,
            AlgArg::LogMap => Algorithm::LogMap,
        }
    }
}

const ONE_THIRD: Rate = Rate { num: 1, den: 3 };

fn punctured(rate: Rate) -> Option<Rate> {
    (rate != ONE_THIRD).then_some(rate)
}

/// A concrete 3D turbo code.
#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct CodeArgs {
    /// Information block length.
    #[arg(long = "K", default_value_t = 1024)]
    pub k: usize,
    #[arg(long, default_value = "1/4")]
    pub lambda: Lambda,
    /// Turbo interleaver QPP as "f1,f2" (random permutation when absent).
    #[arg(long)]
    pub f: Option<String>,
    /// Patch interleaver QPP as "f1,f2" over 2λK (random when absent).
    #[arg(long)]
    pub ftilde: Option<String>,
    /// Seed for random interleavers and patterns.
    #[arg(long, default_value_t = 1)]
    pub interleaver_seed: u64,
    #[arg(long, default_value = "dual")]
    pub termination: Termination,
    #[arg(long, value_enum, default_value = "regular")]
    pub pattern: PatternArg,
    /// Puncture to this rate with the first admissible periodic pattern.
    #[arg(long)]
    pub rate: Option<Rate>,
    /// Explicit keep masks "a|b|c" for upper, lower and patch streams.
    #[arg(long)]
    pub puncture: Option<String>,
}

fn parse_pair(s: &str, m: u64) -> Result<Qpp> {
    let (a, b) = s.split_once(',').ok_or_else(|| anyhow!("expected 'f1,f2', got '{s}'"))?;
    let n = |t: &str| t.trim().parse::<u64>().with_context(|| format!("'{t}' is not an integer"));
    Ok(Qpp::new(n(a)?, n(b)?, m)?)
}

impl CodeArgs {
    fn config(&self) -> Result<Code3dConfig> {
        let (k, lambda) = (self.k, self.lambda);
        let nc = lambda.patch_len(k).ok_or_else(|| anyhow!("2 λ K must be an integer (K = {k}, λ = {lambda})"))?;
        let il = match &self.f {
            Some(s) => {
                let q = parse_pair(s, k as u64)?;
                Interleaver::Qpp { f1: q.f1, f2: q.f2 }
            }
            None => Interleaver::Random { seed: self.interleaver_seed },
        };
        let pil = match &self.ftilde {
            Some(s) if nc > 0 => {
                let q = parse_pair(s, nc as u64)?;
                Interleaver::Qpp { f1: q.f1, f2: q.f2 }
            }
            _ => Interleaver::Random { seed: self.interleaver_seed + 1 },
        };
        let pattern = match self.pattern {
            PatternArg::Regular => PatternMode::Regular,
            PatternArg::Random => PatternMode::Random { seed: self.interleaver_seed + 2 },
        };
        let rp = match (&self.puncture, self.rate) {
            (Some(p), _) => {
                let m: Vec<&str> = p.split('|').collect();
                let [a, b, c] = m[..] else { bail!("--puncture needs three masks 'a|b|c'") };
                RatePattern { keep_a: mask_from_string(a)?, keep_b: mask_from_string(b)?, keep_c: mask_from_string(c)? }
            }
            (None, Some(r)) => RatePattern::for_rate(lambda, r)?,
            (None, None) => RatePattern::full(),
        };
        Ok(Code3dConfig::new(k, lambda).interleaver(il).patch_interleaver(pil).pattern(pattern).termination(self.termination).puncturing(rp))
    }

    fn build(&self) -> Result<(Code3d, Layout)> {
        let code = Code3d::new(self.config()?)?;
        let layout = code.default_layout();
        Ok((code, layout))
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct QppArgs {
    /// Polynomial "f1,f2 mod M" to test.
    #[arg(long, num_args = 1..)]
    #[serde(default)]
    pub check: Vec<String>,
    /// Count QPPs (f2 != 0) over Z_M.
    #[arg(long)]
    pub count: Option<u64>,
}

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum EnumTarget {
    Constituent,
    Ensemble,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct EnumerateArgs {
    #[arg(long = "K", default_value_t = 16)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "constituent")]
    pub target: EnumTarget,
    /// Constituent generator in octal "feedforward/feedback".
    #[arg(long, default_value = "13/15")]
    pub generator: String,
    #[arg(long, default_value = "dual")]
    pub termination: Termination,
    /// Input-weight truncation (constituent only).
    #[arg(long)]
    pub w_max: Option<usize>,
    /// Output-weight truncation.
    #[arg(long, default_value_t = 64)]
    pub h_max: usize,
    #[arg(long, default_value = "1/4")]
    pub lambda: Lambda,
    #[arg(long, value_enum, default_value = "regular")]
    pub selection: PatternArg,
    #[arg(long, default_value = "1/3")]
    pub rate: Rate,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct BoundArgs {
    #[arg(long = "K")]
    pub k: usize,
    #[arg(long, default_value = "1/4")]
    pub lambda: Lambda,
    #[arg(long, default_value = "1/3")]
    pub rate: Rate,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, value_enum, default_value = "regular")]
    pub selection: PatternArg,
    #[arg(long, default_value = "dual")]
    pub termination: Termination,
    #[arg(long, default_value_t = 32)]
    pub h_start: usize,
    #[arg(long, default_value_t = 1024)]
    pub h_limit: usize,
}

fn ensemble_spec(k: usize, lambda: Lambda, sel: PatternArg, t: Termination, rate: Rate) -> EnsembleSpec {
    let sel = match sel {
        PatternArg::Regular => Selection::Regular,
        PatternArg::Random => Selection::Random,
    };
    let mut s = EnsembleSpec::new(k, lambda, sel).termination(t);
    s.rate = punctured(rate);
    s
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct ShapeArgs {
    #[arg(long, default_value = "1/2")]
    pub lambda: Lambda,
    #[arg(long, default_value = "1/3")]
    pub rate: Rate,
    /// Grid spacing in normalized weight.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Also locate the growth-rate coefficient.
    #[arg(long)]
    #[serde(default)]
    pub rho0: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0.25)]
    pub rho_start: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub rho_min: f64,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct MlArgs {
    #[arg(long, default_value = "1")]
    pub lambda: Lambda,
    #[arg(long, default_value = "1/3")]
    pub rate: Rate,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
}

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum DminMethod {
    Exhaustive,
    Impulse,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct ImpulseArgs {
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    #[arg(long, default_value_t = 3)]
    pub max_impulses: usize,
    /// Impulse LLR over the noiseless channel LLR.
    #[arg(long, default_value_t = 200.0)]
    pub magnitude: f32,
    /// Only anchors below this position (all by default).
    #[arg(long)]
    pub anchor_limit: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

impl ImpulseArgs {
    fn config(&self) -> ImpulseConfig {
        ImpulseConfig {
            window: self.window,
            max_impulses: self.max_impulses,
            magnitude: self.magnitude,
            stride: self.stride,
            anchor_limit: self.anchor_limit,
            ..ImpulseConfig::standard()
        }
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct DminArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub code: CodeArgs,
    #[arg(long, value_enum, default_value = "impulse")]
    pub method: DminMethod,
    #[command(flatten)]
    #[serde(flatten)]
    pub impulse: ImpulseArgs,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct CheckArgs {
    #[arg(long = "K")]
    pub k: u64,
    #[arg(long, default_value = "1/4")]
    pub lambda: Lambda,
    /// Turbo interleaver QPP "f1,f2".
    #[arg(long)]
    pub f: Option<String>,
    /// Patch interleaver QPP "f1,f2".
    #[arg(long)]
    pub ftilde: Option<String>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct CritArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub code: CodeArgs,
    /// Template (10, 11 or 12); chosen from f1 + f2 mod 4 when absent.
    #[arg(long)]
    pub figure: Option<u8>,
    /// Anchor position; the lightest valid one is searched when absent.
    #[arg(long)]
    pub x: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct ExitArgs {
    #[arg(long, default_value = "1/2")]
    pub lambda: Lambda,
    #[arg(long, default_value = "1/3")]
    pub rate: Rate,
    #[arg(long, default_value_t = 100_000)]
    pub block: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.04)]
    pub tol: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 4.0)]
    pub hi: f64,
    #[arg(long, value_enum, default_value = "log-map")]
    pub algorithm: AlgArg,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f32,
    /// Write both curves at this E_b/N_0 instead of searching.
    #[arg(long, allow_hyphen_values = true)]
    pub curves_at: Option<f64>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct SimArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub code: CodeArgs,
    /// E_b/N_0 points in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1.0")]
    pub snr: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub max_frames: u64,
    #[arg(long, default_value_t = 100)]
    pub max_errors: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub batch: u64,
    #[arg(long, default_value_t = 16)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0.75)]
    pub scale: f32,
    #[arg(long, value_enum, default_value = "max-log")]
    pub algorithm: AlgArg,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct PunctureArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub code: CodeArgs,
    /// Target rate: 1/2, 2/3 or 4/5.
    #[arg(long)]
    pub target: Rate,
    #[command(flatten)]
    #[serde(flatten)]
    pub impulse: ImpulseArgs,
    /// Window of the stronger refinement pass.
    #[arg(long, default_value_t = 60)]
    pub strong_window: usize,
    #[arg(long, default_value_t = 5)]
    pub refine_top: usize,
    /// Screen candidates by FER at this E_b/N_0 first.
    #[arg(long, allow_hyphen_values = true)]
    pub filter_snr: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub filter_frames: u64,
    #[arg(long, default_value_t = 0.02)]
    pub filter_max_fer: f64,
    #[arg(long, default_value_t = 3)]
    pub seed: u64,
}

pub fn dispatch(cmd: &Cmd, out: &Output) -> Result<String> {
    match cmd {
        Cmd::Qpp(a) => qpp(cmd, a, out),
        Cmd::Enumerate(a) => enumerate(cmd, a, out),
        Cmd::BoundDmin(a) => bound_dmin(cmd, a, out),
        Cmd::SpectralShape(a) => spectral_shape(cmd, a, out),
        Cmd::MlThreshold(a) => ml(cmd, a, out),
        Cmd::EstimateDmin(a) => estimate_dmin(cmd, a, out),
        Cmd::CheckBounds(a) => check_bounds(cmd, a, out),
        Cmd::CriticalCodeword(a) => critical(cmd, a, out),
        Cmd::ExitThreshold(a) => exit(cmd, a, out),
        Cmd::Simulate(a) => simulate(cmd, a, out),
        Cmd::SearchPuncture(a) => search_puncture(cmd, a, out),
    }
}

fn qpp(cmd: &Cmd, a: &QppArgs, out: &Output) -> Result<String> {
    let mut lines = Vec::new();
    let mut result = serde_json::Map::new();
    if !a.check.is_empty() {
        let text = a.check.join(" ");
        match Qpp::parse(&text) {
            Ok(q) => {
                let inv = q.quadratic_inverse();
                result.insert("qpp".into(), json!(q));
                result.insert("valid".into(), json!(true));
                result.insert("quadratic_inverse".into(), json!(inv));
                lines.push("valid QPP".to_string());
            }
            Err(turbo3d::Error::NotPermutation { .. }) => {
                result.insert("valid".into(), json!(false));
                lines.push("not a QPP".to_string());
            }
            Err(e) => return Err(e.into()),
        }
    }
    if let Some(m) = a.count {
        let n = count_qpps(m);
        result.insert("count".into(), json!({ "modulus": m, "qpps": n }));
        lines.push(format!("{n} QPPs modulo {m}"));
    }
    if lines.is_empty() {
        bail!("qpp needs --check or --count");
    }
    out.json(cmd, result)?;
    Ok(lines.join("; "))
}

fn enumerate(cmd: &Cmd, a: &EnumerateArgs, out: &Output) -> Result<String> {
    match a.target {
        EnumTarget::Constituent => {
            let tr = Trellis::new(Generator::parse(&a.generator)?)?;
            let t = constituent_iowe(&tr, a.k, a.termination, a.w_max.unwrap_or(a.k), a.h_max)?;
            let p = out.csv(&t.to_csv())?;
            out.json(cmd, json!({ "k": t.k, "w_max": t.w_max, "h_max": t.h_max, "truncated": t.truncated, "csv": p }))?;
            Ok(format!("constituent IOWE written to {}", p.display()))
        }
        EnumTarget::Ensemble => {
            let spec = ensemble_spec(a.k, a.lambda, a.selection, a.termination, a.rate);
            let we = ensemble_we(&spec, a.h_max)?;
            let mut csv = String::from("h,ln_A,A\n");
            for (h, v) in we.ln_ah.iter().enumerate() {
                csv.push_str(&format!("{h},{v},{:e}\n", v.exp()));
            }
            let p = out.csv(&csv)?;
            out.json(cmd, json!({ "spec": spec, "h_max": we.h_max, "exact_truncation": we.exact_truncation, "ln_ah": we.ln_ah }))?;
            Ok(format!("ensemble weight enumerator written to {}", p.display()))
        }
    }
}

fn bound_dmin(cmd: &Cmd, a: &BoundArgs, out: &Output) -> Result<String> {
    let spec = ensemble_spec(a.k, a.lambda, a.selection, a.termination, a.rate);
    let r = lower_bound(&spec, a.eps, a.h_start, a.h_limit)?;
    let summary = if r.certified { r.d.to_string() } else { format!(">= {}", r.d) };
    out.json(cmd, &r)?;
    Ok(summary)
}

fn shape_problem(lambda: Lambda, rate: Rate) -> Result<ShapeProblem> {
    Ok(ShapeProblem::new(&umts_trellis(), lambda, punctured(rate))?)
}

fn spectral_shape(cmd: &Cmd, a: &ShapeArgs, out: &Output) -> Result<String> {
    if !(a.step > 0.0 && a.step < 1.0) {
        bail!("--step must lie in (0, 1)");
    }
    let p = shape_problem(a.lambda, a.rate)?;
    let grid: Vec<f64> = (1..).map(|i| i as f64 * a.step).take_while(|&r| r < 1.0).collect();
    let shape = SpectralShape::compute(&p, &grid);
    let path = out.csv(&shape.to_csv())?;
    let r0 = a.rho0.then(|| rho0(&p, a.tol, a.rho_start, a.rho_min));
    out.json(cmd, json!({ "shape": shape, "rho0": r0 }))?;
    Ok(match r0 {
        Some(r) if r.found => format!("rho0 = {:.4} ({} samples in {})", r.rho0, grid.len(), path.display()),
        Some(_) => format!("rho0 not found ({} samples in {})", grid.len(), path.display()),
        None => format!("{} samples written to {}", grid.len(), path.display()),
    })
}

fn ml(cmd: &Cmd, a: &MlArgs, out: &Output) -> Result<String> {
    let t = ml_threshold(&shape_problem(a.lambda, a.rate)?, a.step);
    out.json(cmd, t)?;
    Ok(if t.degenerate { "bound degenerate (no positive spectral shape)".into() } else { format!("{:.3} dB", t.db) })
}

fn estimate_dmin(cmd: &Cmd, a: &DminArgs, out: &Output) -> Result<String> {
    let (code, layout) = a.code.build()?;
    let r = match a.method {
        DminMethod::Exhaustive => exhaustive_dmin(&code, &layout)?,
        DminMethod::Impulse => impulse_dmin(&code, &layout, &a.impulse.config(), None)?,
    };
    let verified = verify_report(&code, &layout, &r);
    out.json(cmd, json!({ "report": r, "reverified": verified }))?;
    Ok(format!("d = {} ({:?}, verified {verified}, {} trials)", r.estimate, r.method, r.trials).to_lowercase())
}

fn check_bounds(cmd: &Cmd, a: &CheckArgs, out: &Output) -> Result<String> {
    let t2 = theorem2_applies(a.k, a.lambda);
    let mut result = json!({
        "cap_memory_3": theorem1_cap(3),
        "cap_67": t2,
        "lemma_margin": {
            "fig10": lemma2_margin(&CriticalTemplate::FIG10, a.k as usize),
            "fig11": lemma2_margin(&CriticalTemplate::FIG11, a.k as usize),
        },
    });
    let mut parts = vec![format!("K = {}: cap {} for memory 3", a.k, theorem1_cap(3))];
    parts.push(if t2.applies { "cap 67 applies".into() } else { "cap 67 does not apply".into() });
    if let Some(f) = &a.f {
        let q = parse_pair(f, a.k)?;
        let g = q.quadratic_inverse();
        let cap = theorem3_check(&q).or_else(|| g.as_ref().and_then(theorem3_check));
        result["qpp"] = json!(q);
        result["inverse"] = json!(g);
        result["cap_27_54"] = json!(cap);
        parts.push(match cap {
            Some(c) => format!("cap {c} from 2f2/4f2"),
            None => "no 27/54 cap".into(),
        });
        if let (Some(ft), Some(inv)) = (&a.ftilde, a.lambda.period().map(|p| p as u64 / 2)) {
            let nc = a.lambda.patch_len(a.k as usize).ok_or_else(|| anyhow!("2 λ K must be an integer"))? as u64;
            let qt = parse_pair(ft, nc)?;
            let p = quasi_cyclic_period(&q, &qt, inv)?;
            result["quasi_cyclic_period"] = json!(p);
            parts.push(format!("quasi-cyclic period {}", p.period));
        }
    }
    out.json(cmd, result)?;
    Ok(parts.join("; "))
}

fn critical(cmd: &Cmd, a: &CritArgs, out: &Output) -> Result<String> {
    let (code, _) = a.code.build()?;
    let f = code.cfg.interleaver.qpp(code.k()).ok_or_else(|| anyhow!("critical codewords need a QPP turbo interleaver (--f)"))?;
    let template = match a.figure {
        Some(n) => CriticalTemplate::by_figure(n).ok_or_else(|| anyhow!("no template for figure {n}"))?,
        None => CriticalTemplate::for_residue(&f),
    };
    let c = match a.x {
        Some(x) => build_critical_codeword(&template, &code, x)?,
        None => find_critical_codeword(&template, &code)?,
    };
    out.json(cmd, &c)?;
    Ok(format!("figure {} x = {}: weight {} (cap {}), verified", c.figure, c.x, c.weight, c.cap))
}

fn exit(cmd: &Cmd, a: &ExitArgs, out: &Output) -> Result<String> {
    let cfg = ExitConfig { block: a.block, seed: a.seed, algorithm: a.algorithm.into(), scale: a.scale, ..ExitConfig::default() };
    let setup = ExitSetup::new(a.lambda, a.rate, cfg)?;
    if let Some(snr) = a.curves_at {
        let grid = uniform_grid(20);
        let inner = setup.curve(ExitSide::Inner, snr, &grid)?;
        let outer = setup.curve(ExitSide::Outer, snr, &grid)?;
        let mut csv = String::from("I_A,I_E_inner,I_E_outer\n");
        for (i, o) in inner.points.iter().zip(&outer.points) {
            csv.push_str(&format!("{:.6},{:.6},{:.6}\n", i.i_a, i.i_e, o.i_e));
        }
        let p = out.csv(&csv)?;
        out.json(cmd, json!({ "inner": inner, "outer": outer }))?;
        return Ok(format!("EXIT curves at {snr} dB written to {}", p.display()));
    }
    let t = exit_threshold(&setup, a.lo, a.hi, a.tol)?;
    out.json(cmd, t)?;
    Ok(format!("{:.2} dB", t.ebn0_db))
}

fn simulate(cmd: &Cmd, a: &SimArgs, out: &Output) -> Result<String> {
    let (code, layout) = a.code.build()?;
    let fc = FerConfig {
        snr_db: a.snr.clone(),
        max_frames: a.max_frames,
        max_errors: a.max_errors,
        seed: a.seed,
        batch: a.batch,
        decoder: DecoderConfig { max_iter: a.max_iter, scale: a.scale, algorithm: a.algorithm.into(), early_stop: true },
    };
    let recs = run_fer(&code, &layout, &fc)?;
    let mut csv = format!("{}\n", FerRecord::CSV_HEADER);
    for r in &recs {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let p = out.csv(&csv)?;
    out.json(cmd, &recs)?;
    let pts: Vec<String> = recs.iter().map(|r| format!("{} dB: {:.2e}", r.snr_db, r.fer())).collect();
    Ok(format!("FER {} ({})", pts.join(", "), p.display()))
}

fn search_puncture(cmd: &Cmd, a: &PunctureArgs, out: &Output) -> Result<String> {
    let mut code_args = a.code.clone();
    code_args.rate = None;
    code_args.puncture = None;
    let (code, _) = code_args.build()?;
    let impulse = a.impulse.config();
    let budget = PunctureBudget {
        impulse,
        strong: ImpulseConfig { window: a.strong_window, ..impulse },
        refine_top: a.refine_top,
        filter: a.filter_snr.map(|s| ConvergenceFilter { ebn0_db: s, frames: a.filter_frames, max_fer: a.filter_max_fer, seed: a.seed }),
    };
    let s = search_puncture_patterns(&code, a.target, &budget)?;
    let p = out.csv(&s.to_csv())?;
    out.json(cmd, &s)?;
    let best = s.ranked.first().and_then(|b| b.bound).map_or("none".to_string(), |b| b.to_string());
    Ok(format!(
        "{} candidates, {} non-converging, best bound {best} ({})",
        s.candidates,
        s.non_converging,
        p.display()
    ))
}
