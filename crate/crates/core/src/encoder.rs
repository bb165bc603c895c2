//! The 3-dimensional turbo encoder.
//!
//! Two rate-1 constituents `C_a` and `C_b` encode `u` and `Π(u)`. Their
//! parity streams are alternated into `x^TC` (upper bit first), and a
//! periodic pattern `p` selects a fraction `λ` of `x^TC` for the patch. The
//! selected bits `x^p` are permuted by `Π_c` and encoded by the rate-1 patch
//! encoder `C_c`; the rest, `x^ch`, go to the channel directly.
//!
//! Permutations use the target-index convention: `interleaved[f(i)] =
//! input[i]`.
//!
//! With [`Termination::Dual`] the code is the set of inputs that drive every
//! dually terminated constituent from and to the zero state within the block.
//! [`Code3d::terminate`] maps free information bits onto such an input by
//! solving for a few termination positions.
//!
//! ```
//! use turbo3d::encoder::{Code3d, Code3dConfig, Interleaver};
//! use turbo3d::trellis::Termination;
//! let cfg = Code3dConfig::new(64, "1/4".parse().unwrap())
//!     .interleaver(Interleaver::Qpp { f1: 7, f2: 16 })
//!     .patch_interleaver(Interleaver::Qpp { f1: 3, f2: 8 })
//!     .termination(Termination::Dual);
//! let code = Code3d::new(cfg).unwrap();
//! assert_eq!(code.info_len(), 64 - 3 - 3 - 2);
//! let u = code.terminate(&vec![1; code.info_len()]).unwrap();
//! let cw = code.encode(&u).unwrap();
//! assert_eq!(cw.x_tc_weight(), cw.x_p_weight() + cw.x_ch_weight());
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qpp::{gcd, Qpp};
use crate::trellis::{check_bits, weight, Generator, Termination, Trellis};

/// Permeability rate, a fraction `num/den` with `num | 2 den` (or zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Lambda {
    num: u32,
    den: u32,
}

impl Lambda {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 || num > den {
            return Err(Error::InvalidConfig(format!("permeability {num}/{den} outside [0, 1]")));
        }
        if num == 0 {
            return Ok(Lambda { num: 0, den: 1 });
        }
        let g = gcd(num as u64, den as u64) as u32;
        let (num, den) = (num / g, den / g);
        if (2 * den) % num != 0 {
            return Err(Error::InvalidConfig(format!(
                "permeability {num}/{den} does not give an integer pattern period"
            )));
        }
        Ok(Lambda { num, den })
    }

    pub fn zero() -> Self {
        Lambda { num: 0, den: 1 }
    }

    pub fn one() -> Self {
        Lambda { num: 1, den: 1 }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// Period `N_p = 2/λ` of the regular pattern `[1100..0]`.
    pub fn period(&self) -> Option<usize> {
        (self.num != 0).then(|| (2 * self.den / self.num) as usize)
    }

    /// Patch length `N_c = 2λK`.
    pub fn patch_len(&self, k: usize) -> Option<usize> {
        let t = 2 * self.num as usize * k;
        (t % self.den as usize == 0).then(|| t / self.den as usize)
    }
}

impl std::str::FromStr for Lambda {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (a, b) = s.split_once('/').unwrap_or((s, "1"));
        let p = |t: &str| t.trim().parse::<u32>().map_err(|e| Error::Parse(format!("'{t}': {e}")));
        Lambda::new(p(a)?, p(b)?)
    }
}

impl std::fmt::Display for Lambda {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl From<Lambda> for String {
    fn from(l: Lambda) -> String {
        l.to_string()
    }
}

impl TryFrom<String> for Lambda {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// How a permutation is specified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Interleaver {
    Identity,
    Qpp { f1: u64, f2: u64 },
    Random { seed: u64 },
    /// Explicit target indices.
    Table { perm: Vec<usize> },
}

impl Interleaver {
    pub fn build(&self, len: usize) -> Result<Vec<usize>> {
        match self {
            Interleaver::Identity => Ok((0..len).collect()),
            Interleaver::Qpp { f1, f2 } => {
                if len == 0 {
                    return Ok(vec![]);
                }
                Ok(Qpp::new(*f1, *f2, len as u64)?.permutation())
            }
            Interleaver::Random { seed } => Ok(random_permutation(len, *seed)),
            Interleaver::Table { perm } => {
                if perm.len() != len || !is_permutation(perm) {
                    return Err(Error::InvalidConfig(format!("table is not a permutation of length {len}")));
                }
                Ok(perm.clone())
            }
        }
    }

    pub fn qpp(&self, len: usize) -> Option<Qpp> {
        match self {
            Interleaver::Qpp { f1, f2 } => Qpp::new(*f1, *f2, len as u64).ok(),
            Interleaver::Identity => Some(Qpp::identity(len as u64)),
            _ => None,
        }
    }
}

pub fn random_permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<usize> = (0..len).collect();
    p.shuffle(&mut rng);
    p
}

pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
}

/// `out[perm[i]] = x[i]`.
pub fn permute<T: Copy + Default>(x: &[T], perm: &[usize]) -> Vec<T> {
    let mut out = vec![T::default(); x.len()];
    for (i, &t) in perm.iter().enumerate() {
        out[t] = x[i];
    }
    out
}

/// `out[i] = x[perm[i]]`, the inverse of [`permute`].
pub fn unpermute<T: Copy>(x: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&t| x[t]).collect()
}

/// Patch selection pattern mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PatternMode {
    /// `[1100..0]` of period `2/λ`.
    Regular,
    /// Two randomly placed ones in every period.
    Random { seed: u64 },
}

/// Builds the patch selection mask over `x^TC` (length `2K`).
pub fn patch_mask(k: usize, lambda: Lambda, mode: PatternMode) -> Result<Vec<bool>> {
    let n = 2 * k;
    let Some(np) = lambda.period() else {
        return Ok(vec![false; n]);
    };
    if n % np != 0 {
        return Err(Error::InvalidConfig(format!("pattern period {np} does not divide 2K = {n}")));
    }
    let mut mask = vec![false; n];
    match mode {
        PatternMode::Regular => {
            for (i, m) in mask.iter_mut().enumerate() {
                *m = i % np < 2;
            }
        }
        PatternMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx: Vec<usize> = (0..np).collect();
            for start in (0..n).step_by(np) {
                idx.shuffle(&mut rng);
                mask[start + idx[0]] = true;
                mask[start + idx[1]] = true;
            }
        }
    }
    Ok(mask)
}

/// Periodic keep masks applied after encoding. `true` keeps a bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RatePattern {
    /// Applied to the upper parity bits that go to the channel directly.
    #[serde(with = "mask_str")]
    pub keep_a: Vec<bool>,
    /// Applied to the lower parity bits that go to the channel directly.
    #[serde(with = "mask_str")]
    pub keep_b: Vec<bool>,
    /// Applied to the patch output.
    #[serde(with = "mask_str")]
    pub keep_c: Vec<bool>,
}

mod mask_str {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &[bool], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::mask_to_string(m))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let s = String::deserialize(d)?;
        super::mask_from_string(&s).map_err(serde::de::Error::custom)
    }
}

pub fn mask_to_string(m: &[bool]) -> String {
    m.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn mask_from_string(s: &str) -> Result<Vec<bool>> {
    let m: Vec<bool> = s
        .trim()
        .chars()
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            _ => Err(Error::Parse(format!("bad mask character '{c}'"))),
        })
        .collect::<Result<_>>()?;
    if m.is_empty() {
        return Err(Error::Parse("empty mask".into()));
    }
    Ok(m)
}

impl Default for RatePattern {
    fn default() -> Self {
        RatePattern::full()
    }
}

/// Exact target rate as a fraction. Serialized as `"n/d"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Rate {
    pub num: u32,
    pub den: u32,
}

impl Rate {
    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl From<Rate> for String {
    fn from(r: Rate) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Rate {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for Rate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once('/').ok_or_else(|| Error::Parse(format!("expected 'n/d', got '{s}'")))?;
        let p = |t: &str| t.trim().parse::<u32>().map_err(|e| Error::Parse(format!("'{t}': {e}")));
        let (num, den) = (p(a)?, p(b)?);
        if num == 0 || den == 0 {
            return Err(Error::Parse(format!("invalid rate {s}")));
        }
        Ok(Rate { num, den })
    }
}

impl std::fmt::Display for Rate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Fractions of the direct-channel parity and of the patch output that
/// survive puncturing to reach a target rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeepFractions {
    pub ch: (u32, u32),
    pub c: (u32, u32),
}

pub fn keep_fractions(lambda: Lambda, target: Rate) -> Result<KeepFractions> {
    // keep(ch) = (1/R - 1 - 2λ) / (2(1 - λ)) while nonnegative, then keep(c) = (1/R - 1) / (2λ)
    let (ln, ld) = (lambda.num as i64, lambda.den as i64);
    let (rn, rd) = (target.num as i64, target.den as i64);
    let inv_minus_one = (rd - rn, rn); // 1/R - 1
    if inv_minus_one.0 < 0 || inv_minus_one.0 > 2 * inv_minus_one.1 {
        return Err(Error::InfeasibleRate(target.value()));
    }
    let red = |a: i64, b: i64| -> (u32, u32) {
        let g = gcd(a.unsigned_abs(), b.unsigned_abs()).max(1) as i64;
        ((a / g) as u32, (b / g) as u32)
    };
    // numerator of (1/R - 1 - 2λ) over rn*ld
    let num_ch = (rd - rn) * ld - 2 * ln * rn;
    if ln == ld {
        if num_ch > 0 {
            return Err(Error::InfeasibleRate(target.value()));
        }
    } else if num_ch >= 0 {
        let den_ch = 2 * (ld - ln) * rn;
        return Ok(KeepFractions { ch: red(num_ch, den_ch), c: (1, 1) });
    }
    if ln == 0 {
        return Err(Error::InfeasibleRate(target.value()));
    }
    // (1/R - 1) / (2λ) = (rd - rn) ld / (2 ln rn)
    let c = red((rd - rn) * ld, 2 * ln * rn);
    if c.0 > c.1 {
        return Err(Error::InfeasibleRate(target.value()));
    }
    Ok(KeepFractions { ch: (0, 1), c })
}

fn smallest_period(frac: (u32, u32), base: usize) -> usize {
    if frac.0 == 0 || frac.0 == frac.1 {
        return 1;
    }
    let mut p = base;
    while (p * frac.0 as usize) % frac.1 as usize != 0 {
        p += base;
    }
    p
}

/// All masks of length `period` with exactly `ones` ones, in lexicographic
/// order of the position sets.
pub fn masks_with_weight(period: usize, ones: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    let mut pos: Vec<usize> = (0..ones).collect();
    if ones > period {
        return out;
    }
    loop {
        let mut m = vec![false; period];
        for &p in &pos {
            m[p] = true;
        }
        out.push(m);
        let mut i = ones;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if pos[i] < period - ones + i {
                pos[i] += 1;
                for j in i + 1..ones {
                    pos[j] = pos[j - 1] + 1;
                }
                break;
            }
        }
    }
}

impl RatePattern {
    /// Nothing punctured.
    pub fn full() -> Self {
        RatePattern { keep_a: vec![true], keep_b: vec![true], keep_c: vec![true] }
    }

    /// Every admissible periodic pattern for a target rate. The direct
    /// channel streams use periods that are multiples of 6 and the patch
    /// output multiples of 8.
    pub fn admissible(lambda: Lambda, target: Rate) -> Result<Vec<RatePattern>> {
        let kf = keep_fractions(lambda, target)?;
        let pch = smallest_period(kf.ch, 6);
        let pc = smallest_period(kf.c, 8);
        let ch = masks_with_weight(pch, pch * kf.ch.0 as usize / kf.ch.1 as usize);
        let c = masks_with_weight(pc, pc * kf.c.0 as usize / kf.c.1 as usize);
        let mut out = Vec::with_capacity(ch.len() * ch.len() * c.len());
        for a in &ch {
            for b in &ch {
                for cc in &c {
                    out.push(RatePattern { keep_a: a.clone(), keep_b: b.clone(), keep_c: cc.clone() });
                }
            }
        }
        Ok(out)
    }

    /// First admissible pattern.
    pub fn for_rate(lambda: Lambda, target: Rate) -> Result<RatePattern> {
        Ok(Self::admissible(lambda, target)?.swap_remove(0))
    }

    fn validate(&self) -> Result<()> {
        if self.keep_a.is_empty() || self.keep_b.is_empty() || self.keep_c.is_empty() {
            return Err(Error::InvalidConfig("empty puncturing mask".into()));
        }
        Ok(())
    }
}

/// Terminations of the upper, lower and patch encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terminations {
    pub upper: Termination,
    pub lower: Termination,
    pub patch: Termination,
}

impl Terminations {
    pub fn all(t: Termination) -> Self {
        Terminations { upper: t, lower: t, patch: t }
    }

    fn any_dual(&self) -> bool {
        [self.upper, self.lower, self.patch].contains(&Termination::Dual)
    }
}

/// Serializable description of a 3-dimensional turbo code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Code3dConfig {
    pub k: usize,
    pub lambda: Lambda,
    pub generator: Generator,
    pub patch_generator: Generator,
    pub interleaver: Interleaver,
    pub patch_interleaver: Interleaver,
    pub pattern: PatternMode,
    pub termination: Terminations,
    #[serde(default)]
    pub puncturing: RatePattern,
}

impl Code3dConfig {
    /// Defaults: 13/15 constituents, 1/(1+D^2) patch, identity
    /// permutations, regular pattern, dual termination, rate 1/3.
    pub fn new(k: usize, lambda: Lambda) -> Self {
        Code3dConfig {
            k,
            lambda,
            generator: Generator::umts(),
            patch_generator: Generator::patch(),
            interleaver: Interleaver::Identity,
            patch_interleaver: Interleaver::Identity,
            pattern: PatternMode::Regular,
            termination: Terminations::all(Termination::Dual),
            puncturing: RatePattern::full(),
        }
    }

    pub fn interleaver(mut self, i: Interleaver) -> Self {
        self.interleaver = i;
        self
    }

    pub fn patch_interleaver(mut self, i: Interleaver) -> Self {
        self.patch_interleaver = i;
        self
    }

    pub fn pattern(mut self, p: PatternMode) -> Self {
        self.pattern = p;
        self
    }

    pub fn termination(mut self, t: Termination) -> Self {
        self.termination = Terminations::all(t);
        self
    }

    pub fn terminations(mut self, t: Terminations) -> Self {
        self.termination = t;
        self
    }

    pub fn puncturing(mut self, p: RatePattern) -> Self {
        self.puncturing = p;
        self
    }

    pub fn generators(mut self, constituent: Generator, patch: Generator) -> Self {
        self.generator = constituent;
        self.patch_generator = patch;
        self
    }

    pub fn patch_len(&self) -> Result<usize> {
        self.lambda
            .patch_len(self.k)
            .ok_or_else(|| Error::InvalidConfig(format!("2 λ K is not an integer for λ = {}", self.lambda)))
    }
}

/// All streams of one codeword.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword3d {
    pub u: Vec<u8>,
    /// Interleaved input `Π(u)`.
    pub v: Vec<u8>,
    pub x_a: Vec<u8>,
    pub x_b: Vec<u8>,
    pub x_tc: Vec<u8>,
    pub x_p: Vec<u8>,
    pub x_ch: Vec<u8>,
    /// Patch input `Π_c(x^p)`.
    pub w: Vec<u8>,
    pub x_c: Vec<u8>,
    /// Start states of the upper, lower and patch encoders.
    pub start_states: [u32; 3],
    pub end_states: [u32; 3],
}

impl Codeword3d {
    pub fn input_weight(&self) -> usize {
        weight(&self.u)
    }
    pub fn x_tc_weight(&self) -> usize {
        weight(&self.x_tc)
    }
    pub fn x_p_weight(&self) -> usize {
        weight(&self.x_p)
    }
    pub fn x_ch_weight(&self) -> usize {
        weight(&self.x_ch)
    }
    pub fn x_c_weight(&self) -> usize {
        weight(&self.x_c)
    }
    /// Weight of the rate-1/3 codeword `u ‖ x^ch ‖ x_c`.
    pub fn weight(&self) -> usize {
        self.input_weight() + self.x_ch_weight() + self.x_c_weight()
    }

    /// 0/1 text dump, one stream per line.
    pub fn to_text(&self) -> String {
        let line = |name: &str, v: &[u8]| {
            let bits: String = v.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
            format!("{name}={bits}\n")
        };
        [
            line("u", &self.u),
            line("x_a", &self.x_a),
            line("x_b", &self.x_b),
            line("x_p", &self.x_p),
            line("x_ch", &self.x_ch),
            line("x_c", &self.x_c),
        ]
        .concat()
    }
}

/// Solves for termination positions by Gaussian elimination over the
/// end-state map.
#[derive(Debug, Clone)]
struct Terminator {
    // reduced basis: (vector of end-state bits, combination of pivot positions)
    basis: Vec<(u64, u64)>,
    pivots: Vec<usize>,
    info_positions: Vec<usize>,
}

impl Terminator {
    fn build(cols: &[u64]) -> Self {
        let mut basis: Vec<(u64, u64)> = Vec::new();
        let mut pivots = Vec::new();
        for i in (0..cols.len()).rev() {
            let mut v = cols[i];
            let mut comb = 0u64;
            for &(b, c) in &basis {
                if v ^ b < v {
                    v ^= b;
                    comb ^= c;
                }
            }
            if v != 0 && pivots.len() < 64 {
                comb ^= 1 << pivots.len();
                pivots.push(i);
                basis.push((v, comb));
                basis.sort_by(|a, b| b.0.cmp(&a.0));
            }
        }
        let is_pivot = {
            let mut m = vec![false; cols.len()];
            for &p in &pivots {
                m[p] = true;
            }
            m
        };
        let info_positions = (0..cols.len()).filter(|&i| !is_pivot[i]).collect();
        Terminator { basis, pivots, info_positions }
    }

    /// Pivot bits that cancel `syndrome`.
    fn solve(&self, syndrome: u64) -> Option<u64> {
        let mut v = syndrome;
        let mut comb = 0u64;
        for &(b, c) in &self.basis {
            if v ^ b < v {
                v ^= b;
                comb ^= c;
            }
        }
        (v == 0).then_some(comb)
    }
}

/// A validated, fully built 3-dimensional turbo code.
#[derive(Debug, Clone)]
pub struct Code3d {
    pub cfg: Code3dConfig,
    pub constituent: Trellis,
    pub patch: Trellis,
    pi: Vec<usize>,
    pi_c: Vec<usize>,
    mask: Vec<bool>,
    p_positions: Vec<usize>,
    ch_positions: Vec<usize>,
    terminator: Option<Terminator>,
}

impl Code3d {
    pub fn new(cfg: Code3dConfig) -> Result<Self> {
        let k = cfg.k;
        if k == 0 {
            return Err(Error::InvalidConfig("K must be positive".into()));
        }
        let nc = cfg.patch_len()?;
        let constituent = Trellis::new(cfg.generator)?;
        let patch = Trellis::new(cfg.patch_generator)?;
        let pi = cfg.interleaver.build(k)?;
        let pi_c = cfg.patch_interleaver.build(nc)?;
        let mask = patch_mask(k, cfg.lambda, cfg.pattern)?;
        let p_positions: Vec<usize> = (0..2 * k).filter(|&i| mask[i]).collect();
        let ch_positions: Vec<usize> = (0..2 * k).filter(|&i| !mask[i]).collect();
        if p_positions.len() != nc {
            return Err(Error::InvalidConfig(format!(
                "pattern selects {} bits, expected N_c = {nc}",
                p_positions.len()
            )));
        }
        cfg.puncturing.validate()?;
        let mut code = Code3d { cfg, constituent, patch, pi, pi_c, mask, p_positions, ch_positions, terminator: None };
        if code.cfg.termination.any_dual() {
            let bits = 2 * code.constituent.memory() + code.patch.memory();
            if bits > 64 {
                return Err(Error::InvalidConfig("termination state too large".into()));
            }
            let mut cols = Vec::with_capacity(k);
            let mut e = vec![0u8; k];
            for i in 0..k {
                e[i] = 1;
                let cw = code.encode_unchecked(&e)?;
                cols.push(code.dual_syndrome(&cw));
                e[i] = 0;
            }
            code.terminator = Some(Terminator::build(&cols));
        }
        Ok(code)
    }

    pub fn k(&self) -> usize {
        self.cfg.k
    }

    pub fn patch_len(&self) -> usize {
        self.pi_c.len()
    }

    pub fn interleaver(&self) -> &[usize] {
        &self.pi
    }

    pub fn patch_interleaver(&self) -> &[usize] {
        &self.pi_c
    }

    /// Selection mask over `x^TC`.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Positions in `x^TC` that feed the patch, in order.
    pub fn patch_positions(&self) -> &[usize] {
        &self.p_positions
    }

    /// Positions in `x^TC` sent directly to the channel, in order.
    pub fn channel_positions(&self) -> &[usize] {
        &self.ch_positions
    }

    /// Number of free information bits.
    pub fn info_len(&self) -> usize {
        match &self.terminator {
            Some(t) => t.info_positions.len(),
            None => self.cfg.k,
        }
    }

    /// Positions of `u` that carry information bits.
    pub fn info_positions(&self) -> Vec<usize> {
        match &self.terminator {
            Some(t) => t.info_positions.clone(),
            None => (0..self.cfg.k).collect(),
        }
    }

    /// Positions of `u` fixed by termination.
    pub fn termination_positions(&self) -> Vec<usize> {
        match &self.terminator {
            Some(t) => {
                let mut p = t.pivots.clone();
                p.sort_unstable();
                p
            }
            None => vec![],
        }
    }

    fn dual_syndrome(&self, cw: &Codeword3d) -> u64 {
        let t = self.cfg.termination;
        let nu = self.constituent.memory();
        let mut s = 0u64;
        if t.upper == Termination::Dual {
            s |= cw.end_states[0] as u64;
        }
        if t.lower == Termination::Dual {
            s |= (cw.end_states[1] as u64) << nu;
        }
        if t.patch == Termination::Dual {
            s |= (cw.end_states[2] as u64) << (2 * nu);
        }
        s
    }

    /// Maps information bits onto a terminated input word `u`.
    pub fn terminate(&self, info: &[u8]) -> Result<Vec<u8>> {
        check_bits(info)?;
        if info.len() != self.info_len() {
            return Err(Error::InvalidInput(format!("expected {} information bits, got {}", self.info_len(), info.len())));
        }
        let Some(t) = &self.terminator else {
            return Ok(info.to_vec());
        };
        let mut u = vec![0u8; self.cfg.k];
        for (&p, &b) in t.info_positions.iter().zip(info) {
            u[p] = b;
        }
        let cw = self.encode_unchecked(&u)?;
        let comb = t.solve(self.dual_syndrome(&cw)).ok_or(Error::NotTerminated)?;
        for (j, &p) in t.pivots.iter().enumerate() {
            u[p] = ((comb >> j) & 1) as u8;
        }
        Ok(u)
    }

    /// Information bits carried by a terminated input word.
    pub fn extract_info(&self, u: &[u8]) -> Vec<u8> {
        match &self.terminator {
            Some(t) => t.info_positions.iter().map(|&p| u[p]).collect(),
            None => u.to_vec(),
        }
    }

    /// Whether `u` satisfies every dual termination constraint.
    pub fn is_terminated(&self, u: &[u8]) -> Result<bool> {
        if self.terminator.is_none() {
            return Ok(true);
        }
        Ok(self.dual_syndrome(&self.encode_unchecked(u)?) == 0)
    }

    fn run_constituent(&self, t: &Trellis, input: &[u8], mode: Termination) -> Result<(Vec<u8>, u32, u32)> {
        match mode {
            Termination::Tailbiting => {
                let s0 = t.circulation_state(input)?;
                let (p, e) = t.run(s0, input);
                Ok((p, s0, e))
            }
            _ => {
                let (p, e) = t.run(0, input);
                Ok((p, 0, e))
            }
        }
    }

    /// Encodes without checking dual termination constraints.
    pub fn encode_unchecked(&self, u: &[u8]) -> Result<Codeword3d> {
        let k = self.cfg.k;
        if u.len() != k {
            return Err(Error::InvalidInput(format!("expected {k} input bits, got {}", u.len())));
        }
        check_bits(u)?;
        let t = self.cfg.termination;
        let (x_a, sa, ea) = self.run_constituent(&self.constituent, u, t.upper)?;
        let v = permute(u, &self.pi);
        let (x_b, sb, eb) = self.run_constituent(&self.constituent, &v, t.lower)?;
        let mut x_tc = vec![0u8; 2 * k];
        for i in 0..k {
            x_tc[2 * i] = x_a[i];
            x_tc[2 * i + 1] = x_b[i];
        }
        let x_p: Vec<u8> = self.p_positions.iter().map(|&i| x_tc[i]).collect();
        let x_ch: Vec<u8> = self.ch_positions.iter().map(|&i| x_tc[i]).collect();
        let w = permute(&x_p, &self.pi_c);
        let (x_c, sc, ec) = if w.is_empty() { (vec![], 0, 0) } else { self.run_constituent(&self.patch, &w, t.patch)? };
        Ok(Codeword3d { u: u.to_vec(), v, x_a, x_b, x_tc, x_p, x_ch, w, x_c, start_states: [sa, sb, sc], end_states: [ea, eb, ec] })
    }

    /// Encodes a (terminated) input word.
    pub fn encode(&self, u: &[u8]) -> Result<Codeword3d> {
        let cw = self.encode_unchecked(u)?;
        if self.terminator.is_some() && self.dual_syndrome(&cw) != 0 {
            return Err(Error::NotTerminated);
        }
        Ok(cw)
    }

    /// Checks that the codeword of `u` shifted by `p` is the section-wise
    /// cyclic shift of the codeword of `u`: `x_a` by `p`, `x_b` by `f(p)`,
    /// `x^p` by `2 lambda p` and `x_c` by `f~(2 lambda p)`. Needs QPP
    /// interleavers, a regular pattern and tailbiting everywhere. The patch
    /// output is compared as a tailbiting codeword because its circulation
    /// state need not be unique.
    pub fn shift_is_quasi_cyclic(&self, u: &[u8], p: usize) -> Result<bool> {
        let k = self.cfg.k;
        if self.cfg.termination != Terminations::all(Termination::Tailbiting) || self.cfg.pattern != PatternMode::Regular {
            return Err(Error::InvalidConfig("quasi-cyclic shifts need tailbiting and a regular pattern".into()));
        }
        let (Some(f), Some(ft)) = (self.cfg.interleaver.qpp(k), self.cfg.patch_interleaver.qpp(self.patch_len())) else {
            return Err(Error::InvalidConfig("quasi-cyclic shifts need QPP interleavers".into()));
        };
        let rot = |x: &[u8], s: usize| -> Vec<u8> {
            let n = x.len();
            let mut out = vec![0u8; n];
            for (i, &b) in x.iter().enumerate() {
                out[(i + s) % n] = b;
            }
            out
        };
        let a = self.encode(u)?;
        let b = match self.encode(&rot(u, p)) {
            Ok(b) => b,
            Err(Error::NoCirculationState(_)) => return Ok(false),
            Err(e) => return Err(e),
        };
        let nc = self.patch_len();
        let sp = (2 * p * self.cfg.lambda.num() as usize / self.cfg.lambda.den() as usize) % nc.max(1);
        let sc = if nc == 0 { 0 } else { ft.eval(sp as u64) as usize };
        Ok(b.x_a == rot(&a.x_a, p)
            && b.x_b == rot(&a.x_b, f.eval(p as u64) as usize)
            && b.x_p == rot(&a.x_p, sp)
            && b.w == rot(&a.w, sc)
            && self.patch.is_tailbiting_codeword(&b.w, &rot(&a.x_c, sc)))
    }

    /// Puts `x^p` and `x^ch` back into `x^TC` order.
    pub fn merge(&self, x_p: &[u8], x_ch: &[u8]) -> Vec<u8> {
        let mut x = vec![0u8; 2 * self.cfg.k];
        for (&i, &b) in self.p_positions.iter().zip(x_p) {
            x[i] = b;
        }
        for (&i, &b) in self.ch_positions.iter().zip(x_ch) {
            x[i] = b;
        }
        x
    }

    /// Transmitted positions for a puncturing pattern.
    pub fn layout(&self, rp: &RatePattern) -> Layout {
        let mut ch = Vec::new();
        let (mut ia, mut ib) = (0usize, 0usize);
        for (j, &pos) in self.ch_positions.iter().enumerate() {
            let keep = if pos % 2 == 0 {
                ia += 1;
                rp.keep_a[(ia - 1) % rp.keep_a.len()]
            } else {
                ib += 1;
                rp.keep_b[(ib - 1) % rp.keep_b.len()]
            };
            if keep {
                ch.push(j);
            }
        }
        let c = (0..self.patch_len()).filter(|&i| rp.keep_c[i % rp.keep_c.len()]).collect();
        Layout { k: self.cfg.k, ch, c }
    }

    /// Layout of the configured puncturing pattern.
    pub fn default_layout(&self) -> Layout {
        self.layout(&self.cfg.puncturing)
    }

    /// Bits sent over the channel: `u`, then kept `x^ch`, then kept `x_c`.
    pub fn transmit(&self, cw: &Codeword3d, layout: &Layout) -> Vec<u8> {
        let mut out = Vec::with_capacity(layout.len());
        out.extend_from_slice(&cw.u);
        out.extend(layout.ch.iter().map(|&j| cw.x_ch[j]));
        out.extend(layout.c.iter().map(|&j| cw.x_c[j]));
        out
    }

    /// Code rate counting only free information bits.
    pub fn actual_rate(&self, layout: &Layout) -> f64 {
        self.info_len() as f64 / layout.len() as f64
    }
}

/// Which bits of a codeword are transmitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub k: usize,
    /// Kept indices into `x^ch`.
    pub ch: Vec<usize>,
    /// Kept indices into `x_c`.
    pub c: Vec<usize>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.k + self.ch.len() + self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn code(k: usize, lambda: &str, t: Termination) -> Code3d {
        Code3d::new(
            Code3dConfig::new(k, lambda.parse().unwrap())
                .interleaver(Interleaver::Random { seed: 5 })
                .patch_interleaver(Interleaver::Random { seed: 6 })
                .termination(t),
        )
        .unwrap()
    }

    #[test]
    fn regular_pattern_quarter() {
        let m = patch_mask(16, "1/4".parse().unwrap(), PatternMode::Regular).unwrap();
        assert_eq!(mask_to_string(&m[..8]), "11000000");
        let m = patch_mask(16, Lambda::one(), PatternMode::Regular).unwrap();
        assert!(m.iter().all(|&b| b));
    }

    #[test]
    fn random_pattern_counts() {
        let half: Lambda = "1/2".parse().unwrap();
        let mut distinct = std::collections::HashSet::new();
        for seed in 0..1000 {
            let m = patch_mask(32, half, PatternMode::Random { seed }).unwrap();
            for chunk in m.chunks(4) {
                assert_eq!(chunk.iter().filter(|&&b| b).count(), 2);
            }
            distinct.insert(m);
        }
        assert!(distinct.len() > 990);
    }

    #[test]
    fn full_permeability_has_no_direct_parity() {
        let c = code(16, "1", Termination::Open);
        let cw = c.encode(&[1; 16]).unwrap();
        assert!(cw.x_ch.is_empty());
        assert_eq!(cw.x_p.len(), 32);
    }

    #[test]
    fn zero_input_gives_zero_codeword() {
        let c = code(64, "1/4", Termination::Dual);
        let cw = c.encode(&[0; 64]).unwrap();
        assert_eq!(cw.weight(), 0);
    }

    #[test]
    fn weight_bookkeeping() {
        let c = code(64, "1/4", Termination::Open);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let u: Vec<u8> = (0..64).map(|_| rng.random_range(0..2)).collect();
            let cw = c.encode(&u).unwrap();
            assert_eq!(cw.x_tc_weight(), cw.x_p_weight() + cw.x_ch_weight());
            assert_eq!(c.merge(&cw.x_p, &cw.x_ch), cw.x_tc);
        }
    }

    #[test]
    fn dual_rate_formula() {
        for k in [64usize, 128, 256] {
            let c = code(k, "1/4", Termination::Dual);
            assert_eq!(c.info_len(), k - 2 * 3 - 2);
            let rate = c.actual_rate(&c.default_layout());
            assert!((rate - (k - 8) as f64 / (3 * k) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn terminated_words_end_in_zero() {
        let c = code(64, "1/2", Termination::Dual);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let info: Vec<u8> = (0..c.info_len()).map(|_| rng.random_range(0..2)).collect();
            let u = c.terminate(&info).unwrap();
            assert_eq!(c.extract_info(&u), info);
            let cw = c.encode(&u).unwrap();
            assert_eq!(cw.end_states, [0, 0, 0]);
        }
        let mut bad = vec![0u8; 64];
        bad[0] = 1;
        assert_eq!(c.encode(&bad).unwrap_err(), Error::NotTerminated);
    }

    #[test]
    fn rate_patterns() {
        let q: Lambda = "1/4".parse().unwrap();
        let r = |s: &str| s.parse::<Rate>().unwrap();
        assert_eq!(RatePattern::admissible(q, r("1/3")).unwrap(), vec![RatePattern::full()]);
        let half = RatePattern::admissible(q, r("1/2")).unwrap();
        assert_eq!(half.len(), 225);
        assert_eq!(half[0].keep_a.len(), 6);
        let two_thirds = RatePattern::admissible(q, r("2/3")).unwrap();
        assert_eq!(two_thirds.len(), 1);
        assert_eq!(two_thirds[0].keep_a, vec![false]);
        let four_fifths = RatePattern::admissible(q, r("4/5")).unwrap();
        assert_eq!(four_fifths.len(), 70);
        assert!(four_fifths.iter().all(|p| p.keep_c.len() == 8 && p.keep_c.iter().filter(|&&b| b).count() == 4));
        assert!(RatePattern::admissible(q, r("1/4")).is_err());
        assert!(RatePattern::admissible(Lambda::zero(), r("2/3")).is_ok());
        assert!(RatePattern::admissible(Lambda::zero(), r("1/4")).is_err());
    }

    #[test]
    fn transmitted_rates() {
        let q: Lambda = "1/4".parse().unwrap();
        let c = code(96, "1/4", Termination::Open);
        for (rate, expect) in [("1/2", 0.5), ("2/3", 2.0 / 3.0), ("4/5", 0.8)] {
            let rp = RatePattern::for_rate(q, rate.parse().unwrap()).unwrap();
            let l = c.layout(&rp);
            assert!((c.actual_rate(&l) - expect).abs() < 1e-12, "{rate}");
            let cw = c.encode(&[1; 96]).unwrap();
            let tx = c.transmit(&cw, &l);
            assert_eq!(tx.len(), l.len());
            assert_eq!(&tx[..96], &cw.u[..]);
        }
        let rp = RatePattern::for_rate(q, "2/3".parse().unwrap()).unwrap();
        let l = c.layout(&rp);
        let cw = c.encode(&[1; 96]).unwrap();
        assert_eq!(c.transmit(&cw, &l), [cw.u.clone(), cw.x_c.clone()].concat());
    }

    #[test]
    fn config_serde_roundtrip() {
        let cfg = Code3dConfig::new(64, "1/4".parse().unwrap())
            .interleaver(Interleaver::Qpp { f1: 7, f2: 16 })
            .pattern(PatternMode::Random { seed: 3 })
            .puncturing(RatePattern::for_rate("1/4".parse().unwrap(), "1/2".parse().unwrap()).unwrap());
        let s = serde_json::to_string(&cfg).unwrap();
        let back: Code3dConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
    }
}
