//! Minimum-distance tools: an exhaustive oracle, the impulse estimator,
//! upper-bound checkers for QPP interleavers and the critical-codeword
//! constructions behind them.
//!
//! A critical codeword is a sum of short fundamental paths in the upper
//! and lower constituent trellises whose systematic 1-positions are tied
//! together by the interleaver. Each [`CriticalTemplate`] lists where its
//! paths start, as expressions in a free position `x`, the QPP `f` and its
//! inverse `g`.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{run_fer, Decoder3d, DecoderConfig, FerConfig, LlrFrame};
use crate::encoder::{Code3d, Codeword3d, Layout, Rate, RatePattern};
use crate::error::{Error, Result};
use crate::qpp::{factorize, Qpp};
use crate::trellis::{weight, Generator, Termination, Trellis};

/// The three low-weight fundamental paths of the `13/15` encoder used by
/// the critical codewords.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PathType {
    One,
    Two,
    Three,
}

impl PathType {
    pub const ALL: [PathType; 3] = [PathType::One, PathType::Two, PathType::Three];

    /// Offsets of the input 1s from the start of the path.
    pub fn inputs(self) -> &'static [usize] {
        match self {
            PathType::One => &[0, 1, 5],
            PathType::Two => &[0, 2, 10],
            PathType::Three => &[0, 1, 4, 9],
        }
    }

    /// Number of trellis sections.
    pub fn len(self) -> usize {
        match self {
            PathType::One => 6,
            PathType::Two => 11,
            PathType::Three => 10,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            PathType::One => 1,
            PathType::Two => 2,
            PathType::Three => 3,
        }
    }
}

/// One trellis section of a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub from: u32,
    pub to: u32,
    pub input: u8,
    pub parity: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FundamentalPath {
    pub kind: PathType,
    pub transitions: Vec<Transition>,
}

impl FundamentalPath {
    /// Traces `kind` through `tr`. Fails unless the path leaves state zero
    /// once and returns to it exactly at its last section.
    pub fn trace(tr: &Trellis, kind: PathType) -> Result<Self> {
        let mut input = vec![0u8; kind.len()];
        for &i in kind.inputs() {
            input[i] = 1;
        }
        let mut s = 0;
        let mut transitions = Vec::with_capacity(input.len());
        for (i, &u) in input.iter().enumerate() {
            let to = tr.next_state(s, u);
            transitions.push(Transition { from: s, to, input: u, parity: tr.output(s, u) });
            if (to == 0) != (i + 1 == input.len()) {
                return Err(Error::InvalidInput(format!("type-{} pattern is not a fundamental path of this encoder", kind.tag())));
            }
            s = to;
        }
        Ok(FundamentalPath { kind, transitions })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn parity_offsets(&self) -> Vec<usize> {
        self.transitions.iter().enumerate().filter(|(_, t)| t.parity == 1).map(|(i, _)| i).collect()
    }

    /// Systematic plus parity weight.
    pub fn weight(&self) -> usize {
        self.transitions.iter().map(|t| (t.input + t.parity) as usize).sum()
    }

    /// `a -x/yz-> b` labels, one per section.
    pub fn labels(&self) -> Vec<String> {
        self.transitions.iter().map(|t| format!("{} -{}/{}{}-> {}", t.from, t.input, t.input, t.parity, t.to)).collect()
    }
}

/// A QPP together with its quadratic inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QppPair {
    pub f: Qpp,
    pub g: Qpp,
}

impl QppPair {
    pub fn new(f: Qpp) -> Result<Self> {
        let g = f.quadratic_inverse().ok_or(Error::NoQuadraticInverse)?;
        Ok(QppPair { f, g })
    }

    pub fn k(&self) -> i64 {
        self.f.m as i64
    }

    #[inline]
    pub fn fx(&self, x: i64) -> i64 {
        self.f.eval_i(x) as i64
    }

    #[inline]
    pub fn gx(&self, x: i64) -> i64 {
        self.g.eval_i(x) as i64
    }
}

type PosFn = fn(&QppPair, i64) -> i64;

/// Start of one fundamental path of a template.
#[derive(Clone, Copy)]
pub struct Anchor {
    pub kind: PathType,
    pub start: PosFn,
    pub text: &'static str,
}

/// A printed requirement `lhs = rhs (mod K)`.
#[derive(Clone, Copy)]
pub struct Congruence {
    pub label: char,
    pub lhs: PosFn,
    pub rhs: PosFn,
    pub text: &'static str,
}

impl Congruence {
    pub fn holds(&self, q: &QppPair, x: i64) -> bool {
        ((self.lhs)(q, x) - (self.rhs)(q, x)).rem_euclid(q.k()) == 0
    }
}

/// Structure of a critical codeword of the two-encoder turbo code.
#[derive(Clone, Copy)]
pub struct CriticalTemplate {
    pub figure: u8,
    pub input_weight: usize,
    /// Weight of the codeword when no two paths overlap.
    pub cap: usize,
    /// Upper paths, left to right.
    pub upper: &'static [Anchor],
    /// Lower paths, left to right.
    pub lower: &'static [Anchor],
    pub congruences: &'static [Congruence],
    /// Value of `f1 + f2 (mod 4)` for which the patch sees only zeros.
    pub residue: Option<u64>,
}

impl std::fmt::Debug for CriticalTemplate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CriticalTemplate")
            .field("figure", &self.figure)
            .field("input_weight", &self.input_weight)
            .field("cap", &self.cap)
            .field("upper", &self.upper.iter().map(|a| (a.kind.tag(), a.text)).collect::<Vec<_>>())
            .field("lower", &self.lower.iter().map(|a| (a.kind.tag(), a.text)).collect::<Vec<_>>())
            .finish()
    }
}

macro_rules! anchor {
    ($kind:ident, $text:expr, |$q:ident, $x:ident| $e:expr) => {
        Anchor { kind: PathType::$kind, start: |$q: &QppPair, $x: i64| $e, text: $text }
    };
}

macro_rules! congruence {
    ($label:expr, $text:expr, |$q:ident, $x:ident| $l:expr, $r:expr) => {
        Congruence { label: $label, lhs: |$q: &QppPair, $x: i64| $l, rhs: |$q: &QppPair, $x: i64| $r, text: $text }
    };
}

const FIG10_UPPER: &[Anchor] = &[
    anchor!(Three, "x", |_q, x| x),
    anchor!(One, "g(f(x)+2)-1", |q, x| q.gx(q.fx(x) + 2) - 1),
    anchor!(Two, "g(f(x+1)+1)-2", |q, x| q.gx(q.fx(x + 1) + 1) - 2),
    anchor!(Two, "g(f(x+1)+5)-2", |q, x| q.gx(q.fx(x + 1) + 5) - 2),
    anchor!(One, "g(f(x)+10)-1", |q, x| q.gx(q.fx(x) + 10) - 1),
];

const FIG10_LOWER: &[Anchor] = &[
    anchor!(One, "f(x+9)", |q, x| q.fx(x + 9)),
    anchor!(Two, "f(x+4)", |q, x| q.fx(x + 4)),
    anchor!(Two, "f(x)", |q, x| q.fx(x)),
    anchor!(One, "f(x+1)", |q, x| q.fx(x + 1)),
    anchor!(Three, "f(g(f(x+1)+1)-2)", |q, x| q.fx(q.gx(q.fx(x + 1) + 1) - 2)),
];

const FIG10_CONGRUENCES: &[Congruence] = &[
    congruence!('a', "f(x+9)+1 = f(g(f(x+1)+1)+8)", |q, x| q.fx(x + 9) + 1, q.fx(q.gx(q.fx(x + 1) + 1) + 8)),
    congruence!('b', "f(x+9)+5 = f(g(f(x+1)+5)+8)", |q, x| q.fx(x + 9) + 5, q.fx(q.gx(q.fx(x + 1) + 5) + 8)),
    congruence!('c', "f(x+4)+2 = f(g(f(x)+2)+4)", |q, x| q.fx(x + 4) + 2, q.fx(q.gx(q.fx(x) + 2) + 4)),
    congruence!('d', "f(x+4)+10 = f(g(f(x)+10)+4)", |q, x| q.fx(x + 4) + 10, q.fx(q.gx(q.fx(x) + 10) + 4)),
    congruence!('e', "f(g(f(x+1)+1)-2)+1 = f(g(f(x)+2)-1)", |q, x| q.fx(q.gx(q.fx(x + 1) + 1) - 2) + 1, q.fx(q.gx(q.fx(x) + 2) - 1)),
    congruence!('f', "f(g(f(x+1)+1)-2)+4 = f(g(f(x+1)+5)-2)", |q, x| q.fx(q.gx(q.fx(x + 1) + 1) - 2) + 4, q.fx(q.gx(q.fx(x + 1) + 5) - 2)),
    congruence!('g', "f(g(f(x+1)+1)-2)+9 = f(g(f(x)+10)-1)", |q, x| q.fx(q.gx(q.fx(x + 1) + 1) - 2) + 9, q.fx(q.gx(q.fx(x) + 10) - 1)),
];

const FIG11_UPPER: &[Anchor] = &[
    anchor!(Three, "x", |_q, x| x),
    anchor!(Two, "g(f(x+9)-9)-10", |q, x| q.gx(q.fx(x + 9) - 9) - 10),
    anchor!(Three, "g(f(x)-8)", |q, x| q.gx(q.fx(x) - 8)),
    anchor!(One, "g(f(x)-10)-1", |q, x| q.gx(q.fx(x) - 10) - 1),
    anchor!(Two, "g(f(x+1)-5)-2", |q, x| q.gx(q.fx(x + 1) - 5) - 2),
];

const FIG11_LOWER: &[Anchor] = &[
    anchor!(Three, "f(x+1)-9", |q, x| q.fx(x + 1) - 9),
    anchor!(Two, "f(x+4)-10", |q, x| q.fx(x + 4) - 10),
    anchor!(One, "f(g(f(x)-10)-1)", |q, x| q.fx(q.gx(q.fx(x) - 10) - 1)),
    anchor!(Three, "f(x+9)-9", |q, x| q.fx(x + 9) - 9),
    anchor!(Two, "f(x)-10", |q, x| q.fx(x) - 10),
];

const FIG11_CONGRUENCES: &[Congruence] = &[
    congruence!('a', "g(f(x)-8)+4 = g(f(x+4)-8)", |q, x| q.gx(q.fx(x) - 8) + 4, q.gx(q.fx(x + 4) - 8)),
    congruence!('b', "g(f(x)-8)+1 = g(f(x+1)-8)", |q, x| q.gx(q.fx(x) - 8) + 1, q.gx(q.fx(x + 1) - 8)),
    congruence!('c', "g(f(x)-8)+9 = g(f(x+9)-8)", |q, x| q.gx(q.fx(x) - 8) + 9, q.gx(q.fx(x + 9) - 8)),
    congruence!('d', "g(f(x+9)-9)-8 = g(f(x+1)-9)", |q, x| q.gx(q.fx(x + 9) - 9) - 8, q.gx(q.fx(x + 1) - 9)),
    congruence!('e', "g(f(x+9)-9)-10 = g(f(g(f(x)-10)-1)+1)", |q, x| q.gx(q.fx(x + 9) - 9) - 10, q.gx(q.fx(q.gx(q.fx(x) - 10) - 1) + 1)),
    congruence!('f', "g(f(x+4)-10) = g(f(x)-10)+4", |q, x| q.gx(q.fx(x + 4) - 10), q.gx(q.fx(x) - 10) + 4),
    congruence!('g', "f(g(f(x+1)-5)-2) = f(g(f(x)-10)-1)+5", |q, x| q.fx(q.gx(q.fx(x + 1) - 5) - 2), q.fx(q.gx(q.fx(x) - 10) - 1) + 5),
    congruence!('h', "g(f(x+9)-5)-8 = g(f(x+1)-5)", |q, x| q.gx(q.fx(x + 9) - 5) - 8, q.gx(q.fx(x + 1) - 5)),
];

const FIG12_UPPER: &[Anchor] = &[
    anchor!(One, "x", |_q, x| x),
    anchor!(One, "g(f(x)-5)", |q, x| q.gx(q.fx(x) - 5)),
    anchor!(One, "g(f(x)-4)", |q, x| q.gx(q.fx(x) - 4)),
];

const FIG12_LOWER: &[Anchor] = &[
    anchor!(One, "f(x)-5", |q, x| q.fx(x) - 5),
    anchor!(One, "f(x+1)-5", |q, x| q.fx(x + 1) - 5),
    anchor!(One, "f(x+5)-5", |q, x| q.fx(x + 5) - 5),
];

const FIG12_CONGRUENCES: &[Congruence] = &[
    congruence!('a', "g(f(x)-5)+1 = g(f(x+1)-5)", |q, x| q.gx(q.fx(x) - 5) + 1, q.gx(q.fx(x + 1) - 5)),
    congruence!('b', "g(f(x)-5)+5 = g(f(x+5)-5)", |q, x| q.gx(q.fx(x) - 5) + 5, q.gx(q.fx(x + 5) - 5)),
    congruence!('c', "g(f(x)-4)+1 = g(f(x+1)-4)", |q, x| q.gx(q.fx(x) - 4) + 1, q.gx(q.fx(x + 1) - 4)),
    congruence!('d', "g(f(x)-4)+5 = g(f(x+5)-4)", |q, x| q.gx(q.fx(x) - 4) + 5, q.gx(q.fx(x + 5) - 4)),
];

impl CriticalTemplate {
    /// Input weight 16, at most 64.
    pub const FIG10: CriticalTemplate = CriticalTemplate {
        figure: 10,
        input_weight: 16,
        cap: 64,
        upper: FIG10_UPPER,
        lower: FIG10_LOWER,
        congruences: FIG10_CONGRUENCES,
        residue: Some(1),
    };

    /// Input weight 17, at most 67.
    pub const FIG11: CriticalTemplate = CriticalTemplate {
        figure: 11,
        input_weight: 17,
        cap: 67,
        upper: FIG11_UPPER,
        lower: FIG11_LOWER,
        congruences: FIG11_CONGRUENCES,
        residue: Some(3),
    };

    /// Input weight 9, at most 27.
    pub const FIG12: CriticalTemplate = CriticalTemplate {
        figure: 12,
        input_weight: 9,
        cap: 27,
        upper: FIG12_UPPER,
        lower: FIG12_LOWER,
        congruences: FIG12_CONGRUENCES,
        residue: None,
    };

    pub fn by_figure(figure: u8) -> Option<CriticalTemplate> {
        match figure {
            10 => Some(Self::FIG10),
            11 => Some(Self::FIG11),
            12 => Some(Self::FIG12),
            _ => None,
        }
    }

    /// The template whose patch input vanishes for this interleaver.
    pub fn for_residue(f: &Qpp) -> CriticalTemplate {
        if (f.f1 + f.f2) % 4 == 1 {
            Self::FIG10
        } else {
            Self::FIG11
        }
    }

    /// Number of fundamental paths `Q`.
    pub fn num_paths(&self) -> usize {
        self.upper.len() + self.lower.len()
    }

    /// Total path length `L`.
    pub fn total_length(&self) -> usize {
        self.upper.iter().chain(self.lower).map(|a| a.kind.len()).sum()
    }

    /// Smallest `K` for which a non-wrapping `x = 1 (mod 4)` always exists.
    pub fn lemma2_threshold(&self) -> usize {
        self.total_length() + 2 * self.num_paths() + 4
    }

    pub fn first_failing(&self, q: &QppPair, x: i64) -> Option<char> {
        self.congruences.iter().find(|c| !c.holds(q, x)).map(|c| c.label)
    }

    pub fn upper_starts(&self, q: &QppPair, x: i64) -> Vec<usize> {
        self.upper.iter().map(|a| (a.start)(q, x).rem_euclid(q.k()) as usize).collect()
    }

    pub fn lower_starts(&self, q: &QppPair, x: i64) -> Vec<usize> {
        self.lower.iter().map(|a| (a.start)(q, x).rem_euclid(q.k()) as usize).collect()
    }

    /// Whether some path runs past position `K - 1`.
    pub fn wraps(&self, q: &QppPair, x: i64) -> Option<usize> {
        let k = q.k() as usize;
        let check = |anchors: &[Anchor], starts: Vec<usize>| {
            anchors.iter().zip(starts).find(|(a, s)| s + a.kind.len() > k).map(|(_, s)| s)
        };
        check(self.upper, self.upper_starts(q, x)).or_else(|| check(self.lower, self.lower_starts(q, x)))
    }

    /// Systematic support of one constituent, as a 0/1 word (overlapping
    /// 1s cancel).
    fn support(anchors: &[Anchor], starts: &[usize], k: usize) -> Vec<u8> {
        let mut u = vec![0u8; k];
        for (a, &s) in anchors.iter().zip(starts) {
            for &o in a.kind.inputs() {
                u[(s + o) % k] ^= 1;
            }
        }
        u
    }
}

/// A critical codeword encoded through a real 3D turbo code.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalCodeword {
    pub figure: u8,
    pub x: usize,
    pub upper_starts: Vec<usize>,
    pub lower_starts: Vec<usize>,
    /// Positions of the 1s in `u`.
    pub support: Vec<usize>,
    pub weight: usize,
    pub cap: usize,
    #[serde(skip)]
    pub codeword: Codeword3d,
}

fn interleaver_pair(code: &Code3d) -> Result<QppPair> {
    let f = code
        .cfg
        .interleaver
        .qpp(code.k())
        .ok_or_else(|| Error::InvalidConfig("critical codewords need a QPP interleaver".into()))?;
    QppPair::new(f)
}

/// Assembles `template` at position `x`, checks every printed congruence,
/// encodes through `code` and confirms that the patch input is zero and
/// the weight does not exceed the cap.
pub fn build_critical_codeword(template: &CriticalTemplate, code: &Code3d, x: usize) -> Result<CriticalCodeword> {
    let pair = interleaver_pair(code)?;
    let k = code.k();
    let xi = x as i64;
    if let Some(label) = template.first_failing(&pair, xi) {
        return Err(Error::CongruenceFailed { label });
    }
    let t = code.cfg.termination;
    if t.upper != Termination::Tailbiting || t.lower != Termination::Tailbiting {
        if let Some(anchor) = template.wraps(&pair, xi) {
            return Err(Error::PathWraps { anchor });
        }
    }
    let upper_starts = template.upper_starts(&pair, xi);
    let lower_starts = template.lower_starts(&pair, xi);
    let u = CriticalTemplate::support(template.upper, &upper_starts, k);
    let v = CriticalTemplate::support(template.lower, &lower_starts, k);
    if crate::encoder::permute(&u, code.interleaver()) != v {
        // only reachable if the congruence list is incomplete
        return Err(Error::InvalidInput("lower support is not the interleaved upper support".into()));
    }
    if u.iter().all(|&b| b == 0) {
        return Err(Error::InvalidInput(format!("all paths cancel at x = {x}")));
    }
    let cw = code.encode_unchecked(&u)?;
    if cw.x_p.iter().any(|&b| b != 0) {
        return Err(Error::PatchInputNonzero(x));
    }
    if !code.is_terminated(&u)? {
        return Err(Error::NotTerminated);
    }
    let weight = cw.weight();
    if weight > template.cap {
        return Err(Error::InvalidInput(format!("weight {weight} exceeds cap {}", template.cap)));
    }
    let support = (0..k).filter(|&i| u[i] == 1).collect();
    Ok(CriticalCodeword { figure: template.figure, x, upper_starts, lower_starts, support, weight, cap: template.cap, codeword: cw })
}

/// Tries every admissible `x` (`x = 1 (mod 4)` for templates with a
/// residue condition) and returns the lightest codeword. On failure the
/// error of the last attempt is returned.
pub fn find_critical_codeword(template: &CriticalTemplate, code: &Code3d) -> Result<CriticalCodeword> {
    let k = code.k();
    let step = if template.residue.is_some() { 4 } else { 1 };
    let first = if template.residue.is_some() { 1 } else { 0 };
    let mut last = Error::InvalidInput(format!("no admissible x for K = {k}"));
    let mut best: Option<CriticalCodeword> = None;
    for x in (first..k).step_by(step) {
        match build_critical_codeword(template, code, x) {
            Ok(c) => {
                if best.as_ref().is_none_or(|b| c.weight < b.weight) {
                    best = Some(c);
                }
            }
            Err(e) => last = e,
        }
    }
    best.ok_or(last)
}

/// Upper bound for the two-encoder turbo code with a primitive feedback
/// and monic feedforward polynomial of degree `nu`.
pub fn theorem1_cap(nu: u32) -> u64 {
    2 * ((1u64 << (nu + 1)) + 9)
}

/// Why a length does or does not admit the weight-67 bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Theorem2Check {
    pub applies: bool,
    /// Exponent of 2 in `K`.
    pub n2: u32,
    /// An odd prime with exponent above one, if any.
    pub bad_prime: Option<(u64, u32)>,
    /// `4 | (1/lambda) | K`.
    pub divisibility: bool,
}

pub fn theorem2_applies(k: u64, lambda: crate::encoder::Lambda) -> Theorem2Check {
    let fac = factorize(k);
    let n2 = fac.get(&2).copied().unwrap_or(0);
    let bad_prime = fac.iter().find(|&(&p, &e)| p != 2 && e > 1).map(|(&p, &e)| (p, e));
    let divisibility = lambda.num() == 1 && {
        let inv = lambda.den() as u64;
        inv % 4 == 0 && k % inv == 0
    };
    Theorem2Check { applies: n2 <= 7 && bad_prime.is_none() && divisibility, n2, bad_prime, divisibility }
}

/// Weight cap from the input-weight 9 (resp. 18) construction: 27 when
/// `2 g2 = 0 (mod K)`, 54 when `4 g2 = 0 (mod K)`. Works equally for `f`.
pub fn theorem3_check(q: &Qpp) -> Option<u32> {
    let m = q.m as u128;
    let g2 = q.f2 as u128;
    if (2 * g2) % m == 0 {
        Some(27)
    } else if (4 * g2) % m == 0 {
        Some(54)
    } else {
        None
    }
}

/// Whether `K` clears the non-wrapping margin of `template`.
pub fn lemma2_margin(template: &CriticalTemplate, k: usize) -> bool {
    k >= template.lemma2_threshold()
}

/// Result of the exhaustive non-wrapping check at one length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lemma2Scan {
    pub k: u64,
    pub pairs: usize,
    /// First QPP with no usable `x`.
    pub counterexample: Option<(u64, u64)>,
}

impl Lemma2Scan {
    pub fn holds(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// For every QPP over `Z_K` with a quadratic inverse, looks for an
/// `x = 1 (mod 4)` at which no path of the matching template (weight 64 or
/// 67) wraps around the block end.
pub fn lemma2_scan(k: u64) -> Lemma2Scan {
    let pairs: Vec<QppPair> = (1..k)
        .step_by(2)
        .flat_map(|f1| (1..k).map(move |f2| (f1, f2)))
        .filter_map(|(f1, f2)| Qpp::new(f1, f2, k).ok())
        .filter_map(|f| QppPair::new(f).ok())
        .collect();
    let counterexample = pairs
        .par_iter()
        .find_first(|q| {
            let t = CriticalTemplate::for_residue(&q.f);
            !(1..k as i64).step_by(4).any(|x| t.wraps(q, x).is_none())
        })
        .map(|q| (q.f.f1, q.f.f2));
    Lemma2Scan { k, pairs: pairs.len(), counterexample }
}

/// How a distance estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exhaustive,
    Impulse,
    Construction,
}

/// A distance estimate backed by a witness codeword.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceReport {
    pub estimate: usize,
    /// Input word of the witness (1-positions).
    pub witness: Vec<usize>,
    pub method: Method,
    pub verified: bool,
    /// Decoder runs (impulse) or codewords (exhaustive) examined.
    pub trials: u64,
}

/// Weight of the transmitted bits of `u` under `layout`, after checking
/// that `u` is a codeword input.
pub fn codeword_weight(code: &Code3d, layout: &Layout, u: &[u8]) -> Result<usize> {
    let cw = code.encode(u)?;
    Ok(weight(&code.transmit(&cw, layout)))
}

/// Re-encodes the witness and compares with the reported weight.
pub fn verify_report(code: &Code3d, layout: &Layout, r: &DistanceReport) -> bool {
    let mut u = vec![0u8; code.k()];
    for &i in &r.witness {
        if i >= u.len() {
            return false;
        }
        u[i] = 1;
    }
    r.estimate > 0 && codeword_weight(code, layout, &u).is_ok_and(|w| w == r.estimate)
}

/// Largest `K` accepted by [`exhaustive_dmin`].
pub const EXHAUSTIVE_MAX_K: usize = 20;

/// Exact minimum distance over all nonzero information words.
pub fn exhaustive_dmin(code: &Code3d, layout: &Layout) -> Result<DistanceReport> {
    if code.k() > EXHAUSTIVE_MAX_K {
        return Err(Error::InvalidInput(format!("exhaustive search needs K <= {EXHAUSTIVE_MAX_K}")));
    }
    let n = code.info_len();
    let best = (1u64..1 << n)
        .into_par_iter()
        .map(|m| {
            let info: Vec<u8> = (0..n).map(|i| ((m >> i) & 1) as u8).collect();
            let u = code.terminate(&info)?;
            let cw = code.encode(&u)?;
            Ok::<_, Error>((weight(&code.transmit(&cw, layout)), m, u))
        })
        .try_reduce_with(|a, b| Ok(if (b.0, b.1) < (a.0, a.1) { b } else { a }));
    let (w, _, u) = best.ok_or_else(|| Error::InvalidInput("code has no nonzero information word".into()))??;
    let witness = (0..u.len()).filter(|&i| u[i] == 1).collect();
    Ok(DistanceReport { estimate: w, witness, method: Method::Exhaustive, verified: true, trials: (1u64 << n) - 1 })
}

/// Impulse ranges and decoder settings for [`impulse_dmin`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulseConfig {
    /// Second and third impulses lie within this distance of the anchor.
    pub window: usize,
    /// Largest impulse set tried (1 to 3).
    pub max_impulses: usize,
    /// Impulse LLR as a multiple of the noiseless channel LLR.
    pub magnitude: f32,
    /// Noise floor setting the channel LLR of the all-zero frame.
    pub ebn0_db: f64,
    /// Anchors are `0, stride, 2 stride, ...` below `anchor_limit`.
    pub stride: usize,
    pub anchor_limit: Option<usize>,
    pub decoder: DecoderConfig,
}

impl ImpulseConfig {
    pub fn standard() -> Self {
        ImpulseConfig {
            window: 30,
            max_impulses: 3,
            magnitude: 200.0,
            ebn0_db: 5.0,
            stride: 1,
            anchor_limit: None,
            decoder: DecoderConfig { max_iter: 16, ..DecoderConfig::default() },
        }
    }

    /// Wider impulse ranges for refining a short list.
    pub fn strong() -> Self {
        ImpulseConfig { window: 60, ..Self::standard() }
    }

    fn anchors(&self, k: usize) -> Vec<usize> {
        (0..self.anchor_limit.unwrap_or(k).min(k)).step_by(self.stride.max(1)).collect()
    }

    fn sets(&self, k: usize, anchor: usize) -> Vec<Vec<usize>> {
        let w = self.window.min(k.saturating_sub(1));
        let at = |d: usize| (anchor + d) % k;
        let mut out = vec![vec![anchor]];
        if self.max_impulses >= 2 {
            out.extend((1..=w).map(|a| vec![anchor, at(a)]));
        }
        if self.max_impulses >= 3 {
            for a in 1..=w {
                out.extend((a + 1..=w).map(|b| vec![anchor, at(a), at(b)]));
            }
        }
        out
    }
}

/// Impulse-method upper bound on the minimum distance. Impulses are
/// placed on the systematic bits of an all-zero frame; every decision
/// that re-encodes to a nonzero codeword contributes its weight.
///
/// With `reject_below = Some(d)` the scan stops as soon as a codeword
/// lighter than `d` turns up; the reported value is then still a valid
/// upper bound.
pub fn impulse_dmin(code: &Code3d, layout: &Layout, cfg: &ImpulseConfig, reject_below: Option<usize>) -> Result<DistanceReport> {
    let k = code.k();
    let rate = code.actual_rate(layout);
    let sigma = crate::decode::ebn0_to_sigma(cfg.ebn0_db, rate);
    let l0 = (2.0 / (sigma * sigma)) as f32;
    let frame = LlrFrame::from_transmitted(code, layout, &vec![l0; layout.len()])?;
    let dec = Decoder3d::new(code, cfg.decoder);
    let best = AtomicUsize::new(usize::MAX);
    let trials = AtomicUsize::new(0);
    let stop = |b: usize| reject_below.is_some_and(|d| b < d);
    let found: Vec<(usize, Vec<usize>)> = cfg
        .anchors(k)
        .into_par_iter()
        .filter_map(|anchor| {
            let mut local: Option<(usize, Vec<usize>)> = None;
            let mut prior = vec![0f32; k];
            for set in cfg.sets(k, anchor) {
                if stop(best.load(Ordering::Relaxed)) {
                    break;
                }
                for &i in &set {
                    prior[i] = -(cfg.magnitude + 1.0) * l0;
                }
                // every terminated decision along the way is a codeword
                let mut seen: Vec<Vec<u8>> = Vec::new();
                dec.decode_observed(&frame, Some(&prior), |u| {
                    if u.iter().any(|&b| b == 1) && !seen.iter().any(|s| s == u) && code.is_terminated(u).unwrap_or(false) {
                        seen.push(u.to_vec());
                    }
                });
                for &i in &set {
                    prior[i] = 0.0;
                }
                trials.fetch_add(1, Ordering::Relaxed);
                for u in seen {
                    let Ok(w) = codeword_weight(code, layout, &u) else { continue };
                    let support: Vec<usize> = (0..k).filter(|&i| u[i] == 1).collect();
                    if local.as_ref().is_none_or(|(lw, ls)| (w, &support) < (*lw, ls)) {
                        local = Some((w, support));
                        best.fetch_min(w, Ordering::Relaxed);
                    }
                }
            }
            local
        })
        .collect();
    let trials = trials.into_inner() as u64;
    match found.into_iter().min() {
        Some((estimate, witness)) => Ok(DistanceReport { estimate, witness, method: Method::Impulse, verified: true, trials }),
        None => Err(Error::InvalidInput(format!("no nonzero codeword found after {trials} impulse trials"))),
    }
}

/// Fast FER screen applied before the distance ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceFilter {
    pub ebn0_db: f64,
    pub frames: u64,
    /// Patterns whose FER exceeds this are flagged non-converging.
    pub max_fer: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PunctureBudget {
    pub impulse: ImpulseConfig,
    pub strong: ImpulseConfig,
    /// Number of leading candidates re-estimated with `strong`.
    pub refine_top: usize,
    pub filter: Option<ConvergenceFilter>,
}

impl Default for PunctureBudget {
    fn default() -> Self {
        PunctureBudget { impulse: ImpulseConfig::standard(), strong: ImpulseConfig::strong(), refine_top: 5, filter: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternScore {
    /// Position in [`RatePattern::admissible`] order.
    pub index: usize,
    pub pattern: RatePattern,
    /// Impulse upper bound, absent for filtered-out patterns.
    pub bound: Option<usize>,
    pub verified: bool,
    /// Scan stopped early by the running minimum distance.
    pub rejected: bool,
    pub converging: bool,
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PunctureSearch {
    pub rate: Rate,
    pub candidates: usize,
    pub non_converging: usize,
    /// Best first.
    pub ranked: Vec<PatternScore>,
}

impl PunctureSearch {
    pub const CSV_HEADER: &'static str = "pattern,bound,verified";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for p in &self.ranked {
            let pat = format!(
                "{}|{}|{}",
                crate::encoder::mask_to_string(&p.pattern.keep_a),
                crate::encoder::mask_to_string(&p.pattern.keep_b),
                crate::encoder::mask_to_string(&p.pattern.keep_c)
            );
            let b = p.bound.map_or(String::new(), |b| b.to_string());
            s.push_str(&format!("{pat},{b},{}\n", p.verified));
        }
        s
    }
}

/// Ranks every admissible periodic puncturing pattern for `target` by its
/// impulse upper bound. A candidate is abandoned once it shows a codeword
/// lighter than the best bound seen so far; the leading `refine_top`
/// entries are then re-estimated with the stronger impulse ranges.
pub fn search_puncture_patterns(code: &Code3d, target: Rate, budget: &PunctureBudget) -> Result<PunctureSearch> {
    let candidates = RatePattern::admissible(code.cfg.lambda, target)?;
    let mut scores = Vec::with_capacity(candidates.len());
    let mut running = 0usize;
    let mut non_converging = 0;
    for (index, pattern) in candidates.iter().enumerate() {
        let layout = code.layout(pattern);
        let converging = match budget.filter {
            None => true,
            Some(f) => {
                let fc = FerConfig {
                    snr_db: vec![f.ebn0_db],
                    max_frames: f.frames,
                    max_errors: f.frames,
                    seed: f.seed,
                    batch: f.frames.max(1),
                    decoder: budget.impulse.decoder,
                };
                run_fer(code, &layout, &fc)?[0].fer() <= f.max_fer
            }
        };
        if !converging {
            non_converging += 1;
            scores.push(PatternScore { index, pattern: pattern.clone(), bound: None, verified: false, rejected: false, converging, refined: false });
            continue;
        }
        let r = impulse_dmin(code, &layout, &budget.impulse, (running > 0).then_some(running))?;
        let rejected = running > 0 && r.estimate < running;
        running = running.max(r.estimate);
        let verified = verify_report(code, &layout, &r);
        scores.push(PatternScore { index, pattern: pattern.clone(), bound: Some(r.estimate), verified, rejected, converging, refined: false });
    }
    let order = |v: &mut Vec<PatternScore>| v.sort_by(|a, b| b.bound.cmp(&a.bound).then(a.index.cmp(&b.index)));
    order(&mut scores);
    for s in scores.iter_mut().take(budget.refine_top).filter(|s| s.bound.is_some()) {
        let layout = code.layout(&s.pattern);
        if let Ok(r) = impulse_dmin(code, &layout, &budget.strong, None) {
            if s.bound.is_none_or(|b| r.estimate < b) {
                s.bound = Some(r.estimate);
                s.verified = verify_report(code, &layout, &r);
            }
        }
        s.refined = true;
    }
    order(&mut scores);
    Ok(PunctureSearch { rate: target, candidates: candidates.len(), non_converging, ranked: scores })
}

/// The `13/15` trellis.
pub fn umts_trellis() -> Trellis {
    Trellis::new(Generator::umts()).expect("13/15 is a valid generator")
}
