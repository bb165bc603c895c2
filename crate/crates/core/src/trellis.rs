//! Recursive systematic convolutional encoders of rate 1 (parity only).
//!
//! A [`Generator`] holds the feedforward and feedback polynomials with bit
//! `i` of each integer being the coefficient of `D^i`. The octal string
//! `"13/15"` therefore means feedforward `1 + D + D^3` over feedback
//! `1 + D^2 + D^3`. The [`Trellis`] is built in observer canonical form and
//! the state integer packs the register contents with the first cell in
//! bit 0.
//!
//! ```
//! use turbo3d::trellis::{Trellis, Termination};
//! let t = Trellis::from_octal("13/15").unwrap();
//! let enc = t.encode(&[1, 1, 0, 0, 0, 1], Termination::Open).unwrap();
//! assert_eq!(enc.parity, vec![1, 0, 0, 0, 1, 1]);
//! assert_eq!(enc.end_state, 0);
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a constituent trellis is started and ended over a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    /// Zero start state, end state left free.
    Open,
    /// Start state equals end state (circulation state).
    Tailbiting,
    /// Zero start state and zero end state.
    Dual,
}

impl std::str::FromStr for Termination {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "open" | "none" => Ok(Termination::Open),
            "tailbiting" | "tb" => Ok(Termination::Tailbiting),
            "dual" | "zero" => Ok(Termination::Dual),
            _ => Err(Error::Parse(format!("unknown termination '{s}'"))),
        }
    }
}

/// Feedforward / feedback polynomial pair. Serialized as the octal string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Generator {
    pub feedforward: u32,
    pub feedback: u32,
}

fn degree(p: u32) -> usize {
    if p == 0 {
        0
    } else {
        31 - p.leading_zeros() as usize
    }
}

impl Generator {
    pub fn new(feedforward: u32, feedback: u32) -> Result<Self> {
        if feedforward == 0 {
            return Err(Error::InvalidGenerator("feedforward polynomial is zero".into()));
        }
        if feedback & 1 == 0 {
            return Err(Error::InvalidGenerator(
                "feedback polynomial must have a nonzero constant term".into(),
            ));
        }
        let g = Generator { feedforward, feedback };
        if g.memory() > 16 {
            return Err(Error::InvalidGenerator("memory above 16 is not supported".into()));
        }
        Ok(g)
    }

    /// Parses `"ff/fb"` in octal (`"13/15"`) or as coefficient lists with
    /// the constant term first (`"1,1,0,1/1,0,1,1"`).
    pub fn parse(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('/')
            .ok_or_else(|| Error::Parse(format!("expected 'ff/fb', got '{s}'")))?;
        Self::new(parse_poly(a)?, parse_poly(b)?)
    }

    pub fn memory(&self) -> usize {
        degree(self.feedforward).max(degree(self.feedback))
    }

    pub fn to_octal(&self) -> String {
        format!("{:o}/{:o}", self.feedforward, self.feedback)
    }

    /// The 8-state encoder with feedforward 13 and feedback 15 (octal).
    pub fn umts() -> Self {
        Generator { feedforward: 0o13, feedback: 0o15 }
    }

    /// The 4-state rate-1 encoder `1/(1+D^2)`.
    pub fn patch() -> Self {
        Generator { feedforward: 1, feedback: 0o5 }
    }

    /// The memoryless identity encoder.
    pub fn identity() -> Self {
        Generator { feedforward: 1, feedback: 1 }
    }
}

impl From<Generator> for String {
    fn from(g: Generator) -> String {
        g.to_octal()
    }
}

impl TryFrom<String> for Generator {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Generator::parse(&s)
    }
}

fn parse_poly(s: &str) -> Result<u32> {
    let s = s.trim();
    if s.contains(',') {
        let mut p = 0u32;
        for (i, c) in s.split(',').enumerate() {
            match c.trim() {
                "0" => {}
                "1" => {
                    if i >= 32 {
                        return Err(Error::Parse("polynomial too long".into()));
                    }
                    p |= 1 << i
                }
                other => return Err(Error::Parse(format!("bad coefficient '{other}'"))),
            }
        }
        Ok(p)
    } else {
        u32::from_str_radix(s, 8).map_err(|e| Error::Parse(format!("bad octal '{s}': {e}")))
    }
}

/// Result of encoding one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    /// Parity bits for the block (one per input bit).
    pub parity: Vec<u8>,
    pub start_state: u32,
    /// State after the block, before any tail.
    pub end_state: u32,
    /// Tail input bits appended in [`Termination::Dual`] mode (length `nu`).
    pub tail_input: Vec<u8>,
    /// Parity bits produced by the tail.
    pub tail_parity: Vec<u8>,
}

/// Fully tabulated trellis of a rate-1 recursive encoder.
#[derive(Debug, Clone)]
pub struct Trellis {
    pub generator: Generator,
    nu: usize,
    next: Vec<[u32; 2]>,
    out: Vec<[u8; 2]>,
    // state update s' = A s + b u over GF(2), A stored by columns
    a_cols: Vec<u32>,
    b_vec: u32,
    tails: Vec<Vec<u8>>,
}

impl Trellis {
    pub fn new(generator: Generator) -> Result<Self> {
        let g = Generator::new(generator.feedforward, generator.feedback)?;
        let nu = g.memory();
        let ns = 1usize << nu;
        let bit = |p: u32, i: usize| -> u32 { (p >> i) & 1 };
        let n = g.feedforward;
        let d = g.feedback;
        let mut next = vec![[0u32; 2]; ns];
        let mut out = vec![[0u8; 2]; ns];
        for s in 0..ns as u32 {
            for u in 0..2u32 {
                let s1 = s & 1;
                let z = if nu == 0 { bit(n, 0) & u } else { (bit(n, 0) & u) ^ s1 };
                let mut ns_ = 0u32;
                for i in 1..=nu {
                    let upper = if i < nu { (s >> i) & 1 } else { 0 };
                    let v = upper ^ (bit(n, i) & u) ^ (bit(d, i) & z);
                    ns_ |= v << (i - 1);
                }
                next[s as usize][u as usize] = ns_;
                out[s as usize][u as usize] = z as u8;
            }
        }
        let a_cols = (0..nu).map(|i| next[1 << i][0]).collect();
        let b_vec = next[0][1];
        let mut t = Trellis { generator: g, nu, next, out, a_cols, b_vec, tails: Vec::new() };
        t.tails = t.build_tails()?;
        Ok(t)
    }

    pub fn from_octal(s: &str) -> Result<Self> {
        Self::new(Generator::parse(s)?)
    }

    fn build_tails(&self) -> Result<Vec<Vec<u8>>> {
        let ns = self.num_states();
        let mut tails = Vec::with_capacity(ns);
        for s in 0..ns as u32 {
            let mut found = None;
            for seq in 0..(1u32 << self.nu) {
                let mut st = s;
                for i in 0..self.nu {
                    st = self.next[st as usize][((seq >> i) & 1) as usize];
                }
                if st == 0 {
                    found = Some((0..self.nu).map(|i| ((seq >> i) & 1) as u8).collect());
                    break;
                }
            }
            match found {
                Some(t) => tails.push(t),
                None => {
                    return Err(Error::InvalidGenerator(format!(
                        "state {s} cannot be driven to zero in {} steps",
                        self.nu
                    )))
                }
            }
        }
        Ok(tails)
    }

    pub fn memory(&self) -> usize {
        self.nu
    }

    pub fn num_states(&self) -> usize {
        1 << self.nu
    }

    #[inline]
    pub fn next_state(&self, state: u32, input: u8) -> u32 {
        self.next[state as usize][input as usize]
    }

    #[inline]
    pub fn output(&self, state: u32, input: u8) -> u8 {
        self.out[state as usize][input as usize]
    }

    /// Input sequence of length `nu` that drives `state` to zero.
    pub fn tail_for(&self, state: u32) -> &[u8] {
        &self.tails[state as usize]
    }

    /// Runs the encoder from `start`, returning parity bits and end state.
    pub fn run(&self, start: u32, input: &[u8]) -> (Vec<u8>, u32) {
        let mut s = start;
        let mut parity = Vec::with_capacity(input.len());
        for &u in input {
            let u = u & 1;
            parity.push(self.out[s as usize][u as usize]);
            s = self.next[s as usize][u as usize];
        }
        (parity, s)
    }

    /// End state reached from `start` without producing output.
    pub fn end_state(&self, start: u32, input: &[u8]) -> u32 {
        input.iter().fold(start, |s, &u| self.next[s as usize][(u & 1) as usize])
    }

    pub fn encode(&self, input: &[u8], mode: Termination) -> Result<Encoded> {
        check_bits(input)?;
        match mode {
            Termination::Open => {
                let (parity, end) = self.run(0, input);
                Ok(Encoded { parity, start_state: 0, end_state: end, tail_input: vec![], tail_parity: vec![] })
            }
            Termination::Tailbiting => {
                let s0 = self.circulation_state(input)?;
                let (parity, end) = self.run(s0, input);
                debug_assert_eq!(end, s0);
                Ok(Encoded { parity, start_state: s0, end_state: end, tail_input: vec![], tail_parity: vec![] })
            }
            Termination::Dual => {
                let (parity, end) = self.run(0, input);
                let tail_input = self.tails[end as usize].clone();
                let (tail_parity, fin) = self.run(end, &tail_input);
                debug_assert_eq!(fin, 0);
                Ok(Encoded { parity, start_state: 0, end_state: end, tail_input, tail_parity })
            }
        }
    }

    /// State transition matrix `A` (columns) and input vector `b` of the
    /// linear recursion `s' = A s + b u`.
    pub fn state_map(&self) -> (Vec<u32>, u32) {
        (self.a_cols.clone(), self.b_vec)
    }

    /// `A^k` as column bitmasks.
    pub fn transition_power(&self, k: usize) -> Vec<u32> {
        gf2_pow(&self.a_cols, k)
    }

    /// All states `s` with `run(s, input).1 == s`, in increasing order.
    pub fn circulation_states(&self, input: &[u8]) -> Vec<u32> {
        if self.nu == 0 {
            return vec![0];
        }
        let c = self.end_state(0, input);
        let ak = self.transition_power(input.len());
        // (A^K + I) s = c
        let m: Vec<u32> = ak.iter().enumerate().map(|(i, col)| col ^ (1 << i)).collect();
        (0..self.num_states() as u32).filter(|&s| gf2_apply(&m, s) == c).collect()
    }

    /// Smallest circulation state; an error when none exists.
    pub fn circulation_state(&self, input: &[u8]) -> Result<u32> {
        self.circulation_states(input)
            .first()
            .copied()
            .ok_or(Error::NoCirculationState(input.len()))
    }

    /// True when `A^k + I` is invertible, i.e. every input has exactly one
    /// circulation state at block length `k`.
    pub fn tailbiting_unique(&self, k: usize) -> bool {
        let ak = self.transition_power(k);
        let m: Vec<u32> = ak.iter().enumerate().map(|(i, col)| col ^ (1 << i)).collect();
        gf2_rank(&m) == self.nu
    }

    /// Input weight and parity weight of the path from `start`.
    pub fn path_weight(&self, input: &[u8], start: u32) -> (usize, usize) {
        let (p, _) = self.run(start, input);
        (weight(input), weight(&p))
    }

    /// Whether `(input, parity)` is a closed path from some state.
    pub fn is_tailbiting_codeword(&self, input: &[u8], parity: &[u8]) -> bool {
        input.len() == parity.len()
            && self.circulation_states(input).into_iter().any(|s| self.run(s, input).0 == parity)
    }
}

pub(crate) fn check_bits(v: &[u8]) -> Result<()> {
    if v.iter().any(|&b| b > 1) {
        return Err(Error::InvalidInput("bit vectors must contain only 0 and 1".into()));
    }
    Ok(())
}

pub fn weight(v: &[u8]) -> usize {
    v.iter().filter(|&&b| b != 0).count()
}

pub(crate) fn gf2_apply(cols: &[u32], x: u32) -> u32 {
    let mut r = 0;
    for (i, c) in cols.iter().enumerate() {
        if (x >> i) & 1 == 1 {
            r ^= c;
        }
    }
    r
}

pub(crate) fn gf2_mul(a: &[u32], b: &[u32]) -> Vec<u32> {
    b.iter().map(|&col| gf2_apply(a, col)).collect()
}

pub(crate) fn gf2_pow(a: &[u32], mut k: usize) -> Vec<u32> {
    let n = a.len();
    let mut result: Vec<u32> = (0..n).map(|i| 1u32 << i).collect();
    let mut base = a.to_vec();
    while k > 0 {
        if k & 1 == 1 {
            result = gf2_mul(&base, &result);
        }
        base = gf2_mul(&base, &base);
        k >>= 1;
    }
    result
}

pub(crate) fn gf2_rank(cols: &[u32]) -> usize {
    let mut v: Vec<u32> = cols.to_vec();
    let mut rank = 0;
    for bit in 0..32 {
        if let Some(p) = (rank..v.len()).find(|&i| (v[i] >> bit) & 1 == 1) {
            v.swap(rank, p);
            let pivot = v[rank];
            for (i, x) in v.iter_mut().enumerate() {
                if i != rank && (*x >> bit) & 1 == 1 {
                    *x ^= pivot;
                }
            }
            rank += 1;
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn octal_parse_roundtrip() {
        let g = Generator::parse("13/15").unwrap();
        assert_eq!(g, Generator::umts());
        assert_eq!(g.memory(), 3);
        assert_eq!(g.to_octal(), "13/15");
        assert_eq!(Generator::parse("1,1,0,1/1,0,1,1").unwrap(), g);
        assert!(Generator::parse("0/15").is_err());
        assert!(Generator::parse("13/14").is_err());
    }

    #[test]
    fn tables_sizes() {
        assert_eq!(Trellis::new(Generator::umts()).unwrap().num_states(), 8);
        assert_eq!(Trellis::new(Generator::patch()).unwrap().num_states(), 4);
        assert_eq!(Trellis::new(Generator::identity()).unwrap().num_states(), 1);
    }

    #[test]
    fn impulse_response_matches_division() {
        // parity of a single 1 is the power series of ff/fb
        let t = Trellis::new(Generator::umts()).unwrap();
        let mut input = vec![0u8; 20];
        input[0] = 1;
        let (p, _) = t.run(0, &input);
        // long division over GF(2)
        let n = 0b1011u32;
        let d = 0b1101u32;
        let mut rem = vec![0u8; 24];
        for i in 0..4 {
            rem[i] = ((n >> i) & 1) as u8;
        }
        let mut q = vec![0u8; 20];
        for i in 0..20 {
            q[i] = rem[i];
            if q[i] == 1 {
                for j in 0..4 {
                    rem[i + j] ^= ((d >> j) & 1) as u8;
                }
            }
        }
        assert_eq!(p, q);
    }

    #[test]
    fn patch_encoder_is_accumulator_of_period_two() {
        let t = Trellis::new(Generator::patch()).unwrap();
        let (p, _) = t.run(0, &[1, 0, 0, 0, 0, 0]);
        assert_eq!(p, vec![1, 0, 1, 0, 1, 0]);
        let t = Trellis::new(Generator::identity()).unwrap();
        assert_eq!(t.run(0, &[1, 0, 1]).0, vec![1, 0, 1]);
    }

    #[test]
    fn dual_tail_returns_to_zero() {
        let t = Trellis::new(Generator::umts()).unwrap();
        let e = t.encode(&[1, 0, 1, 1, 0, 0, 1, 0], Termination::Dual).unwrap();
        assert_eq!(e.tail_input.len(), 3);
        assert_eq!(t.end_state(e.end_state, &e.tail_input), 0);
        let e = t.encode(&[0; 8], Termination::Dual).unwrap();
        assert_eq!(e.tail_input, vec![0, 0, 0]);
    }

    #[test]
    fn tailbiting_length_multiple_of_seven_is_singular() {
        let t = Trellis::new(Generator::umts()).unwrap();
        assert!(!t.tailbiting_unique(7));
        assert!(!t.tailbiting_unique(14));
        assert!(t.tailbiting_unique(8));
        // 1 + D^2 = (1 + D)^2, so A always has eigenvalue 1
        let p = Trellis::new(Generator::patch()).unwrap();
        assert!((1..20).all(|k| !p.tailbiting_unique(k)));
    }

    #[test]
    fn rejects_non_binary() {
        let t = Trellis::new(Generator::umts()).unwrap();
        assert!(t.encode(&[0, 2], Termination::Open).is_err());
    }
}
