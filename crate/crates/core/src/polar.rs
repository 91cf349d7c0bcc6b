//! The polarizing transform and the successive-cancellation posterior
//! recursion for nonuniform leaf priors.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!
//! * `t` is the transform-domain vector (decided left to right), `v = t G`
//!   is the leaf-domain vector whose coordinates are i.i.d. under the source
//!   prior and observed through the channel. `G` includes the bit-reversal
//!   permutation and is an involution over GF(2), so `t = v G` as well.
//! * Posteriors `P(T_i | T^{i-1}, observations)` are exact under the product
//!   law of the leaves; the nonuniform prior enters only through the leaf
//!   belief pairs.
//! * Argmax decisions break ties toward 0.
//!
//! The recursion is a depth-first traversal over per-level scratch buffers:
//! each tree node is combined exactly once per pass, which keeps a full pass
//! at O(N log N) belief operations.

use serde::{Deserialize, Serialize};

use crate::channel::Dmc;
use crate::error::{Error, Result};
use crate::rng::PrefixHash;

/// Bit-reversal permutation on `2^n` indices; an involution.
pub fn bit_reversal(n: u32) -> Vec<usize> {
    if n == 0 {
        return vec![0];
    }
    let len = 1usize << n;
    (0..len)
        .map(|i| i.reverse_bits() >> (usize::BITS - n))
        .collect()
}

/// Applies the polarizing transform `u -> u G` over GF(2) in O(N log N).
///
/// `G` contains the bit-reversal factor, so the map is an involution.
pub fn polar_transform(u: &[bool]) -> Result<Vec<bool>> {
    let len = u.len();
    if !len.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "transform length {len} is not a power of two"
        )));
    }
    let n = len.trailing_zeros();
    let mut x = u.to_vec();
    let mut block = len;
    while block > 1 {
        let half = block / 2;
        for start in (0..len).step_by(block) {
            for j in start..start + half {
                x[j] ^= x[j + half];
            }
        }
        block = half;
    }
    let rev = bit_reversal(n);
    Ok((0..len).map(|j| x[rev[j]]).collect())
}

/// A normalized posterior over one bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefPair {
    pub p0: f64,
    pub p1: f64,
}

impl BeliefPair {
    /// Normalizes raw masses. Returns `None` when both masses vanish.
    pub fn from_masses(w0: f64, w1: f64) -> Option<Self> {
        let sum = w0 + w1;
        if sum <= 0.0 || !sum.is_finite() {
            return None;
        }
        Some(BeliefPair {
            p0: w0 / sum,
            p1: w1 / sum,
        })
    }

    pub fn uniform() -> Self {
        BeliefPair { p0: 0.5, p1: 0.5 }
    }

    /// Point mass on `bit`.
    pub fn certain(bit: bool) -> Self {
        if bit {
            BeliefPair { p0: 0.0, p1: 1.0 }
        } else {
            BeliefPair { p0: 1.0, p1: 0.0 }
        }
    }

    /// Posterior of the parity `a ^ b` of two independent bits.
    pub fn check_combine(a: Self, b: Self) -> Self {
        let w0 = a.p0 * b.p0 + a.p1 * b.p1;
        let w1 = a.p0 * b.p1 + a.p1 * b.p0;
        // conditioning on a zero-probability prefix yields no information
        BeliefPair::from_masses(w0, w1).unwrap_or_else(BeliefPair::uniform)
    }

    /// Posterior of `b` given the decided parity `s = a ^ b`.
    pub fn given_combine(a: Self, b: Self, s: bool) -> Self {
        let (a_for0, a_for1) = if s { (a.p1, a.p0) } else { (a.p0, a.p1) };
        let w0 = a_for0 * b.p0;
        let w1 = a_for1 * b.p1;
        BeliefPair::from_masses(w0, w1).unwrap_or_else(BeliefPair::uniform)
    }

    /// MAP decision; ties go to 0.
    pub fn argmax(&self) -> bool {
        self.p1 > self.p0
    }

    /// Mass assigned to `bit`.
    pub fn mass(&self, bit: bool) -> f64 {
        if bit {
            self.p1
        } else {
            self.p0
        }
    }

    /// Bhattacharyya statistic `2 sqrt(p0 p1)` of this pair.
    pub fn bhattacharyya(&self) -> f64 {
        2.0 * (self.p0 * self.p1).sqrt()
    }

    /// Binary entropy of the pair in bits.
    pub fn entropy(&self) -> f64 {
        crate::channel::binary_entropy(self.p0)
    }
}

/// Node belief for the traversal; implemented for a single posterior and for
/// the fused (observation, prior-only) pair used by decoders that evaluate
/// deterministic rules alongside channel posteriors.
pub trait PolarBelief: Copy {
    fn check(a: Self, b: Self) -> Self;
    fn given(a: Self, b: Self, bit: bool) -> Self;
}

impl PolarBelief for BeliefPair {
    fn check(a: Self, b: Self) -> Self {
        BeliefPair::check_combine(a, b)
    }

    fn given(a: Self, b: Self, bit: bool) -> Self {
        BeliefPair::given_combine(a, b, bit)
    }
}

/// Observation-conditioned and prior-only posteriors evolved in lockstep.
#[derive(Debug, Clone, Copy)]
pub struct DualBelief {
    pub obs: BeliefPair,
    pub prior: BeliefPair,
}

impl PolarBelief for DualBelief {
    fn check(a: Self, b: Self) -> Self {
        DualBelief {
            obs: BeliefPair::check_combine(a.obs, b.obs),
            prior: BeliefPair::check_combine(a.prior, b.prior),
        }
    }

    fn given(a: Self, b: Self, bit: bool) -> Self {
        DualBelief {
            obs: BeliefPair::given_combine(a.obs, b.obs, bit),
            prior: BeliefPair::given_combine(a.prior, b.prior, bit),
        }
    }
}

/// Reusable successive-cancellation workspace for block length `2^n`.
///
/// One pass costs O(N log N) combines; the buffers are owned per engine, so
/// distinct blocks can be processed concurrently by distinct engines.
pub struct ScEngine<B> {
    n: u32,
    rev: Vec<usize>,
    levels: Vec<Vec<B>>,
}

impl<B: PolarBelief> ScEngine<B> {
    pub fn new(n: u32) -> Self {
        let len = 1usize << n;
        let levels = (0..=n).map(|l| Vec::with_capacity(len >> l)).collect();
        ScEngine {
            n,
            rev: bit_reversal(n),
            levels,
        }
    }

    pub fn block_len(&self) -> usize {
        1usize << self.n
    }

    /// Runs one left-to-right pass. `decide` is called once per transform
    /// index, in order, with the exact posterior given all previous decisions;
    /// its return value is taken as `t_i`. Returns `(t, v)` with `v = t G`.
    pub fn run<F>(&mut self, leaves: &[B], mut decide: F) -> Result<(Vec<bool>, Vec<bool>)>
    where
        F: FnMut(usize, B) -> Result<bool>,
    {
        let len = self.block_len();
        if leaves.len() != len {
            return Err(Error::InvalidParameter(format!(
                "expected {len} leaf beliefs, got {}",
                leaves.len()
            )));
        }
        self.levels[0].clear();
        let rev = &self.rev;
        self.levels[0].extend((0..len).map(|k| leaves[rev[k]]));
        let mut tree_order = vec![false; len];
        let mut bits = Vec::with_capacity(len);
        let mut next = 0usize;
        traverse(&mut self.levels, &mut tree_order, &mut next, &mut |i, b| {
            let bit = decide(i, b)?;
            bits.push(bit);
            Ok(bit)
        })?;
        let v = (0..len).map(|j| tree_order[self.rev[j]]).collect();
        Ok((bits, v))
    }
}

fn traverse<B, F>(
    levels: &mut [Vec<B>],
    out: &mut [bool],
    next: &mut usize,
    decide: &mut F,
) -> Result<()>
where
    B: PolarBelief,
    F: FnMut(usize, B) -> Result<bool>,
{
    let len = out.len();
    if len == 1 {
        let belief = levels[0][0];
        out[0] = decide(*next, belief)?;
        *next += 1;
        return Ok(());
    }
    let half = len / 2;
    {
        let (cur, rest) = levels.split_at_mut(1);
        let cur = &cur[0];
        let child = &mut rest[0];
        child.clear();
        child.extend((0..half).map(|j| B::check(cur[j], cur[j + half])));
    }
    let (a_out, b_out) = out.split_at_mut(half);
    traverse(&mut levels[1..], a_out, next, decide)?;
    {
        let (cur, rest) = levels.split_at_mut(1);
        let cur = &cur[0];
        let child = &mut rest[0];
        child.clear();
        child.extend((0..half).map(|j| B::given(cur[j], cur[j + half], a_out[j])));
    }
    traverse(&mut levels[1..], b_out, next, decide)?;
    for j in 0..half {
        let b = out[j + half];
        out[j] ^= b;
    }
    Ok(())
}

/// Builds leaf beliefs from per-position priors only (no observation).
pub fn prior_leaves(prior_p1: &[f64]) -> Result<Vec<BeliefPair>> {
    prior_p1
        .iter()
        .enumerate()
        .map(|(j, &p)| BeliefPair::from_masses(1.0 - p, p).ok_or(Error::DegenerateBelief(j)))
        .collect()
}

/// Builds leaf beliefs `(P(v=0) L(y|0), P(v=1) L(y|1))`, normalized, from
/// per-position priors, an effective channel, and observed symbols.
pub fn observation_leaves(
    prior_p1: &[f64],
    channel: &Dmc,
    obs: &[usize],
) -> Result<Vec<BeliefPair>> {
    if prior_p1.len() != obs.len() {
        return Err(Error::InvalidParameter(format!(
            "{} priors but {} observations",
            prior_p1.len(),
            obs.len()
        )));
    }
    prior_p1
        .iter()
        .zip(obs)
        .enumerate()
        .map(|(j, (&p, &y))| {
            BeliefPair::from_masses(
                (1.0 - p) * channel.likelihood(0, y),
                p * channel.likelihood(1, y),
            )
            .ok_or(Error::DegenerateBelief(j))
        })
        .collect()
}

/// Exact posterior `P(T_i | t^{i-1}, observations)` for a single index.
///
/// `prefix` must hold the first `i` decided bits. Positions after `i` do not
/// influence the result.
pub fn bit_posterior(leaves: &[BeliefPair], index: usize, prefix: &[bool]) -> Result<BeliefPair> {
    if prefix.len() != index {
        return Err(Error::InvalidParameter(format!(
            "prefix length {} does not match index {index}",
            prefix.len()
        )));
    }
    let n = leaves.len().trailing_zeros();
    if !leaves.len().is_power_of_two() || index >= leaves.len() {
        return Err(Error::InvalidParameter("bad leaf count or index".into()));
    }
    let mut engine = ScEngine::new(n);
    let mut captured = BeliefPair::uniform();
    engine.run(leaves, |i, belief: BeliefPair| {
        Ok(if i < index {
            prefix[i]
        } else {
            if i == index {
                captured = belief;
            }
            belief.argmax()
        })
    })?;
    Ok(captured)
}

/// Posteriors at every index along a forced path `t`, in one O(N log N) pass.
pub fn posteriors_along_path(leaves: &[BeliefPair], t: &[bool]) -> Result<Vec<BeliefPair>> {
    let n = leaves.len().trailing_zeros();
    let mut engine = ScEngine::new(n);
    let mut out = Vec::with_capacity(t.len());
    engine.run(leaves, |i, belief: BeliefPair| {
        out.push(belief);
        Ok(t[i])
    })?;
    Ok(out)
}

/// What a successive-cancellation pass does at each index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Carries a supplied message bit (encode) / is argmax-decoded (decode).
    Message,
    /// Fresh uniform bit (encode) / argmax-decoded and discarded (decode).
    Random,
    /// Determined by a shared deterministic rule on both sides.
    Rule,
    /// Copied from a supplied value on both sides (chained positions).
    Copy,
}

/// Direction of a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassMode {
    EncodeSample,
    DecodeMap,
}

/// Shared deterministic rule `lambda_i(t^{i-1})`, evaluated identically by
/// encoder and decoder. The prior-only posterior of the current index is
/// supplied so rules can sample from or maximize `P(T_i | t^{i-1})`.
pub trait RuleOracle {
    fn eval(&self, index: usize, prefix: &PrefixHash, prior: BeliefPair) -> bool;
}

/// Output of a full pass: the transform-domain bits, the leaf-domain vector,
/// and the per-index posteriors used for decisions (observation-conditioned
/// when an observation was present, prior-only otherwise).
#[derive(Debug, Clone)]
pub struct PassOutput {
    pub t: Vec<bool>,
    pub v: Vec<bool>,
    pub trace: Vec<BeliefPair>,
}

/// One left-to-right successive-cancellation pass with per-index roles.
///
/// `supplied` provides values for `Message` (encode side) and `Copy` (both
/// sides). In decode mode `obs_leaves` must carry the observation beliefs;
/// rules are always evaluated against the prior-only recursion so both sides
/// agree whenever the decoded prefix matches the true prefix.
pub fn sc_pass(
    prior_leaves_in: &[BeliefPair],
    obs_leaves: Option<&[BeliefPair]>,
    roles: &[Role],
    supplied: &[Option<bool>],
    rule: &dyn RuleOracle,
    mode: PassMode,
    mut rng: Option<&mut dyn rand::RngCore>,
) -> Result<PassOutput> {
    let len = prior_leaves_in.len();
    if roles.len() != len || supplied.len() != len {
        return Err(Error::InvalidParameter(
            "role map and supplied values must cover every index".into(),
        ));
    }
    let n = len.trailing_zeros();
    if !len.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "block length {len} not a power of two"
        )));
    }
    let mut prefix = PrefixHash::new();
    let mut trace = Vec::with_capacity(len);

    let need = |i: usize, value: Option<bool>| {
        value.ok_or_else(|| Error::InvalidParameter(format!("missing supplied value at index {i}")))
    };

    let (t, v) = match obs_leaves {
        Some(obs) => {
            if obs.len() != len {
                return Err(Error::InvalidParameter(
                    "observation leaves length mismatch".into(),
                ));
            }
            let leaves: Vec<DualBelief> = obs
                .iter()
                .zip(prior_leaves_in)
                .map(|(&o, &p)| DualBelief { obs: o, prior: p })
                .collect();
            let mut engine = ScEngine::new(n);
            engine.run(&leaves, |i, belief: DualBelief| {
                trace.push(belief.obs);
                let bit = match roles[i] {
                    Role::Message | Role::Random => match mode {
                        PassMode::EncodeSample => match roles[i] {
                            Role::Message => need(i, supplied[i])?,
                            _ => draw(&mut rng, i)?,
                        },
                        PassMode::DecodeMap => belief.obs.argmax(),
                    },
                    Role::Rule => rule.eval(i, &prefix, belief.prior),
                    Role::Copy => need(i, supplied[i])?,
                };
                prefix.push(bit);
                Ok(bit)
            })?
        }
        None => {
            let mut engine = ScEngine::new(n);
            engine.run(prior_leaves_in, |i, belief: BeliefPair| {
                trace.push(belief);
                let bit = match roles[i] {
                    Role::Message => match mode {
                        PassMode::EncodeSample => need(i, supplied[i])?,
                        PassMode::DecodeMap => belief.argmax(),
                    },
                    Role::Random => match mode {
                        PassMode::EncodeSample => draw(&mut rng, i)?,
                        PassMode::DecodeMap => belief.argmax(),
                    },
                    Role::Rule => rule.eval(i, &prefix, belief),
                    Role::Copy => need(i, supplied[i])?,
                };
                prefix.push(bit);
                Ok(bit)
            })?
        }
    };
    Ok(PassOutput { t, v, trace })
}

fn draw(rng: &mut Option<&mut dyn rand::RngCore>, i: usize) -> Result<bool> {
    match rng {
        Some(r) => Ok(r.next_u32() & 1 == 1),
        None => Err(Error::InvalidParameter(format!(
            "index {i} needs fresh randomness but no stream was supplied"
        ))),
    }
}
