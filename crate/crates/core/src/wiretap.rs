//! The chaining wiretap codec: a seed block plus `m` data blocks per
//! cluster, deterministic rules on the frozen and almost-deterministic
//! coordinates, stochastic mapping of the auxiliary sequence onto channel
//! inputs, and forward cluster decoding.
//!
//! Chained values pair by rank: the k-th smallest index of `E` in block
//! `j` feeds the k-th smallest index of `R2` in block `j + 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::WiretapSpec;
use crate::error::{Error, Result};
use crate::partition::IndexPartition;
use crate::polar::{
    observation_leaves, polar_transform, prior_leaves, sc_pass, BeliefPair, PassMode, PassOutput,
    Role, RuleOracle,
};
use crate::rng::{stream, PrefixHash};

/// How the shared deterministic rules produce their bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleMode {
    /// Sample from the prefix-conditional distribution using a uniform draw
    /// that is a pure function of `(rule_seed, index, prefix)`.
    SeededSampling,
    /// Take the more likely value; ties go to 0.
    ArgmaxPrior,
}

/// Shared deterministic maps for the rule-governed coordinates.
///
/// Indices listed as constant (the frozen set) get the same value in every
/// block: a seeded uniform bit in sampling mode, zero in argmax mode.
/// Prefix-dependent indices evaluate against the prior-only posterior of the
/// current prefix, identically on encoder and decoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleSet {
    pub rule_seed: u64,
    pub mode: RuleMode,
    constant: Vec<bool>,
}

impl RuleSet {
    /// Builds rules for a block of length `block_len`; `constant_indices`
    /// are the coordinates whose value must repeat across blocks.
    pub fn new(
        rule_seed: u64,
        mode: RuleMode,
        block_len: usize,
        constant_indices: &[usize],
    ) -> Self {
        let mut constant = vec![false; block_len];
        for &i in constant_indices {
            constant[i] = true;
        }
        RuleSet {
            rule_seed,
            mode,
            constant,
        }
    }

    /// Rules for a wiretap partition: the frozen set is constant across
    /// blocks, the almost-deterministic set follows the prefix.
    pub fn for_partition(rule_seed: u64, mode: RuleMode, partition: &IndexPartition) -> Self {
        RuleSet::new(rule_seed, mode, partition.block_len(), &partition.b_set)
    }
}

impl RuleOracle for RuleSet {
    fn eval(&self, index: usize, prefix: &PrefixHash, prior: BeliefPair) -> bool {
        if self.constant[index] {
            match self.mode {
                RuleMode::SeededSampling => PrefixHash::new().unit(self.rule_seed, index) < 0.5,
                RuleMode::ArgmaxPrior => false,
            }
        } else {
            match self.mode {
                RuleMode::SeededSampling => prefix.unit(self.rule_seed, index) < prior.p1,
                RuleMode::ArgmaxPrior => prior.argmax(),
            }
        }
    }
}

/// The pre-shared secret bootstrapping a cluster: `|R2|` uniform bits known
/// to the transmitter and Receiver 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBlock {
    pub bits: Vec<bool>,
    pub seed_id: u64,
}

impl SeedBlock {
    pub fn generate(len: usize, master_seed: u64, seed_id: u64) -> Self {
        let mut rng = stream(master_seed, "seedblock", seed_id);
        SeedBlock {
            bits: (0..len).map(|_| rng.gen()).collect(),
            seed_id,
        }
    }
}

/// One encoded block: transform domain, leaf domain, and channel input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolarBlock {
    pub block_index: usize,
    pub t: Vec<bool>,
    pub v: Vec<bool>,
    pub x: Vec<bool>,
}

/// A fully encoded cluster with everything needed for decoding and audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainCluster {
    pub m: usize,
    /// Stage discriminator for transcript files.
    pub stage: String,
    pub blocks: Vec<PolarBlock>,
    pub messages: Vec<Vec<bool>>,
    /// Values at the chaining subset per block.
    pub e_values: Vec<Vec<bool>>,
    pub seed: SeedBlock,
    pub partition: IndexPartition,
    pub rule_seed: u64,
    pub rule_mode: RuleMode,
}

impl ChainCluster {
    /// Checks the construction invariants: block `j`'s chained positions
    /// hold block `j-1`'s `E` values (the seed for block 0), `E` values
    /// match the blocks, and `v = t G` throughout.
    pub fn verify_chaining(&self) -> Result<()> {
        for (j, block) in self.blocks.iter().enumerate() {
            let expected: &[bool] = if j == 0 {
                &self.seed.bits
            } else {
                &self.e_values[j - 1]
            };
            for (k, &pos) in self.partition.r2_set.iter().enumerate() {
                if block.t[pos] != expected[k] {
                    return Err(Error::Infeasible(format!(
                        "chain broken at block {j}, position {pos}"
                    )));
                }
            }
            for (k, &pos) in self.partition.e_set.iter().enumerate() {
                if block.t[pos] != self.e_values[j][k] {
                    return Err(Error::Infeasible(format!(
                        "E values inconsistent at block {j}"
                    )));
                }
            }
            if block.v != polar_transform(&block.t)? {
                return Err(Error::Infeasible(format!("v != t G at block {j}")));
            }
        }
        Ok(())
    }
}

/// Role map shared by the encoder and decoder of one block.
pub(crate) fn wiretap_roles(partition: &IndexPartition) -> Vec<Role> {
    let len = partition.block_len();
    let mut roles = vec![Role::Rule; len];
    for &i in &partition.i_set {
        roles[i] = Role::Message;
    }
    for &i in &partition.e_set {
        roles[i] = Role::Random; // fresh uniform bits, argmax-decoded
    }
    for &i in &partition.r1_set {
        roles[i] = Role::Random;
    }
    for &i in &partition.r2_set {
        roles[i] = Role::Copy;
    }
    // b_set and d_set keep Role::Rule
    roles
}

fn place(supplied: &mut [Option<bool>], positions: &[usize], values: &[bool]) {
    for (&pos, &val) in positions.iter().zip(values) {
        supplied[pos] = Some(val);
    }
}

fn message_positions(partition: &IndexPartition) -> Vec<usize> {
    partition
        .i_set
        .iter()
        .filter(|i| partition.e_set.binary_search(i).is_err())
        .copied()
        .collect()
}

/// Encodes `m` message vectors of `|I| - |E|` bits each into a chained
/// cluster. Block randomness and the stochastic leaf mapping draw from
/// streams keyed by `(master_seed, cluster_id, block)`.
pub fn encode_cluster(
    messages: &[Vec<bool>],
    seed: &SeedBlock,
    partition: &IndexPartition,
    rules: &RuleSet,
    spec: &WiretapSpec,
    master_seed: u64,
    cluster_id: u64,
) -> Result<ChainCluster> {
    partition.validate()?;
    let len = partition.block_len();
    let m = messages.len();
    if m == 0 {
        return Err(Error::InvalidParameter(
            "cluster needs at least one block".into(),
        ));
    }
    if seed.bits.len() != partition.r2_set.len() {
        return Err(Error::InvalidParameter(format!(
            "seed holds {} bits but |R2| = {}",
            seed.bits.len(),
            partition.r2_set.len()
        )));
    }
    let msg_pos = message_positions(partition);
    for (j, msg) in messages.iter().enumerate() {
        if msg.len() != msg_pos.len() {
            return Err(Error::InvalidParameter(format!(
                "message {j} has {} bits, expected {}",
                msg.len(),
                msg_pos.len()
            )));
        }
    }

    let roles = wiretap_roles(partition);
    let priors = vec![spec.p_v; len];
    let prior_lv = prior_leaves(&priors)?;
    let mut blocks = Vec::with_capacity(m);
    let mut e_values = Vec::with_capacity(m);
    let mut chain: Vec<bool> = seed.bits.clone();

    for (j, msg) in messages.iter().enumerate() {
        let mut supplied = vec![None; len];
        place(&mut supplied, &msg_pos, msg);
        place(&mut supplied, &partition.r2_set, &chain);
        let mut rand_stream = block_stream(master_seed, "block.rand", cluster_id, j);
        let pass = sc_pass(
            &prior_lv,
            None,
            &roles,
            &supplied,
            rules,
            PassMode::EncodeSample,
            Some(&mut rand_stream),
        )?;
        let e_now: Vec<bool> = partition.e_set.iter().map(|&i| pass.t[i]).collect();
        let mut x_stream = block_stream(master_seed, "block.x", cluster_id, j);
        let x: Vec<bool> = pass
            .v
            .iter()
            .map(|&vb| x_stream.gen_bool(spec.p_x_given_v[vb as usize][1]))
            .collect();
        blocks.push(PolarBlock {
            block_index: j,
            t: pass.t,
            v: pass.v,
            x,
        });
        chain = e_now.clone();
        e_values.push(e_now);
    }

    let cluster = ChainCluster {
        m,
        stage: "wiretap".into(),
        blocks,
        messages: messages.to_vec(),
        e_values,
        seed: seed.clone(),
        partition: partition.clone(),
        rule_seed: rules.rule_seed,
        rule_mode: rules.mode,
    };
    cluster.verify_chaining()?;
    Ok(cluster)
}

pub(crate) fn block_stream(
    master: u64,
    purpose: &str,
    cluster: u64,
    block: usize,
) -> rand_chacha::ChaCha12Rng {
    stream(master, purpose, cluster << 16 | block as u64)
}

/// Receiver 1's view after decoding a cluster.
#[derive(Debug, Clone)]
pub struct DecodedCluster {
    pub messages: Vec<Vec<bool>>,
    /// Chaining values recovered per block.
    pub e_values: Vec<Vec<bool>>,
    /// Full transform-domain estimates, for auditing.
    pub t_hat: Vec<Vec<bool>>,
    /// Posterior traces per block.
    pub traces: Vec<Vec<BeliefPair>>,
}

/// Forward cluster decoding from Receiver 1's observations: rules on the
/// frozen and deterministic coordinates, argmax on the information and
/// random coordinates, chained values copied from the previous block's
/// decoded `E`. Never fails once the inputs are well-formed; errors are
/// measured downstream, not thrown.
pub fn decode_cluster(
    y_blocks: &[Vec<usize>],
    seed: &SeedBlock,
    partition: &IndexPartition,
    rules: &RuleSet,
    spec: &WiretapSpec,
) -> Result<DecodedCluster> {
    partition.validate()?;
    let len = partition.block_len();
    let roles = wiretap_roles(partition);
    let priors = vec![spec.p_v; len];
    let prior_lv = prior_leaves(&priors)?;
    let eff_y = spec.effective_w1()?;
    let msg_pos = message_positions(partition);

    let mut chain = seed.bits.clone();
    let mut out = DecodedCluster {
        messages: Vec::with_capacity(y_blocks.len()),
        e_values: Vec::with_capacity(y_blocks.len()),
        t_hat: Vec::with_capacity(y_blocks.len()),
        traces: Vec::with_capacity(y_blocks.len()),
    };
    for y in y_blocks {
        let obs_lv = observation_leaves(&priors, &eff_y, y)?;
        let mut supplied = vec![None; len];
        place(&mut supplied, &partition.r2_set, &chain);
        let pass: PassOutput = sc_pass(
            &prior_lv,
            Some(&obs_lv),
            &roles,
            &supplied,
            rules,
            PassMode::DecodeMap,
            None,
        )?;
        out.messages
            .push(msg_pos.iter().map(|&i| pass.t[i]).collect());
        let e_now: Vec<bool> = partition.e_set.iter().map(|&i| pass.t[i]).collect();
        chain = e_now.clone();
        out.e_values.push(e_now);
        out.t_hat.push(pass.t);
        out.traces.push(pass.trace);
    }
    Ok(out)
}

/// Rate accounting for one cluster shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub schema_version: u32,
    pub n: u32,
    pub m: usize,
    /// `(|I| - |E|) / N`, the per-block message rate.
    pub message_rate: f64,
    /// `|R2| / (mN)`, amortized over the cluster.
    pub seed_rate: f64,
    /// `(|B| + |D|) / (mN)`.
    pub frozen_overhead: f64,
    /// `I(V;Y) - I(V;Z)` implied by the specification.
    pub target_rate: f64,
    pub i_vy: f64,
    pub i_vz: f64,
}

impl RateReport {
    pub fn to_csv(&self) -> String {
        format!(
            "n,m,message_rate,seed_rate,frozen_overhead,target_rate,i_vy,i_vz\n{},{},{},{},{},{},{},{}\n",
            self.n,
            self.m,
            self.message_rate,
            self.seed_rate,
            self.frozen_overhead,
            self.target_rate,
            self.i_vy,
            self.i_vz
        )
    }
}

pub fn wiretap_rates(
    partition: &IndexPartition,
    spec: &WiretapSpec,
    m: usize,
) -> Result<RateReport> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let len = partition.block_len() as f64;
    let mn = m as f64 * len;
    let i_vy = spec.i_vy()?;
    let i_vz = spec.i_vz()?;
    Ok(RateReport {
        schema_version: 1,
        n: partition.n,
        m,
        message_rate: partition.message_len() as f64 / len,
        seed_rate: partition.r2_set.len() as f64 / mn,
        frozen_overhead: (partition.b_set.len() + partition.d_set.len()) as f64 / mn,
        target_rate: i_vy - i_vz,
        i_vy,
        i_vz,
    })
}
