//! Two-stage codec for the broadcast channel with a confidential component.
//!
//! Stage one chains the common message across `m` blocks in the `Q`-domain:
//! the forward receiver reads the exclusive piece `D1` directly, the other
//! receiver recovers it backwards from the chained copies in `E2`. Stage two
//! reuses the wiretap construction on the `T`-domain conditioned on the
//! stage-one sequence `u^N(j)`, carrying the secret message on `I \ E` and
//! an individual non-secret payload on `E` and `R1` (no secrecy is claimed
//! for that payload).
//!
//! Pre-shared values (fixed endpoints, shared randomness, rule seeds) are
//! realized as all-zero constants and streams derived from the master seed,
//! so both receivers can rebuild them from the transcript parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{BccSpec, Dmc};
use crate::error::{Error, Result};
use crate::partition::{BccCommonPartition, IndexPartition};
use crate::polar::{observation_leaves, polar_transform, prior_leaves, sc_pass, PassMode, Role};
use crate::wiretap::{block_stream, wiretap_roles, PolarBlock, RuleSet, SeedBlock};

/// A fully encoded broadcast cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BccCluster {
    pub m: usize,
    /// Stage discriminator for transcript files.
    pub stage: String,
    pub q_blocks: Vec<Vec<bool>>,
    pub u_blocks: Vec<Vec<bool>>,
    pub t_blocks: Vec<PolarBlock>,
    pub common: Vec<bool>,
    pub secret: Vec<Vec<bool>>,
    pub extra: Vec<Vec<bool>>,
    pub e_values: Vec<Vec<bool>>,
    pub seed: SeedBlock,
    pub q_rule_seed: u64,
    pub t_rule_seed: u64,
    pub rule_mode: crate::wiretap::RuleMode,
}

impl BccCluster {
    /// Construction invariants: common chaining `E2(j) = D1(j-1)`, fixed
    /// endpoints, secret chaining, and both transforms.
    pub fn verify(&self, common: &BccCommonPartition, secret: &IndexPartition) -> Result<()> {
        let m = self.m;
        for j in 0..m {
            let q = &self.q_blocks[j];
            if self.u_blocks[j] != polar_transform(q)? {
                return Err(Error::Infeasible(format!("u != q G at block {j}")));
            }
            if j == 0 {
                for &pos in &common.d2 {
                    if q[pos] {
                        return Err(Error::Infeasible(
                            "block 0 chained piece must be zero".into(),
                        ));
                    }
                }
            } else {
                for (k, &pos) in common.e2.iter().enumerate() {
                    let prev = self.q_blocks[j - 1][common.d1[k]];
                    if q[pos] != prev {
                        return Err(Error::Infeasible(format!(
                            "common chain broken at block {j}"
                        )));
                    }
                }
            }
            if j == m - 1 {
                for &pos in &common.d1 {
                    if q[pos] {
                        return Err(Error::Infeasible(
                            "final block message piece must be zero".into(),
                        ));
                    }
                }
            }
            let t = &self.t_blocks[j];
            if t.v != polar_transform(&t.t)? {
                return Err(Error::Infeasible(format!("v != t G at block {j}")));
            }
            let expected: &[bool] = if j == 0 {
                &self.seed.bits
            } else {
                &self.e_values[j - 1]
            };
            for (k, &pos) in secret.r2_set.iter().enumerate() {
                if t.t[pos] != expected[k] {
                    return Err(Error::Infeasible(format!(
                        "secret chain broken at block {j}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn place(supplied: &mut [Option<bool>], positions: &[usize], values: &[bool]) {
    for (&pos, &val) in positions.iter().zip(values) {
        supplied[pos] = Some(val);
    }
}

/// Positions of the non-secret payload, ascending: `E` then `R1` by index.
pub fn extra_positions(secret: &IndexPartition) -> Vec<usize> {
    let mut pos: Vec<usize> = secret.e_set.iter().chain(&secret.r1_set).copied().collect();
    pos.sort_unstable();
    pos
}

fn secret_positions(secret: &IndexPartition) -> Vec<usize> {
    secret
        .i_set
        .iter()
        .filter(|i| secret.e_set.binary_search(i).is_err())
        .copied()
        .collect()
}

/// Stage-one role map for the encoder and the forward receiver: the mutual
/// and message pieces carry bits (argmax-decoded), the chained piece is
/// rebuilt from known values.
fn q_roles_forward(common: &BccCommonPartition) -> Vec<Role> {
    let len = common.block_len();
    let mut roles = vec![Role::Rule; len];
    for &i in &common.i_u {
        roles[i] = Role::Message;
    }
    for &i in &common.d1 {
        roles[i] = Role::Message;
    }
    for &i in &common.d2 {
        roles[i] = Role::Copy;
    }
    roles
}

/// Stage-one role map for the backward receiver: it argmax-decodes the
/// mutual and chained pieces and copies the message piece from the next
/// block's chained values.
fn q_roles_backward(common: &BccCommonPartition) -> Vec<Role> {
    let len = common.block_len();
    let mut roles = vec![Role::Rule; len];
    for &i in &common.i_u {
        roles[i] = Role::Message;
    }
    for &i in &common.d2 {
        roles[i] = Role::Message;
    }
    for &i in &common.d1 {
        roles[i] = Role::Copy;
    }
    roles
}

/// The chained-piece values for block `j` on the encoder / forward side:
/// zeros in block 0, otherwise the previous block's `D1` values in `E2` and
/// shared random bits elsewhere.
fn d2_values(
    common: &BccCommonPartition,
    j: usize,
    prev_d1: Option<&[bool]>,
    master_seed: u64,
    cluster_id: u64,
) -> Vec<(usize, bool)> {
    if j == 0 {
        return common.d2.iter().map(|&p| (p, false)).collect();
    }
    let prev = prev_d1.expect("blocks past the first need the previous message piece");
    let mut out: Vec<(usize, bool)> = common
        .e2
        .iter()
        .enumerate()
        .map(|(k, &p)| (p, prev[k]))
        .collect();
    let mut shared = block_stream(master_seed, "bcc.d2rand", cluster_id, j);
    for &p in &common.d2 {
        if common.e2.binary_search(&p).is_err() {
            out.push((p, shared.gen()));
        }
    }
    out.sort_unstable();
    out
}

/// Encodes a broadcast cluster.
///
/// `common` is consumed block by block: block `j` takes `|I_u|` bits, plus
/// `|D1|` bits while `j < m - 1`. `secret` holds `m` vectors of `|I| - |E|`
/// bits. `extra` optionally holds `m` vectors of `|E| + |R1|` bits for the
/// individual non-secret message; when absent those positions are filled
/// with fresh uniform bits, which makes the scheme coincide with the
/// wiretap encoder whenever the common layer is degenerate.
#[allow(clippy::too_many_arguments)]
pub fn bcc_encode(
    common_bits: &[bool],
    secret_msgs: &[Vec<bool>],
    extra_msgs: Option<&[Vec<bool>]>,
    seed: &SeedBlock,
    common: &BccCommonPartition,
    secret: &IndexPartition,
    q_rules: &RuleSet,
    t_rules: &RuleSet,
    spec: &BccSpec,
    master_seed: u64,
    cluster_id: u64,
) -> Result<BccCluster> {
    common.validate()?;
    secret.validate()?;
    let len = common.block_len();
    let m = secret_msgs.len();
    if m == 0 {
        return Err(Error::InvalidParameter(
            "cluster needs at least one block".into(),
        ));
    }
    if common_bits.len() != common.common_bits(m) {
        return Err(Error::InvalidParameter(format!(
            "common message has {} bits, layout needs {}",
            common_bits.len(),
            common.common_bits(m)
        )));
    }
    if seed.bits.len() != secret.r2_set.len() {
        return Err(Error::InvalidParameter(
            "seed length must equal |R2|".into(),
        ));
    }
    let sec_pos = secret_positions(secret);
    for (j, msg) in secret_msgs.iter().enumerate() {
        if msg.len() != sec_pos.len() {
            return Err(Error::InvalidParameter(format!(
                "secret message {j} has the wrong length"
            )));
        }
    }
    let ext_pos = extra_positions(secret);
    if let Some(extra) = extra_msgs {
        if extra.len() != m || extra.iter().any(|e| e.len() != ext_pos.len()) {
            return Err(Error::InvalidParameter(
                "extra payload has the wrong shape".into(),
            ));
        }
    }

    // stage one: q blocks
    let q_prior = prior_leaves(&vec![spec.p_u; len])?;
    let roles = q_roles_forward(common);
    let mut cursor = 0usize;
    let mut take = |k: usize| {
        let slice = common_bits[cursor..cursor + k].to_vec();
        cursor += k;
        slice
    };
    let mut q_blocks = Vec::with_capacity(m);
    let mut u_blocks = Vec::with_capacity(m);
    let mut prev_d1: Option<Vec<bool>> = None;
    for j in 0..m {
        let mut supplied = vec![None; len];
        let iu_bits = take(common.i_u.len());
        place(&mut supplied, &common.i_u, &iu_bits);
        let d1_bits = if j < m - 1 {
            take(common.d1.len())
        } else {
            vec![false; common.d1.len()]
        };
        place(&mut supplied, &common.d1, &d1_bits);
        for (pos, val) in d2_values(common, j, prev_d1.as_deref(), master_seed, cluster_id) {
            supplied[pos] = Some(val);
        }
        let pass = sc_pass(
            &q_prior,
            None,
            &roles,
            &supplied,
            q_rules,
            PassMode::EncodeSample,
            None,
        )?;
        u_blocks.push(pass.v.clone());
        q_blocks.push(pass.t);
        prev_d1 = Some(d1_bits);
    }
    debug_assert_eq!(cursor, common_bits.len());

    // stage two: t blocks conditioned on u
    let t_roles = {
        let mut roles = wiretap_roles(secret);
        if extra_msgs.is_some() {
            for &i in &ext_pos {
                roles[i] = Role::Message;
            }
        }
        roles
    };
    let mut t_blocks = Vec::with_capacity(m);
    let mut e_values = Vec::with_capacity(m);
    let mut extra_out = Vec::with_capacity(m);
    let mut chain = seed.bits.clone();
    for j in 0..m {
        let priors: Vec<f64> = u_blocks[j]
            .iter()
            .map(|&ub| spec.p_v_given_u[ub as usize][1])
            .collect();
        let prior_lv = prior_leaves(&priors)?;
        let mut supplied = vec![None; len];
        place(&mut supplied, &sec_pos, &secret_msgs[j]);
        place(&mut supplied, &secret.r2_set, &chain);
        if let Some(extra) = extra_msgs {
            place(&mut supplied, &ext_pos, &extra[j]);
        }
        let mut rand_stream = block_stream(master_seed, "block.rand", cluster_id, j);
        let pass = sc_pass(
            &prior_lv,
            None,
            &t_roles,
            &supplied,
            t_rules,
            PassMode::EncodeSample,
            Some(&mut rand_stream),
        )?;
        let e_now: Vec<bool> = secret.e_set.iter().map(|&i| pass.t[i]).collect();
        extra_out.push(ext_pos.iter().map(|&i| pass.t[i]).collect());
        let mut x_stream = block_stream(master_seed, "block.x", cluster_id, j);
        let x: Vec<bool> = pass
            .v
            .iter()
            .map(|&vb| x_stream.gen_bool(spec.p_x_given_v[vb as usize][1]))
            .collect();
        t_blocks.push(PolarBlock {
            block_index: j,
            t: pass.t,
            v: pass.v,
            x,
        });
        chain = e_now.clone();
        e_values.push(e_now);
    }

    let cluster = BccCluster {
        m,
        stage: "bcc".into(),
        q_blocks,
        u_blocks,
        t_blocks,
        common: common_bits.to_vec(),
        secret: secret_msgs.to_vec(),
        extra: extra_out,
        e_values,
        seed: seed.clone(),
        q_rule_seed: q_rules.rule_seed,
        t_rule_seed: t_rules.rule_seed,
        rule_mode: t_rules.mode,
    };
    cluster.verify(common, secret)?;
    Ok(cluster)
}

/// Stage-one forward pass over one receiver's observations: the message
/// piece is argmax-decoded, the chained piece is rebuilt from known values.
fn stage1_forward(
    obs_blocks: &[Vec<usize>],
    eff: &Dmc,
    common: &BccCommonPartition,
    rules: &RuleSet,
    p_u: f64,
    master_seed: u64,
    cluster_id: u64,
) -> Result<Vec<Vec<bool>>> {
    let len = common.block_len();
    let priors = vec![p_u; len];
    let prior_lv = prior_leaves(&priors)?;
    let roles = q_roles_forward(common);
    let mut out = Vec::with_capacity(obs_blocks.len());
    let mut prev_d1: Option<Vec<bool>> = None;
    for (j, obs) in obs_blocks.iter().enumerate() {
        let obs_lv = observation_leaves(&priors, eff, obs)?;
        let mut supplied = vec![None; len];
        for (pos, val) in d2_values(common, j, prev_d1.as_deref(), master_seed, cluster_id) {
            supplied[pos] = Some(val);
        }
        let pass = sc_pass(
            &prior_lv,
            Some(&obs_lv),
            &roles,
            &supplied,
            rules,
            PassMode::DecodeMap,
            None,
        )?;
        prev_d1 = Some(common.d1.iter().map(|&i| pass.t[i]).collect());
        out.push(pass.t);
    }
    Ok(out)
}

/// Stage-one backward pass: blocks are processed last to first, the message
/// piece is copied from the next block's chained values (zeros in the final
/// block), and the chained piece is argmax-decoded.
fn stage1_backward(
    obs_blocks: &[Vec<usize>],
    eff: &Dmc,
    common: &BccCommonPartition,
    rules: &RuleSet,
    p_u: f64,
) -> Result<Vec<Vec<bool>>> {
    let len = common.block_len();
    let m = obs_blocks.len();
    let priors = vec![p_u; len];
    let prior_lv = prior_leaves(&priors)?;
    let roles = q_roles_backward(common);
    let mut out = vec![Vec::new(); m];
    let mut next_e2: Option<Vec<bool>> = None;
    for j in (0..m).rev() {
        let obs_lv = observation_leaves(&priors, eff, &obs_blocks[j])?;
        let mut supplied = vec![None; len];
        let d1_vals = match &next_e2 {
            None => vec![false; common.d1.len()],
            Some(e2) => e2.clone(),
        };
        place(&mut supplied, &common.d1, &d1_vals);
        let pass = sc_pass(
            &prior_lv,
            Some(&obs_lv),
            &roles,
            &supplied,
            rules,
            PassMode::DecodeMap,
            None,
        )?;
        next_e2 = Some(common.e2.iter().map(|&i| pass.t[i]).collect());
        out[j] = pass.t;
    }
    Ok(out)
}

/// Reads the common message back out of decoded stage-one blocks, in the
/// encoder's layout order.
fn extract_common(q_blocks: &[Vec<bool>], common: &BccCommonPartition) -> Vec<bool> {
    let m = q_blocks.len();
    let mut out = Vec::with_capacity(common.common_bits(m));
    for (j, q) in q_blocks.iter().enumerate() {
        out.extend(common.i_u.iter().map(|&i| q[i]));
        if j < m - 1 {
            out.extend(common.d1.iter().map(|&i| q[i]));
        }
    }
    out
}

/// Receiver 1's full decode: common message, secret message, and the
/// individual non-secret payload.
#[derive(Debug, Clone)]
pub struct Rx1Decode {
    pub common: Vec<bool>,
    pub secret: Vec<Vec<bool>>,
    pub extra: Vec<Vec<bool>>,
    pub u_hat: Vec<Vec<bool>>,
    pub t_hat: Vec<Vec<bool>>,
}

/// Receiver 1: stage one in the direction the orientation dictates, then
/// the conditioned stage-two pass per block.
#[allow(clippy::too_many_arguments)]
pub fn bcc_decode_rx1(
    y_blocks: &[Vec<usize>],
    seed: &SeedBlock,
    common: &BccCommonPartition,
    secret: &IndexPartition,
    q_rules: &RuleSet,
    t_rules: &RuleSet,
    spec: &BccSpec,
    master_seed: u64,
    cluster_id: u64,
) -> Result<Rx1Decode> {
    let eff_uy = spec.effective_uy()?;
    let q_hat = if common.swapped {
        stage1_backward(y_blocks, &eff_uy, common, q_rules, spec.p_u)?
    } else {
        stage1_forward(
            y_blocks,
            &eff_uy,
            common,
            q_rules,
            spec.p_u,
            master_seed,
            cluster_id,
        )?
    };
    let u_hat: Vec<Vec<bool>> = q_hat
        .iter()
        .map(|q| polar_transform(q))
        .collect::<Result<_>>()?;

    let len = secret.block_len();
    let eff_vy = spec.effective_vy()?;
    let roles = wiretap_roles(secret);
    let sec_pos = secret_positions(secret);
    let ext_pos = extra_positions(secret);
    let mut out = Rx1Decode {
        common: extract_common(&q_hat, common),
        secret: Vec::with_capacity(y_blocks.len()),
        extra: Vec::with_capacity(y_blocks.len()),
        u_hat,
        t_hat: Vec::with_capacity(y_blocks.len()),
    };
    let mut chain = seed.bits.clone();
    for (j, y) in y_blocks.iter().enumerate() {
        let priors: Vec<f64> = out.u_hat[j]
            .iter()
            .map(|&ub| spec.p_v_given_u[ub as usize][1])
            .collect();
        let prior_lv = prior_leaves(&priors)?;
        let obs_lv = observation_leaves(&priors, &eff_vy, y)?;
        let mut supplied = vec![None; len];
        place(&mut supplied, &secret.r2_set, &chain);
        let pass = sc_pass(
            &prior_lv,
            Some(&obs_lv),
            &roles,
            &supplied,
            t_rules,
            PassMode::DecodeMap,
            None,
        )?;
        out.secret
            .push(sec_pos.iter().map(|&i| pass.t[i]).collect());
        out.extra.push(ext_pos.iter().map(|&i| pass.t[i]).collect());
        chain = secret.e_set.iter().map(|&i| pass.t[i]).collect();
        out.t_hat.push(pass.t);
    }
    Ok(out)
}

/// Receiver 2: stage one only, in the opposite direction to Receiver 1.
pub fn bcc_decode_rx2(
    z_blocks: &[Vec<usize>],
    common: &BccCommonPartition,
    q_rules: &RuleSet,
    spec: &BccSpec,
    master_seed: u64,
    cluster_id: u64,
) -> Result<Vec<bool>> {
    let eff_uz = spec.effective_uz()?;
    let q_hat = if common.swapped {
        stage1_forward(
            z_blocks,
            &eff_uz,
            common,
            q_rules,
            spec.p_u,
            master_seed,
            cluster_id,
        )?
    } else {
        stage1_backward(z_blocks, &eff_uz, common, q_rules, spec.p_u)?
    };
    Ok(extract_common(&q_hat, common))
}

/// Rate accounting for the broadcast scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BccRateTriple {
    pub schema_version: u32,
    pub n: u32,
    pub m: usize,
    /// Achieved common rate `(m |I_u| + (m-1) |D1|) / (mN)`.
    pub r0: f64,
    /// Achieved secret rate `(|I| - |E|) / N`.
    pub rs: f64,
    /// Achieved individual rate `(|E| + |R1|) / N`.
    pub r1: f64,
    /// `(m-1)/m` times the forward receiver's achieved good fraction.
    pub r0_lower: f64,
    /// The forward receiver's achieved good fraction `(|I_u| + |D1|) / N`.
    pub r0_upper: f64,
    /// `min[I(U;Y), I(U;Z)]` implied by the specification.
    pub r0_target: f64,
    /// `I(V;Y|U) - I(V;Z|U)` implied by the specification.
    pub rs_target: f64,
    /// `I(V;Y|U) + min[I(U;Y), I(U;Z)] - r0 - rs`, the cap on the
    /// individual rate given the achieved pair.
    pub r1_bound: f64,
    pub swapped: bool,
}

impl BccRateTriple {
    pub fn to_csv(&self) -> String {
        format!(
            "n,m,r0,rs,r1,r0_lower,r0_upper,r0_target,rs_target,r1_bound,swapped\n{},{},{},{},{},{},{},{},{},{},{}\n",
            self.n,
            self.m,
            self.r0,
            self.rs,
            self.r1,
            self.r0_lower,
            self.r0_upper,
            self.r0_target,
            self.rs_target,
            self.r1_bound,
            self.swapped
        )
    }
}

pub fn bcc_rate_triple(
    common: &BccCommonPartition,
    secret: &IndexPartition,
    spec: &BccSpec,
    m: usize,
) -> Result<BccRateTriple> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let len = common.block_len() as f64;
    let r0 = common.common_bits(m) as f64 / (m as f64 * len);
    let rs = secret.message_len() as f64 / len;
    let r1 = (secret.e_set.len() + secret.r1_set.len()) as f64 / len;
    let fwd_fraction = (common.i_u.len() + common.d1.len()) as f64 / len;
    let r0_target = spec.r0_target()?;
    let rs_target = spec.rs_target()?;
    let r1_bound = spec.i_vy_given_u()? + r0_target - r0 - rs;
    let triple = BccRateTriple {
        schema_version: 1,
        n: common.n,
        m,
        r0,
        rs,
        r1,
        r0_lower: (m as f64 - 1.0) / m as f64 * fwd_fraction,
        r0_upper: fwd_fraction,
        r0_target,
        rs_target,
        r1_bound,
        swapped: common.swapped,
    };
    debug_assert!(triple.r0_lower <= triple.r0 + 1e-12 && triple.r0 <= triple.r0_upper + 1e-12);
    Ok(triple)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::WiretapSpec;
    use crate::partition::{select_e, PartitionKind};
    use crate::rng::stream;
    use crate::wiretap::{decode_cluster, encode_cluster, RuleMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn manual_secret(
        n: u32,
        i: Vec<usize>,
        b: Vec<usize>,
        r1: Vec<usize>,
        r2: Vec<usize>,
        d: Vec<usize>,
    ) -> IndexPartition {
        let e = select_e(&i, r2.len()).unwrap();
        let p = IndexPartition {
            schema_version: 1,
            n,
            kind: PartitionKind::BccSecret,
            delta_low: 0.1,
            delta_high: 0.1,
            i_set: i,
            b_set: b,
            r1_set: r1,
            r2_set: r2,
            d_set: d,
            e_set: e,
            unclassified: 0,
        };
        p.validate().unwrap();
        p
    }

    fn manual_common(
        n: u32,
        i_u: Vec<usize>,
        d1: Vec<usize>,
        d2: Vec<usize>,
        frozen: Vec<usize>,
        swapped: bool,
    ) -> BccCommonPartition {
        let len = 1usize << n;
        let named: Vec<usize> = i_u
            .iter()
            .chain(&d1)
            .chain(&d2)
            .chain(&frozen)
            .copied()
            .collect();
        let deterministic: Vec<usize> = (0..len).filter(|i| !named.contains(i)).collect();
        let e2: Vec<usize> = d2.iter().copied().take(d1.len()).collect();
        let p = BccCommonPartition {
            schema_version: 1,
            n,
            delta_low: 0.1,
            delta_high: 0.1,
            i_u,
            d1,
            d2,
            e2,
            frozen,
            deterministic,
            swapped,
            j1: vec![],
        };
        p.validate().unwrap();
        p
    }

    fn degenerate_common(n: u32) -> BccCommonPartition {
        manual_common(n, vec![], vec![], vec![], vec![], false)
    }

    /// Nondegenerate distributions for purely mechanical encode checks.
    fn plain_bcc_spec() -> BccSpec {
        BccSpec::new(
            0.5,
            [[0.8, 0.2], [0.2, 0.8]],
            [[1.0, 0.0], [0.0, 1.0]],
            Dmc::bsc(0.1).unwrap(),
            Dmc::bsc(0.3).unwrap(),
        )
        .unwrap()
    }

    /// Both observation channels noiseless and `U = V = X`: stage one is
    /// exactly recoverable by either receiver for any manual partition.
    fn transparent_bcc_spec() -> BccSpec {
        BccSpec::new(
            0.5,
            [[1.0, 0.0], [0.0, 1.0]],
            [[1.0, 0.0], [0.0, 1.0]],
            Dmc::bsc(0.0).unwrap(),
            Dmc::bsc(0.0).unwrap(),
        )
        .unwrap()
    }

    /// Constant `U` with a uniform secret layer over noiseless channels:
    /// stage two is exactly recoverable.
    fn secret_only_bcc_spec() -> BccSpec {
        BccSpec::new(
            0.0,
            [[0.5, 0.5], [0.5, 0.5]],
            [[1.0, 0.0], [0.0, 1.0]],
            Dmc::bsc(0.0).unwrap(),
            Dmc::bsc(0.0).unwrap(),
        )
        .unwrap()
    }

    fn all_deterministic_secret(n: u32) -> IndexPartition {
        let len = 1usize << n;
        manual_secret(n, vec![], vec![], vec![], vec![], (0..len).collect())
    }

    fn random_bits(rng: &mut ChaCha12Rng, k: usize) -> Vec<bool> {
        (0..k).map(|_| rng.gen()).collect()
    }

    #[test]
    fn constant_u_reduces_to_wiretap_bit_for_bit() {
        let n = 4u32;
        let len = 16usize;
        let bcc = BccSpec::new(
            0.0,
            [[0.65, 0.35], [0.35, 0.65]],
            [[1.0, 0.0], [0.0, 1.0]],
            Dmc::bec(0.2).unwrap(),
            Dmc::bec(0.6).unwrap(),
        )
        .unwrap();
        let wt = WiretapSpec::direct(0.35, Dmc::bec(0.2).unwrap(), Dmc::bec(0.6).unwrap()).unwrap();

        let secret = manual_secret(
            n,
            (8..len).collect(),
            vec![2, 3],
            vec![4, 5],
            vec![0, 1],
            vec![6, 7],
        );
        let common = degenerate_common(n);
        let t_rules = RuleSet::for_partition(7, RuleMode::SeededSampling, &secret);
        let q_rules = RuleSet::new(7, RuleMode::SeededSampling, len, &common.frozen);
        let seed = SeedBlock::generate(2, 3, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let secrets: Vec<Vec<bool>> = (0..3)
            .map(|_| random_bits(&mut rng, secret.message_len()))
            .collect();

        let bcc_cluster = bcc_encode(
            &[],
            &secrets,
            None,
            &seed,
            &common,
            &secret,
            &q_rules,
            &t_rules,
            &bcc,
            99,
            1,
        )
        .unwrap();
        let wt_cluster = encode_cluster(&secrets, &seed, &secret, &t_rules, &wt, 99, 1).unwrap();

        for j in 0..3 {
            assert!(bcc_cluster.u_blocks[j].iter().all(|&u| !u));
            assert_eq!(bcc_cluster.t_blocks[j].t, wt_cluster.blocks[j].t);
            assert_eq!(bcc_cluster.t_blocks[j].x, wt_cluster.blocks[j].x);
        }

        // decoding also coincides on a shared channel realization
        let mut ch = stream(17, "test.channel", 0);
        let y: Vec<Vec<usize>> = bcc_cluster
            .t_blocks
            .iter()
            .map(|b| {
                b.x.iter()
                    .map(|&x| bcc.w1.sample(x as usize, &mut ch))
                    .collect()
            })
            .collect();
        let rx1 =
            bcc_decode_rx1(&y, &seed, &common, &secret, &q_rules, &t_rules, &bcc, 99, 1).unwrap();
        let wt_dec = decode_cluster(&y, &seed, &secret, &t_rules, &wt).unwrap();
        assert_eq!(rx1.secret, wt_dec.messages);
        assert_eq!(rx1.t_hat, wt_dec.t_hat);
    }

    #[test]
    fn common_chaining_audit() {
        let n = 3u32;
        let spec = plain_bcc_spec();
        let common = manual_common(n, vec![6, 7], vec![4], vec![3, 5], vec![], false);
        let secret = manual_secret(n, vec![5, 6, 7], vec![], vec![3, 4], vec![], vec![0, 1, 2]);
        let q_rules = RuleSet::new(11, RuleMode::SeededSampling, 8, &common.frozen);
        let t_rules = RuleSet::for_partition(13, RuleMode::SeededSampling, &secret);
        let seed = SeedBlock::generate(0, 5, 0);
        let m = 4;
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let common_bits = random_bits(&mut rng, common.common_bits(m));
        let secrets: Vec<Vec<bool>> = (0..m)
            .map(|_| random_bits(&mut rng, secret.message_len()))
            .collect();
        let cluster = bcc_encode(
            &common_bits,
            &secrets,
            None,
            &seed,
            &common,
            &secret,
            &q_rules,
            &t_rules,
            &spec,
            21,
            0,
        )
        .unwrap();
        cluster.verify(&common, &secret).unwrap();
        for j in 1..m {
            for (k, &pos) in common.e2.iter().enumerate() {
                assert_eq!(
                    cluster.q_blocks[j][pos],
                    cluster.q_blocks[j - 1][common.d1[k]]
                );
            }
        }
        // emitted common bits match the layout count
        assert_eq!(
            common_bits.len(),
            m * common.i_u.len() + (m - 1) * common.d1.len()
        );
    }

    #[test]
    fn noiseless_common_layer_round_trips_both_directions() {
        let n = 3u32;
        let spec = transparent_bcc_spec();
        let common = manual_common(n, vec![6, 7], vec![4], vec![3, 5], vec![], false);
        let secret = all_deterministic_secret(n);
        let q_rules = RuleSet::new(19, RuleMode::SeededSampling, 8, &common.frozen);
        let t_rules = RuleSet::for_partition(23, RuleMode::SeededSampling, &secret);
        let seed = SeedBlock::generate(0, 29, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        for m in [1usize, 2, 4] {
            let common_bits = random_bits(&mut rng, common.common_bits(m));
            let secrets: Vec<Vec<bool>> = vec![vec![]; m];
            let cluster = bcc_encode(
                &common_bits,
                &secrets,
                None,
                &seed,
                &common,
                &secret,
                &q_rules,
                &t_rules,
                &spec,
                31,
                m as u64,
            )
            .unwrap();
            let y: Vec<Vec<usize>> = cluster
                .t_blocks
                .iter()
                .map(|b| b.x.iter().map(|&x| x as usize).collect())
                .collect();
            let rx1 = bcc_decode_rx1(
                &y, &seed, &common, &secret, &q_rules, &t_rules, &spec, 31, m as u64,
            )
            .unwrap();
            assert_eq!(rx1.common, common_bits);
            let rx2 = bcc_decode_rx2(&y, &common, &q_rules, &spec, 31, m as u64).unwrap();
            assert_eq!(rx2, common_bits);
            // forward and backward decoders agree on the whole common layer
            assert_eq!(rx1.common, rx2);
        }
    }

    #[test]
    fn noiseless_secret_and_extra_round_trip() {
        let n = 4u32;
        let spec = secret_only_bcc_spec();
        let common = degenerate_common(n);
        let secret = manual_secret(
            n,
            (8..16).collect(),
            vec![2, 3],
            vec![4, 5],
            vec![0, 1],
            vec![6, 7],
        );
        let q_rules = RuleSet::new(19, RuleMode::SeededSampling, 16, &common.frozen);
        let t_rules = RuleSet::for_partition(23, RuleMode::SeededSampling, &secret);
        let seed = SeedBlock::generate(2, 29, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        for m in [1usize, 3] {
            let secrets: Vec<Vec<bool>> = (0..m)
                .map(|_| random_bits(&mut rng, secret.message_len()))
                .collect();
            let extras: Vec<Vec<bool>> = (0..m)
                .map(|_| random_bits(&mut rng, extra_positions(&secret).len()))
                .collect();
            let cluster = bcc_encode(
                &[],
                &secrets,
                Some(&extras),
                &seed,
                &common,
                &secret,
                &q_rules,
                &t_rules,
                &spec,
                37,
                m as u64,
            )
            .unwrap();
            let y: Vec<Vec<usize>> = cluster
                .t_blocks
                .iter()
                .map(|b| b.x.iter().map(|&x| x as usize).collect())
                .collect();
            let rx1 = bcc_decode_rx1(
                &y, &seed, &common, &secret, &q_rules, &t_rules, &spec, 37, m as u64,
            )
            .unwrap();
            assert!(rx1.common.is_empty());
            assert_eq!(rx1.secret, secrets);
            assert_eq!(rx1.extra, extras);
        }
    }

    #[test]
    fn swapped_orientation_round_trips() {
        let n = 3u32;
        let spec = transparent_bcc_spec();
        // Z-exclusive piece is the message piece; Receiver 2 decodes forward
        let common = manual_common(n, vec![7], vec![5], vec![4, 6], vec![], true);
        let secret = all_deterministic_secret(n);
        let q_rules = RuleSet::new(37, RuleMode::SeededSampling, 8, &common.frozen);
        let t_rules = RuleSet::for_partition(41, RuleMode::SeededSampling, &secret);
        let seed = SeedBlock::generate(0, 43, 0);
        let m = 3;
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        let common_bits = random_bits(&mut rng, common.common_bits(m));
        let secrets: Vec<Vec<bool>> = vec![vec![]; m];
        let cluster = bcc_encode(
            &common_bits,
            &secrets,
            None,
            &seed,
            &common,
            &secret,
            &q_rules,
            &t_rules,
            &spec,
            47,
            0,
        )
        .unwrap();
        let y: Vec<Vec<usize>> = cluster
            .t_blocks
            .iter()
            .map(|b| b.x.iter().map(|&x| x as usize).collect())
            .collect();
        let rx1 = bcc_decode_rx1(
            &y, &seed, &common, &secret, &q_rules, &t_rules, &spec, 47, 0,
        )
        .unwrap();
        assert_eq!(rx1.common, common_bits);
        let rx2 = bcc_decode_rx2(&y, &common, &q_rules, &spec, 47, 0).unwrap();
        assert_eq!(rx2, common_bits);
    }

    #[test]
    fn final_block_message_piece_is_fixed_regardless_of_noise() {
        let n = 3u32;
        let spec = BccSpec::new(
            0.5,
            [[0.8, 0.2], [0.2, 0.8]],
            [[1.0, 0.0], [0.0, 1.0]],
            Dmc::bsc(0.2).unwrap(),
            Dmc::bsc(0.3).unwrap(),
        )
        .unwrap();
        let common = manual_common(n, vec![6, 7], vec![4], vec![3, 5], vec![], false);
        let secret = manual_secret(n, vec![5, 6, 7], vec![], vec![3, 4], vec![], vec![0, 1, 2]);
        let q_rules = RuleSet::new(3, RuleMode::SeededSampling, 8, &common.frozen);
        let t_rules = RuleSet::for_partition(5, RuleMode::SeededSampling, &secret);
        let seed = SeedBlock::generate(0, 7, 0);
        let m = 3;
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let common_bits = random_bits(&mut rng, common.common_bits(m));
        let secrets: Vec<Vec<bool>> = (0..m)
            .map(|_| random_bits(&mut rng, secret.message_len()))
            .collect();
        let cluster = bcc_encode(
            &common_bits,
            &secrets,
            None,
            &seed,
            &common,
            &secret,
            &q_rules,
            &t_rules,
            &spec,
            53,
            0,
        )
        .unwrap();
        // noisy observations
        let mut ch = stream(55, "test.channel", 0);
        let z: Vec<Vec<usize>> = cluster
            .t_blocks
            .iter()
            .map(|b| {
                b.x.iter()
                    .map(|&x| spec.w2.sample(x as usize, &mut ch))
                    .collect()
            })
            .collect();
        // backward pass supplies the fixed zeros for the final block's D1
        let eff_uz = spec.effective_uz().unwrap();
        let q_hat = stage1_backward(&z, &eff_uz, &common, &q_rules, spec.p_u).unwrap();
        for &pos in &common.d1 {
            assert!(!q_hat[m - 1][pos]);
        }
    }

    #[test]
    fn stage1_errors_propagate_to_stage2() {
        let n = 3u32;
        let spec = BccSpec::new(
            0.5,
            [[0.9, 0.1], [0.1, 0.9]],
            [[1.0, 0.0], [0.0, 1.0]],
            Dmc::bsc(0.1).unwrap(),
            Dmc::bsc(0.3).unwrap(),
        )
        .unwrap();
        let common = manual_common(n, vec![6, 7], vec![4], vec![3, 5], vec![], false);
        let secret = manual_secret(n, vec![5, 6, 7], vec![], vec![3, 4], vec![], vec![0, 1, 2]);
        let q_rules = RuleSet::new(3, RuleMode::SeededSampling, 8, &common.frozen);
        let t_rules = RuleSet::for_partition(5, RuleMode::SeededSampling, &secret);
        let seed = SeedBlock::generate(0, 7, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        let m = 2;
        let common_bits = random_bits(&mut rng, common.common_bits(m));
        let secrets: Vec<Vec<bool>> = (0..m)
            .map(|_| random_bits(&mut rng, secret.message_len()))
            .collect();
        let cluster = bcc_encode(
            &common_bits,
            &secrets,
            None,
            &seed,
            &common,
            &secret,
            &q_rules,
            &t_rules,
            &spec,
            59,
            0,
        )
        .unwrap();
        let mut ch = stream(61, "test.channel", 0);
        let y: Vec<Vec<usize>> = cluster
            .t_blocks
            .iter()
            .map(|b| {
                b.x.iter()
                    .map(|&x| spec.w1.sample(x as usize, &mut ch))
                    .collect()
            })
            .collect();
        // stage 2 with the true side sequence versus a fully corrupted one:
        // the conditioned priors differ, and so do the decoded paths
        let decode_with = |flip: bool| {
            let eff_vy = spec.effective_vy().unwrap();
            let roles = wiretap_roles(&secret);
            let mut chain = seed.bits.clone();
            let mut all = Vec::new();
            for (j, yb) in y.iter().enumerate() {
                let priors: Vec<f64> = cluster.u_blocks[j]
                    .iter()
                    .map(|&ub| spec.p_v_given_u[(ub ^ flip) as usize][1])
                    .collect();
                let prior_lv = prior_leaves(&priors).unwrap();
                let obs_lv = observation_leaves(&priors, &eff_vy, yb).unwrap();
                let mut supplied = vec![None; 8];
                place(&mut supplied, &secret.r2_set, &chain);
                let pass = sc_pass(
                    &prior_lv,
                    Some(&obs_lv),
                    &roles,
                    &supplied,
                    &t_rules,
                    PassMode::DecodeMap,
                    None,
                )
                .unwrap();
                chain = secret.e_set.iter().map(|&i| pass.t[i]).collect();
                all.push(pass.t);
            }
            all
        };
        assert_ne!(decode_with(false), decode_with(true));
    }

    #[test]
    fn rate_triple_formulas() {
        let spec = BccSpec::new(
            0.5,
            [[0.89, 0.11], [0.11, 0.89]],
            [[1.0, 0.0], [0.0, 1.0]],
            Dmc::bec(0.3).unwrap(),
            Dmc::bec(0.6).unwrap(),
        )
        .unwrap();
        let common = manual_common(3, vec![6, 7], vec![4], vec![3, 5], vec![], false);
        let secret = manual_secret(3, vec![5, 6, 7], vec![], vec![3, 4], vec![], vec![0, 1, 2]);
        let t1 = bcc_rate_triple(&common, &secret, &spec, 1).unwrap();
        assert!((t1.r0 - common.i_u.len() as f64 / 8.0).abs() < 1e-15);
        let t4 = bcc_rate_triple(&common, &secret, &spec, 4).unwrap();
        assert!((t4.r0 - (4.0 * 2.0 + 3.0 * 1.0) / 32.0).abs() < 1e-15);
        // sandwich holds as arithmetic
        assert!(t4.r0_lower <= t4.r0 && t4.r0 <= t4.r0_upper);
        // |R2| = 0 so E is empty: rs = |I|/N, r1 = |R1|/N
        assert!((t4.rs - 3.0 / 8.0).abs() < 1e-15);
        assert!((t4.r1 - 2.0 / 8.0).abs() < 1e-15);

        // constant U: no common rate
        let empty = degenerate_common(3);
        let t = bcc_rate_triple(&empty, &secret, &spec, 4).unwrap();
        assert_eq!(t.r0, 0.0);
    }

    #[test]
    fn layout_mismatches_are_rejected() {
        let spec = plain_bcc_spec();
        let common = manual_common(3, vec![6, 7], vec![4], vec![3, 5], vec![], false);
        let secret = manual_secret(3, vec![5, 6, 7], vec![], vec![3, 4], vec![], vec![0, 1, 2]);
        let q_rules = RuleSet::new(3, RuleMode::SeededSampling, 8, &common.frozen);
        let t_rules = RuleSet::for_partition(5, RuleMode::SeededSampling, &secret);
        let seed = SeedBlock::generate(0, 7, 0);
        let secrets = vec![vec![true; secret.message_len()]; 2];
        // wrong common length
        assert!(bcc_encode(
            &[true; 3], &secrets, None, &seed, &common, &secret, &q_rules, &t_rules, &spec, 1, 0
        )
        .is_err());
        // wrong extra shape
        let bad_extra = vec![vec![true; 1]; 2];
        let good_common = vec![false; common.common_bits(2)];
        assert!(bcc_encode(
            &good_common,
            &secrets,
            Some(&bad_extra),
            &seed,
            &common,
            &secret,
            &q_rules,
            &t_rules,
            &spec,
            1,
            0
        )
        .is_err());
    }
}
