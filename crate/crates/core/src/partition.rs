//! Classification of transform indices into high- and low-entropy sets and
//! every coordinate partition the schemes use: the wiretap partition, the
//! nonuniform-input three-way partition, the two baseline partitions, and
//! the two-layer broadcast partitions.
//!
//! Classification policy: an index is `High` when `z >= 1 - delta_high`,
//! else `Low` when `z <= delta_low`, else `Unclassified`. Unclassified
//! indices are resolved to the safe side everywhere: they are never treated
//! as reliable for Receiver 1 and never treated as opaque to Receiver 2, so
//! they can land in R1, R2 or D but never in I or B.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reliability::BitChannelStats;

/// Classification of one index under one conditional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    High,
    Low,
    Unclassified,
}

/// Per-conditional classifications of every index of one layer.
#[derive(Debug, Clone)]
pub struct Flags {
    pub n: u32,
    pub delta_low: f64,
    pub delta_high: f64,
    /// Classification of `Z(T_i | T^{i-1})` (or the layer's base conditional).
    pub prior: Vec<Class>,
    /// Classification with Receiver 1's observation added.
    pub given_y: Vec<Class>,
    /// Classification with Receiver 2's observation added.
    pub given_z: Vec<Class>,
}

fn classify_one(z: f64, delta_low: f64, delta_high: f64) -> Class {
    if z >= 1.0 - delta_high {
        Class::High
    } else if z <= delta_low {
        Class::Low
    } else {
        Class::Unclassified
    }
}

fn classify_vec(zs: &[f64], delta_low: f64, delta_high: f64) -> Vec<Class> {
    zs.iter()
        .map(|&z| classify_one(z, delta_low, delta_high))
        .collect()
}

/// Classifies every index of a statistics table under both thresholds.
pub fn classify(stats: &BitChannelStats, delta_low: f64, delta_high: f64) -> Flags {
    Flags {
        n: stats.n,
        delta_low,
        delta_high,
        prior: classify_vec(&stats.z_prior, delta_low, delta_high),
        given_y: classify_vec(&stats.z_y, delta_low, delta_high),
        given_z: classify_vec(&stats.z_z, delta_low, delta_high),
    }
}

impl Flags {
    pub fn block_len(&self) -> usize {
        1usize << self.n
    }

    /// Indices left unclassified by at least one conditional.
    pub fn unclassified_count(&self) -> usize {
        (0..self.block_len())
            .filter(|&i| {
                self.prior[i] == Class::Unclassified
                    || self.given_y[i] == Class::Unclassified
                    || self.given_z[i] == Class::Unclassified
            })
            .count()
    }
}

/// Which construction produced an [`IndexPartition`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Wiretap,
    BccSecret,
    BaselineMahdavifar,
    BaselineSasoglu,
}

impl PartitionKind {
    /// Kinds whose chaining subset must satisfy `|E| = |R2|`.
    fn chains(self) -> bool {
        matches!(self, PartitionKind::Wiretap | PartitionKind::BccSecret)
    }
}

/// The disjoint cover `{I, B, R1, R2, D}` of `[N]` plus the chaining subset
/// `E` of `I`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexPartition {
    pub schema_version: u32,
    pub n: u32,
    pub kind: PartitionKind,
    pub delta_low: f64,
    pub delta_high: f64,
    /// Message-capable indices: high entropy, reliable for Receiver 1,
    /// opaque to Receiver 2.
    pub i_set: Vec<usize>,
    /// Frozen indices shared with Receiver 1 (constant across blocks).
    pub b_set: Vec<usize>,
    /// Uniformly random per block, decodable by Receiver 1.
    pub r1_set: Vec<usize>,
    /// Chained positions, filled from the previous block's `E` values.
    pub r2_set: Vec<usize>,
    /// Almost-deterministic indices, filled by prefix-dependent rules.
    pub d_set: Vec<usize>,
    /// Chaining subset of `i_set`, `|E| = |R2|`.
    pub e_set: Vec<usize>,
    /// Indices some conditional left unclassified (resolved to the safe side).
    pub unclassified: usize,
}

impl IndexPartition {
    pub fn block_len(&self) -> usize {
        1usize << self.n
    }

    /// Message payload per block, `|I| - |E|`.
    pub fn message_len(&self) -> usize {
        self.i_set.len() - self.e_set.len()
    }

    /// Checks the disjoint-cover and chaining invariants.
    pub fn validate(&self) -> Result<()> {
        let len = self.block_len();
        let mut seen = vec![0u8; len];
        for set in [
            &self.i_set,
            &self.b_set,
            &self.r1_set,
            &self.r2_set,
            &self.d_set,
        ] {
            for &i in set {
                if i >= len {
                    return Err(Error::Infeasible(format!("index {i} out of range")));
                }
                seen[i] += 1;
            }
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::Infeasible("sets do not partition [N]".into()));
        }
        let in_i = |x: &usize| self.i_set.binary_search(x).is_ok();
        if !self.e_set.iter().all(in_i) {
            return Err(Error::Infeasible("E is not a subset of I".into()));
        }
        if self.kind.chains() && self.e_set.len() != self.r2_set.len() {
            return Err(Error::Infeasible(format!(
                "|E| = {} but |R2| = {}",
                self.e_set.len(),
                self.r2_set.len()
            )));
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        let part: IndexPartition = serde_json::from_str(&data)?;
        part.validate()?;
        Ok(part)
    }
}

/// The chaining subset: the `|R2|` smallest indices of `I`, ascending.
pub fn select_e(i_set: &[usize], r2_len: usize) -> Result<Vec<usize>> {
    if i_set.len() < r2_len {
        return Err(Error::Infeasible(format!(
            "|I| = {} is smaller than |R2| = {r2_len}; the cluster cannot chain at this N",
            i_set.len()
        )));
    }
    let mut sorted = i_set.to_vec();
    sorted.sort_unstable();
    sorted.truncate(r2_len);
    Ok(sorted)
}

/// Builds the wiretap partition from classified flags:
/// `I` needs high prior entropy, reliability for Receiver 1, and opacity to
/// Receiver 2; `D` collects everything without high prior entropy; `B`, `R1`
/// and `R2` split the rest by the two observers.
pub fn build_wiretap_partition(flags: &Flags) -> Result<IndexPartition> {
    build_five_way(flags, PartitionKind::Wiretap)
}

/// The same shape over the `U`-conditioned secret layer of the broadcast
/// scheme.
pub fn build_bcc_secret_partition(flags: &Flags) -> Result<IndexPartition> {
    build_five_way(flags, PartitionKind::BccSecret)
}

fn build_five_way(flags: &Flags, kind: PartitionKind) -> Result<IndexPartition> {
    let len = flags.block_len();
    let mut p = IndexPartition {
        schema_version: 1,
        n: flags.n,
        kind,
        delta_low: flags.delta_low,
        delta_high: flags.delta_high,
        i_set: Vec::new(),
        b_set: Vec::new(),
        r1_set: Vec::new(),
        r2_set: Vec::new(),
        d_set: Vec::new(),
        e_set: Vec::new(),
        unclassified: flags.unclassified_count(),
    };
    for i in 0..len {
        let high_prior = flags.prior[i] == Class::High;
        let reliable = flags.given_y[i] == Class::Low;
        let opaque = flags.given_z[i] == Class::High;
        let set = match (high_prior, reliable, opaque) {
            (false, _, _) => &mut p.d_set,
            (true, true, true) => &mut p.i_set,
            (true, false, true) => &mut p.b_set,
            (true, true, false) => &mut p.r1_set,
            (true, false, false) => &mut p.r2_set,
        };
        set.push(i);
    }
    p.e_set = select_e(&p.i_set, p.r2_set.len())?;
    p.validate()?;
    Ok(p)
}

/// Three-way partition for nonuniform-input coding over a single channel:
/// `I` carries information, `F_r` is rule-frozen, `F_d` is almost
/// deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyPartition {
    pub n: u32,
    pub i_set: Vec<usize>,
    pub f_r: Vec<usize>,
    pub f_d: Vec<usize>,
}

impl HyPartition {
    pub fn validate(&self) -> Result<()> {
        let len = 1usize << self.n;
        let mut seen = vec![0u8; len];
        for set in [&self.i_set, &self.f_r, &self.f_d] {
            for &i in set {
                seen[i] += 1;
            }
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::Infeasible("HY sets do not partition [N]".into()));
        }
        Ok(())
    }
}

/// Builds the nonuniform-input partition: `F_r` is high-entropy but not
/// reliable, `F_d` lacks prior entropy, `I` is the rest.
pub fn build_hy_partition(flags: &Flags) -> Result<HyPartition> {
    let len = flags.block_len();
    let mut p = HyPartition {
        n: flags.n,
        i_set: Vec::new(),
        f_r: Vec::new(),
        f_d: Vec::new(),
    };
    for i in 0..len {
        if flags.prior[i] != Class::High {
            p.f_d.push(i);
        } else if flags.given_y[i] == Class::Low {
            p.i_set.push(i);
        } else {
            p.f_r.push(i);
        }
    }
    p.validate()?;
    Ok(p)
}

/// Baseline family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Mahdavifar,
    Sasoglu,
}

/// Builds one of the two prior-work partitions, mapped onto the common
/// container: random bits land in `r1_set`, frozen bits in `b_set`.
///
/// The first baseline assumes a degraded pair, under which the eavesdropper's
/// good set nests inside Receiver 1's; indices violating that nesting (absent
/// under degradation) are kept in `r1_set` so the result is always a
/// disjoint cover. The second baseline is the four-way split whose chaining
/// subset is selected separately by [`select_e`].
pub fn build_baseline_partition(kind: BaselineKind, flags: &Flags) -> Result<IndexPartition> {
    let len = flags.block_len();
    let mut p = IndexPartition {
        schema_version: 1,
        n: flags.n,
        kind: match kind {
            BaselineKind::Mahdavifar => PartitionKind::BaselineMahdavifar,
            BaselineKind::Sasoglu => PartitionKind::BaselineSasoglu,
        },
        delta_low: flags.delta_low,
        delta_high: flags.delta_high,
        i_set: Vec::new(),
        b_set: Vec::new(),
        r1_set: Vec::new(),
        r2_set: Vec::new(),
        d_set: Vec::new(),
        e_set: Vec::new(),
        unclassified: flags.unclassified_count(),
    };
    for i in 0..len {
        let good_y = flags.given_y[i] == Class::Low;
        let good_z = flags.given_z[i] == Class::Low;
        let bad_z = flags.given_z[i] == Class::High;
        match kind {
            BaselineKind::Mahdavifar => {
                if good_z {
                    p.r1_set.push(i);
                } else if good_y {
                    p.i_set.push(i);
                } else {
                    p.b_set.push(i);
                }
            }
            BaselineKind::Sasoglu => match (good_y, bad_z) {
                (true, true) => p.i_set.push(i),
                (false, true) => p.b_set.push(i),
                (true, false) => p.r1_set.push(i),
                (false, false) => p.r2_set.push(i),
            },
        }
    }
    p.validate()?;
    Ok(p)
}

/// Common-layer partition of the broadcast scheme.
///
/// `d1` is the message piece (exclusively good for the forward receiver),
/// `d2` the chained piece with `e2` inside it, `i_u` the mutually good
/// information set. `frozen` indices get constant shared rule bits, and
/// `deterministic` indices get prefix-dependent rule bits. When the sizes
/// come out opposite to the assumed orientation the two pieces swap and
/// `swapped` records that Receiver 2 decodes forward instead of Receiver 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BccCommonPartition {
    pub schema_version: u32,
    pub n: u32,
    pub delta_low: f64,
    pub delta_high: f64,
    pub i_u: Vec<usize>,
    pub d1: Vec<usize>,
    pub d2: Vec<usize>,
    pub e2: Vec<usize>,
    pub frozen: Vec<usize>,
    pub deterministic: Vec<usize>,
    pub swapped: bool,
    /// Derived: secret-layer indices decodable by Receiver 1.
    pub j1: Vec<usize>,
}

impl BccCommonPartition {
    pub fn block_len(&self) -> usize {
        1usize << self.n
    }

    /// Common-message bits carried per cluster of `m` blocks.
    pub fn common_bits(&self, m: usize) -> usize {
        m * self.i_u.len() + (m - 1) * self.d1.len()
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.block_len();
        let mut seen = vec![0u8; len];
        for set in [
            &self.i_u,
            &self.d1,
            &self.d2,
            &self.frozen,
            &self.deterministic,
        ] {
            for &i in set {
                seen[i] += 1;
            }
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::Infeasible(
                "common-layer sets do not partition [N]".into(),
            ));
        }
        if self.e2.len() != self.d1.len() {
            return Err(Error::Infeasible("|E2| must equal |D1|".into()));
        }
        if !self.e2.iter().all(|x| self.d2.binary_search(x).is_ok()) {
            return Err(Error::Infeasible("E2 is not a subset of D2".into()));
        }
        Ok(())
    }
}

/// Builds both broadcast partitions from the two layers' flags.
///
/// The orientation follows the sizes at this block length: the smaller
/// exclusive piece becomes `d1` so that `|d2| >= |d1|` always holds.
pub fn build_bcc_partitions(
    q_flags: &Flags,
    t_flags: &Flags,
) -> Result<(BccCommonPartition, IndexPartition)> {
    let len = q_flags.block_len();
    if q_flags.n != t_flags.n {
        return Err(Error::InvalidParameter("layer flag lengths differ".into()));
    }
    let mut i_u = Vec::new();
    let mut only_y = Vec::new();
    let mut only_z = Vec::new();
    let mut frozen = Vec::new();
    let mut deterministic = Vec::new();
    for i in 0..len {
        if q_flags.prior[i] != Class::High {
            deterministic.push(i);
            continue;
        }
        let good_y = q_flags.given_y[i] == Class::Low;
        let good_z = q_flags.given_z[i] == Class::Low;
        match (good_y, good_z) {
            (true, true) => i_u.push(i),
            (true, false) => only_y.push(i),
            (false, true) => only_z.push(i),
            (false, false) => frozen.push(i),
        }
    }
    // assumed orientation: Receiver 1's exclusive piece is the smaller one
    let swapped = only_z.len() < only_y.len();
    let (d1, d2) = if swapped {
        (only_z, only_y)
    } else {
        (only_y, only_z)
    };
    let e2 = {
        let mut sorted = d2.clone();
        sorted.truncate(d1.len());
        sorted
    };
    assert!(d2.len() >= d1.len(), "orientation guarantees |D2| >= |D1|");

    let secret = build_bcc_secret_partition(t_flags)?;
    let mut j1: Vec<usize> = secret.i_set.iter().chain(&secret.r1_set).copied().collect();
    j1.sort_unstable();

    let common = BccCommonPartition {
        schema_version: 1,
        n: q_flags.n,
        delta_low: q_flags.delta_low,
        delta_high: q_flags.delta_high,
        i_u,
        d1,
        d2,
        e2,
        frozen,
        deterministic,
        swapped,
        j1,
    };
    common.validate()?;
    Ok((common, secret))
}
