//! Per-index reliability statistics: Bhattacharyya parameters and
//! conditional entropies of each transform-domain bit given its prefix and
//! each observer.
//!
//! Two tiers: exact level-by-level synthesis of the bit-channel joint
//! distributions while the synthesized alphabet stays under a state cap
//! (identical-posterior symbols are merged losslessly, which keeps BSC/BEC
//! families tiny), and seeded Monte Carlo estimation along sampled true
//! paths otherwise. A closed-form recursion covers the uniform-input BEC
//! and doubles as a fast oracle.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{binary_entropy, BccSpec, Dmc, WiretapSpec};
use crate::error::{Error, Result};
use crate::polar::{observation_leaves, polar_transform, posteriors_along_path, prior_leaves};
use crate::rng::stream;

/// Default cap on the synthesized joint-state count per level.
pub const DEFAULT_STATE_CAP: usize = 1 << 20;

/// Trials per deterministic Monte Carlo chunk. Fixed so that estimates do
/// not depend on the number of worker threads.
const MC_CHUNK: u64 = 4096;

/// Which estimator produced a statistics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsMethod {
    Exact,
    MonteCarlo,
    BecClosedForm,
}

impl std::fmt::Display for StatsMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StatsMethod::Exact => "exact",
            StatsMethod::MonteCarlo => "montecarlo",
            StatsMethod::BecClosedForm => "bec_closed_form",
        };
        f.write_str(s)
    }
}

/// Which layer the conditionals refer to.
///
/// For `WiretapV`, the `prior` columns condition on the prefix only and the
/// `y`/`z` columns add Receiver 1's and Receiver 2's observations. For
/// `BccQ` the input is the common-layer `Q` with the same reading. For
/// `BccTGivenU` every column additionally conditions on the side sequence
/// `U^N`: `prior` means "given prefix and U", `y` means "given prefix, U and
/// Y", and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsLayer {
    WiretapV,
    BccQ,
    BccTGivenU,
}

/// Per-index reliability profile of one polarization layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BitChannelStats {
    pub schema_version: u32,
    pub n: u32,
    pub layer: StatsLayer,
    pub method: StatsMethod,
    pub sample_count: u64,
    pub z_prior: Vec<f64>,
    pub h_prior: Vec<f64>,
    pub z_y: Vec<f64>,
    pub h_y: Vec<f64>,
    pub z_z: Vec<f64>,
    pub h_z: Vec<f64>,
    /// Standard errors of the `z` estimates; all zero for exact methods.
    pub se_z_prior: Vec<f64>,
    pub se_z_y: Vec<f64>,
    pub se_z_z: Vec<f64>,
}

impl BitChannelStats {
    pub fn block_len(&self) -> usize {
        1usize << self.n
    }

    /// Largest standard error across the z estimates at one index.
    pub fn stderr_at(&self, i: usize) -> f64 {
        self.se_z_prior[i].max(self.se_z_y[i]).max(self.se_z_z[i])
    }

    /// CSV rendering with the fixed schema
    /// `index,z_prior,z_y,z_z,h_prior,h_y,h_z,method,stderr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,z_prior,z_y,z_z,h_prior,h_y,h_z,method,stderr\n");
        for i in 0..self.block_len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                i,
                self.z_prior[i],
                self.z_y[i],
                self.z_z[i],
                self.h_prior[i],
                self.h_y[i],
                self.h_z[i],
                self.method,
                self.stderr_at(i)
            ));
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&data)?)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Exact synthesis
// ---------------------------------------------------------------------------

/// Joint distribution of one binary input and a finite observation,
/// `mass[s] = [P(X=0, S=s), P(X=1, S=s)]`.
#[derive(Debug, Clone)]
struct JointChannel {
    mass: Vec<[f64; 2]>,
}

impl JointChannel {
    fn new(mass: Vec<[f64; 2]>) -> Self {
        JointChannel { mass }
    }

    /// Merges symbols with identical input posteriors. Lossless for every
    /// statistic that depends on the joint only through the posterior, which
    /// covers Z and H.
    fn merged(&self, cap: usize) -> Result<Self> {
        let mut classes = Classes::new();
        for &pair in &self.mass {
            classes.add(pair);
        }
        classes.finish(cap)
    }

    fn check_step_budget(&self, cap: usize) -> Result<()> {
        let m = self.mass.len();
        if m.saturating_mul(m) > cap.saturating_mul(64) {
            return Err(Error::BudgetExceeded(format!(
                "synthesis step over {m}^2 symbol pairs exceeds the state budget; \
                 use Monte Carlo statistics instead"
            )));
        }
        Ok(())
    }

    /// Parity channel of two independent copies: input `c = x1 ^ x2`,
    /// observation `(s1, s2)`.
    fn minus(&self, cap: usize) -> Result<Self> {
        self.check_step_budget(cap)?;
        let mut classes = Classes::new();
        for &[a0, a1] in &self.mass {
            for &[b0, b1] in &self.mass {
                classes.add([a0 * b0 + a1 * b1, a0 * b1 + a1 * b0]);
            }
        }
        classes.finish(cap)
    }

    /// Refined channel of two independent copies: input `x2`, observation
    /// `(s1, s2, c)` with `c = x1 ^ x2` revealed.
    fn plus(&self, cap: usize) -> Result<Self> {
        self.check_step_budget(cap)?;
        let mut classes = Classes::new();
        for &[a0, a1] in &self.mass {
            for &[b0, b1] in &self.mass {
                // c = 0: x1 = x2; c = 1: x1 = !x2
                classes.add([a0 * b0, a1 * b1]);
                classes.add([a1 * b0, a0 * b1]);
            }
        }
        classes.finish(cap)
    }

    /// Bhattacharyya parameter `Z(X|S)`.
    fn z(&self) -> f64 {
        let raw: f64 = self.mass.iter().map(|&[m0, m1]| (m0 * m1).sqrt()).sum();
        (2.0 * raw).clamp(0.0, 1.0)
    }

    /// Conditional entropy `H(X|S)` in bits.
    fn h(&self) -> f64 {
        let raw: f64 = self
            .mass
            .iter()
            .map(|&[m0, m1]| {
                let total = m0 + m1;
                if total > 0.0 {
                    total * binary_entropy(m0 / total)
                } else {
                    0.0
                }
            })
            .sum();
        raw.clamp(0.0, 1.0)
    }
}

/// Posterior-class accumulator keyed on a 1e-12 quantization of the class
/// posterior; BTreeMap keeps the symbol order deterministic.
struct Classes {
    map: BTreeMap<u64, [f64; 2]>,
}

impl Classes {
    fn new() -> Self {
        Classes {
            map: BTreeMap::new(),
        }
    }

    fn add(&mut self, [m0, m1]: [f64; 2]) {
        let total = m0 + m1;
        if total <= 0.0 {
            return;
        }
        let key = ((m0 / total) * 1e12).round() as u64;
        let entry = self.map.entry(key).or_insert([0.0, 0.0]);
        entry[0] += m0;
        entry[1] += m1;
    }

    fn finish(self, cap: usize) -> Result<JointChannel> {
        if self.map.len() > cap {
            return Err(Error::BudgetExceeded(format!(
                "synthesized alphabet has {} states (cap {cap}); use Monte Carlo statistics instead",
                self.map.len()
            )));
        }
        Ok(JointChannel::new(self.map.into_values().collect()))
    }
}

/// Synthesizes `Z` and `H` of every index's bit channel from one leaf joint.
///
/// Index `i`'s channel is reached by folding the synthesis steps along the
/// binary expansion of `i`, most significant bit first, with 0 mapping to
/// the parity step and 1 to the refined step.
fn synthesize_all(leaf: &JointChannel, n: u32, cap: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = 1usize << n;
    let base = leaf.merged(cap)?;
    let mut zs = vec![0.0; len];
    let mut hs = vec![0.0; len];
    for i in 0..len {
        let mut cur = base.clone();
        for level in (0..n).rev() {
            cur = if i >> level & 1 == 0 {
                cur.minus(cap)?
            } else {
                cur.plus(cap)?
            };
        }
        zs[i] = cur.z();
        hs[i] = cur.h();
    }
    Ok((zs, hs))
}

fn joint_prior(p1: f64) -> JointChannel {
    JointChannel::new(vec![[1.0 - p1, p1]])
}

fn joint_with_channel(p1: f64, w: &Dmc) -> JointChannel {
    let mass = (0..w.output_size())
        .map(|y| [(1.0 - p1) * w.likelihood(0, y), p1 * w.likelihood(1, y)])
        .collect();
    JointChannel::new(mass)
}

/// Leaf joint for the secret layer of the broadcast scheme: input `V`,
/// observation `(U, Y)` (or `(U)` alone when `w` is `None`).
fn joint_given_u(spec: &BccSpec, w: Option<&Dmc>) -> JointChannel {
    let pu = spec.u_dist();
    let mut mass = Vec::new();
    for (u, &p_u) in pu.iter().enumerate() {
        let pv = [spec.p_v_given_u[u][0] * p_u, spec.p_v_given_u[u][1] * p_u];
        match w {
            None => mass.push(pv),
            Some(w) => {
                for y in 0..w.output_size() {
                    mass.push([pv[0] * w.likelihood(0, y), pv[1] * w.likelihood(1, y)]);
                }
            }
        }
    }
    JointChannel::new(mass)
}

/// Exact statistics for the wiretap layer: `Z(T_i|T^{i-1})`,
/// `Z(T_i|T^{i-1},Y^N)` and `Z(T_i|T^{i-1},Z^N)` plus entropies.
pub fn exact_wiretap_stats(spec: &WiretapSpec, n: u32, cap: usize) -> Result<BitChannelStats> {
    spec.validate()?;
    let p1 = spec.p_v;
    let (z_prior, h_prior) = synthesize_all(&joint_prior(p1), n, cap)?;
    let (z_y, h_y) = synthesize_all(&joint_with_channel(p1, &spec.effective_w1()?), n, cap)?;
    let (z_z, h_z) = synthesize_all(&joint_with_channel(p1, &spec.effective_w2()?), n, cap)?;
    let len = 1usize << n;
    Ok(BitChannelStats {
        schema_version: 1,
        n,
        layer: StatsLayer::WiretapV,
        method: StatsMethod::Exact,
        sample_count: 0,
        z_prior,
        h_prior,
        z_y,
        h_y,
        z_z,
        h_z,
        se_z_prior: vec![0.0; len],
        se_z_y: vec![0.0; len],
        se_z_z: vec![0.0; len],
    })
}

/// Exact statistics for the common layer of the broadcast scheme.
pub fn exact_bcc_q_stats(spec: &BccSpec, n: u32, cap: usize) -> Result<BitChannelStats> {
    spec.validate()?;
    let p1 = spec.p_u;
    let (z_prior, h_prior) = synthesize_all(&joint_prior(p1), n, cap)?;
    let (z_y, h_y) = synthesize_all(&joint_with_channel(p1, &spec.effective_uy()?), n, cap)?;
    let (z_z, h_z) = synthesize_all(&joint_with_channel(p1, &spec.effective_uz()?), n, cap)?;
    let len = 1usize << n;
    Ok(BitChannelStats {
        schema_version: 1,
        n,
        layer: StatsLayer::BccQ,
        method: StatsMethod::Exact,
        sample_count: 0,
        z_prior,
        h_prior,
        z_y,
        h_y,
        z_z,
        h_z,
        se_z_prior: vec![0.0; len],
        se_z_y: vec![0.0; len],
        se_z_z: vec![0.0; len],
    })
}

/// Exact statistics for the secret layer of the broadcast scheme, with every
/// conditional carrying `U^N` as side information.
pub fn exact_bcc_t_stats(spec: &BccSpec, n: u32, cap: usize) -> Result<BitChannelStats> {
    spec.validate()?;
    let (z_prior, h_prior) = synthesize_all(&joint_given_u(spec, None), n, cap)?;
    let (z_y, h_y) = synthesize_all(&joint_given_u(spec, Some(&spec.effective_vy()?)), n, cap)?;
    let (z_z, h_z) = synthesize_all(&joint_given_u(spec, Some(&spec.effective_vz()?)), n, cap)?;
    let len = 1usize << n;
    Ok(BitChannelStats {
        schema_version: 1,
        n,
        layer: StatsLayer::BccTGivenU,
        method: StatsMethod::Exact,
        sample_count: 0,
        z_prior,
        h_prior,
        z_y,
        h_y,
        z_z,
        h_z,
        se_z_prior: vec![0.0; len],
        se_z_y: vec![0.0; len],
        se_z_z: vec![0.0; len],
    })
}

// ---------------------------------------------------------------------------
// BEC closed form
// ---------------------------------------------------------------------------

/// Closed-form Bhattacharyya vector for a uniform-input BEC: starting from
/// `Z = eps`, the parity step maps `Z -> 2Z - Z^2` and the refined step maps
/// `Z -> Z^2`, exactly.
pub fn bec_bit_stats(eps: f64, n: u32) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&eps) || eps.is_nan() {
        return Err(Error::InvalidParameter(format!("eps = {eps} not in [0,1]")));
    }
    let len = 1usize << n;
    let mut zs = vec![0.0; len];
    for (i, slot) in zs.iter_mut().enumerate() {
        let mut z = eps;
        for level in (0..n).rev() {
            z = if i >> level & 1 == 0 {
                2.0 * z - z * z
            } else {
                z * z
            };
        }
        *slot = z;
    }
    Ok(zs)
}

/// Closed-form wiretap statistics for a uniform `V = X` over a BEC pair.
///
/// The synthesized bit channels of a BEC are BECs again, so `H` equals `Z`
/// at every index and the prior columns are exactly one.
pub fn bec_closed_form_stats(spec: &WiretapSpec, n: u32) -> Result<BitChannelStats> {
    spec.validate()?;
    let identity = spec.p_x_given_v == [[1.0, 0.0], [0.0, 1.0]];
    if spec.p_v != 0.5 || !identity {
        return Err(Error::InvalidParameter(
            "BEC closed form requires a uniform V = X specification".into(),
        ));
    }
    let eps1 = spec
        .w1
        .as_bec()
        .ok_or_else(|| Error::InvalidParameter("w1 is not a BEC".into()))?;
    let eps2 = spec
        .w2
        .as_bec()
        .ok_or_else(|| Error::InvalidParameter("w2 is not a BEC".into()))?;
    let z_y = bec_bit_stats(eps1, n)?;
    let z_z = bec_bit_stats(eps2, n)?;
    let len = 1usize << n;
    Ok(BitChannelStats {
        schema_version: 1,
        n,
        layer: StatsLayer::WiretapV,
        method: StatsMethod::BecClosedForm,
        sample_count: 0,
        z_prior: vec![1.0; len],
        h_prior: vec![1.0; len],
        h_y: z_y.clone(),
        z_y,
        h_z: z_z.clone(),
        z_z,
        se_z_prior: vec![0.0; len],
        se_z_y: vec![0.0; len],
        se_z_z: vec![0.0; len],
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo estimation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Accumulator {
    z_sum: Vec<f64>,
    z_sq: Vec<f64>,
    h_sum: Vec<f64>,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Accumulator {
            z_sum: vec![0.0; len],
            z_sq: vec![0.0; len],
            h_sum: vec![0.0; len],
        }
    }

    fn record(&mut self, posteriors: &[crate::polar::BeliefPair]) {
        for (i, b) in posteriors.iter().enumerate() {
            let z = b.bhattacharyya();
            self.z_sum[i] += z;
            self.z_sq[i] += z * z;
            self.h_sum[i] += b.entropy();
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for i in 0..self.z_sum.len() {
            self.z_sum[i] += other.z_sum[i];
            self.z_sq[i] += other.z_sq[i];
            self.h_sum[i] += other.h_sum[i];
        }
    }

    fn finish(&self, samples: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let s = samples as f64;
        let mean: Vec<f64> = self.z_sum.iter().map(|&v| v / s).collect();
        let se: Vec<f64> = self
            .z_sq
            .iter()
            .zip(&mean)
            .map(|(&sq, &m)| ((sq / s - m * m).max(0.0) / s).sqrt())
            .collect();
        let h: Vec<f64> = self.h_sum.iter().map(|&v| v / s).collect();
        (mean, se, h)
    }
}

/// One sampled transmission, reduced to what the estimators need.
struct Draw {
    /// Leaf-domain prior of each position (probability of 1).
    priors: Vec<f64>,
    /// True transform-domain path.
    t: Vec<bool>,
    y: Vec<usize>,
    z: Vec<usize>,
}

fn run_mc<S>(
    n: u32,
    samples: u64,
    seed: u64,
    threads: usize,
    eff_y: Dmc,
    eff_z: Dmc,
    sampler: S,
) -> Result<(Accumulator, Accumulator, Accumulator)>
where
    S: Fn(&mut rand_chacha::ChaCha12Rng) -> Draw + Sync,
{
    let len = 1usize << n;
    let chunks: Vec<(u64, u64)> = (0..samples)
        .step_by(MC_CHUNK as usize)
        .map(|start| (start, (start + MC_CHUNK).min(samples)))
        .collect();
    let threads = threads.max(1);
    let results: Vec<Result<(Accumulator, Accumulator, Accumulator)>> =
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for chunk_ids in partition_round_robin(chunks.len(), threads) {
                let chunks = &chunks;
                let sampler = &sampler;
                let eff_y = &eff_y;
                let eff_z = &eff_z;
                handles.push(scope.spawn(move || {
                    let mut out = Vec::new();
                    for id in chunk_ids {
                        let (start, end) = chunks[id];
                        out.push((
                            id,
                            mc_chunk(n, len, start, end, seed, eff_y, eff_z, sampler),
                        ));
                    }
                    out
                }));
            }
            let mut collected: Vec<Option<Result<(Accumulator, Accumulator, Accumulator)>>> =
                (0..chunks.len()).map(|_| None).collect();
            for handle in handles {
                for (id, res) in handle.join().expect("estimator thread panicked") {
                    collected[id] = Some(res);
                }
            }
            collected
                .into_iter()
                .map(|r| r.expect("chunk not computed"))
                .collect()
        });

    let mut prior = Accumulator::new(len);
    let mut y = Accumulator::new(len);
    let mut z = Accumulator::new(len);
    for res in results {
        let (p, cy, cz) = res?;
        prior.merge(&p);
        y.merge(&cy);
        z.merge(&cz);
    }
    Ok((prior, y, z))
}

fn partition_round_robin(count: usize, workers: usize) -> Vec<Vec<usize>> {
    let slots = workers.min(count).max(1);
    let mut out = vec![Vec::new(); slots];
    for id in 0..count {
        out[id % slots].push(id);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn mc_chunk<S>(
    _n: u32,
    len: usize,
    start: u64,
    end: u64,
    seed: u64,
    eff_y: &Dmc,
    eff_z: &Dmc,
    sampler: &S,
) -> Result<(Accumulator, Accumulator, Accumulator)>
where
    S: Fn(&mut rand_chacha::ChaCha12Rng) -> Draw,
{
    let mut acc_prior = Accumulator::new(len);
    let mut acc_y = Accumulator::new(len);
    let mut acc_z = Accumulator::new(len);
    for trial in start..end {
        let mut rng = stream(seed, "mc.trial", trial);
        let draw = sampler(&mut rng);
        let leaves = prior_leaves(&draw.priors)?;
        acc_prior.record(&posteriors_along_path(&leaves, &draw.t)?);
        let leaves = observation_leaves(&draw.priors, eff_y, &draw.y)?;
        acc_y.record(&posteriors_along_path(&leaves, &draw.t)?);
        let leaves = observation_leaves(&draw.priors, eff_z, &draw.z)?;
        acc_z.record(&posteriors_along_path(&leaves, &draw.t)?);
    }
    Ok((acc_prior, acc_y, acc_z))
}

/// Monte Carlo statistics for the wiretap layer.
///
/// Each trial draws `(v^N, y^N, z^N)` from the specification, follows the
/// true path `t = v G`, and averages `2 sqrt(p0 p1)` and `h(p0)` of the
/// per-index posteriors, which are unbiased for `Z` and `H`. Trials use
/// streams keyed by `(seed, trial)`, so results are independent of the
/// thread schedule.
pub fn mc_wiretap_stats(
    spec: &WiretapSpec,
    n: u32,
    samples: u64,
    seed: u64,
    threads: usize,
) -> Result<BitChannelStats> {
    spec.validate()?;
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    let len = 1usize << n;
    let eff_y = spec.effective_w1()?;
    let eff_z = spec.effective_w2()?;
    let w1 = spec.w1.clone();
    let w2 = spec.w2.clone();
    let p_x_given_v = spec.p_x_given_v;
    let p_v = spec.p_v;
    let sampler = move |rng: &mut rand_chacha::ChaCha12Rng| {
        let v: Vec<bool> = (0..len).map(|_| rng.gen_bool(p_v)).collect();
        let x: Vec<usize> = v
            .iter()
            .map(|&vb| usize::from(rng.gen_bool(p_x_given_v[vb as usize][1])))
            .collect();
        let y: Vec<usize> = x.iter().map(|&xb| w1.sample(xb, rng)).collect();
        let z: Vec<usize> = x.iter().map(|&xb| w2.sample(xb, rng)).collect();
        let t = polar_transform(&v).expect("power-of-two length");
        Draw {
            priors: vec![p_v; len],
            t,
            y,
            z,
        }
    };
    let (prior, y, z) = run_mc(n, samples, seed, threads, eff_y, eff_z, sampler)?;
    let (z_prior, se_z_prior, h_prior) = prior.finish(samples);
    let (z_y, se_z_y, h_y) = y.finish(samples);
    let (z_z, se_z_z, h_z) = z.finish(samples);
    Ok(BitChannelStats {
        schema_version: 1,
        n,
        layer: StatsLayer::WiretapV,
        method: StatsMethod::MonteCarlo,
        sample_count: samples,
        z_prior,
        h_prior,
        z_y,
        h_y,
        z_z,
        h_z,
        se_z_prior,
        se_z_y,
        se_z_z,
    })
}

/// Monte Carlo statistics for the common layer of the broadcast scheme.
pub fn mc_bcc_q_stats(
    spec: &BccSpec,
    n: u32,
    samples: u64,
    seed: u64,
    threads: usize,
) -> Result<BitChannelStats> {
    spec.validate()?;
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    let len = 1usize << n;
    let eff_uy = spec.effective_uy()?;
    let eff_uz = spec.effective_uz()?;
    let spec = spec.clone();
    let sampler = move |rng: &mut rand_chacha::ChaCha12Rng| {
        let u: Vec<bool> = (0..len).map(|_| rng.gen_bool(spec.p_u)).collect();
        let v: Vec<bool> = u
            .iter()
            .map(|&ub| rng.gen_bool(spec.p_v_given_u[ub as usize][1]))
            .collect();
        let x: Vec<usize> = v
            .iter()
            .map(|&vb| usize::from(rng.gen_bool(spec.p_x_given_v[vb as usize][1])))
            .collect();
        let y: Vec<usize> = x.iter().map(|&xb| spec.w1.sample(xb, rng)).collect();
        let z: Vec<usize> = x.iter().map(|&xb| spec.w2.sample(xb, rng)).collect();
        let q = polar_transform(&u).expect("power-of-two length");
        Draw {
            priors: vec![spec.p_u; len],
            t: q,
            y,
            z,
        }
    };
    let (prior, y, z) = run_mc(n, samples, seed, threads, eff_uy, eff_uz, sampler)?;
    let (z_prior, se_z_prior, h_prior) = prior.finish(samples);
    let (z_y, se_z_y, h_y) = y.finish(samples);
    let (z_z, se_z_z, h_z) = z.finish(samples);
    Ok(BitChannelStats {
        schema_version: 1,
        n,
        layer: StatsLayer::BccQ,
        method: StatsMethod::MonteCarlo,
        sample_count: samples,
        z_prior,
        h_prior,
        z_y,
        h_y,
        z_z,
        h_z,
        se_z_prior,
        se_z_y,
        se_z_z,
    })
}

/// Monte Carlo statistics for the secret layer of the broadcast scheme. A
/// sampled `u^N` enters as a per-position prior at the leaves, which is the
/// same as conditioning every statistic on `U^N`.
pub fn mc_bcc_t_stats(
    spec: &BccSpec,
    n: u32,
    samples: u64,
    seed: u64,
    threads: usize,
) -> Result<BitChannelStats> {
    spec.validate()?;
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    let len = 1usize << n;
    let eff_vy = spec.effective_vy()?;
    let eff_vz = spec.effective_vz()?;
    let spec = spec.clone();
    let sampler = move |rng: &mut rand_chacha::ChaCha12Rng| {
        let u: Vec<bool> = (0..len).map(|_| rng.gen_bool(spec.p_u)).collect();
        let priors: Vec<f64> = u
            .iter()
            .map(|&ub| spec.p_v_given_u[ub as usize][1])
            .collect();
        let v: Vec<bool> = priors.iter().map(|&p| rng.gen_bool(p)).collect();
        let x: Vec<usize> = v
            .iter()
            .map(|&vb| usize::from(rng.gen_bool(spec.p_x_given_v[vb as usize][1])))
            .collect();
        let y: Vec<usize> = x.iter().map(|&xb| spec.w1.sample(xb, rng)).collect();
        let z: Vec<usize> = x.iter().map(|&xb| spec.w2.sample(xb, rng)).collect();
        let t = polar_transform(&v).expect("power-of-two length");
        Draw { priors, t, y, z }
    };
    let (prior, y, z) = run_mc(n, samples, seed, threads, eff_vy, eff_vz, sampler)?;
    let (z_prior, se_z_prior, h_prior) = prior.finish(samples);
    let (z_y, se_z_y, h_y) = y.finish(samples);
    let (z_z, se_z_z, h_z) = z.finish(samples);
    Ok(BitChannelStats {
        schema_version: 1,
        n,
        layer: StatsLayer::BccTGivenU,
        method: StatsMethod::MonteCarlo,
        sample_count: samples,
        z_prior,
        h_prior,
        z_y,
        h_y,
        z_z,
        h_z,
        se_z_prior,
        se_z_y,
        se_z_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_bec_spec(e1: f64, e2: f64) -> WiretapSpec {
        WiretapSpec::direct(0.5, Dmc::bec(e1).unwrap(), Dmc::bec(e2).unwrap()).unwrap()
    }

    #[test]
    fn bec_recursion_known_values() {
        assert_eq!(bec_bit_stats(0.0, 4).unwrap(), vec![0.0; 16]);
        assert_eq!(bec_bit_stats(1.0, 4).unwrap(), vec![1.0; 16]);
        let z = bec_bit_stats(0.5, 2).unwrap();
        let expect = [0.9375, 0.5625, 0.4375, 0.0625];
        for (got, want) in z.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_bec_matches_closed_form() {
        let spec = uniform_bec_spec(0.5, 0.5);
        let stats = exact_wiretap_stats(&spec, 1, DEFAULT_STATE_CAP).unwrap();
        assert!((stats.z_y[0] - 0.75).abs() < 1e-12);
        assert!((stats.z_y[1] - 0.25).abs() < 1e-12);
        for n in 1..=4 {
            let stats = exact_wiretap_stats(&spec, n, DEFAULT_STATE_CAP).unwrap();
            let closed = bec_bit_stats(0.5, n).unwrap();
            for (a, b) in stats.z_y.iter().zip(&closed) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_channel_zeroes_conditioned_z() {
        let spec =
            WiretapSpec::direct(0.5, Dmc::bsc(0.0).unwrap(), Dmc::bsc(0.5).unwrap()).unwrap();
        let stats = exact_wiretap_stats(&spec, 3, DEFAULT_STATE_CAP).unwrap();
        for i in 0..8 {
            assert!(stats.z_y[i].abs() < 1e-12);
            // pure-noise observer adds nothing over the prior
            assert!((stats.z_z[i] - stats.z_prior[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_source_has_unit_prior_z() {
        let spec = uniform_bec_spec(0.3, 0.6);
        let stats = exact_wiretap_stats(&spec, 3, DEFAULT_STATE_CAP).unwrap();
        for i in 0..8 {
            assert!((stats.z_prior[i] - 1.0).abs() < 1e-12);
            assert!((stats.h_prior[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn z_squared_below_h_per_index() {
        let spec = WiretapSpec::new(
            0.3,
            [[0.9, 0.1], [0.2, 0.8]],
            Dmc::bsc(0.1).unwrap(),
            Dmc::bec(0.4).unwrap(),
        )
        .unwrap();
        let stats = exact_wiretap_stats(&spec, 3, DEFAULT_STATE_CAP).unwrap();
        for i in 0..8 {
            assert!(stats.z_prior[i] * stats.z_prior[i] <= stats.h_prior[i] + 1e-9);
            assert!(stats.z_y[i] * stats.z_y[i] <= stats.h_y[i] + 1e-9);
            assert!(stats.z_z[i] * stats.z_z[i] <= stats.h_z[i] + 1e-9);
        }
    }

    #[test]
    fn conditioning_cannot_increase_z() {
        let spec = WiretapSpec::new(
            0.35,
            [[0.95, 0.05], [0.1, 0.9]],
            Dmc::bsc(0.15).unwrap(),
            Dmc::bec(0.5).unwrap(),
        )
        .unwrap();
        let stats = exact_wiretap_stats(&spec, 3, DEFAULT_STATE_CAP).unwrap();
        for i in 0..8 {
            assert!(stats.z_y[i] <= stats.z_prior[i] + 1e-12);
            assert!(stats.z_z[i] <= stats.z_prior[i] + 1e-12);
        }
    }

    #[test]
    fn deterministic_source_has_zero_prior_z() {
        let spec =
            WiretapSpec::direct(0.0, Dmc::bsc(0.1).unwrap(), Dmc::bsc(0.2).unwrap()).unwrap();
        let exact = exact_wiretap_stats(&spec, 3, DEFAULT_STATE_CAP).unwrap();
        let mc = mc_wiretap_stats(&spec, 3, 500, 9, 2).unwrap();
        for i in 0..8 {
            assert!(exact.z_prior[i].abs() < 1e-12);
            assert!(mc.z_prior[i].abs() < 1e-12);
        }
    }

    #[test]
    fn mc_is_bit_identical_across_runs_and_threads() {
        let spec = uniform_bec_spec(0.4, 0.7);
        let a = mc_wiretap_stats(&spec, 3, 2000, 77, 1).unwrap();
        let b = mc_wiretap_stats(&spec, 3, 2000, 77, 4).unwrap();
        assert_eq!(a.z_y, b.z_y);
        assert_eq!(a.se_z_y, b.se_z_y);
        assert_eq!(a.h_z, b.h_z);
        let c = mc_wiretap_stats(&spec, 3, 2000, 78, 2).unwrap();
        assert_ne!(a.z_y, c.z_y);
    }

    #[test]
    fn mc_agrees_with_exact_within_four_sigma() {
        let spec = uniform_bec_spec(0.5, 0.5);
        let exact = exact_wiretap_stats(&spec, 3, DEFAULT_STATE_CAP).unwrap();
        let mc = mc_wiretap_stats(&spec, 3, 20_000, 5, 4).unwrap();
        let mut agree = 0;
        for i in 0..8 {
            let tol = 4.0 * mc.se_z_y[i] + 1e-9;
            if (mc.z_y[i] - exact.z_y[i]).abs() <= tol {
                agree += 1;
            }
        }
        assert!(agree >= 7, "only {agree}/8 indices within 4 sigma");
    }

    #[test]
    fn state_cap_is_enforced() {
        let spec = WiretapSpec::new(
            0.3,
            [[0.9, 0.1], [0.2, 0.8]],
            Dmc::bsc(0.1).unwrap(),
            Dmc::bsc(0.2).unwrap(),
        )
        .unwrap();
        match exact_wiretap_stats(&spec, 6, 8) {
            Err(Error::BudgetExceeded(msg)) => assert!(msg.contains("Monte Carlo")),
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn closed_form_requires_uniform_bec() {
        let ok = uniform_bec_spec(0.3, 0.6);
        assert!(bec_closed_form_stats(&ok, 4).is_ok());
        let bad = WiretapSpec::direct(0.4, Dmc::bec(0.3).unwrap(), Dmc::bec(0.6).unwrap()).unwrap();
        assert!(bec_closed_form_stats(&bad, 4).is_err());
        let bad = WiretapSpec::direct(0.5, Dmc::bsc(0.3).unwrap(), Dmc::bec(0.6).unwrap()).unwrap();
        assert!(bec_closed_form_stats(&bad, 4).is_err());
    }

    #[test]
    fn polarization_fraction_approaches_capacity() {
        // fraction of indices with z_y < 0.1 for BEC(0.3) climbs toward the
        // capacity 0.7; the exact values are 0.6055 / 0.6377 / 0.6567 at
        // N = 256 / 1024 / 4096
        let fraction = |n: u32| {
            let z = bec_bit_stats(0.3, n).unwrap();
            z.iter().filter(|&&v| v < 0.1).count() as f64 / (1usize << n) as f64
        };
        let f10 = fraction(10);
        assert!((f10 - 0.7).abs() < 0.07, "fraction {f10}");
        let (f8, f12) = (fraction(8), fraction(12));
        assert!(f8 < f10 && f10 < f12 && f12 < 0.7);
    }

    #[test]
    fn bcc_t_stats_reduce_to_wiretap_when_u_constant() {
        let bcc = BccSpec::new(
            0.0,
            [[0.65, 0.35], [0.35, 0.65]],
            [[1.0, 0.0], [0.0, 1.0]],
            Dmc::bec(0.3).unwrap(),
            Dmc::bec(0.6).unwrap(),
        )
        .unwrap();
        // with U = 0 a.s., the secret layer sees prior P(V|U=0)
        let wt = WiretapSpec::direct(0.35, Dmc::bec(0.3).unwrap(), Dmc::bec(0.6).unwrap()).unwrap();
        let a = exact_bcc_t_stats(&bcc, 3, DEFAULT_STATE_CAP).unwrap();
        let b = exact_wiretap_stats(&wt, 3, DEFAULT_STATE_CAP).unwrap();
        for i in 0..8 {
            assert!((a.z_y[i] - b.z_y[i]).abs() < 1e-9);
            assert!((a.z_prior[i] - b.z_prior[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_schema_is_fixed() {
        let spec = uniform_bec_spec(0.3, 0.6);
        let stats = exact_wiretap_stats(&spec, 2, DEFAULT_STATE_CAP).unwrap();
        let csv = stats.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "index,z_prior,z_y,z_z,h_prior,h_y,h_z,method,stderr"
        );
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn stats_json_round_trip() {
        let spec = uniform_bec_spec(0.3, 0.6);
        let stats = exact_wiretap_stats(&spec, 2, DEFAULT_STATE_CAP).unwrap();
        let dir = std::env::temp_dir().join("polarwire_stats_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("stats.json");
        stats.write_json(&path).unwrap();
        let back = BitChannelStats::read_json(&path).unwrap();
        assert_eq!(back.z_y, stats.z_y);
        assert_eq!(back.method, stats.method);
        std::fs::remove_dir_all(&dir).ok();
    }
}
