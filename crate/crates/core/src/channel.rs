//! Binary-input discrete memoryless channels and joint source/channel
//! specifications.
//!
//! A [`Dmc`] is a row-stochastic likelihood table over a finite output
//! alphabet. [`WiretapSpec`] and [`BccSpec`] bundle the auxiliary-variable
//! distributions with the two channels so that the Markov chains
//! `V -> X -> Y,Z` and `U -> V -> X -> Y,Z` hold by construction: outputs are
//! always generated from `X` alone.
//!
//! All information quantities are in bits (log base 2) and probabilities are
//! kept in the linear domain with a 1e-12 normalization tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "this row sums to one".
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Output index of the erasure symbol in a binary erasure channel.
pub const BEC_ERASURE: usize = 2;

/// Largest output alphabet accepted by [`Dmc::symmetry_permutation`] by default.
pub const DEFAULT_SYMMETRY_CAP: usize = 12;

/// A 2x2 row-stochastic conditional table, `table[a][b] = P(b | a)`.
pub type CondTable = [[f64; 2]; 2];

fn validate_cond_table(table: &CondTable, what: &str) -> Result<()> {
    for (row_idx, row) in table.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotStochastic {
                row: row_idx,
                detail: format!("{what} row sums to {sum}"),
            });
        }
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::NotStochastic {
                row: row_idx,
                detail: format!("{what} has an entry outside [0,1]"),
            });
        }
    }
    Ok(())
}

fn validate_prob(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "{what} = {p} not in [0,1]"
        )));
    }
    Ok(())
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Channel families with closed-form capacity and degradation conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelFamily {
    Bsc,
    Bec,
}

/// Result of the analytic degradation test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degradation {
    /// The second channel is degraded with respect to the first.
    Degraded,
    /// The pair is recognized and provably not degraded in this direction.
    NotDegraded,
    /// The pair does not match a recognized analytic family.
    Unknown,
}

/// JSON wire form of a channel: `{"kind":"bsc","p":..}`, `{"kind":"bec","eps":..}`
/// or `{"kind":"table","rows":[[..],[..]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ChannelJson {
    Bsc { p: f64 },
    Bec { eps: f64 },
    Table { rows: [Vec<f64>; 2] },
}

/// A binary-input discrete memoryless channel `W(y|x)`.
///
/// Rows are indexed by the input bit, columns by the output symbol. Every
/// row sums to one within [`ROW_SUM_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelJson", into = "ChannelJson")]
pub struct Dmc {
    rows: [Vec<f64>; 2],
}

impl Dmc {
    /// Builds a channel from an explicit likelihood table.
    pub fn from_rows(rows: [Vec<f64>; 2]) -> Result<Self> {
        if rows[0].len() != rows[1].len() || rows[0].is_empty() {
            return Err(Error::InvalidParameter(
                "likelihood rows must be nonempty and of equal length".into(),
            ));
        }
        for (row_idx, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotStochastic {
                    row: row_idx,
                    detail: format!("sums to {sum}"),
                });
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::NotStochastic {
                    row: row_idx,
                    detail: "entry outside [0,1]".into(),
                });
            }
        }
        Ok(Dmc { rows })
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        validate_prob(p, "BSC crossover")?;
        Dmc::from_rows([vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// Binary erasure channel with erasure probability `eps`. The erasure
    /// symbol sits at output index [`BEC_ERASURE`].
    pub fn bec(eps: f64) -> Result<Self> {
        validate_prob(eps, "BEC erasure")?;
        Dmc::from_rows([vec![1.0 - eps, 0.0, eps], vec![0.0, 1.0 - eps, eps]])
    }

    /// Builds the channel for `kind` with the given parameter.
    pub fn standard(kind: ChannelFamily, param: f64) -> Result<Self> {
        match kind {
            ChannelFamily::Bsc => Dmc::bsc(param),
            ChannelFamily::Bec => Dmc::bec(param),
        }
    }

    pub fn output_size(&self) -> usize {
        self.rows[0].len()
    }

    /// Likelihood `W(y|x)`.
    pub fn likelihood(&self, x: usize, y: usize) -> f64 {
        self.rows[x][y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    /// Recognizes a BSC-shaped table and returns its crossover probability.
    pub fn as_bsc(&self) -> Option<f64> {
        if self.output_size() != 2 {
            return None;
        }
        let p = self.rows[0][1];
        let matches = (self.rows[0][0] - (1.0 - p)).abs() <= ROW_SUM_TOL
            && (self.rows[1][0] - p).abs() <= ROW_SUM_TOL
            && (self.rows[1][1] - (1.0 - p)).abs() <= ROW_SUM_TOL;
        matches.then_some(p)
    }

    /// Recognizes a BEC-shaped table and returns its erasure probability.
    pub fn as_bec(&self) -> Option<f64> {
        if self.output_size() != 3 {
            return None;
        }
        let eps = self.rows[0][BEC_ERASURE];
        let matches = (self.rows[0][0] - (1.0 - eps)).abs() <= ROW_SUM_TOL
            && self.rows[0][1].abs() <= ROW_SUM_TOL
            && self.rows[1][0].abs() <= ROW_SUM_TOL
            && (self.rows[1][1] - (1.0 - eps)).abs() <= ROW_SUM_TOL
            && (self.rows[1][BEC_ERASURE] - eps).abs() <= ROW_SUM_TOL;
        matches.then_some(eps)
    }

    /// Samples one channel output for input `x`.
    pub fn sample(&self, x: usize, rng: &mut impl rand::Rng) -> usize {
        let mut u: f64 = rng.gen();
        for (y, &w) in self.rows[x].iter().enumerate() {
            if u < w {
                return y;
            }
            u -= w;
        }
        self.output_size() - 1
    }

    /// Searches for an involutive output permutation mapping row 0 to row 1,
    /// i.e. `W(y|1) = W(pi(y)|0)` with `pi * pi = id`. Returns `None` when no
    /// such permutation exists. Alphabets larger than `cap` are rejected
    /// because the search is exhaustive over involutions.
    pub fn symmetry_permutation(&self, cap: usize) -> Result<Option<Vec<usize>>> {
        let k = self.output_size();
        if k > cap {
            return Err(Error::BudgetExceeded(format!(
                "symmetry search over {k} outputs exceeds cap {cap}"
            )));
        }
        let mut perm = vec![usize::MAX; k];
        if self.search_involution(&mut perm, 0) {
            Ok(Some(perm))
        } else {
            Ok(None)
        }
    }

    fn search_involution(&self, perm: &mut [usize], from: usize) -> bool {
        let eq = |a: f64, b: f64| (a - b).abs() <= ROW_SUM_TOL;
        let y = match (from..perm.len()).find(|&y| perm[y] == usize::MAX) {
            Some(y) => y,
            None => return true,
        };
        // fixed point
        if eq(self.rows[1][y], self.rows[0][y]) {
            perm[y] = y;
            if self.search_involution(perm, y + 1) {
                return true;
            }
            perm[y] = usize::MAX;
        }
        // transposition with a later symbol
        for z in y + 1..perm.len() {
            if perm[z] != usize::MAX {
                continue;
            }
            if eq(self.rows[1][y], self.rows[0][z]) && eq(self.rows[1][z], self.rows[0][y]) {
                perm[y] = z;
                perm[z] = y;
                if self.search_involution(perm, y + 1) {
                    return true;
                }
                perm[y] = usize::MAX;
                perm[z] = usize::MAX;
            }
        }
        false
    }
}

impl TryFrom<ChannelJson> for Dmc {
    type Error = Error;

    fn try_from(json: ChannelJson) -> Result<Self> {
        match json {
            ChannelJson::Bsc { p } => Dmc::bsc(p),
            ChannelJson::Bec { eps } => Dmc::bec(eps),
            ChannelJson::Table { rows } => Dmc::from_rows(rows),
        }
    }
}

impl From<Dmc> for ChannelJson {
    fn from(dmc: Dmc) -> Self {
        if let Some(p) = dmc.as_bsc() {
            ChannelJson::Bsc { p }
        } else if let Some(eps) = dmc.as_bec() {
            ChannelJson::Bec { eps }
        } else {
            ChannelJson::Table { rows: dmc.rows }
        }
    }
}

/// Effective channel `P(y|v) = sum_x P(x|v) W(y|x)`, the channel seen by the
/// auxiliary variable when the codeword is drawn coordinatewise from
/// `P(x|v)` and sent over `w`.
pub fn compose_effective_channel(p_x_given_v: &CondTable, w: &Dmc) -> Result<Dmc> {
    validate_cond_table(p_x_given_v, "P(x|v)")?;
    let k = w.output_size();
    let mut rows = [vec![0.0; k], vec![0.0; k]];
    for (v, row) in rows.iter_mut().enumerate() {
        for (y, entry) in row.iter_mut().enumerate() {
            *entry =
                p_x_given_v[v][0] * w.likelihood(0, y) + p_x_given_v[v][1] * w.likelihood(1, y);
        }
    }
    Dmc::from_rows(rows)
}

/// Mutual information `I(X;Y)` in bits for a binary input distribution
/// `(P(X=0), P(X=1))` and channel `w`.
pub fn mutual_information(input_dist: [f64; 2], w: &Dmc) -> f64 {
    let k = w.output_size();
    let mut out_dist = vec![0.0; k];
    for (x, &px) in input_dist.iter().enumerate() {
        for (y, mass) in out_dist.iter_mut().enumerate() {
            *mass += px * w.likelihood(x, y);
        }
    }
    let mut info = 0.0;
    for (x, &px) in input_dist.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (y, &mass) in out_dist.iter().enumerate() {
            let joint = px * w.likelihood(x, y);
            if joint > 0.0 {
                info += joint * (w.likelihood(x, y) / mass).log2();
            }
        }
    }
    info.max(0.0)
}

/// Analytic degradation test for recognized channel pairs: is `w2` degraded
/// with respect to `w1`?
pub fn is_degraded_analytic(w1: &Dmc, w2: &Dmc) -> Degradation {
    if let (Some(e1), Some(e2)) = (w1.as_bec(), w2.as_bec()) {
        return if e2 >= e1 {
            Degradation::Degraded
        } else {
            Degradation::NotDegraded
        };
    }
    if let (Some(p), Some(q)) = (w1.as_bsc(), w2.as_bsc()) {
        let (lo, hi) = (p.min(1.0 - p), p.max(1.0 - p));
        return if (lo..=hi).contains(&q) {
            Degradation::Degraded
        } else {
            Degradation::NotDegraded
        };
    }
    Degradation::Unknown
}

/// Secrecy capacity `C(W1) - C(W2)` of an analytically degraded pair from the
/// stated family. Rejects pairs that are not degraded in the required
/// direction.
pub fn degraded_secrecy_capacity(w1: &Dmc, w2: &Dmc, family: ChannelFamily) -> Result<f64> {
    match family {
        ChannelFamily::Bec => {
            let e1 = w1
                .as_bec()
                .ok_or_else(|| Error::InvalidParameter("w1 is not a BEC".into()))?;
            let e2 = w2
                .as_bec()
                .ok_or_else(|| Error::InvalidParameter("w2 is not a BEC".into()))?;
            if e2 < e1 {
                return Err(Error::InvalidParameter(format!(
                    "BEC pair not degraded: eps2 = {e2} < eps1 = {e1}"
                )));
            }
            Ok((1.0 - e1) - (1.0 - e2))
        }
        ChannelFamily::Bsc => {
            let p = w1
                .as_bsc()
                .ok_or_else(|| Error::InvalidParameter("w1 is not a BSC".into()))?;
            let q = w2
                .as_bsc()
                .ok_or_else(|| Error::InvalidParameter("w2 is not a BSC".into()))?;
            let (lo, hi) = (p.min(1.0 - p), p.max(1.0 - p));
            if !(lo..=hi).contains(&q) {
                return Err(Error::InvalidParameter(format!(
                    "BSC pair not degraded: q = {q} outside [{lo}, {hi}]"
                )));
            }
            Ok(binary_entropy(q) - binary_entropy(p))
        }
    }
}

/// Joint specification of a wiretap instance: auxiliary `V`, stochastic map
/// `V -> X`, main channel `W1: X -> Y` and eavesdropper channel `W2: X -> Z`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WiretapSpec {
    /// `P(V = 1)`.
    pub p_v: f64,
    /// `p_x_given_v[v][x] = P(X = x | V = v)`.
    pub p_x_given_v: CondTable,
    pub w1: Dmc,
    pub w2: Dmc,
}

impl WiretapSpec {
    pub fn new(p_v: f64, p_x_given_v: CondTable, w1: Dmc, w2: Dmc) -> Result<Self> {
        let spec = WiretapSpec {
            p_v,
            p_x_given_v,
            w1,
            w2,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        validate_prob(self.p_v, "p_v")?;
        validate_cond_table(&self.p_x_given_v, "P(x|v)")?;
        Ok(())
    }

    /// The common case `V = X` with `P(V=1) = p_v`.
    pub fn direct(p_v: f64, w1: Dmc, w2: Dmc) -> Result<Self> {
        WiretapSpec::new(p_v, [[1.0, 0.0], [0.0, 1.0]], w1, w2)
    }

    pub fn v_dist(&self) -> [f64; 2] {
        [1.0 - self.p_v, self.p_v]
    }

    /// Effective channel `V -> Y`.
    pub fn effective_w1(&self) -> Result<Dmc> {
        compose_effective_channel(&self.p_x_given_v, &self.w1)
    }

    /// Effective channel `V -> Z`.
    pub fn effective_w2(&self) -> Result<Dmc> {
        compose_effective_channel(&self.p_x_given_v, &self.w2)
    }

    /// `I(V;Y)` under this specification.
    pub fn i_vy(&self) -> Result<f64> {
        Ok(mutual_information(self.v_dist(), &self.effective_w1()?))
    }

    /// `I(V;Z)` under this specification.
    pub fn i_vz(&self) -> Result<f64> {
        Ok(mutual_information(self.v_dist(), &self.effective_w2()?))
    }

    /// The rate target `I(V;Y) - I(V;Z)` achieved by this choice of `(V,X)`.
    pub fn rate_target(&self) -> Result<f64> {
        Ok(self.i_vy()? - self.i_vz()?)
    }
}

/// Joint specification for the broadcast channel with confidential messages:
/// `U -> V -> X -> Y,Z`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BccSpec {
    /// `P(U = 1)`.
    pub p_u: f64,
    /// `p_v_given_u[u][v] = P(V = v | U = u)`.
    pub p_v_given_u: CondTable,
    /// `p_x_given_v[v][x] = P(X = x | V = v)`.
    pub p_x_given_v: CondTable,
    pub w1: Dmc,
    pub w2: Dmc,
}

impl BccSpec {
    pub fn new(
        p_u: f64,
        p_v_given_u: CondTable,
        p_x_given_v: CondTable,
        w1: Dmc,
        w2: Dmc,
    ) -> Result<Self> {
        let spec = BccSpec {
            p_u,
            p_v_given_u,
            p_x_given_v,
            w1,
            w2,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        validate_prob(self.p_u, "p_u")?;
        validate_cond_table(&self.p_v_given_u, "P(v|u)")?;
        validate_cond_table(&self.p_x_given_v, "P(x|v)")?;
        Ok(())
    }

    pub fn u_dist(&self) -> [f64; 2] {
        [1.0 - self.p_u, self.p_u]
    }

    /// Marginal distribution of `V`.
    pub fn v_dist(&self) -> [f64; 2] {
        let u = self.u_dist();
        let mut v = [0.0; 2];
        for (ui, &pu) in u.iter().enumerate() {
            for (vi, item) in v.iter_mut().enumerate() {
                *item += pu * self.p_v_given_u[ui][vi];
            }
        }
        v
    }

    /// Effective channel `V -> Y`.
    pub fn effective_vy(&self) -> Result<Dmc> {
        compose_effective_channel(&self.p_x_given_v, &self.w1)
    }

    /// Effective channel `V -> Z`.
    pub fn effective_vz(&self) -> Result<Dmc> {
        compose_effective_channel(&self.p_x_given_v, &self.w2)
    }

    /// Effective channel `U -> Y`.
    pub fn effective_uy(&self) -> Result<Dmc> {
        let vy = self.effective_vy()?;
        compose_dmc(&self.p_v_given_u, &vy)
    }

    /// Effective channel `U -> Z`.
    pub fn effective_uz(&self) -> Result<Dmc> {
        let vz = self.effective_vz()?;
        compose_dmc(&self.p_v_given_u, &vz)
    }

    pub fn i_uy(&self) -> Result<f64> {
        Ok(mutual_information(self.u_dist(), &self.effective_uy()?))
    }

    pub fn i_uz(&self) -> Result<f64> {
        Ok(mutual_information(self.u_dist(), &self.effective_uz()?))
    }

    /// `I(V;Y|U) = sum_u P(u) I(V;Y | U=u)`; valid because `Y` depends on `U`
    /// only through `V`.
    pub fn i_vy_given_u(&self) -> Result<f64> {
        let vy = self.effective_vy()?;
        Ok(self.cond_mi(&vy))
    }

    /// `I(V;Z|U)`.
    pub fn i_vz_given_u(&self) -> Result<f64> {
        let vz = self.effective_vz()?;
        Ok(self.cond_mi(&vz))
    }

    fn cond_mi(&self, v_channel: &Dmc) -> f64 {
        let u = self.u_dist();
        let mut total = 0.0;
        for (ui, &pu) in u.iter().enumerate() {
            if pu == 0.0 {
                continue;
            }
            let v_cond = [self.p_v_given_u[ui][0], self.p_v_given_u[ui][1]];
            total += pu * mutual_information(v_cond, v_channel);
        }
        total
    }

    /// Common-message rate target `min[I(U;Y), I(U;Z)]`.
    pub fn r0_target(&self) -> Result<f64> {
        Ok(self.i_uy()?.min(self.i_uz()?))
    }

    /// Secret-message rate target `I(V;Y|U) - I(V;Z|U)`.
    pub fn rs_target(&self) -> Result<f64> {
        Ok(self.i_vy_given_u()? - self.i_vz_given_u()?)
    }
}

/// Composition of a 2x2 conditional table with a channel, yielding the
/// channel seen from the upstream variable.
fn compose_dmc(cond: &CondTable, w: &Dmc) -> Result<Dmc> {
    compose_effective_channel(cond, w)
}

/// Block-length, threshold, and seed parameters shared by every construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionParams {
    /// log2 of the block length.
    pub n: u32,
    /// Exponent in the asymptotic threshold `2^(-N^beta)`, in (0, 1/2).
    pub beta: f64,
    /// Indices with `Z <= delta_low` are classified low-entropy.
    pub delta_low: f64,
    /// Indices with `Z >= 1 - delta_high` are classified high-entropy.
    pub delta_high: f64,
    /// Blocks per cluster.
    pub m: usize,
    /// Root of every derived random stream.
    pub master_seed: u64,
}

impl ConstructionParams {
    pub fn new(
        n: u32,
        beta: f64,
        delta_low: f64,
        delta_high: f64,
        m: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let params = ConstructionParams {
            n,
            beta,
            delta_low,
            delta_high,
            m,
            master_seed,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > 30 {
            return Err(Error::InvalidParameter(format!(
                "n = {} out of range 1..=30",
                self.n
            )));
        }
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "beta = {} not in (0, 1/2)",
                self.beta
            )));
        }
        if !(self.delta_low > 0.0 && self.delta_low <= self.delta_high && self.delta_high < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "thresholds must satisfy 0 < delta_low <= delta_high < 1, got ({}, {})",
                self.delta_low, self.delta_high
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        Ok(())
    }

    /// Block length `N = 2^n`.
    pub fn block_len(&self) -> usize {
        1usize << self.n
    }

    /// The asymptotic classification threshold `2^(-N^beta)`, for reference.
    pub fn delta_n(&self) -> f64 {
        2f64.powf(-(self.block_len() as f64).powf(self.beta))
    }
}
