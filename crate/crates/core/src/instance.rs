//! Problem instances, generators, and realizations of randomness.
//!
//! An instance is a bipartite graph between `m` offline vertices (ids
//! `0..m`) and `n` online vertices (ids `0..n`). Online ids double as the
//! arrival order: `v < v'` means `v` arrives first. Non-edges are encoded
//! as `p_uv = 0`; there is no separate adjacency structure.
//!
//! Success randomness has two equivalent realizations. The threshold model
//! draws a uniform `tau_u` per offline vertex and declares `u` successful
//! once `1 - prod_{v in S}(1 - p_uv)` over its matched set `S` reaches
//! `tau_u`. The coin model flips an independent Bernoulli(`p_uv`) coin per
//! edge. Under the product form, the conditional probability that a new
//! match to a so-far-unsuccessful `u` succeeds is exactly `p_uv` in both
//! models, so they induce the same distribution over outcomes; the
//! simulators use coins. Budgets relate to thresholds by
//! `theta_u = -ln(1 - tau_u)`, which is Exp(1)-distributed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

/// A bipartite instance with per-edge success probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    m: usize,
    n: usize,
    /// Row-major `m x n` probability matrix.
    prob: Vec<f64>,
    /// The common probability when all nonzero entries are equal.
    equal_p: Option<f64>,
}

impl Instance {
    /// Builds an instance from an edge list; unlisted pairs get `p = 0`.
    pub fn build(m: usize, n: usize, probs: &[(usize, usize, f64)]) -> Result<Instance> {
        let mut prob = vec![0.0; m * n];
        for &(u, v, p) in probs {
            if u >= m || v >= n {
                return Err(Error::IndexOutOfRange(format!(
                    "edge ({u},{v}) in {m}x{n} instance"
                )));
            }
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::ProbabilityOutOfRange(p));
            }
            prob[u * n + v] = p;
        }
        Ok(Instance::from_matrix(m, n, prob))
    }

    fn from_matrix(m: usize, n: usize, prob: Vec<f64>) -> Instance {
        let equal_p = detect_equal_p(&prob);
        Instance { m, n, prob, equal_p }
    }

    /// The classic adversarial family: `m = n = k`, offline vertex `i`
    /// neighbors the first `i + 1` arrivals, all with probability `p`.
    pub fn upper_triangular(k: usize, p: f64) -> Result<Instance> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if !(0.0 < p && p <= 1.0) {
            return Err(Error::ProbabilityOutOfRange(p));
        }
        let mut prob = vec![0.0; k * k];
        for u in 0..k {
            for v in 0..=u {
                prob[u * k + v] = p;
            }
        }
        Ok(Instance::from_matrix(k, k, prob))
    }

    /// Erdos-Renyi style generator: each pair is an edge independently with
    /// probability `density`, with probability uniform in `[p_low, p_high]`.
    pub fn random(
        m: usize,
        n: usize,
        density: f64,
        p_low: f64,
        p_high: f64,
        seed: u64,
    ) -> Result<Instance> {
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::InvalidParameter(format!("density {density}")));
        }
        if !(0.0 <= p_low && p_low <= p_high && p_high <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "probability range [{p_low}, {p_high}]"
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut prob = vec![0.0; m * n];
        for cell in prob.iter_mut() {
            let is_edge = rng.gen::<f64>() < density;
            // draw unconditionally so the stream shape is fixed
            let p = if p_low == p_high {
                let _ = rng.gen::<f64>();
                p_low
            } else {
                p_low + (p_high - p_low) * rng.gen::<f64>()
            };
            if is_edge && p > 0.0 {
                *cell = p;
            }
        }
        Ok(Instance::from_matrix(m, n, prob))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn equal_p(&self) -> Option<f64> {
        self.equal_p
    }

    pub fn p(&self, u: usize, v: usize) -> f64 {
        self.prob[u * self.n + v]
    }

    /// Online neighbors of `u` in arrival order.
    pub fn neighbors(&self, u: usize) -> Vec<usize> {
        (0..self.n).filter(|&v| self.p(u, v) > 0.0).collect()
    }

    /// Offline neighbors of `v`.
    pub fn offline_neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.m).filter(|&u| self.p(u, v) > 0.0).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.prob.iter().filter(|&&p| p > 0.0).count()
    }

    /// `p_uS = sum_{v in S} p_uv`.
    pub fn p_sum(&self, u: usize, s: &[usize]) -> f64 {
        s.iter().map(|&v| self.p(u, v)).sum()
    }

    /// `p~_uS = 1 - prod_{v in S} (1 - p_uv)`.
    pub fn p_tilde(&self, u: usize, s: &[usize]) -> f64 {
        1.0 - s.iter().map(|&v| 1.0 - self.p(u, v)).product::<f64>()
    }

    /// `p-bar_uS = min{p_uS, 1}`.
    pub fn p_bar(&self, u: usize, s: &[usize]) -> f64 {
        self.p_sum(u, s).min(1.0)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = InstanceFile::from(self);
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Instance> {
        let text = std::fs::read_to_string(path)?;
        let file: InstanceFile = serde_json::from_str(&text)?;
        file.into_instance()
    }
}

/// Exact equality across nonzero entries; generators emit bit-identical
/// probabilities so this detection is reliable.
fn detect_equal_p(prob: &[f64]) -> Option<f64> {
    let mut common = None;
    for &p in prob.iter().filter(|&&p| p > 0.0) {
        match common {
            None => common = Some(p),
            Some(q) if q == p => {}
            Some(_) => return None,
        }
    }
    common
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    version: u32,
    m: usize,
    n: usize,
    equal_p: Option<f64>,
    edges: Vec<(usize, usize, f64)>,
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        let mut edges = Vec::new();
        for u in 0..inst.m {
            for v in 0..inst.n {
                let p = inst.p(u, v);
                if p > 0.0 {
                    edges.push((u, v, p));
                }
            }
        }
        InstanceFile {
            version: 1,
            m: inst.m,
            n: inst.n,
            equal_p: inst.equal_p,
            edges,
        }
    }
}

impl InstanceFile {
    fn into_instance(self) -> Result<Instance> {
        if self.version != 1 {
            return Err(Error::Schema(format!(
                "unsupported schema version {}",
                self.version
            )));
        }
        let inst = Instance::build(self.m, self.n, &self.edges)?;
        if let (Some(a), Some(b)) = (self.equal_p, inst.equal_p) {
            if a != b {
                return Err(Error::Schema("equal_p does not match edges".into()));
            }
        }
        Ok(inst)
    }
}

/// Which pieces of randomness to realize in [`sample_draw`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawMode {
    Thresholds,
    Budgets,
    Coins,
    All,
}

/// One realization of algorithm and model randomness.
///
/// Ranks are always populated. Thresholds and budgets satisfy
/// `theta_u = -ln(1 - tau_u)` whenever both are present.
#[derive(Debug, Clone)]
pub struct RandomDraw {
    pub ranks: Vec<f64>,
    pub thresholds: Option<Vec<f64>>,
    pub budgets: Option<Vec<f64>>,
    /// Row-major `m x n` per-edge success coins.
    pub coins: Option<Vec<bool>>,
}

impl RandomDraw {
    pub fn coin(&self, inst: &Instance, u: usize, v: usize) -> bool {
        self.coins.as_ref().expect("draw has no coins")[u * inst.n() + v]
    }
}

/// Samples ranks, thresholds/budgets, and per-edge coins; deterministic
/// for a fixed seed. Rank collisions are resampled so ranks are pairwise
/// distinct.
pub fn sample_draw(inst: &Instance, seed: u64, mode: DrawMode) -> RandomDraw {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let m = inst.m();
    let mut ranks: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
    while has_duplicates(&ranks) {
        ranks = (0..m).map(|_| rng.gen::<f64>()).collect();
    }
    let want_thresholds = matches!(mode, DrawMode::Thresholds | DrawMode::Budgets | DrawMode::All);
    let thresholds: Option<Vec<f64>> = if want_thresholds {
        Some((0..m).map(|_| rng.gen::<f64>()).collect())
    } else {
        None
    };
    let budgets = if matches!(mode, DrawMode::Budgets | DrawMode::All) {
        thresholds
            .as_ref()
            .map(|ts| ts.iter().map(|&t| -(1.0 - t).ln()).collect())
    } else {
        None
    };
    let thresholds = if matches!(mode, DrawMode::Thresholds | DrawMode::All) {
        thresholds
    } else {
        None
    };
    let coins = if matches!(mode, DrawMode::Coins | DrawMode::All) {
        let mut coins = vec![false; m * inst.n()];
        for u in 0..m {
            for v in 0..inst.n() {
                let roll = rng.gen::<f64>();
                coins[u * inst.n() + v] = roll < inst.p(u, v);
            }
        }
        Some(coins)
    } else {
        None
    };
    RandomDraw {
        ranks,
        thresholds,
        budgets,
        coins,
    }
}

fn has_duplicates(xs: &[f64]) -> bool {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.windows(2).any(|w| w[0] == w[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_smallest() {
        let inst = Instance::build(1, 1, &[(0, 0, 1.0)]).unwrap();
        assert_eq!(inst.equal_p(), Some(1.0));
        assert_eq!(inst.p(0, 0), 1.0);
    }

    #[test]
    fn build_upper_triangular_2x2() {
        let inst = Instance::build(2, 2, &[(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5)]).unwrap();
        assert_eq!(inst.equal_p(), Some(0.5));
        assert_eq!(inst.edge_count(), 3);
    }

    #[test]
    fn build_rejects_bad_probability() {
        assert!(Instance::build(1, 1, &[(0, 0, 1.5)]).is_err());
        assert!(Instance::build(1, 1, &[(0, 0, -0.1)]).is_err());
    }

    #[test]
    fn build_rejects_out_of_range_index() {
        assert!(Instance::build(1, 1, &[(1, 0, 0.5)]).is_err());
        assert!(Instance::build(1, 1, &[(0, 1, 0.5)]).is_err());
    }

    #[test]
    fn upper_triangular_edges() {
        let inst = Instance::upper_triangular(2, 1.0).unwrap();
        assert_eq!(inst.neighbors(0), vec![0]);
        assert_eq!(inst.neighbors(1), vec![0, 1]);
        let inst = Instance::upper_triangular(1, 0.5).unwrap();
        assert_eq!(inst.edge_count(), 1);
        let inst = Instance::upper_triangular(3, 0.1).unwrap();
        assert_eq!(inst.edge_count(), 6);
        assert_eq!(inst.equal_p(), Some(0.1));
        assert!(Instance::upper_triangular(0, 0.5).is_err());
    }

    #[test]
    fn random_generator_edge_cases() {
        let full = Instance::random(3, 3, 1.0, 0.5, 0.5, 7).unwrap();
        assert_eq!(full.edge_count(), 9);
        assert_eq!(full.equal_p(), Some(0.5));
        let empty = Instance::random(3, 3, 0.0, 0.2, 0.8, 7).unwrap();
        assert_eq!(empty.edge_count(), 0);
        let a = Instance::random(4, 5, 0.5, 0.1, 0.9, 42).unwrap();
        let b = Instance::random(4, 5, 0.5, 0.1, 0.9, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn p_tilde_values() {
        let inst = Instance::build(1, 2, &[(0, 0, 0.5), (0, 1, 0.5)]).unwrap();
        assert_eq!(inst.p_tilde(0, &[]), 0.0);
        assert!((inst.p_tilde(0, &[0, 1]) - 0.75).abs() < 1e-15);
        let inst = Instance::build(1, 2, &[(0, 0, 1.0), (0, 1, 0.3)]).unwrap();
        assert_eq!(inst.p_tilde(0, &[0, 1]), 1.0);
    }

    #[test]
    fn p_bar_values() {
        let inst = Instance::build(1, 2, &[(0, 0, 0.5), (0, 1, 0.5)]).unwrap();
        assert_eq!(inst.p_bar(0, &[0, 1]), 1.0);
        assert_eq!(inst.p_bar(0, &[]), 0.0);
        let inst = Instance::build(1, 2, &[(0, 0, 0.3), (0, 1, 0.4)]).unwrap();
        assert!((inst.p_bar(0, &[0, 1]) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn draw_budget_support_and_mean() {
        let inst = Instance::upper_triangular(4, 0.5).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for seed in 0..25_000u64 {
            let draw = sample_draw(&inst, seed, DrawMode::Budgets);
            for &b in draw.budgets.as_ref().unwrap() {
                assert!(b >= 0.0);
                total += b;
                count += 1;
            }
        }
        let mean = total / count as f64;
        assert!((mean - 1.0).abs() < 0.02, "budget mean {mean}");
    }

    #[test]
    fn zero_probability_coin_never_fires() {
        let inst = Instance::build(2, 2, &[(0, 0, 1.0)]).unwrap();
        for seed in 0..100 {
            let draw = sample_draw(&inst, seed, DrawMode::Coins);
            assert!(!draw.coin(&inst, 1, 1));
            assert!(draw.coin(&inst, 0, 0));
        }
    }

    #[test]
    fn threshold_budget_consistency() {
        let inst = Instance::upper_triangular(5, 0.3).unwrap();
        let draw = sample_draw(&inst, 9, DrawMode::All);
        let taus = draw.thresholds.as_ref().unwrap();
        let thetas = draw.budgets.as_ref().unwrap();
        for (t, th) in taus.iter().zip(thetas) {
            assert!((th - (-(1.0 - t).ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        let inst = Instance::random(3, 4, 0.6, 0.1, 0.9, 11).unwrap();
        inst.write_json(&path).unwrap();
        let back = Instance::read_json(&path).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn json_rejects_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"version":1,"n":2,"equal_p":null,"edges":[]}"#).unwrap();
        assert!(Instance::read_json(&path).is_err());
        std::fs::write(
            &path,
            r#"{"version":1,"m":1,"n":1,"equal_p":null,"edges":[[0,0,2.0]]}"#,
        )
        .unwrap();
        assert!(Instance::read_json(&path).is_err());
        std::fs::write(
            &path,
            r#"{"version":2,"m":1,"n":1,"equal_p":null,"edges":[]}"#,
        )
        .unwrap();
        assert!(Instance::read_json(&path).is_err());
    }
}
