//! Benchmark values and exact/Monte Carlo algorithm values on desk-scale
//! instances.
//!
//! The offline benchmark `OPT` is the Matching LP optimum: with
//! deterministic unit budgets, the objective `sum_u min{sum_v p_uv x_uv, 1}`
//! is maximized with the min saturated at the per-vertex constraint (mass
//! beyond load 1 contributes nothing and can be dropped), so the LP
//! already encodes the truncation and its optimum equals the fractional
//! offline optimum. The adaptive offline benchmark `S-OPT` is computed by
//! exact backward induction over success sets.
//!
//! Configuration columns are enumerated over subsets of each offline
//! vertex's neighborhood only: a column containing a non-neighbor `v` has
//! the same objective coefficient as the column without `v` and weakly
//! larger constraint usage, so dropping non-neighbors never lowers the
//! optimum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::instance::{sample_draw, DrawMode, Instance};
use crate::lpcore::{LpProblem, LpStatus, Sense};
use crate::simul::{run_balance_equal, run_greedy, run_ranking};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ranking,
    BalanceEqual,
    Greedy,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ranking => "ranking",
            Algorithm::BalanceEqual => "balance_equal",
            Algorithm::Greedy => "greedy",
        }
    }
}

/// An algorithm value: exact expectation (`stderr = None`) or a Monte
/// Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgValue {
    pub mean: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub matching_lp: f64,
    pub config_lp: Option<f64>,
    pub reduced_lp: Option<f64>,
    pub s_opt: Option<f64>,
    pub algs: Vec<(String, AlgValue)>,
}

impl BenchReport {
    pub fn to_json(&self) -> serde_json::Value {
        let algs: serde_json::Map<String, serde_json::Value> = self
            .algs
            .iter()
            .map(|(name, v)| {
                (
                    name.clone(),
                    json!({"mean": v.mean, "stderr": v.stderr}),
                )
            })
            .collect();
        json!({
            "matching_lp": self.matching_lp,
            "config_lp": self.config_lp,
            "reduced_lp": self.reduced_lp,
            "s_opt": self.s_opt,
            "algs": algs,
        })
    }

    /// One row per benchmark or algorithm value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,value,stderr\n");
        out.push_str(&format!("matching_lp,{},\n", self.matching_lp));
        if let Some(v) = self.config_lp {
            out.push_str(&format!("config_lp,{v},\n"));
        }
        if let Some(v) = self.reduced_lp {
            out.push_str(&format!("reduced_lp,{v},\n"));
        }
        if let Some(v) = self.s_opt {
            out.push_str(&format!("s_opt,{v},\n"));
        }
        for (name, v) in &self.algs {
            match v.stderr {
                Some(se) if se.is_finite() => out.push_str(&format!("{name},{},{se}\n", v.mean)),
                Some(_) => out.push_str(&format!("{name},{},inf\n", v.mean)),
                None => out.push_str(&format!("{name},{},\n", v.mean)),
            }
        }
        out
    }
}

fn solve_max(lp: &LpProblem) -> Result<f64> {
    let sol = lp.solve()?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.value),
        other => Err(Error::Lp(format!("benchmark LP not optimal: {other:?}"))),
    }
}

/// Optimum of `max sum p_uv x_uv` subject to `sum_v p_uv x_uv <= 1` per
/// offline vertex, `sum_u x_uv <= 1` per online vertex, `x >= 0`.
pub fn matching_lp_value(inst: &Instance) -> Result<f64> {
    let edges: Vec<(usize, usize)> = (0..inst.m())
        .flat_map(|u| inst.neighbors(u).into_iter().map(move |v| (u, v)))
        .collect();
    if edges.is_empty() {
        return Ok(0.0);
    }
    let mut lp = LpProblem::new(edges.len());
    for (j, &(u, v)) in edges.iter().enumerate() {
        lp.set_objective_coeff(j, inst.p(u, v));
    }
    for u in 0..inst.m() {
        let row: Vec<(usize, f64)> = edges
            .iter()
            .enumerate()
            .filter(|(_, &(eu, _))| eu == u)
            .map(|(j, &(_, v))| (j, inst.p(u, v)))
            .collect();
        if !row.is_empty() {
            lp.add_sparse_row(&row, Sense::Le, 1.0);
        }
    }
    for v in 0..inst.n() {
        let row: Vec<(usize, f64)> = edges
            .iter()
            .enumerate()
            .filter(|(_, &(_, ev))| ev == v)
            .map(|(j, _)| (j, 1.0))
            .collect();
        if !row.is_empty() {
            lp.add_sparse_row(&row, Sense::Le, 1.0);
        }
    }
    solve_max(&lp)
}

/// All non-empty subsets of each offline vertex's neighborhood, as
/// `(u, members)` pairs.
fn configuration_columns(inst: &Instance) -> Result<Vec<(usize, Vec<usize>)>> {
    if inst.n() > 12 {
        return Err(Error::TooLarge(format!(
            "n = {} (configuration enumeration supports n <= 12)",
            inst.n()
        )));
    }
    let mut cols = Vec::new();
    for u in 0..inst.m() {
        let nb = inst.neighbors(u);
        for mask in 1u32..(1 << nb.len()) {
            let members: Vec<usize> = nb
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &v)| v)
                .collect();
            cols.push((u, members));
        }
    }
    Ok(cols)
}

fn config_lp_common<FObj, FCoeff>(
    inst: &Instance,
    objective: FObj,
    online_coeff: FCoeff,
) -> Result<f64>
where
    FObj: Fn(usize, &[usize]) -> f64,
    FCoeff: Fn(usize, &[usize], usize) -> f64,
{
    let cols = configuration_columns(inst)?;
    if cols.is_empty() {
        return Ok(0.0);
    }
    let mut lp = LpProblem::new(cols.len());
    for (j, (u, s)) in cols.iter().enumerate() {
        lp.set_objective_coeff(j, objective(*u, s));
    }
    for u in 0..inst.m() {
        let row: Vec<(usize, f64)> = cols
            .iter()
            .enumerate()
            .filter(|(_, (cu, _))| *cu == u)
            .map(|(j, _)| (j, 1.0))
            .collect();
        if !row.is_empty() {
            lp.add_sparse_row(&row, Sense::Le, 1.0);
        }
    }
    for v in 0..inst.n() {
        let row: Vec<(usize, f64)> = cols
            .iter()
            .enumerate()
            .filter(|(_, (_, s))| s.contains(&v))
            .map(|(j, (u, s))| (j, online_coeff(*u, s, v)))
            .collect();
        if !row.is_empty() {
            lp.add_sparse_row(&row, Sense::Le, 1.0);
        }
    }
    solve_max(&lp)
}

/// Configuration LP: `max sum p_bar(u, S) x_uS` with at most one
/// configuration per offline vertex and each online vertex used at most
/// once across all chosen configurations.
pub fn configuration_lp_value(inst: &Instance) -> Result<f64> {
    config_lp_common(inst, |u, s| inst.p_bar(u, s), |_, _, _| 1.0)
}

/// Reduced-form stochastic Configuration LP: objective `p_tilde(u, S)`,
/// and the online constraint for `v` weights each column containing `v`
/// by `1 - p_tilde(u, S(v))` where `S(v)` holds the members of `S` that
/// arrive before `v`.
pub fn reduced_stochastic_config_lp_value(inst: &Instance) -> Result<f64> {
    config_lp_common(
        inst,
        |u, s| inst.p_tilde(u, s),
        |u, s, v| {
            let before: Vec<usize> = s.iter().copied().filter(|&w| w < v).collect();
            1.0 - inst.p_tilde(u, &before)
        },
    )
}

/// Optimal adaptive offline policy value by backward induction over the
/// set `T` of already-successful offline vertices:
/// `V(j, T) = max{ V(j+1, T), max_{u not in T} p_uv (1 + V(j+1, T + u)) + (1 - p_uv) V(j+1, T) }`.
pub fn s_opt_value(inst: &Instance) -> Result<f64> {
    if inst.m() > 20 {
        return Err(Error::TooLarge(format!(
            "m = {} (backward induction supports m <= 20)",
            inst.m()
        )));
    }
    let states = 1usize << inst.m();
    let mut next = vec![0.0f64; states];
    let mut cur = vec![0.0f64; states];
    for v in (0..inst.n()).rev() {
        for t in 0..states {
            let mut best = next[t];
            for u in inst.offline_neighbors(v) {
                if t >> u & 1 == 1 {
                    continue;
                }
                let p = inst.p(u, v);
                let val = p * (1.0 + next[t | 1 << u]) + (1.0 - p) * next[t];
                if val > best {
                    best = val;
                }
            }
            cur[t] = best;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(next[0])
}

/// Exact expectation of an algorithm's objective, enumerating rank
/// permutations (for Ranking) and branching on every reached coin.
pub fn exact_alg_value(inst: &Instance, alg: Algorithm) -> Result<f64> {
    if inst.m() > 7 || inst.edge_count() > 20 {
        return Err(Error::TooLarge(format!(
            "m = {}, edges = {} (exact oracle supports m <= 7, <= 20 edges)",
            inst.m(),
            inst.edge_count()
        )));
    }
    match alg {
        Algorithm::Ranking => {
            if inst.equal_p().is_none() {
                return Err(Error::MissingData("ranking requires equal probabilities".into()));
            }
            let m = inst.m();
            let mut perm: Vec<usize> = (0..m).collect();
            let mut total = 0.0;
            let mut count = 0usize;
            // Heap's algorithm over rank orders; perm[u] = rank position of u
            permute(&mut perm, 0, &mut |order| {
                // rank of u = its index in `order`
                let mut rank = vec![0usize; m];
                for (r, &u) in order.iter().enumerate() {
                    rank[u] = r;
                }
                total += coin_expectation(inst, 0, 0, &mut vec![0.0; m], &|inst, v, succ, _| {
                    inst.offline_neighbors(v)
                        .into_iter()
                        .filter(|&u| succ >> u & 1 == 0)
                        .min_by_key(|&u| rank[u])
                });
                count += 1;
            });
            Ok(total / count as f64)
        }
        Algorithm::BalanceEqual => {
            if inst.equal_p().is_none() {
                return Err(Error::MissingData(
                    "balance_equal requires equal probabilities".into(),
                ));
            }
            Ok(coin_expectation(
                inst,
                0,
                0,
                &mut vec![0.0; inst.m()],
                &|inst, v, succ, loads| {
                    inst.offline_neighbors(v)
                        .into_iter()
                        .filter(|&u| succ >> u & 1 == 0)
                        .min_by(|&a, &b| {
                            loads[a].partial_cmp(&loads[b]).unwrap().then(a.cmp(&b))
                        })
                },
            ))
        }
        Algorithm::Greedy => Ok(coin_expectation(
            inst,
            0,
            0,
            &mut vec![0.0; inst.m()],
            &|inst, v, succ, _| {
                inst.offline_neighbors(v)
                    .into_iter()
                    .filter(|&u| succ >> u & 1 == 0)
                    .max_by(|&a, &b| {
                        inst.p(a, v).partial_cmp(&inst.p(b, v)).unwrap().then(b.cmp(&a))
                    })
            },
        )),
    }
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

/// Expected number of successes from arrival `v` on, for a deterministic
/// policy choosing the match from `(instance, v, success set, loads)`,
/// branching on the coin of every realized match.
fn coin_expectation(
    inst: &Instance,
    v: usize,
    succ: u32,
    loads: &mut Vec<f64>,
    policy: &dyn Fn(&Instance, usize, u32, &[f64]) -> Option<usize>,
) -> f64 {
    if v == inst.n() {
        return 0.0;
    }
    match policy(inst, v, succ, loads) {
        None => coin_expectation(inst, v + 1, succ, loads, policy),
        Some(u) => {
            let p = inst.p(u, v);
            loads[u] += p;
            let win = 1.0 + coin_expectation(inst, v + 1, succ | 1 << u, loads, policy);
            let lose = coin_expectation(inst, v + 1, succ, loads, policy);
            loads[u] -= p;
            p * win + (1.0 - p) * lose
        }
    }
}

/// Monte Carlo estimate of an algorithm's expected objective; trials run
/// in parallel with per-trial seeds derived from `seed`, so results are
/// deterministic for a fixed seed regardless of thread count.
pub fn mc_alg_value(
    inst: &Instance,
    alg: Algorithm,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(seed, t as u64);
            let draw = sample_draw(inst, trial_seed, DrawMode::All);
            let trace = match alg {
                Algorithm::Ranking => run_ranking(inst, &draw),
                Algorithm::BalanceEqual => run_balance_equal(inst, &draw),
                Algorithm::Greedy => run_greedy(inst, &draw),
            }?;
            Ok(trace.value)
        })
        .collect::<Result<_>>()?;
    let mean = values.iter().sum::<f64>() / trials as f64;
    let stderr = if trials == 1 {
        f64::INFINITY
    } else {
        let var =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    };
    Ok((mean, stderr))
}

/// Per-trial seed derivation (splitmix64 over the pair).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Full report on one instance. LP/S-OPT entries are filled when within
/// size limits; algorithm values are exact when the oracle limits allow
/// and Monte Carlo otherwise.
pub fn bench_report(inst: &Instance, trials: usize, seed: u64) -> Result<BenchReport> {
    let mut report = BenchReport {
        matching_lp: matching_lp_value(inst)?,
        ..Default::default()
    };
    if inst.n() <= 12 {
        report.config_lp = Some(configuration_lp_value(inst)?);
        report.reduced_lp = Some(reduced_stochastic_config_lp_value(inst)?);
    }
    if inst.m() <= 20 {
        report.s_opt = Some(s_opt_value(inst)?);
    }
    let exact_ok = inst.m() <= 7 && inst.edge_count() <= 20;
    for alg in [Algorithm::Ranking, Algorithm::BalanceEqual, Algorithm::Greedy] {
        if inst.equal_p().is_none() && alg != Algorithm::Greedy {
            continue;
        }
        let value = if exact_ok {
            AlgValue {
                mean: exact_alg_value(inst, alg)?,
                stderr: None,
            }
        } else {
            let (mean, stderr) = mc_alg_value(inst, alg, trials, seed)?;
            AlgValue {
                mean,
                stderr: Some(stderr),
            }
        };
        report.algs.push((alg.name().to_string(), value));
    }
    Ok(report)
}

/// Random tiny instance used by the invariant checks.
pub fn random_tiny(seed: u64) -> Instance {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=3);
    let n = rng.gen_range(1..=4);
    let lo = rng.gen_range(0.05..0.5);
    let hi = (lo + rng.gen_range(0.0..0.5f64)).min(1.0);
    Instance::random(m, n, 0.8, lo, hi, rng.gen()).unwrap()
}
