//! Empirical verification of approximate dual feasibility and the
//! structural invariants behind the gain-splitting analyses.
//!
//! Feasibility sweeps compare Monte Carlo estimates of the dual variables
//! against their targets for every offline vertex `u` and every subset `S`
//! of `u`'s neighbors (restricting to neighbors loses nothing: a
//! non-neighbor contributes no target and only nonnegative duals).
//! Because the estimates are statistical, a shortfall within three
//! standard errors is reported as inconclusive rather than a violation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::bench::derive_seed;
use crate::gainfn::{GainDomain, GainFunction};
use crate::instance::{sample_draw, DrawMode, Instance, RandomDraw};
use crate::quad::gauss_laguerre;
use crate::simul::{
    critical_ranks, expected_gain, ledger_balance, ledger_ranking, run_balance_equal,
    run_balance_fractional, run_ranking, DualLedger, Trace,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualAlg {
    Ranking,
    BalanceEqual,
    BalanceFractional,
}

/// Allocation step for the discretized fractional algorithm.
pub fn fractional_delta(inst: &Instance) -> f64 {
    let min_p = (0..inst.m())
        .flat_map(|u| (0..inst.n()).map(move |v| inst.p(u, v)))
        .filter(|&p| p > 0.0)
        .fold(f64::INFINITY, f64::min);
    if min_p.is_finite() {
        1e-3 * min_p
    } else {
        1e-3
    }
}

/// Monte Carlo estimates of the dual variables, keeping per-trial samples
/// so that the standard error of any linear combination is exact.
#[derive(Debug, Clone)]
pub struct DualEstimate {
    pub trials: usize,
    pub alpha_mean: Vec<f64>,
    pub beta_mean: Vec<f64>,
    pub alpha_stderr: Vec<f64>,
    pub beta_stderr: Vec<f64>,
    /// Mean and stderr of the realized objective.
    pub value_mean: f64,
    pub value_stderr: f64,
    /// Mean of the per-run expected gain `sum x p`; per run this equals
    /// `sum alpha + sum beta` exactly.
    pub gain_mean: f64,
    pub gain_stderr: f64,
    alpha_samples: Vec<f64>, // trial-major, stride m
    beta_samples: Vec<f64>,  // trial-major, stride n
}

impl DualEstimate {
    /// Mean and standard error of `alpha_u + sum_v weight_v beta_v` over
    /// the stored trials.
    pub fn pair_statistic(&self, u: usize, weights: &[(usize, f64)]) -> (f64, f64) {
        let m = self.alpha_mean.len();
        let n = self.beta_mean.len();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for t in 0..self.trials {
            let mut x = self.alpha_samples[t * m + u];
            for &(v, w) in weights {
                x += w * self.beta_samples[t * n + v];
            }
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / self.trials as f64;
        let stderr = if self.trials > 1 {
            let var = (sumsq - sum * mean).max(0.0) / (self.trials - 1) as f64;
            (var / self.trials as f64).sqrt()
        } else {
            f64::INFINITY
        };
        (mean, stderr)
    }
}

fn stats(samples: &[f64]) -> (f64, f64) {
    let trials = samples.len();
    let mean = samples.iter().sum::<f64>() / trials as f64;
    let stderr = if trials > 1 {
        let var =
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    } else {
        f64::INFINITY
    };
    (mean, stderr)
}

/// Estimate `E[alpha]`, `E[beta]` for one algorithm under gain split `g`.
pub fn estimate_duals(
    inst: &Instance,
    alg: DualAlg,
    g: &GainFunction,
    trials: usize,
    seed: u64,
) -> Result<DualEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let want = match alg {
        DualAlg::Ranking => GainDomain::Rank,
        _ => GainDomain::Load,
    };
    if g.domain != want {
        return Err(Error::InvalidParameter(
            "gain function domain does not match the algorithm".into(),
        ));
    }
    let delta = fractional_delta(inst);
    let per_trial: Vec<(Vec<f64>, Vec<f64>, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let draw = sample_draw(inst, derive_seed(seed, t as u64), DrawMode::All);
            let (trace, ledger): (Trace, DualLedger) = match alg {
                DualAlg::Ranking => {
                    let trace = run_ranking(inst, &draw)?;
                    let ledger = ledger_ranking(inst, &draw, &trace, g);
                    (trace, ledger)
                }
                DualAlg::BalanceEqual => {
                    let trace = run_balance_equal(inst, &draw)?;
                    let ledger = ledger_balance(inst, &trace, g);
                    (trace, ledger)
                }
                DualAlg::BalanceFractional => {
                    let budgets = draw.budgets.as_ref().unwrap();
                    let trace = run_balance_fractional(inst, budgets, g, delta)?;
                    let ledger = ledger_balance(inst, &trace, g);
                    (trace, ledger)
                }
            };
            let gain = expected_gain(inst, &trace);
            debug_assert!((ledger.total() - gain).abs() < 1e-12);
            Ok((ledger.alpha, ledger.beta, trace.value, gain))
        })
        .collect::<Result<_>>()?;

    let (m, n) = (inst.m(), inst.n());
    let mut alpha_samples = Vec::with_capacity(trials * m);
    let mut beta_samples = Vec::with_capacity(trials * n);
    let mut values = Vec::with_capacity(trials);
    let mut gains = Vec::with_capacity(trials);
    for (a, b, v, gn) in per_trial {
        alpha_samples.extend(a);
        beta_samples.extend(b);
        values.push(v);
        gains.push(gn);
    }
    let column = |samples: &[f64], stride: usize, j: usize| -> Vec<f64> {
        (0..trials).map(|t| samples[t * stride + j]).collect()
    };
    let mut est = DualEstimate {
        trials,
        alpha_mean: vec![0.0; m],
        beta_mean: vec![0.0; n],
        alpha_stderr: vec![0.0; m],
        beta_stderr: vec![0.0; n],
        value_mean: 0.0,
        value_stderr: 0.0,
        gain_mean: 0.0,
        gain_stderr: 0.0,
        alpha_samples,
        beta_samples,
    };
    for u in 0..m {
        let (mean, se) = stats(&column(&est.alpha_samples, m, u));
        est.alpha_mean[u] = mean;
        est.alpha_stderr[u] = se;
    }
    for v in 0..n {
        let (mean, se) = stats(&column(&est.beta_samples, n, v));
        est.beta_mean[v] = mean;
        est.beta_stderr[v] = se;
    }
    let (vm, vs) = stats(&values);
    est.value_mean = vm;
    est.value_stderr = vs;
    let (gm, gs) = stats(&gains);
    est.gain_mean = gm;
    est.gain_stderr = gs;
    Ok(est)
}

#[derive(Debug, Clone, Copy)]
pub struct FeasibilityEntry {
    pub u: usize,
    /// Bitmask over the arrival ids of the members of `S`.
    pub s_mask: u32,
    pub lhs: f64,
    pub target: f64,
    pub slack: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub entries: Vec<FeasibilityEntry>,
    /// Entry with the smallest `lhs / target` among positive targets.
    pub worst: Option<FeasibilityEntry>,
    pub worst_ratio: f64,
    /// Pairs with `slack < -3 stderr`.
    pub violations: usize,
    /// Pairs with negative slack within the margin.
    pub inconclusive: usize,
    pub margin_factor: f64,
}

impl FeasibilityReport {
    fn from_entries(entries: Vec<FeasibilityEntry>) -> FeasibilityReport {
        let margin_factor = 3.0;
        let mut worst: Option<FeasibilityEntry> = None;
        let mut worst_ratio = f64::INFINITY;
        let mut violations = 0;
        let mut inconclusive = 0;
        for e in &entries {
            if e.target > 1e-15 {
                let ratio = e.lhs / e.target;
                if ratio < worst_ratio {
                    worst_ratio = ratio;
                    worst = Some(*e);
                }
            }
            if e.slack < 0.0 {
                if e.slack < -margin_factor * e.stderr {
                    violations += 1;
                } else {
                    inconclusive += 1;
                }
            }
        }
        FeasibilityReport {
            entries,
            worst,
            worst_ratio,
            violations,
            inconclusive,
            margin_factor,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "worst_ratio": self.worst_ratio,
            "violations": self.violations,
            "inconclusive": self.inconclusive,
            "margin_factor": self.margin_factor,
            "entries": self.entries.iter().map(|e| json!({
                "u": e.u, "s_mask": e.s_mask, "lhs": e.lhs,
                "target": e.target, "slack": e.slack, "stderr": e.stderr,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("u,s_mask,lhs,target,slack,stderr\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.u, e.s_mask, e.lhs, e.target, e.slack, e.stderr
            ));
        }
        out
    }
}

fn feasibility_sweep<FW, FT>(
    inst: &Instance,
    est: &DualEstimate,
    weight: FW,
    target: FT,
) -> Result<FeasibilityReport>
where
    FW: Fn(usize, &[usize], usize) -> f64,
    FT: Fn(usize, &[usize]) -> f64,
{
    if inst.n() > 12 {
        return Err(Error::TooLarge(format!(
            "n = {} (subset sweep supports n <= 12)",
            inst.n()
        )));
    }
    let mut entries = Vec::new();
    for u in 0..inst.m() {
        let nb = inst.neighbors(u);
        for mask in 0u32..(1 << nb.len()) {
            let members: Vec<usize> = nb
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &v)| v)
                .collect();
            let weights: Vec<(usize, f64)> = members
                .iter()
                .map(|&v| (v, weight(u, &members, v)))
                .collect();
            let (lhs, stderr) = est.pair_statistic(u, &weights);
            let t = target(u, &members);
            let s_mask = members.iter().fold(0u32, |acc, &v| acc | 1 << v);
            entries.push(FeasibilityEntry {
                u,
                s_mask,
                lhs,
                target: t,
                slack: lhs - t,
                stderr,
            });
        }
    }
    Ok(FeasibilityReport::from_entries(entries))
}

/// Check `E[alpha_u] + sum_{v in S} E[beta_v] >= gamma * p_bar(u, S)` for
/// every `u` and every subset `S` of `u`'s neighbors.
pub fn check_config_feasibility(
    inst: &Instance,
    est: &DualEstimate,
    gamma: f64,
) -> Result<FeasibilityReport> {
    feasibility_sweep(inst, est, |_, _, _| 1.0, |u, s| gamma * inst.p_bar(u, s))
}

/// Check `E[alpha_u] + sum_{v in S} (1 - p_tilde(u, S(v))) E[beta_v]
/// >= gamma * p_tilde(u, S)`, where `S(v)` holds the members of `S`
/// arriving before `v`.
pub fn check_reduced_feasibility(
    inst: &Instance,
    est: &DualEstimate,
    gamma: f64,
) -> Result<FeasibilityReport> {
    feasibility_sweep(
        inst,
        est,
        |u, s, v| {
            let before: Vec<usize> = s.iter().copied().filter(|&w| w < v).collect();
            1.0 - inst.p_tilde(u, &before)
        },
        |u, s| gamma * inst.p_tilde(u, s),
    )
}

fn budgets_with(theta_minus: &[f64], u: usize, theta_u: f64) -> Vec<f64> {
    let mut budgets = theta_minus.to_vec();
    budgets[u] = theta_u;
    budgets
}

/// Realized `sum_{v in S : theta_u >= p_{uS(v)}} beta_v` from one
/// fractional run's ledger.
fn realized_beta_sum(
    inst: &Instance,
    ledger: &DualLedger,
    u: usize,
    s: &[usize],
    theta_u: f64,
) -> f64 {
    s.iter()
        .filter(|&&v| {
            let before: Vec<usize> = s.iter().copied().filter(|&w| w < v).collect();
            theta_u >= inst.p_sum(u, &before)
        })
        .map(|&v| ledger.beta[v])
        .sum()
}

/// Conditional dual feasibility for the fractional algorithm: with the
/// budgets of the other offline vertices fixed at `theta_minus` (entry `u`
/// ignored), evaluates
///
/// `int_0^{l_inf} e^{-t} g(t) dt
///  + E_{theta_u ~ Exp(1)}[ sum_{v in S : theta_u >= p_{uS(v)}} beta_v ]
///  - gamma * p_tilde(u, S)`
///
/// where the expectation is an `nodes`-point Gauss-Laguerre quadrature
/// with one deterministic re-run of the algorithm per node.
pub fn check_full_stochastic_feasibility(
    inst: &Instance,
    u: usize,
    s: &[usize],
    theta_minus: &[f64],
    g: &GainFunction,
    nodes: usize,
    gamma: f64,
) -> Result<f64> {
    if u >= inst.m() || theta_minus.len() != inst.m() {
        return Err(Error::IndexOutOfRange(format!("offline vertex {u}")));
    }
    if g.domain != GainDomain::Load {
        return Err(Error::InvalidParameter("need a load-domain gain function".into()));
    }
    let delta = fractional_delta(inst);
    let inf_run = run_balance_fractional(
        inst,
        &budgets_with(theta_minus, u, f64::INFINITY),
        g,
        delta,
    )?;
    let l_inf = inf_run.load[u];
    let alpha_part = g.integral_exp(0.0, l_inf);

    let (xs, ws) = gauss_laguerre(nodes);
    let beta_part: f64 = xs
        .par_iter()
        .zip(&ws)
        .map(|(&theta, &w)| {
            let trace =
                run_balance_fractional(inst, &budgets_with(theta_minus, u, theta), g, delta)?;
            let ledger = ledger_balance(inst, &trace, g);
            Ok(w * realized_beta_sum(inst, &ledger, u, s, theta))
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(alpha_part + beta_part - gamma * inst.p_tilde(u, s))
}

pub enum AlphaMode<'a> {
    /// Check `alpha_u = l_u g(rho_u)` with the given ranks.
    Ranking { ranks: &'a [f64] },
    /// Check the ledger against an independent re-integration of its
    /// increments; also report the deviation from `G(l_u)`, which carries
    /// the allocation step's discretization error.
    Balance,
}

#[derive(Debug, Clone, Copy)]
pub struct AlphaInvariantReport {
    pub ok: bool,
    /// Largest deviation in the exact check.
    pub max_residual: f64,
    /// Balance only: largest `|alpha_u - G(l_u)|` (diagnostic).
    pub max_g_deviation: f64,
}

pub fn verify_alpha_invariant(
    inst: &Instance,
    trace: &Trace,
    ledger: &DualLedger,
    g: &GainFunction,
    mode: AlphaMode,
) -> Result<AlphaInvariantReport> {
    if ledger.alpha.len() != inst.m() {
        return Err(Error::InvalidParameter("ledger does not match instance".into()));
    }
    match mode {
        AlphaMode::Ranking { ranks } => {
            if g.domain != GainDomain::Rank {
                return Err(Error::InvalidParameter("ranking mode needs a rank-domain g".into()));
            }
            let mut max_residual = 0.0f64;
            for u in 0..inst.m() {
                let want = trace.load[u] * g.eval(ranks[u]);
                max_residual = max_residual.max((ledger.alpha[u] - want).abs());
            }
            Ok(AlphaInvariantReport {
                ok: max_residual <= 1e-12,
                max_residual,
                max_g_deviation: 0.0,
            })
        }
        AlphaMode::Balance => {
            if g.domain != GainDomain::Load {
                return Err(Error::InvalidParameter("balance mode needs a load-domain g".into()));
            }
            // independent re-accumulation of the increments
            let mut alpha = vec![0.0; inst.m()];
            let mut load = vec![0.0; inst.m()];
            for e in &trace.events {
                let p = inst.p(e.u, e.v);
                alpha[e.u] += e.x * p * g.eval(load[e.u]);
                load[e.u] += e.x * p;
            }
            let mut max_residual = 0.0f64;
            let mut max_g_deviation = 0.0f64;
            for u in 0..inst.m() {
                max_residual = max_residual.max((ledger.alpha[u] - alpha[u]).abs());
                let g_int = g.integral(0.0, trace.load[u]);
                max_g_deviation = max_g_deviation.max((ledger.alpha[u] - g_int).abs());
            }
            Ok(AlphaInvariantReport {
                ok: max_residual <= 1e-12,
                max_residual,
                max_g_deviation,
            })
        }
    }
}

/// Compare the Monte Carlo mean of `alpha_u` over `theta_u ~ Exp(1)`
/// (budgets of the other vertices fixed) against
/// `int_0^{l_inf} e^{-t} g(t) dt`. Returns `(residual, stderr)`.
pub fn verify_balance_alpha_expectation(
    inst: &Instance,
    u: usize,
    theta_minus: &[f64],
    g: &GainFunction,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if u >= inst.m() || theta_minus.len() != inst.m() {
        return Err(Error::IndexOutOfRange(format!("offline vertex {u}")));
    }
    let delta = fractional_delta(inst);
    let inf_run = run_balance_fractional(
        inst,
        &budgets_with(theta_minus, u, f64::INFINITY),
        g,
        delta,
    )?;
    let expected = g.integral_exp(0.0, inf_run.load[u]);
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, t as u64));
            let theta: f64 = -(1.0 - rng.gen::<f64>()).ln();
            let trace =
                run_balance_fractional(inst, &budgets_with(theta_minus, u, theta), g, delta)?;
            Ok(ledger_balance(inst, &trace, g).alpha[u])
        })
        .collect::<Result<_>>()?;
    let (mean, stderr) = stats(&values);
    Ok(((mean - expected).abs(), stderr))
}

/// Check the realized `sum_{v in S : theta_u >= p_{uS(v)}} beta_v` of one
/// fractional run against its analytic lower bound, using the equal-
/// probability form when the instance has a common `p` and the general
/// form otherwise. The comparison allows a small discretization slack
/// proportional to the allocation step.
pub fn verify_balance_beta_bound(
    inst: &Instance,
    u: usize,
    s: &[usize],
    theta_minus: &[f64],
    theta_u: f64,
    g: &GainFunction,
) -> Result<bool> {
    if u >= inst.m() || theta_minus.len() != inst.m() {
        return Err(Error::IndexOutOfRange(format!("offline vertex {u}")));
    }
    let delta = fractional_delta(inst);
    let inf_run = run_balance_fractional(
        inst,
        &budgets_with(theta_minus, u, f64::INFINITY),
        g,
        delta,
    )?;
    let l_inf = inf_run.load[u];
    let trace = run_balance_fractional(inst, &budgets_with(theta_minus, u, theta_u), g, delta)?;
    let ledger = ledger_balance(inst, &trace, g);
    let realized = realized_beta_sum(inst, &ledger, u, s, theta_u);

    let q = inst.p_sum(u, s);
    let cap = q.min(theta_u) * (1.0 - g.eval(l_inf));
    let bound = if inst.equal_p().is_some() {
        (q.min(theta_u) - (l_inf - theta_u).max(0.0)).max(0.0) * (1.0 - g.eval(l_inf))
    } else if theta_u >= l_inf {
        cap
    } else {
        (cap - ((l_inf - theta_u) - g.integral(theta_u, l_inf))).max(0.0)
    };
    let tol = 10.0 * delta * inst.n() as f64 + 1e-9;
    Ok(realized >= bound - tol)
}

/// Check the Ranking outcome characterization on one realization: the set
/// matched to `u` must be the first `min{i, |N_u(rho_u)|}` arrivals among
/// the neighbors whose critical rank is at least `rho_u`, where `i` is the
/// number of matches after which `u`'s coins first succeed.
pub fn verify_ranking_outcome(inst: &Instance, draw: &RandomDraw, u: usize) -> Result<bool> {
    if u >= inst.m() {
        return Err(Error::IndexOutOfRange(format!("offline vertex {u}")));
    }
    let trace = run_ranking(inst, draw)?;
    let profile = critical_ranks(inst, u, draw)?;
    let n_u: Vec<usize> = profile
        .neighbors
        .iter()
        .zip(&profile.mu)
        .filter(|&(_, &mu)| mu >= draw.ranks[u])
        .map(|(&v, _)| v)
        .collect();
    let mut i = n_u.len();
    for (k, &v) in n_u.iter().enumerate() {
        if draw.coin(inst, u, v) {
            i = k + 1;
            break;
        }
    }
    let expect: Vec<usize> = n_u.iter().take(i).copied().collect();
    Ok(trace.matched_to(u) == expect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gainfn::{balance_equal_inequality_lhs, StepFn};

    fn single_edge(p: f64) -> Instance {
        Instance::build(1, 1, &[(0, 0, p)]).unwrap()
    }

    #[test]
    fn duals_single_edge_ranking() {
        let inst = single_edge(1.0);
        let g = GainFunction::ranking_stochastic();
        let est = estimate_duals(&inst, DualAlg::Ranking, &g, 20_000, 3).unwrap();
        // E[alpha] = E[g(rho)] = int_0^1 e^{x-1} dx = 1 - 1/e
        let want = 1.0 - (-1.0f64).exp();
        assert!(
            (est.alpha_mean[0] - want).abs() <= 3.0 * est.alpha_stderr[0],
            "alpha {} vs {want}",
            est.alpha_mean[0]
        );
        assert!((est.alpha_mean[0] + est.beta_mean[0] - 1.0).abs() < 1e-12);
        assert!((est.value_mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duals_empty_graph() {
        let inst = Instance::build(2, 2, &[]).unwrap();
        let g = GainFunction::balance_equal_closed_form();
        let est = estimate_duals(&inst, DualAlg::BalanceFractional, &g, 100, 1).unwrap();
        assert!(est.alpha_mean.iter().all(|&x| x == 0.0));
        assert!(est.beta_mean.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn duals_reject_wrong_domain() {
        let inst = single_edge(0.5);
        let g = GainFunction::balance_equal_closed_form();
        assert!(estimate_duals(&inst, DualAlg::Ranking, &g, 10, 0).is_err());
    }

    #[test]
    fn stderr_shrinks_with_trials() {
        let inst = Instance::upper_triangular(3, 0.6).unwrap();
        let g = GainFunction::ranking_closed_form(1.161);
        let small = estimate_duals(&inst, DualAlg::Ranking, &g, 10_000, 5).unwrap();
        let big = estimate_duals(&inst, DualAlg::Ranking, &g, 40_000, 6).unwrap();
        assert!(big.value_stderr < small.value_stderr * 0.7);
        // conservation in expectation: value and gain agree within noise
        assert!(
            (big.value_mean - big.gain_mean).abs()
                <= 3.0 * (big.value_stderr + big.gain_stderr)
        );
    }

    #[test]
    fn config_feasibility_single_edge() {
        let inst = single_edge(0.8);
        let g = GainFunction::ranking_closed_form(1.161);
        let est = estimate_duals(&inst, DualAlg::Ranking, &g, 2000, 7).unwrap();
        let gamma = 0.572;
        let report = check_config_feasibility(&inst, &est, gamma).unwrap();
        assert_eq!(report.entries.len(), 2); // S = {} and S = {v}
        assert_eq!(report.violations, 0);
        // E[alpha + beta] = p exactly, so worst ratio is 1/gamma
        assert!((report.worst_ratio - 1.0 / gamma).abs() < 1e-9);
        let empty = report.entries.iter().find(|e| e.s_mask == 0).unwrap();
        assert_eq!(empty.target, 0.0);
        assert!(empty.slack >= 0.0);
    }

    #[test]
    fn config_feasibility_gamma_zero_passes() {
        let inst = Instance::upper_triangular(3, 0.5).unwrap();
        let g = GainFunction::ranking_closed_form(1.161);
        let est = estimate_duals(&inst, DualAlg::Ranking, &g, 500, 2).unwrap();
        let report = check_config_feasibility(&inst, &est, 0.0).unwrap();
        assert_eq!(report.violations, 0);
        assert_eq!(report.inconclusive, 0);
    }

    #[test]
    fn reduced_feasibility_single_edge_and_weights() {
        let inst = single_edge(0.8);
        let g = GainFunction::ranking_stochastic();
        let est = estimate_duals(&inst, DualAlg::Ranking, &g, 2000, 8).unwrap();
        let report = check_reduced_feasibility(&inst, &est, 1.0 - 1.0 / std::f64::consts::E)
            .unwrap();
        assert_eq!(report.violations, 0);
        // first-arriving member always has weight 1: with a single vertex,
        // lhs for S = {v} is alpha + beta = p exactly
        let full = report.entries.iter().find(|e| e.s_mask == 1).unwrap();
        assert!((full.lhs - 0.8).abs() < 1e-12);
        let csv = report.to_csv();
        assert!(csv.lines().count() == report.entries.len() + 1);
        assert!(report.to_json()["worst_ratio"].is_number());
    }

    #[test]
    fn feasibility_target_monotone_in_s() {
        let inst = Instance::upper_triangular(3, 0.4).unwrap();
        let g = GainFunction::ranking_closed_form(1.161);
        let est = estimate_duals(&inst, DualAlg::Ranking, &g, 200, 3).unwrap();
        let report = check_config_feasibility(&inst, &est, 0.572).unwrap();
        for a in &report.entries {
            for b in &report.entries {
                if a.u == b.u && a.s_mask & b.s_mask == a.s_mask {
                    assert!(a.target <= b.target + 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_stochastic_empty_s_is_alpha() {
        let inst = Instance::build(1, 3, &[(0, 0, 0.05), (0, 1, 0.05), (0, 2, 0.05)]).unwrap();
        let g = GainFunction::balance_equal_closed_form();
        let slack =
            check_full_stochastic_feasibility(&inst, 0, &[], &[f64::INFINITY], &g, 32, 0.0)
                .unwrap();
        // with S empty and gamma 0 the slack is the alpha part, >= 0
        let l_inf = 0.15;
        assert!((slack - g.integral_exp(0.0, l_inf)).abs() < 1e-9);
    }

    #[test]
    fn full_stochastic_one_vertex_closed_form() {
        // single offline vertex absorbing a stream of total mass q: the
        // conditional LHS equals 1 - e^{-q} exactly in the continuum
        // (swap the order of integration), and dominates the analytic
        // lower-bound form evaluated at l = q
        let p = 0.02;
        let n = 40;
        let q = p * n as f64;
        let inst = Instance::build(
            1,
            n,
            &(0..n).map(|v| (0, v, p)).collect::<Vec<_>>(),
        )
        .unwrap();
        let g = GainFunction::balance_equal_closed_form();
        let s: Vec<usize> = (0..n).collect();
        let slack =
            check_full_stochastic_feasibility(&inst, 0, &s, &[0.0], &g, 64, 0.0).unwrap();
        let exact = 1.0 - (-q).exp();
        assert!((slack - exact).abs() < 2e-3, "lhs {slack} vs {exact}");
        let lower = balance_equal_inequality_lhs(q, q, &g).unwrap();
        assert!(slack >= lower - 2e-3, "lhs {slack} below bound {lower}");
    }

    #[test]
    fn full_stochastic_small_p_nonnegative_slack() {
        let g = GainFunction::balance_equal_closed_form();
        let gamma = 0.61;
        for seed in 0..5u64 {
            let inst = Instance::random(2, 6, 0.9, 0.01, 0.01, seed).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5a);
            let theta_minus: Vec<f64> =
                (0..inst.m()).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let s = inst.neighbors(0);
            let slack = check_full_stochastic_feasibility(
                &inst,
                0,
                &s,
                &theta_minus,
                &g,
                64,
                gamma,
            )
            .unwrap();
            // finite-p deviation allowed; reported, not asserted tightly
            assert!(slack >= -1e-2, "seed {seed}: slack {slack}");
        }
    }

    #[test]
    fn alpha_invariant_ranking() {
        let inst = Instance::upper_triangular(3, 0.5).unwrap();
        let g = GainFunction::ranking_closed_form(1.161);
        for seed in 0..20u64 {
            let draw = sample_draw(&inst, seed, DrawMode::All);
            let trace = run_ranking(&inst, &draw).unwrap();
            let ledger = ledger_ranking(&inst, &draw, &trace, &g);
            let report = verify_alpha_invariant(
                &inst,
                &trace,
                &ledger,
                &g,
                AlphaMode::Ranking { ranks: &draw.ranks },
            )
            .unwrap();
            assert!(report.ok, "residual {}", report.max_residual);
        }
    }

    #[test]
    fn alpha_invariant_ranking_double_match() {
        // one offline vertex matched twice at the same rank
        let inst = Instance::build(1, 2, &[(0, 0, 0.5), (0, 1, 0.5)]).unwrap();
        let mut draw = sample_draw(&inst, 1, DrawMode::All);
        draw.coins = Some(vec![false, false]);
        let g = GainFunction::ranking_closed_form(1.161);
        let trace = run_ranking(&inst, &draw).unwrap();
        let ledger = ledger_ranking(&inst, &draw, &trace, &g);
        let want = 2.0 * 0.5 * g.eval(draw.ranks[0]);
        assert!((ledger.alpha[0] - want).abs() < 1e-12);
    }

    #[test]
    fn alpha_invariant_balance_fractional() {
        let inst = Instance::random(3, 8, 0.8, 0.05, 0.1, 4).unwrap();
        let g = GainFunction::balance_equal_closed_form();
        let draw = sample_draw(&inst, 9, DrawMode::All);
        let delta = fractional_delta(&inst);
        let trace =
            run_balance_fractional(&inst, draw.budgets.as_ref().unwrap(), &g, delta).unwrap();
        let ledger = ledger_balance(&inst, &trace, &g);
        let report =
            verify_alpha_invariant(&inst, &trace, &ledger, &g, AlphaMode::Balance).unwrap();
        assert!(report.ok, "residual {}", report.max_residual);
        // the G(l) comparison carries only the O(delta) chunking error
        assert!(
            report.max_g_deviation <= 10.0 * delta,
            "deviation {}",
            report.max_g_deviation
        );
    }

    #[test]
    fn balance_alpha_expectation_constant_g() {
        let inst = Instance::build(1, 4, &[(0, 0, 0.1), (0, 1, 0.1), (0, 2, 0.1), (0, 3, 0.1)])
            .unwrap();
        let kappa = 0.45;
        let g = GainFunction::step(
            StepFn::new(vec![0.0, 20.0], vec![kappa]).unwrap(),
            GainDomain::Load,
        )
        .unwrap();
        // l_inf = 0.4; expectation closed form kappa (1 - e^{-l_inf})
        let (residual, stderr) =
            verify_balance_alpha_expectation(&inst, 0, &[0.0], &g, 40_000, 12).unwrap();
        let delta = fractional_delta(&inst);
        assert!(
            residual <= 3.0 * stderr + 10.0 * delta,
            "residual {residual}, stderr {stderr}"
        );
    }

    #[test]
    fn balance_alpha_expectation_zero_load() {
        let inst = Instance::build(2, 1, &[(1, 0, 0.3)]).unwrap();
        let g = GainFunction::balance_equal_closed_form();
        // u = 0 has no neighbors: l_inf = 0, both sides 0
        let (residual, _) =
            verify_balance_alpha_expectation(&inst, 0, &[0.0, f64::INFINITY], &g, 100, 1)
                .unwrap();
        assert_eq!(residual, 0.0);
    }

    #[test]
    fn beta_bound_randomized() {
        let g = GainFunction::balance_equal_closed_form();
        let mut checked = 0;
        for seed in 0..250u64 {
            let inst = Instance::random(
                2 + (seed % 2) as usize,
                4,
                0.8,
                0.05,
                0.05,
                seed,
            )
            .unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x77);
            let theta_minus: Vec<f64> =
                (0..inst.m()).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            for u in 0..inst.m() {
                for &theta_u in &[0.0, 0.05, 0.2, 1.0, 5.0] {
                    let s = inst.neighbors(u);
                    assert!(
                        verify_balance_beta_bound(&inst, u, &s, &theta_minus, theta_u, &g)
                            .unwrap(),
                        "seed {seed} u {u} theta {theta_u}"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked >= 1000, "only {checked} checks");
    }

    #[test]
    fn beta_bound_general_probabilities() {
        let g = GainFunction::balance_equal_closed_form();
        for seed in 0..40u64 {
            let inst = Instance::random(2, 4, 0.8, 0.02, 0.08, seed).unwrap();
            if inst.equal_p().is_some() {
                continue;
            }
            let theta_minus = vec![1.0; inst.m()];
            for u in 0..inst.m() {
                let s = inst.neighbors(u);
                for &theta_u in &[0.1, 1.0] {
                    assert!(verify_balance_beta_bound(
                        &inst,
                        u,
                        &s,
                        &theta_minus,
                        theta_u,
                        &g
                    )
                    .unwrap());
                }
            }
        }
    }

    #[test]
    fn ranking_outcome_randomized() {
        let mut checked = 0;
        for seed in 0..400u64 {
            let inst = Instance::random(
                2 + (seed % 3) as usize,
                3 + (seed % 3) as usize,
                0.7,
                0.5,
                0.5,
                seed,
            )
            .unwrap();
            if inst.equal_p().is_none() {
                continue;
            }
            let draw = sample_draw(&inst, seed ^ 0x1234, DrawMode::All);
            for u in 0..inst.m() {
                assert!(verify_ranking_outcome(&inst, &draw, u).unwrap(), "seed {seed} u {u}");
                checked += 1;
            }
        }
        assert!(checked >= 1000, "only {checked} checks");
    }

    #[test]
    fn ranking_outcome_all_failures() {
        let inst = Instance::build(1, 3, &[(0, 0, 0.5), (0, 1, 0.5), (0, 2, 0.5)]).unwrap();
        let mut draw = sample_draw(&inst, 3, DrawMode::All);
        draw.coins = Some(vec![false; 3]);
        assert!(verify_ranking_outcome(&inst, &draw, 0).unwrap());
        let trace = run_ranking(&inst, &draw).unwrap();
        assert_eq!(trace.matched_to(0).len(), 3);
    }
}
