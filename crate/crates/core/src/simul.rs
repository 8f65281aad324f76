//! Online algorithm simulators and gain-split dual ledgers.
//!
//! Each run is a pure function of `(instance, draw, parameters)`. A
//! [`Trace`] records the chronological match events, final loads, and the
//! realized objective. Dual ledgers are decorators over traces: the same
//! trace can be split under different gain functions.

use crate::gainfn::GainFunction;
use crate::instance::{Instance, RandomDraw};
use crate::{Error, Result};

/// One match decision: online vertex `v` assigned to offline `u` with
/// fraction `x` (1 for the integral algorithms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchEvent {
    pub v: usize,
    pub u: usize,
    pub x: f64,
}

/// The outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Chronological match events (arrival order; within an arrival, the
    /// order in which fractional chunks were placed).
    pub events: Vec<MatchEvent>,
    /// Final load `l_u = sum x * p_uv` over matches to `u`.
    pub load: Vec<f64>,
    /// Arrival step at which `u` became successful, if it did.
    pub success_at: Vec<Option<usize>>,
    /// Count of successful offline vertices, or `sum_u min{l_u, theta_u}`
    /// for the fractional algorithm.
    pub value: f64,
}

impl Trace {
    fn new(m: usize) -> Trace {
        Trace {
            events: Vec::new(),
            load: vec![0.0; m],
            success_at: vec![None; m],
            value: 0.0,
        }
    }

    /// Fraction of online vertex `v` assigned in total.
    pub fn assigned(&self, v: usize) -> f64 {
        self.events.iter().filter(|e| e.v == v).map(|e| e.x).sum()
    }

    /// The single match of `v` for an integral run, if any.
    pub fn match_of(&self, v: usize) -> Option<usize> {
        self.events.iter().find(|e| e.v == v).map(|e| e.u)
    }

    /// Online vertices matched to `u`, in arrival order (integral runs).
    pub fn matched_to(&self, u: usize) -> Vec<usize> {
        self.events.iter().filter(|e| e.u == u).map(|e| e.v).collect()
    }

    /// CSV export: one row per match event plus a row per unmatched online
    /// vertex (`matched_u = -1`), followed by a summary row.
    pub fn to_csv(&self, n: usize) -> String {
        let mut out = String::from("step,matched_u,fraction,success_flag\n");
        for v in 0..n {
            let mut any = false;
            for e in self.events.iter().filter(|e| e.v == v) {
                any = true;
                let success = self.success_at[e.u] == Some(v);
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    v,
                    e.u,
                    e.x,
                    if success { 1 } else { 0 }
                ));
            }
            if !any {
                out.push_str(&format!("{v},-1,0,0\n"));
            }
        }
        out.push_str(&format!("value,,,{}\n", self.value));
        out
    }
}

/// Gain-split dual variables for one run. Conservation:
/// `sum alpha + sum beta = sum over events of x * p_uv` exactly.
#[derive(Debug, Clone)]
pub struct DualLedger {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl DualLedger {
    pub fn total(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }
}

/// Expected gain recorded in a trace: `sum x * p_uv` over events.
pub fn expected_gain(inst: &Instance, trace: &Trace) -> f64 {
    trace.events.iter().map(|e| e.x * inst.p(e.u, e.v)).sum()
}

fn require_equal_p(inst: &Instance) -> Result<f64> {
    inst.equal_p()
        .ok_or_else(|| Error::MissingData("instance has no common equal_p".into()))
}

/// Ranking: match each arrival to the unsuccessful neighbor with the
/// smallest rank; success decided by the edge coin.
pub fn run_ranking(inst: &Instance, draw: &RandomDraw) -> Result<Trace> {
    require_equal_p(inst)?;
    if draw.coins.is_none() {
        return Err(Error::MissingData("draw has no coins".into()));
    }
    run_ranking_internal(inst, &draw.ranks, draw, None)
}

/// Ranking with offline vertex `removed` deleted from the graph; used by
/// [`critical_ranks`].
fn run_ranking_internal(
    inst: &Instance,
    ranks: &[f64],
    draw: &RandomDraw,
    removed: Option<usize>,
) -> Result<Trace> {
    let m = inst.m();
    let mut trace = Trace::new(m);
    let mut successful = vec![false; m];
    for v in 0..inst.n() {
        let candidate = (0..m)
            .filter(|&u| Some(u) != removed && !successful[u] && inst.p(u, v) > 0.0)
            .min_by(|&a, &b| ranks[a].partial_cmp(&ranks[b]).unwrap());
        if let Some(u) = candidate {
            trace.events.push(MatchEvent { v, u, x: 1.0 });
            trace.load[u] += inst.p(u, v);
            if draw.coin(inst, u, v) {
                successful[u] = true;
                trace.success_at[u] = Some(v);
            }
        }
    }
    trace.value = successful.iter().filter(|&&s| s).count() as f64;
    Ok(trace)
}

/// Per-neighbor critical ranks of offline vertex `u`: the rank of the
/// vertex each neighbor matches to in the run with `u` removed, or 1 if
/// unmatched there.
#[derive(Debug, Clone)]
pub struct CriticalProfile {
    pub u: usize,
    /// `u`'s online neighbors in arrival order.
    pub neighbors: Vec<usize>,
    /// Critical ranks aligned with `neighbors`.
    pub mu: Vec<f64>,
}

pub fn critical_ranks(inst: &Instance, u: usize, draw: &RandomDraw) -> Result<CriticalProfile> {
    if u >= inst.m() {
        return Err(Error::IndexOutOfRange(format!("offline vertex {u}")));
    }
    require_equal_p(inst)?;
    let reduced = run_ranking_internal(inst, &draw.ranks, draw, Some(u))?;
    let neighbors = inst.neighbors(u);
    let mu = neighbors
        .iter()
        .map(|&v| match reduced.match_of(v) {
            Some(u2) => draw.ranks[u2],
            None => 1.0,
        })
        .collect();
    Ok(CriticalProfile { u, neighbors, mu })
}

/// Stochastic Balance for equal probabilities: match each arrival to the
/// unsuccessful neighbor with the smallest load, ties by smallest id.
pub fn run_balance_equal(inst: &Instance, draw: &RandomDraw) -> Result<Trace> {
    require_equal_p(inst)?;
    if draw.coins.is_none() {
        return Err(Error::MissingData("draw has no coins".into()));
    }
    let m = inst.m();
    let mut trace = Trace::new(m);
    let mut successful = vec![false; m];
    for v in 0..inst.n() {
        let candidate = (0..m)
            .filter(|&u| !successful[u] && inst.p(u, v) > 0.0)
            .min_by(|&a, &b| {
                trace.load[a]
                    .partial_cmp(&trace.load[b])
                    .unwrap()
                    .then(a.cmp(&b))
            });
        if let Some(u) = candidate {
            trace.events.push(MatchEvent { v, u, x: 1.0 });
            trace.load[u] += inst.p(u, v);
            if draw.coin(inst, u, v) {
                successful[u] = true;
                trace.success_at[u] = Some(v);
            }
        }
    }
    trace.value = successful.iter().filter(|&&s| s).count() as f64;
    Ok(trace)
}

/// Fractional Stochastic Balance under explicit budgets.
///
/// Each arrival is allocated in chunks of mass `delta` (the final chunk
/// smaller) to the offline candidate maximizing `p_uv (1 - g(l_u))` among
/// those with `l_u < theta_u`; a chunk that would cross the budget is
/// capped there and the vertex becomes successful. The objective is
/// `sum_u min{l_u, theta_u}` which, with capping, equals `sum_u l_u`.
pub fn run_balance_fractional(
    inst: &Instance,
    budgets: &[f64],
    g: &GainFunction,
    delta: f64,
) -> Result<Trace> {
    if delta <= 0.0 {
        return Err(Error::InvalidParameter(format!("delta {delta}")));
    }
    if budgets.len() != inst.m() {
        return Err(Error::MissingData("budget vector length".into()));
    }
    let m = inst.m();
    let mut trace = Trace::new(m);
    for v in 0..inst.n() {
        let mut remaining = 1.0f64;
        while remaining > 1e-15 {
            let candidate = (0..m)
                .filter(|&u| inst.p(u, v) > 0.0 && trace.load[u] < budgets[u])
                .max_by(|&a, &b| {
                    let sa = inst.p(a, v) * (1.0 - g.eval(trace.load[a]));
                    let sb = inst.p(b, v) * (1.0 - g.eval(trace.load[b]));
                    sa.partial_cmp(&sb).unwrap().then(b.cmp(&a))
                });
            let u = match candidate {
                Some(u) => u,
                None => break,
            };
            let p = inst.p(u, v);
            let mut x = delta.min(remaining);
            // cap a chunk that would straddle the budget
            if trace.load[u] + x * p >= budgets[u] {
                x = (budgets[u] - trace.load[u]) / p;
                trace.success_at[u] = Some(v);
            }
            trace.events.push(MatchEvent { v, u, x });
            trace.load[u] += x * p;
            remaining -= x;
        }
    }
    trace.value = trace
        .load
        .iter()
        .zip(budgets)
        .map(|(&l, &t)| l.min(t))
        .sum();
    Ok(trace)
}

/// Baseline: match each arrival to the unsuccessful neighbor with the
/// largest success probability, ties by smallest id.
pub fn run_greedy(inst: &Instance, draw: &RandomDraw) -> Result<Trace> {
    if draw.coins.is_none() {
        return Err(Error::MissingData("draw has no coins".into()));
    }
    let m = inst.m();
    let mut trace = Trace::new(m);
    let mut successful = vec![false; m];
    for v in 0..inst.n() {
        let candidate = (0..m)
            .filter(|&u| !successful[u] && inst.p(u, v) > 0.0)
            .max_by(|&a, &b| {
                inst.p(a, v)
                    .partial_cmp(&inst.p(b, v))
                    .unwrap()
                    .then(b.cmp(&a))
            });
        if let Some(u) = candidate {
            trace.events.push(MatchEvent { v, u, x: 1.0 });
            trace.load[u] += inst.p(u, v);
            if draw.coin(inst, u, v) {
                successful[u] = true;
                trace.success_at[u] = Some(v);
            }
        }
    }
    trace.value = successful.iter().filter(|&&s| s).count() as f64;
    Ok(trace)
}

/// Dual split for Ranking: on each match, `alpha_u += p g(rho_u)` and
/// `beta_v = p (1 - g(rho_u))`.
pub fn ledger_ranking(
    inst: &Instance,
    draw: &RandomDraw,
    trace: &Trace,
    g: &GainFunction,
) -> DualLedger {
    let mut alpha = vec![0.0; inst.m()];
    let mut beta = vec![0.0; inst.n()];
    for e in &trace.events {
        let p = inst.p(e.u, e.v);
        let gu = g.eval(draw.ranks[e.u]);
        alpha[e.u] += e.x * p * gu;
        beta[e.v] += e.x * p * (1.0 - gu);
    }
    DualLedger { alpha, beta }
}

/// Dual split for Balance (integral or fractional): each chunk adds
/// `x p g(l_u)` to `alpha_u` and `x p (1 - g(l_u))` to `beta_v`, with `g`
/// evaluated at the pre-match load.
pub fn ledger_balance(inst: &Instance, trace: &Trace, g: &GainFunction) -> DualLedger {
    let mut alpha = vec![0.0; inst.m()];
    let mut beta = vec![0.0; inst.n()];
    let mut load = vec![0.0; inst.m()];
    for e in &trace.events {
        let p = inst.p(e.u, e.v);
        let gu = g.eval(load[e.u]);
        alpha[e.u] += e.x * p * gu;
        beta[e.v] += e.x * p * (1.0 - gu);
        load[e.u] += e.x * p;
    }
    DualLedger { alpha, beta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gainfn::GainFunction;
    use crate::instance::{sample_draw, DrawMode};

    fn draw_all(inst: &Instance, seed: u64) -> RandomDraw {
        sample_draw(inst, seed, DrawMode::All)
    }

    #[test]
    fn ranking_single_edge() {
        let inst = Instance::build(1, 1, &[(0, 0, 1.0)]).unwrap();
        let draw = draw_all(&inst, 3);
        let trace = run_ranking(&inst, &draw).unwrap();
        assert_eq!(trace.match_of(0), Some(0));
        assert_eq!(trace.value, 1.0);
        let g = GainFunction::ranking_closed_form(1.161);
        let ledger = ledger_ranking(&inst, &draw, &trace, &g);
        assert!((ledger.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_requires_equal_p() {
        let inst = Instance::build(1, 2, &[(0, 0, 0.5), (0, 1, 0.7)]).unwrap();
        let draw = draw_all(&inst, 3);
        assert!(run_ranking(&inst, &draw).is_err());
    }

    #[test]
    fn ranking_upper_triangular_k2_expectation() {
        // p = 1: if rho_0 < rho_1, v0 -> u0 (success), v1 -> u1: value 2.
        // If rho_1 < rho_0, v0 -> u1 (success), v1 unmatched: value 1.
        // Expectation over both equally likely orders is 1.5.
        let inst = Instance::upper_triangular(2, 1.0).unwrap();
        let mut total = 0.0;
        let trials = 4000;
        for seed in 0..trials {
            let draw = draw_all(&inst, seed);
            total += run_ranking(&inst, &draw).unwrap().value;
        }
        let mean = total / trials as f64;
        assert!((mean - 1.5).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn ranking_unmatched_arrival_gets_zero_beta() {
        // one offline, two online, p=1: first arrival succeeds, second
        // finds no unsuccessful neighbor
        let inst = Instance::build(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let draw = draw_all(&inst, 5);
        let trace = run_ranking(&inst, &draw).unwrap();
        assert_eq!(trace.match_of(1), None);
        let g = GainFunction::ranking_stochastic();
        let ledger = ledger_ranking(&inst, &draw, &trace, &g);
        assert_eq!(ledger.beta[1], 0.0);
        assert!((ledger.total() - expected_gain(&inst, &trace)).abs() < 1e-12);
    }

    #[test]
    fn critical_ranks_single_edge() {
        let inst = Instance::build(1, 1, &[(0, 0, 1.0)]).unwrap();
        let draw = draw_all(&inst, 1);
        let prof = critical_ranks(&inst, 0, &draw).unwrap();
        assert_eq!(prof.mu, vec![1.0]);
    }

    #[test]
    fn critical_ranks_complete_2x2() {
        // remove u0 in complete p=1 graph: u1 takes the first arrival,
        // second arrival unmatched -> mu = (rho_1, 1)
        let inst =
            Instance::build(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)])
                .unwrap();
        let draw = draw_all(&inst, 8);
        let prof = critical_ranks(&inst, 0, &draw).unwrap();
        assert_eq!(prof.mu, vec![draw.ranks[1], 1.0]);
    }

    #[test]
    fn critical_ranks_isolated_vertex() {
        let inst = Instance::build(2, 1, &[(0, 0, 1.0)]).unwrap();
        let draw = draw_all(&inst, 2);
        let prof = critical_ranks(&inst, 1, &draw).unwrap();
        assert!(prof.neighbors.is_empty());
    }

    #[test]
    fn balance_equal_upper_triangular_k2() {
        // p = 1: v0 ties between u0 and u1 at load 0 -> u0 (lexicographic)
        // and succeeds; v1's only neighbor u1 is still unsuccessful -> both
        // offline vertices succeed
        let inst = Instance::upper_triangular(2, 1.0).unwrap();
        let draw = draw_all(&inst, 0);
        let trace = run_balance_equal(&inst, &draw).unwrap();
        assert_eq!(trace.match_of(0), Some(0));
        assert_eq!(trace.match_of(1), Some(1));
        assert_eq!(trace.value, 2.0);
    }

    #[test]
    fn balance_equal_picks_smaller_load() {
        let inst = Instance::build(
            2,
            4,
            &[(0, 0, 0.5), (0, 1, 0.5), (1, 2, 0.5), (0, 3, 0.5), (1, 3, 0.5)],
        )
        .unwrap();
        // make all coins fail so loads are (1.0, 0.5) when v3 arrives
        let mut draw = draw_all(&inst, 0);
        draw.coins = Some(vec![false; inst.m() * inst.n()]);
        let trace = run_balance_equal(&inst, &draw).unwrap();
        assert_eq!(trace.match_of(3), Some(1));
    }

    #[test]
    fn balance_equal_failed_coin_leaves_load() {
        let inst = Instance::build(1, 1, &[(0, 0, 0.5)]).unwrap();
        let mut draw = draw_all(&inst, 0);
        draw.coins = Some(vec![false]);
        let trace = run_balance_equal(&inst, &draw).unwrap();
        assert_eq!(trace.value, 0.0);
        assert!((trace.load[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fractional_single_candidate_accumulates() {
        let inst = Instance::build(1, 2, &[(0, 0, 0.5), (0, 1, 0.3)]).unwrap();
        let g = GainFunction::balance_equal_closed_form();
        let trace =
            run_balance_fractional(&inst, &[f64::INFINITY], &g, 1e-3).unwrap();
        assert!((trace.load[0] - 0.8).abs() < 1e-12);
        assert!((trace.value - 0.8).abs() < 1e-12);
    }

    #[test]
    fn fractional_budget_caps_value() {
        let inst = Instance::build(1, 2, &[(0, 0, 0.5), (0, 1, 0.3)]).unwrap();
        let g = GainFunction::balance_equal_closed_form();
        let trace = run_balance_fractional(&inst, &[0.1], &g, 1e-3).unwrap();
        assert!((trace.value - 0.1).abs() < 1e-12);
        assert!(trace.success_at[0].is_some());
    }

    #[test]
    fn fractional_water_filling_equalizes() {
        // two offline vertices, both neighbors of every arrival with the
        // same p; with a strictly increasing g the loads stay within one
        // chunk of each other (two-vertex water level = half the mass)
        let p = 0.4;
        let inst = Instance::build(
            2,
            5,
            &(0..5)
                .flat_map(|v| [(0usize, v, p), (1usize, v, p)])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let g = GainFunction::balance_equal_closed_form();
        let delta = 1e-3;
        let trace =
            run_balance_fractional(&inst, &[f64::INFINITY, f64::INFINITY], &g, delta).unwrap();
        let total = 5.0 * p;
        assert!((trace.load[0] + trace.load[1] - total).abs() < 1e-9);
        assert!(
            (trace.load[0] - total / 2.0).abs() <= delta * p + 1e-12,
            "loads {:?}",
            trace.load
        );
        // never leaves mass unallocated while a candidate exists
        for v in 0..5 {
            assert!((trace.assigned(v) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fractional_ledger_conservation() {
        let inst = Instance::random(3, 6, 0.8, 0.05, 0.15, 5).unwrap();
        let draw = draw_all(&inst, 77);
        let g = GainFunction::balance_equal_closed_form();
        let trace = run_balance_fractional(
            &inst,
            draw.budgets.as_ref().unwrap(),
            &g,
            1e-3,
        )
        .unwrap();
        let ledger = ledger_balance(&inst, &trace, &g);
        assert!((ledger.total() - expected_gain(&inst, &trace)).abs() < 1e-12);
    }

    #[test]
    fn greedy_prefers_largest_probability() {
        let inst = Instance::build(2, 1, &[(0, 0, 0.9), (1, 0, 0.1)]).unwrap();
        let draw = draw_all(&inst, 0);
        let trace = run_greedy(&inst, &draw).unwrap();
        assert_eq!(trace.match_of(0), Some(0));
    }

    #[test]
    fn greedy_empty_graph() {
        let inst = Instance::build(2, 2, &[]).unwrap();
        let draw = draw_all(&inst, 0);
        let trace = run_greedy(&inst, &draw).unwrap();
        assert_eq!(trace.value, 0.0);
        assert!(trace.events.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let inst = Instance::random(4, 6, 0.7, 0.2, 0.9, 10).unwrap();
        let draw = draw_all(&inst, 4);
        let a = run_greedy(&inst, &draw).unwrap();
        let b = run_greedy(&inst, &draw).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_export_shape() {
        let inst = Instance::build(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let draw = draw_all(&inst, 5);
        let trace = run_ranking(&inst, &draw).unwrap();
        let csv = trace.to_csv(inst.n());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4); // header, two steps, summary
        assert!(lines[2].starts_with("1,-1,"));
        assert!(lines[3].starts_with("value,"));
    }

    /// Ranking outcome characterization: the set matched to `u` equals the
    /// first `min{i, |N_u(rho_u)|}` arrivals among neighbors with critical
    /// rank >= rho_u, where `i` is the number of matches after which `u`'s
    /// coins make it succeed.
    #[test]
    fn ranking_outcome_characterization_randomized() {
        let mut checked = 0;
        for seed in 0..500u64 {
            let inst = Instance::random(
                2 + (seed % 3) as usize,
                3 + (seed % 4) as usize,
                0.7,
                0.5,
                0.5,
                seed,
            )
            .unwrap();
            if inst.equal_p().is_none() {
                continue;
            }
            let draw = draw_all(&inst, seed ^ 0xabcd);
            let trace = run_ranking(&inst, &draw).unwrap();
            for u in 0..inst.m() {
                let prof = critical_ranks(&inst, u, &draw).unwrap();
                let n_u: Vec<usize> = prof
                    .neighbors
                    .iter()
                    .zip(&prof.mu)
                    .filter(|&(_, &mu)| mu >= draw.ranks[u])
                    .map(|(&v, _)| v)
                    .collect();
                // i = position of first successful coin along N_u
                let mut i = n_u.len();
                for (k, &v) in n_u.iter().enumerate() {
                    if draw.coin(&inst, u, v) {
                        i = k + 1;
                        break;
                    }
                }
                let expect: Vec<usize> = n_u.iter().take(i).copied().collect();
                assert_eq!(
                    trace.matched_to(u),
                    expect,
                    "seed {seed} u {u} ranks {:?} mu {:?}",
                    draw.ranks,
                    prof.mu
                );
                checked += 1;
            }
        }
        assert!(checked >= 1000, "only {checked} characterization checks ran");
    }
}
