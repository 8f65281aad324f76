//! Gain-splitting functions, the competitive-ratio constants, and the
//! factor-revealing alternating optimization.
//!
//! A gain function `g` decides how the expected gain of each match is
//! split between the offline side (`alpha`) and the online side (`beta`).
//! This module houses the closed forms used by the simulators, the
//! numerical solves for the constants 0.572 (Ranking), 2(1-ln 2) > 0.613
//! (Stochastic Balance with equal probabilities), and the alternating
//! LP optimization certifying 0.611 for general probabilities, plus the
//! grid verifiers for the inequalities behind those constants.

use serde_json::json;
use std::f64::consts::E;

use crate::lpcore::{LpProblem, LpStatus, Sense};
use crate::quad::simpson;
use crate::simul::CriticalProfile;
use crate::{Error, Result};

const ONE_MINUS_INV_E: f64 = 1.0 - 1.0 / E;

/// Right-continuous step function: `values[i]` on `[grid[i], grid[i+1])`,
/// extended by `values[0]` below and by the last value above the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFn {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl StepFn {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<StepFn> {
        if grid.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::InvalidParameter(
                "step function needs one more grid point than values".into(),
            ));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("step grid not increasing".into()));
        }
        Ok(StepFn { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < self.grid[0] {
            return self.values[0];
        }
        // index of the cell whose left endpoint is <= x
        let idx = self.grid.partition_point(|&t| t <= x);
        self.values[(idx - 1).min(self.values.len() - 1)]
    }

    /// `int_a^b step(z) dz`, exact.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        debug_assert!(b >= a);
        let mut total = 0.0;
        let start = self.grid[0];
        if a < start {
            total += (b.min(start) - a) * self.values[0];
        }
        for i in 0..self.values.len() {
            let lo = self.grid[i].max(a);
            let hi = self.grid[i + 1].min(b);
            if hi > lo {
                total += (hi - lo) * self.values[i];
            }
        }
        let end = *self.grid.last().unwrap();
        if b > end {
            total += (b - end.max(a)) * self.values[self.values.len() - 1];
        }
        total
    }

    /// `int_a^b e^{-z} step(z) dz`, exact per cell.
    pub fn integral_exp(&self, a: f64, b: f64) -> f64 {
        debug_assert!(b >= a);
        let ew = |lo: f64, hi: f64| (-lo).exp() - (-hi).exp();
        let mut total = 0.0;
        let start = self.grid[0];
        if a < start {
            total += ew(a, b.min(start)) * self.values[0];
        }
        for i in 0..self.values.len() {
            let lo = self.grid[i].max(a);
            let hi = self.grid[i + 1].min(b);
            if hi > lo {
                total += ew(lo, hi) * self.values[i];
            }
        }
        let end = *self.grid.last().unwrap();
        if b > end {
            total += ew(end.max(a), b) * self.values[self.values.len() - 1];
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainDomain {
    /// Ranks in `[0, 1]`.
    Rank,
    /// Loads in `[0, inf)`.
    Load,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainKind {
    /// `min{c / (e - (e-1) rho), 1 - 1/e}` for `rho < 1`, exactly 1 at 1.
    ClosedFormRanking { c: f64 },
    /// `e^{x-1}`.
    ClosedFormRankingStochastic,
    /// `f(e^{-theta})` with `f` the equal-probability Balance closed form.
    ClosedFormBalanceEqual,
    Step(StepFn),
}

/// A non-decreasing gain-splitting function with range in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainFunction {
    kind: GainKind,
    pub domain: GainDomain,
}

/// Scan range used by the construction check for load-domain functions.
const LOAD_SCAN_MAX: f64 = 8.0;

impl GainFunction {
    fn checked(kind: GainKind, domain: GainDomain) -> Result<GainFunction> {
        let f = GainFunction { kind, domain };
        let hi = match domain {
            GainDomain::Rank => 1.0,
            GainDomain::Load => LOAD_SCAN_MAX,
        };
        let steps = (hi / 1e-4).round() as usize;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=steps {
            let x = hi * k as f64 / steps as f64;
            let v = f.eval(x);
            if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "gain value {v} at {x} outside [0, 1]"
                )));
            }
            if v < prev - 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "gain function decreases at {x}"
                )));
            }
            prev = v;
        }
        Ok(f)
    }

    pub fn ranking_closed_form(c: f64) -> GainFunction {
        GainFunction::checked(GainKind::ClosedFormRanking { c }, GainDomain::Rank)
            .expect("closed form is monotone")
    }

    pub fn ranking_stochastic() -> GainFunction {
        GainFunction::checked(GainKind::ClosedFormRankingStochastic, GainDomain::Rank)
            .expect("closed form is monotone")
    }

    pub fn balance_equal_closed_form() -> GainFunction {
        GainFunction::checked(GainKind::ClosedFormBalanceEqual, GainDomain::Load)
            .expect("closed form is monotone")
    }

    pub fn step(step: StepFn, domain: GainDomain) -> Result<GainFunction> {
        GainFunction::checked(GainKind::Step(step), domain)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            GainKind::ClosedFormRanking { c } => {
                let x = x.clamp(0.0, 1.0);
                if x >= 1.0 {
                    1.0
                } else {
                    (c / (E - (E - 1.0) * x)).min(ONE_MINUS_INV_E)
                }
            }
            GainKind::ClosedFormRankingStochastic => (x.clamp(0.0, 1.0) - 1.0).exp(),
            GainKind::ClosedFormBalanceEqual => f_balance_equal((-x.max(0.0)).exp()),
            GainKind::Step(s) => s.eval(x),
        }
    }

    /// `int_a^b g(z) dz`. Exact for step functions and the rank-domain
    /// closed forms; adaptive quadrature otherwise. The jump to 1 at the
    /// right end of the rank domain is a point value and contributes
    /// nothing.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        debug_assert!(b >= a);
        match &self.kind {
            GainKind::ClosedFormRanking { c } => ranking_integral(a, b, *c),
            GainKind::ClosedFormRankingStochastic => (b - 1.0).exp() - (a - 1.0).exp(),
            GainKind::ClosedFormBalanceEqual => {
                simpson(|z| f_balance_equal((-z).exp()), a, b, 1e-12)
            }
            GainKind::Step(s) => s.integral(a, b),
        }
    }

    /// `int_a^b e^{-z} g(z) dz`.
    pub fn integral_exp(&self, a: f64, b: f64) -> f64 {
        debug_assert!(b >= a);
        match &self.kind {
            GainKind::Step(s) => s.integral_exp(a, b),
            _ => simpson(|z| (-z).exp() * self.eval(z), a, b, 1e-12),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match &self.kind {
            GainKind::ClosedFormRanking { c } => json!({"kind": "ranking", "c": c}),
            GainKind::ClosedFormRankingStochastic => json!({"kind": "ranking_stochastic"}),
            GainKind::ClosedFormBalanceEqual => json!({"kind": "balance_equal"}),
            GainKind::Step(s) => {
                json!({"kind": "step", "grid": s.grid, "values": s.values})
            }
        }
    }
}

/// `min{c / (e - (e-1) rho), 1 - 1/e}` for `rho < 1`; exactly 1 at `rho = 1`.
pub fn g_ranking(rho: f64, c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rank {rho} outside [0, 1]")));
    }
    if rho >= 1.0 {
        Ok(1.0)
    } else {
        Ok((c / (E - (E - 1.0) * rho)).min(ONE_MINUS_INV_E))
    }
}

/// Smallest root of `c / (e - (e-1) rho) = 1 - 1/e`, clamped to 0 when the
/// cap is active everywhere.
fn mu_lower_from_c(c: f64) -> f64 {
    ((E - c * E / (E - 1.0)) / (E - 1.0)).max(0.0)
}

/// Analytic `int_a^b min{c/(e-(e-1)rho), 1-1/e} drho` on `[0, 1]`.
fn ranking_integral(a: f64, b: f64, c: f64) -> f64 {
    let mu = mu_lower_from_c(c).min(1.0);
    let mut total = 0.0;
    let lo = a.min(mu);
    let hi = b.min(mu);
    if hi > lo {
        // antiderivative of c / (e - (e-1) rho) is -(c/(e-1)) ln(e - (e-1) rho)
        total += c / (E - 1.0) * ((E - (E - 1.0) * lo) / (E - (E - 1.0) * hi)).ln();
    }
    let lo = a.max(mu);
    if b > lo {
        total += (b - lo) * ONE_MINUS_INV_E;
    }
    total
}

/// The constants behind the Ranking guarantee.
#[derive(Debug, Clone, Copy)]
pub struct RankingConstants {
    pub c: f64,
    pub gamma: f64,
    pub mu_lower: f64,
}

/// Solve for the `c` that balances the Ranking gain split:
/// `int_0^1 g(rho, c) drho = 1 - c/e`, by bisection on `[1, e]` (the
/// difference is strictly increasing in `c`). Returns `(c, Gamma, mu)`
/// where `Gamma = 1 - c/e` and `mu` is the smallest point where the cap
/// `1 - 1/e` becomes active.
pub fn solve_ranking_constant() -> Result<RankingConstants> {
    let f = |c: f64| ranking_integral(0.0, 1.0, c) - (1.0 - c / E);
    let (mut lo, mut hi) = (1.0, E);
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::BracketFailure(format!(
            "balance equation has no sign change on [1, e]: f(1)={flo}, f(e)={fhi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    if f(c).abs() > 1e-10 {
        return Err(Error::BracketFailure(format!(
            "bisection residual {} above 1e-10",
            f(c)
        )));
    }
    Ok(RankingConstants {
        c,
        gamma: 1.0 - c / E,
        mu_lower: mu_lower_from_c(c),
    })
}

/// `e^{x-1}`, the gain function for the benchmark against the adaptive
/// offline optimum.
pub fn g_ranking_stochastic(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("x {x} outside [0, 1]")));
    }
    Ok((x - 1.0).exp())
}

/// `int_0^mu e^{rho-1} drho + 1 - e^{mu-1}`; identically `1 - 1/e`.
pub fn star_constant(mu: f64) -> f64 {
    simpson(|r| (r - 1.0).exp(), 0.0, mu, 1e-13) + 1.0 - (mu - 1.0).exp()
}

/// Equal-probability Balance gain in the `mu = e^{-theta}` parameterization:
/// `2 (2 - sqrt(mu)) (ln 2 - ln(2 - sqrt(mu))) / sqrt(mu) - 1`, with value 1
/// at `mu = 0`.
pub fn f_balance_equal(mu: f64) -> f64 {
    if mu <= 0.0 {
        return 1.0;
    }
    let s = mu.sqrt();
    2.0 * (2.0 - s) * (2.0f64.ln() - (2.0 - s).ln()) / s - 1.0
}

/// `f_balance_equal(e^{-theta})`.
pub fn g_balance_equal(theta: f64) -> f64 {
    f_balance_equal((-theta).exp())
}

/// The equal-probability Stochastic Balance ratio, `2 (1 - ln 2)`.
pub fn balance_equal_gamma() -> f64 {
    2.0 * (1.0 - 2.0f64.ln())
}

/// Max residual over a lambda-grid of
/// `int_lambda^1 f(mu) dmu + (2 sqrt(lambda) - lambda)(1 - f(lambda)) - 2(1 - ln 2)`,
/// which should vanish identically. The integral uses the substitution
/// `mu = s^2`, under which the integrand `2 s f(s^2)` is smooth at 0.
pub fn verify_balance_equal_ode(grid_size: usize) -> Result<f64> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter("grid_size must be >= 2".into()));
    }
    let gamma = balance_equal_gamma();
    let integrand = |s: f64| 4.0 * (2.0 - s) * (2.0f64.ln() - (2.0 - s).ln()) - 2.0 * s;
    let mut worst = 0.0f64;
    for k in 0..=grid_size {
        let lambda = k as f64 / grid_size as f64;
        let integral = simpson(integrand, lambda.sqrt(), 1.0, 1e-11);
        let lhs = integral + (2.0 * lambda.sqrt() - lambda) * (1.0 - f_balance_equal(lambda));
        worst = worst.max((lhs - gamma).abs());
    }
    Ok(worst)
}

/// `int_0^l e^{-t} g(t) dt + [int_0^inf e^{-t} (min{q, t} - (l - t)^+)^+ dt] (1 - g(l))`.
///
/// The infinite integral is truncated where `e^{-t}` drops below 1e-14 and
/// the remaining tail (where the integrand is `min{q, t}`) is added in
/// closed form.
pub fn balance_equal_inequality_lhs(l: f64, q: f64, g: &GainFunction) -> Result<f64> {
    if l < 0.0 || q < 0.0 {
        return Err(Error::InvalidParameter(format!("l={l}, q={q} must be >= 0")));
    }
    let first = g.integral_exp(0.0, l);
    let cut = 36.0f64.max(l);
    let inner = |t: f64| {
        let v = q.min(t) - (l - t).max(0.0);
        v.max(0.0)
    };
    let mut weight = simpson(|t| (-t).exp() * inner(t), 0.0, cut, 1e-12);
    // beyond the cut the positive parts are inactive: integrand is min{q, t}
    weight += if q <= cut {
        q * (-cut).exp()
    } else if q.is_finite() {
        (1.0 + cut) * (-cut).exp() - (-q).exp()
    } else {
        (1.0 + cut) * (-cut).exp()
    };
    Ok(first + weight * (1.0 - g.eval(l)))
}

/// `int_0^l e^{-t} g - int_h^l (e^{-h} - e^{-z})(1 - g(z)) dz + (1 + h) e^{-h} (1 - g(l))`.
///
/// Exact for step `g` (each integral reduces to per-cell closed forms).
pub fn balance_general_lhs(l: f64, g: &GainFunction, h: f64) -> Result<f64> {
    if l < 0.0 || !(0.0..=l).contains(&h) {
        return Err(Error::InvalidParameter(format!("need 0 <= h <= l, got h={h}, l={l}")));
    }
    let eh = (-h).exp();
    let term1 = g.integral_exp(0.0, l);
    let term2 = eh * ((l - h) - g.integral(h, l)) - ((eh - (-l).exp()) - g.integral_exp(h, l));
    let term3 = (1.0 + h) * eh * (1.0 - g.eval(l));
    Ok(term1 - term2 + term3)
}

/// Per grid point, the smallest `h` with
/// `h (1 - g(l)) - int_h^l (1 - g(z)) dz >= 0`; the left side is
/// non-decreasing in `h`, so bisection applies. Returned values align
/// with `grid`.
pub fn update_h(g: &GainFunction, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&l| {
            let phi = |h: f64| h * (1.0 - g.eval(l)) - ((l - h) - g.integral(h, l));
            if phi(0.0) >= 0.0 {
                return 0.0;
            }
            let (mut lo, mut hi) = (0.0, l);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if phi(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        })
        .collect()
}

/// Affine form of `balance_general_lhs(grid[j], step g, h)` in the step
/// values: returns per-cell coefficients and the constant term.
fn lhs_affine(grid: &[f64], j: usize, h: f64) -> (Vec<f64>, f64) {
    let n_cells = grid.len() - 1;
    let l = grid[j];
    let eh = (-h).exp();
    let ew = |lo: f64, hi: f64| (-lo).exp() - (-hi).exp();
    let mut coeffs = vec![0.0; n_cells];
    for (i, c) in coeffs.iter_mut().enumerate() {
        // int e^{-z} over cell ∩ [0, l]
        let lo = grid[i];
        let hi = grid[i + 1].min(l);
        if hi > lo {
            *c += ew(lo, hi);
        }
        // + int (e^{-h} - e^{-z}) over cell ∩ [h, l]  (the g part of term 2)
        let lo = grid[i].max(h);
        if hi > lo {
            *c += eh * (hi - lo) - ew(lo, hi);
        }
    }
    // term 3 references g(l): the cell starting at grid[j], or the last
    // cell when l is the right end of the grid
    let cell_at_l = j.min(n_cells - 1);
    coeffs[cell_at_l] -= (1.0 + h) * eh;
    let constant = (1.0 + h) * eh - (eh * (l - h) - ew(h, l));
    (coeffs, constant)
}

/// Maximize `Gamma` over non-decreasing step functions `g` on `grid`
/// (values in `[0, 1]`) subject to `balance_general_lhs(l_j, g, h_j) >= Gamma`
/// at every grid point. `h` holds one value per grid point.
pub fn optimize_g_given_h(h: &[f64], grid: &[f64]) -> Result<(GainFunction, f64)> {
    optimize_g_with_tail(h, grid, None)
}

/// Like [`optimize_g_given_h`], but when `jump` is given the certificate
/// is understood to rise to 1 at `jump` (past the grid), and the limiting
/// constraint for loads beyond the jump,
/// `int_0^jump e^{-t} g(t) dt >= Gamma`, is added to the LP.
fn optimize_g_with_tail(h: &[f64], grid: &[f64], jump: Option<f64>) -> Result<(GainFunction, f64)> {
    let n_cells = grid.len() - 1;
    if h.len() != grid.len() {
        return Err(Error::InvalidParameter("h must align with grid".into()));
    }
    // variables: g_0, the monotone increments d_1..d_{n_cells-1}, Gamma
    let nv = n_cells + 1;
    let gamma_var = nv - 1;
    let mut lp = LpProblem::new(nv);
    lp.set_objective_coeff(gamma_var, 1.0);
    let add_affine_row = |lp: &mut LpProblem, a: &[f64], b: f64| -> Result<()> {
        let mut row = vec![0.0; nv];
        row[0] = a.iter().sum();
        let mut suffix = 0.0;
        for k in (1..n_cells).rev() {
            suffix += a[k];
            row[k] = suffix;
        }
        row[gamma_var] = -1.0;
        lp.add_row(row, Sense::Ge, -b)
    };
    for j in 0..grid.len() {
        let (a, b) = lhs_affine(grid, j, h[j]);
        add_affine_row(&mut lp, &a, b)?;
    }
    if let Some(jump) = jump {
        let mut a: Vec<f64> = (0..n_cells)
            .map(|i| (-grid[i]).exp() - (-grid[i + 1]).exp())
            .collect();
        a[n_cells - 1] += (-grid[n_cells]).exp() - (-jump).exp();
        add_affine_row(&mut lp, &a, 0.0)?;
    }
    // range: g_{last} = g_0 + sum d <= 1
    let mut row = vec![1.0; nv];
    row[gamma_var] = 0.0;
    lp.add_row(row, Sense::Le, 1.0)?;

    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(format!("gain LP not optimal: {:?}", sol.status)));
    }
    let mut values = Vec::with_capacity(n_cells);
    let mut acc = sol.primal[0];
    values.push(acc.clamp(0.0, 1.0));
    for k in 1..n_cells {
        acc += sol.primal[k];
        values.push(acc.clamp(0.0, 1.0));
    }
    let g = GainFunction::step(StepFn::new(grid.to_vec(), values)?, GainDomain::Load)?;
    Ok((g, sol.primal[gamma_var]))
}

/// State of the alternating optimization over `(g, h)`.
#[derive(Debug, Clone)]
pub struct AltOptState {
    pub step: f64,
    pub l_max: f64,
    pub rounds: usize,
    pub grid: Vec<f64>,
    pub g: GainFunction,
    /// `h` values at the grid points.
    pub h: Vec<f64>,
    pub gamma: f64,
    /// `Gamma` after each round; non-decreasing.
    pub gamma_history: Vec<f64>,
    /// Min over grid points of `balance_general_lhs - Gamma`.
    pub min_slack: f64,
    /// Min slack at 20 sampled points beyond `l_max`, where the
    /// certificate's gain rises to 1.
    pub tail_min_slack: f64,
}

impl AltOptState {
    pub fn certificate_json(&self) -> serde_json::Value {
        let (grid, values) = match &self.g.kind {
            GainKind::Step(s) => (s.grid.clone(), s.values.clone()),
            _ => unreachable!("alternating optimization always produces a step g"),
        };
        json!({
            "kind": "step",
            "grid": grid,
            "values": values,
            "h_values": self.h,
            "gamma": self.gamma,
            "min_slack": self.min_slack,
            "tail_min_slack": self.tail_min_slack,
        })
    }

    /// CSV of per-grid-point inequality slacks.
    pub fn slack_csv(&self) -> String {
        let mut out = String::from("l,h,g,lhs,slack\n");
        for (j, &l) in self.grid.iter().enumerate() {
            let lhs = balance_general_lhs(l, &self.g, self.h[j]).unwrap();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                l,
                self.h[j],
                self.g.eval(l),
                lhs,
                lhs - self.gamma
            ));
        }
        out
    }
}

/// Alternate between optimizing the step `g` for fixed `h` (an LP) and
/// recomputing the optimal `h` for fixed `g` (per-point bisection),
/// starting from `h = 0`. `Gamma` never decreases across rounds: the new
/// `h` maximizes every constraint's left side for the current `g`, so the
/// previous `(g, Gamma)` stays feasible for the next LP.
pub fn alternate_optimize(step: f64, l_max: f64, rounds: usize) -> Result<AltOptState> {
    if step <= 0.0 || l_max <= step || rounds == 0 {
        return Err(Error::InvalidParameter(format!(
            "bad parameters: step={step}, l_max={l_max}, rounds={rounds}"
        )));
    }
    let n_cells = (l_max / step).round() as usize;
    let mut grid: Vec<f64> = (0..=n_cells).map(|j| j as f64 * step).collect();
    // Pad the grid with coarse cells past l_max so the certificate can
    // rise to 1 out where e^{-l} renders the cost negligible. The jump to
    // 1 makes every constraint past it reduce to
    // `int_0^l e^{-t} g(t) dt >= Gamma` (the optimal offset sits at the
    // jump, so both correction terms vanish); that limiting row is added
    // to the LP. A constant extension below 1 would instead accumulate a
    // linearly growing penalty and fail far out.
    for k in 1..=8 {
        grid.push(l_max + 0.5 * k as f64);
    }
    let jump = grid.last().unwrap() + 0.25;
    let mut h = vec![0.0; grid.len()];
    let mut gamma_history = Vec::with_capacity(rounds);
    let mut current: Option<GainFunction> = None;
    let mut gamma = 0.0;
    for _ in 0..rounds {
        let (g, gam) = optimize_g_with_tail(&h, &grid, Some(jump))?;
        h = update_h(&g, &grid);
        gamma = gam;
        gamma_history.push(gam);
        current = Some(g);
    }
    let lp_g = current.unwrap();
    let (mut cert_grid, mut cert_values) = match &lp_g.kind {
        GainKind::Step(s) => (s.grid.clone(), s.values.clone()),
        _ => unreachable!("the LP always produces a step g"),
    };
    cert_grid.push(jump);
    cert_values.push(*cert_values.last().unwrap());
    cert_grid.push(jump + 1.0);
    cert_values.push(1.0);
    let g = GainFunction::step(StepFn::new(cert_grid, cert_values)?, GainDomain::Load)?;
    let mut min_slack = f64::INFINITY;
    for (j, &l) in grid.iter().enumerate() {
        min_slack = min_slack.min(balance_general_lhs(l, &g, h[j])? - gamma);
    }
    // spot-check past the grid, recomputing the offset at each point
    let mut tail_min_slack = f64::INFINITY;
    for k in 1..=20 {
        let l = l_max + 0.5 * k as f64;
        let h_l = update_h(&g, &[l])[0];
        tail_min_slack = tail_min_slack.min(balance_general_lhs(l, &g, h_l)? - gamma);
    }
    Ok(AltOptState {
        step,
        l_max,
        rounds,
        grid,
        g,
        h,
        gamma,
        gamma_history,
        min_slack,
        tail_min_slack,
    })
}

/// Evaluate the per-offline-vertex dual lower bound for Ranking with equal
/// probability `p`, given the critical-rank profile of `u`'s neighbors and
/// a membership vector marking which neighbors are counted on the online
/// side:
///
/// `int_0^1 (1 - e^{-p k(r)}) g(r) dr
///  + sum_{v in S} p (1 - g(mu_v))
///  + sum_{v in S} int_0^{mu_v} e^{-p k_v(r)} (1 - e^{-p}) (g(mu_v) - g(r)) dr`
///
/// where `k(r)` counts neighbors with critical rank >= `r` and `k_v(r)`
/// counts those among the vertices arriving before `v`. Both counts are
/// piecewise constant in `r`, so each integral splits into exact pieces.
pub fn ranking_bound_eval(
    profile: &CriticalProfile,
    in_s: &[bool],
    p: f64,
    g: &GainFunction,
) -> Result<f64> {
    let n = profile.neighbors.len();
    if profile.mu.len() != n || in_s.len() != n {
        return Err(Error::InvalidParameter("profile/membership length mismatch".into()));
    }
    if !(0.0 < p && p <= 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    if profile.mu.iter().any(|&m| !(0.0..=1.0).contains(&m)) {
        return Err(Error::InvalidParameter("critical rank outside [0, 1]".into()));
    }

    // piecewise integral of (g(cap) - g(r)) weighted by e^{-p k(r)}, where
    // k(r) = #{mus >= r}, over [0, hi]; cap = None integrates
    // (1 - e^{-p k}) g instead
    let piecewise = |mus: &[f64], hi: f64, cap: Option<f64>| -> f64 {
        let mut brk: Vec<f64> = mus.iter().copied().filter(|&m| m < hi).collect();
        brk.push(0.0);
        brk.push(hi);
        brk.sort_by(|a, b| a.partial_cmp(b).unwrap());
        brk.dedup();
        let mut total = 0.0;
        for w in brk.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let k = mus.iter().filter(|&&m| m >= mid).count() as f64;
            match cap {
                None => total += (1.0 - (-p * k).exp()) * g.integral(a, b),
                Some(gcap) => {
                    total += (-p * k).exp() * ((b - a) * gcap - g.integral(a, b));
                }
            }
        }
        total
    };

    let mut value = piecewise(&profile.mu, 1.0, None);
    for v in 0..n {
        if !in_s[v] {
            continue;
        }
        let mu_v = profile.mu[v];
        let g_mu = g.eval(mu_v);
        value += p * (1.0 - g_mu);
        let prior: Vec<f64> = profile.mu[..v].to_vec();
        value += (1.0 - (-p).exp()) * piecewise(&prior, mu_v, Some(g_mu));
    }
    Ok(value)
}

/// `int_0^{mu0} g + (1 - g(rho0)) + (1 - 1/e)(rho0 - mu0) g(rho0)` with
/// `g = g_ranking(., c)`.
pub fn ranking_final_inequality(mu0: f64, rho0: f64, c: f64) -> Result<f64> {
    if !(0.0 <= mu0 && mu0 < rho0 && rho0 <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= mu0 < rho0 <= 1, got mu0={mu0}, rho0={rho0}"
        )));
    }
    let g_rho0 = g_ranking(rho0, c)?;
    Ok(ranking_integral(0.0, mu0, c) + (1.0 - g_rho0) + ONE_MINUS_INV_E * (rho0 - mu0) * g_rho0)
}

/// Discrete critical-rank objective with `g = g_ranking(., c)`:
///
/// `int_0^{mu0} g + sum_i p (1 - g(mu_i))
///  + sum_j (mu_j - mu_{j-1}) sum_{i >= j} p e^{-p (i - j)} g(mu_i)`
///
/// over `mu0 <= mu_1 <= ... <= mu_n <= 1` with `n p = 1`.
pub fn f_discrete(mu0: f64, mus: &[f64], p: f64, c: f64) -> Result<f64> {
    let n = mus.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty rank vector".into()));
    }
    if (n as f64 * p - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("n*p = {} != 1", n as f64 * p)));
    }
    if mu0 < 0.0 || mus[0] < mu0 || mus.windows(2).any(|w| w[1] < w[0]) || mus[n - 1] > 1.0 {
        return Err(Error::InvalidParameter("ranks must satisfy mu0 <= mu_1 <= ... <= 1".into()));
    }
    let mut value = ranking_integral(0.0, mu0, c);
    for &mu in mus {
        value += p * (1.0 - g_ranking(mu, c)?);
    }
    for j in 1..=n {
        let gap = mus[j - 1] - if j == 1 { mu0 } else { mus[j - 2] };
        if gap == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for i in j..=n {
            inner += p * (-p * (i - j) as f64).exp() * g_ranking(mus[i - 1], c)?;
        }
        value += gap * inner;
    }
    Ok(value)
}

#[derive(Debug, Clone)]
pub struct BruteMinReport {
    pub argmin: Vec<f64>,
    pub value: f64,
    /// Whether the argmin has all coordinates equal.
    pub all_equal: bool,
    /// Whether the argmin is all-equal at `mu_lower` or at 1, within one
    /// grid cell.
    pub at_extreme: bool,
}

/// Exhaustive minimum of [`f_discrete`] over sorted vectors from a uniform
/// grid on `[mu0, 1]` with `resolution` points, `p = 1/n`.
pub fn brute_min_f(n: usize, resolution: usize, mu0: f64) -> Result<BruteMinReport> {
    if n == 0 || n > 5 {
        return Err(Error::TooLarge(format!("n = {n} (enumeration supports n <= 5)")));
    }
    if resolution < 2 || !(0.0..1.0).contains(&mu0) {
        return Err(Error::InvalidParameter("need resolution >= 2 and mu0 in [0, 1)".into()));
    }
    let consts = solve_ranking_constant()?;
    let p = 1.0 / n as f64;
    let cell = (1.0 - mu0) / (resolution - 1) as f64;
    let grid: Vec<f64> = (0..resolution).map(|k| mu0 + k as f64 * cell).collect();

    let mut best_value = f64::INFINITY;
    let mut best: Vec<usize> = Vec::new();
    let mut idx = vec![0usize; n];
    // enumerate non-decreasing index vectors
    loop {
        let mus: Vec<f64> = idx.iter().map(|&k| grid[k]).collect();
        let value = f_discrete(mu0, &mus, p, consts.c)?;
        if value < best_value {
            best_value = value;
            best = idx.clone();
        }
        // increment the rightmost index that has room and reset the
        // suffix to the same value (keeps the vector non-decreasing)
        let mut pos = n;
        while pos > 0 && idx[pos - 1] + 1 >= resolution {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        let v = idx[pos - 1] + 1;
        for slot in idx.iter_mut().skip(pos - 1) {
            *slot = v;
        }
    }
    let argmin: Vec<f64> = best.iter().map(|&k| grid[k]).collect();
    let all_equal = argmin.windows(2).all(|w| w[0] == w[1]);
    // the minimizers of interest sit at an all-equal vector at one of the
    // distinguished ranks: mu0 itself (at mu0 = 0 the value is exactly
    // 1 - c/e), the knee of the closed form, or 1
    let at_extreme = all_equal
        && ((argmin[0] - mu0).abs() <= cell + 1e-12
            || (argmin[0] - consts.mu_lower).abs() <= cell + 1e-12
            || (argmin[0] - 1.0).abs() <= cell + 1e-12);
    Ok(BruteMinReport {
        argmin,
        value: best_value,
        all_equal,
        at_extreme,
    })
}
