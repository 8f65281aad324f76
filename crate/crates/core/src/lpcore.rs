//! A small dense linear-programming solver with primal and dual
//! certificates.
//!
//! Two-phase tableau simplex, maximization form. The default pivot rule
//! picks the entering column by reduced cost scaled by the column norm
//! (a steepest-edge flavor); after `10 * (rows + cols)` iterations it
//! falls back to Bland's rule, which guarantees termination. Everything
//! is deterministic.
//!
//! Intended scale is a few times 10^4 nonzeros; the tableau is dense.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct RowDef {
    coeffs: Vec<f64>,
    sense: Sense,
    rhs: f64,
}

/// `max c.x  s.t.  rows, 0 <= x (<= ub)`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<RowDef>,
    upper: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    /// Primal values, one per variable.
    pub primal: Vec<f64>,
    /// Dual multipliers, one per user constraint row (>= 0 for `Le`,
    /// <= 0 for `Ge`, free for `Eq`).
    pub dual: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
}

const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-9;

impl LpProblem {
    pub fn new(num_vars: usize) -> LpProblem {
        LpProblem {
            num_vars,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            upper: vec![None; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn set_objective(&mut self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.num_vars {
            return Err(Error::Lp("objective dimension mismatch".into()));
        }
        self.objective = coeffs.to_vec();
        Ok(())
    }

    pub fn set_objective_coeff(&mut self, var: usize, c: f64) {
        self.objective[var] = c;
    }

    pub fn set_upper_bound(&mut self, var: usize, ub: f64) {
        self.upper[var] = Some(ub);
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) -> Result<()> {
        if coeffs.len() != self.num_vars {
            return Err(Error::Lp("row dimension mismatch".into()));
        }
        self.rows.push(RowDef { coeffs, sense, rhs });
        Ok(())
    }

    /// Sparse convenience: unlisted coefficients are zero.
    pub fn add_sparse_row(&mut self, entries: &[(usize, f64)], sense: Sense, rhs: f64) {
        let mut coeffs = vec![0.0; self.num_vars];
        for &(j, c) in entries {
            coeffs[j] += c;
        }
        self.rows.push(RowDef { coeffs, sense, rhs });
    }

    pub fn solve(&self) -> Result<LpSolution> {
        for c in &self.objective {
            if !c.is_finite() {
                return Err(Error::Lp("non-finite objective coefficient".into()));
            }
        }
        for row in &self.rows {
            if !row.rhs.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::Lp("non-finite constraint coefficient".into()));
            }
        }
        Tableau::build(self)?.solve(self)
    }
}

/// Dense simplex tableau. `rows` hold `B^{-1} A` and `B^{-1} b`; the
/// reduced-cost row is maintained incrementally.
struct Tableau {
    nrows: usize,
    ncols: usize, // structural + slack columns
    n_structural: usize,
    width: usize, // ncols + 1 (rhs)
    data: Vec<f64>,
    basis: Vec<usize>,
    reduced: Vec<f64>, // z_j - c_j, length ncols
    obj_value: f64,
    /// slack/artificial column of each row, and its orientation sign.
    row_logical: Vec<(usize, f64)>,
    artificial_from: usize,
    user_rows: usize,
    flipped: Vec<bool>,
}

impl Tableau {
    fn build(p: &LpProblem) -> Result<Tableau> {
        let n = p.num_vars;
        // fold variable upper bounds into explicit rows
        let mut rows: Vec<RowDef> = p.rows.clone();
        let user_rows = rows.len();
        for (j, ub) in p.upper.iter().enumerate() {
            if let Some(ub) = ub {
                let mut coeffs = vec![0.0; n];
                coeffs[j] = 1.0;
                rows.push(RowDef {
                    coeffs,
                    sense: Sense::Le,
                    rhs: *ub,
                });
            }
        }
        let nrows = rows.len();
        let mut flipped = vec![false; nrows];
        for (i, row) in rows.iter_mut().enumerate() {
            if row.rhs < 0.0 {
                flipped[i] = true;
                row.rhs = -row.rhs;
                for c in row.coeffs.iter_mut() {
                    *c = -*c;
                }
                row.sense = match row.sense {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
            }
        }
        // column layout: structural | one logical (slack or surplus) per
        // inequality row | artificials
        let n_logical = rows
            .iter()
            .filter(|r| r.sense != Sense::Eq)
            .count();
        let n_artificial = rows
            .iter()
            .filter(|r| r.sense != Sense::Le)
            .count();
        let ncols = n + n_logical + n_artificial;
        let width = ncols + 1;
        let mut data = vec![0.0; nrows * width];
        let mut basis = vec![usize::MAX; nrows];
        let mut row_logical = vec![(usize::MAX, 0.0); nrows];
        let mut next_logical = n;
        let artificial_from = n + n_logical;
        let mut next_artificial = artificial_from;
        for (i, row) in rows.iter().enumerate() {
            let r = &mut data[i * width..(i + 1) * width];
            r[..n].copy_from_slice(&row.coeffs);
            r[ncols] = row.rhs;
            match row.sense {
                Sense::Le => {
                    r[next_logical] = 1.0;
                    row_logical[i] = (next_logical, 1.0);
                    basis[i] = next_logical;
                    next_logical += 1;
                }
                Sense::Ge => {
                    r[next_logical] = -1.0;
                    row_logical[i] = (next_logical, -1.0);
                    next_logical += 1;
                    r[next_artificial] = 1.0;
                    basis[i] = next_artificial;
                    next_artificial += 1;
                }
                Sense::Eq => {
                    r[next_artificial] = 1.0;
                    row_logical[i] = (next_artificial, 1.0);
                    basis[i] = next_artificial;
                    next_artificial += 1;
                }
            }
        }
        Ok(Tableau {
            nrows,
            ncols,
            n_structural: n,
            width,
            data,
            basis,
            reduced: vec![0.0; ncols],
            obj_value: 0.0,
            row_logical,
            artificial_from,
            user_rows,
            flipped,
        })
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    /// Recomputes reduced costs `z_j - c_j` and the objective value for a
    /// given cost vector (indexed over all columns).
    fn price(&mut self, cost: &[f64]) {
        for j in 0..self.ncols {
            self.reduced[j] = -cost[j];
        }
        self.obj_value = 0.0;
        for i in 0..self.nrows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.data[i * self.width..(i + 1) * self.width];
                for j in 0..self.ncols {
                    self.reduced[j] += cb * row[j];
                }
                self.obj_value += cb * row[self.ncols];
            }
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let width = self.width;
        let piv = self.data[r * width + e];
        let inv = 1.0 / piv;
        for j in 0..width {
            self.data[r * width + j] *= inv;
        }
        self.data[r * width + e] = 1.0; // exact
        for i in 0..self.nrows {
            if i == r {
                continue;
            }
            let factor = self.data[i * width + e];
            if factor != 0.0 {
                let (head, tail) = self.data.split_at_mut(r.max(i) * width);
                let (src, dst) = if r < i {
                    (
                        &head[r * width..r * width + width],
                        &mut tail[..width],
                    )
                } else {
                    (
                        &tail[..width],
                        &mut head[i * width..i * width + width],
                    )
                };
                for j in 0..width {
                    dst[j] -= factor * src[j];
                }
                self.data[i * width + e] = 0.0;
            }
        }
        let factor = self.reduced[e];
        if factor != 0.0 {
            let row = &self.data[r * width..(r + 1) * width];
            for j in 0..self.ncols {
                self.reduced[j] -= factor * row[j];
            }
            self.obj_value -= factor * row[self.ncols];
            self.reduced[e] = 0.0;
        }
        self.basis[r] = e;
    }

    /// Runs simplex iterations on the current costs. `allow(j)` gates which
    /// columns may enter. Returns false if unbounded.
    fn iterate<F: Fn(usize) -> bool>(&mut self, allow: F) -> Result<bool> {
        let bland_after = 10 * (self.nrows + self.ncols);
        let hard_cap = 400 * (self.nrows + self.ncols) + 10_000;
        for iter in 0..hard_cap {
            let bland = iter >= bland_after;
            let mut entering = None;
            if bland {
                for j in 0..self.ncols {
                    if allow(j) && self.reduced[j] < -COST_TOL {
                        entering = Some(j);
                        break;
                    }
                }
            } else {
                // reduced cost scaled by column norm
                let mut best = -COST_TOL;
                for j in 0..self.ncols {
                    if allow(j) && self.reduced[j] < -COST_TOL {
                        let mut norm2 = 1.0;
                        for i in 0..self.nrows {
                            let a = self.data[i * self.width + j];
                            norm2 += a * a;
                        }
                        let score = self.reduced[j] / norm2.sqrt();
                        if score < best {
                            best = score;
                            entering = Some(j);
                        }
                    }
                }
            }
            let e = match entering {
                Some(e) => e,
                None => return Ok(true), // optimal
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.nrows {
                let a = self.data[i * self.width + e];
                if a > PIVOT_TOL {
                    let ratio = self.data[i * self.width + self.ncols] / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio < lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, e),
                None => return Ok(false), // unbounded direction
            }
        }
        Err(Error::Lp("simplex iteration limit exceeded".into()))
    }

    fn solve(mut self, p: &LpProblem) -> Result<LpSolution> {
        let ncols = self.ncols;
        let has_artificial = ncols > self.artificial_from;
        if has_artificial {
            // phase 1: minimize the sum of artificials
            let mut cost = vec![0.0; ncols];
            for c in cost.iter_mut().skip(self.artificial_from) {
                *c = -1.0;
            }
            self.price(&cost);
            let ok = self.iterate(|_| true)?;
            debug_assert!(ok, "phase 1 cannot be unbounded");
            if self.obj_value < -FEAS_TOL {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    value: f64::NEG_INFINITY,
                    primal: vec![0.0; p.num_vars],
                    dual: vec![0.0; p.rows.len()],
                    primal_residual: f64::NAN,
                    dual_residual: f64::NAN,
                    duality_gap: f64::NAN,
                });
            }
            // drive remaining artificials out of the basis where possible
            for i in 0..self.nrows {
                if self.basis[i] >= self.artificial_from {
                    let pivot_col = (0..self.artificial_from)
                        .find(|&j| self.data[i * self.width + j].abs() > 1e-7);
                    if let Some(j) = pivot_col {
                        self.pivot(i, j);
                    }
                }
            }
        }
        // phase 2
        let mut cost = vec![0.0; ncols];
        cost[..self.n_structural].copy_from_slice(&p.objective);
        self.price(&cost);
        // artificials may stay basic at zero (redundant rows) but never
        // re-enter
        let artificial_from = self.artificial_from;
        let ok = self.iterate(|j| j < artificial_from)?;
        if !ok {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                value: f64::INFINITY,
                primal: vec![0.0; p.num_vars],
                dual: vec![0.0; p.rows.len()],
                primal_residual: f64::NAN,
                dual_residual: f64::NAN,
                duality_gap: f64::NAN,
            });
        }
        self.extract(p)
    }

    fn extract(&self, p: &LpProblem) -> Result<LpSolution> {
        let mut primal = vec![0.0; p.num_vars];
        for i in 0..self.nrows {
            let b = self.basis[i];
            if b < self.n_structural {
                primal[b] = self.data[i * self.width + self.ncols];
            }
        }
        // duals from the reduced costs of each row's logical column
        let mut dual_full = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let (col, sign) = self.row_logical[i];
            let mut y = self.reduced[col] * sign;
            if self.flipped[i] {
                y = -y;
            }
            dual_full[i] = y;
        }
        // certificates against the original data
        let mut primal_residual = 0.0f64;
        for (i, row) in p.rows.iter().enumerate() {
            let lhs: f64 = row
                .coeffs
                .iter()
                .zip(&primal)
                .map(|(a, x)| a * x)
                .sum();
            let viol = match row.sense {
                Sense::Le => (lhs - row.rhs).max(0.0),
                Sense::Ge => (row.rhs - lhs).max(0.0),
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            primal_residual = primal_residual.max(viol);
            let _ = i;
        }
        for (j, ub) in p.upper.iter().enumerate() {
            if let Some(ub) = ub {
                primal_residual = primal_residual.max(primal[j] - ub);
            }
            primal_residual = primal_residual.max(-primal[j]);
        }
        // dual feasibility: for every structural column, y.A_j >= c_j
        let mut dual_residual = 0.0f64;
        for j in 0..p.num_vars {
            let mut ya = 0.0;
            for (i, row) in p.rows.iter().enumerate() {
                ya += dual_full[i] * row.coeffs[j];
            }
            let mut k = p.rows.len();
            for (jj, ub) in p.upper.iter().enumerate() {
                if ub.is_some() {
                    if jj == j {
                        ya += dual_full[k];
                    }
                    k += 1;
                }
            }
            dual_residual = dual_residual.max(p.objective[j] - ya);
        }
        for (i, row) in p.rows.iter().enumerate() {
            match row.sense {
                Sense::Le => dual_residual = dual_residual.max(-dual_full[i]),
                Sense::Ge => dual_residual = dual_residual.max(dual_full[i]),
                Sense::Eq => {}
            }
        }
        let value: f64 = p
            .objective
            .iter()
            .zip(&primal)
            .map(|(c, x)| c * x)
            .sum();
        let mut dual_obj = 0.0;
        for (i, row) in p.rows.iter().enumerate() {
            dual_obj += dual_full[i] * row.rhs;
        }
        let mut k = p.rows.len();
        for ub in p.upper.iter().flatten() {
            dual_obj += dual_full[k] * ub;
            k += 1;
        }
        Ok(LpSolution {
            status: LpStatus::Optimal,
            value,
            primal,
            dual: dual_full[..p.rows.len()].to_vec(),
            primal_residual,
            dual_residual,
            duality_gap: (value - dual_obj).abs(),
        })
    }
}
