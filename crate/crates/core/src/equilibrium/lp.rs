//! Dense two-phase primal simplex.
//!
//! The solver is deliberately plain: a full tableau, Bland's anti-cycling
//! pivot rule, and lowest-index tie breaking everywhere, so that identical
//! inputs take identical pivot sequences on every platform. Problem sizes
//! here are tiny (a coarse correlated equilibrium over 8 actions is 64
//! variables and 17 rows), so the O(m n) work per pivot is irrelevant.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("constraint {index} has {got} coefficients, expected {expected}")]
    BadConstraint { index: usize, got: usize, expected: usize },
    #[error("variable {index} has empty bound interval [{lo}, {hi}]")]
    BadBounds { index: usize, lo: f64, hi: f64 },
    #[error("non-finite coefficient encountered")]
    NonFinite,
    #[error("pivot limit exceeded ({0} pivots); this indicates a solver bug")]
    PivotLimit(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// A linear program `maximize c.x` over explicit constraints and per-variable
/// bounds. Bounds default to `[0, +inf)` via [`LinearProgram::new`];
/// `f64::NEG_INFINITY` / `f64::INFINITY` mark free directions.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    /// A bounded optimum of a nonzero objective was found.
    Optimal,
    /// The objective was identically zero and a feasible point was found.
    Feasible,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values in the original coordinates; empty unless the status
    /// is `Optimal` or `Feasible`.
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: u64,
}

impl LinearProgram {
    /// Program with all variables bounded to `[0, +inf)`.
    pub fn new(n_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n_vars],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, coeffs: Vec<f64>, cmp: Cmp, rhs: f64) {
        self.constraints.push(Constraint { coeffs, cmp, rhs });
    }
}

/// How each original variable maps into the nonnegative solver variables.
enum VarMap {
    /// x = offset + sign * u, with u >= 0.
    Affine { u: usize, offset: f64, sign: f64 },
    /// x = u_plus - u_minus.
    Split { plus: usize, minus: usize },
}

pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.n_vars();
    if lp.bounds.len() != n {
        return Err(LpError::BadConstraint { index: usize::MAX, got: lp.bounds.len(), expected: n });
    }
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(LpError::BadConstraint { index: i, got: c.coeffs.len(), expected: n });
        }
        if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite);
        }
    }
    if lp.objective.iter().any(|v| !v.is_finite()) {
        return Err(LpError::NonFinite);
    }

    // Shift every variable to the nonnegative orthant.
    let mut var_maps = Vec::with_capacity(n);
    let mut n_u = 0usize;
    let mut extra_upper: Vec<(usize, f64)> = Vec::new(); // u index, upper bound
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if lo > hi {
            return Err(LpError::BadBounds { index: j, lo, hi });
        }
        if lo.is_finite() {
            let u = n_u;
            n_u += 1;
            if hi.is_finite() {
                extra_upper.push((u, hi - lo));
            }
            var_maps.push(VarMap::Affine { u, offset: lo, sign: 1.0 });
        } else if hi.is_finite() {
            let u = n_u;
            n_u += 1;
            var_maps.push(VarMap::Affine { u, offset: hi, sign: -1.0 });
        } else {
            let plus = n_u;
            let minus = n_u + 1;
            n_u += 2;
            var_maps.push(VarMap::Split { plus, minus });
        }
    }

    // Constraint rows in u coordinates.
    let mut rows: Vec<(Vec<f64>, Cmp, f64)> = Vec::new();
    for c in &lp.constraints {
        let mut coeffs = vec![0.0; n_u];
        let mut rhs = c.rhs;
        for (j, &a) in c.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match var_maps[j] {
                VarMap::Affine { u, offset, sign } => {
                    coeffs[u] += a * sign;
                    rhs -= a * offset;
                }
                VarMap::Split { plus, minus } => {
                    coeffs[plus] += a;
                    coeffs[minus] -= a;
                }
            }
        }
        rows.push((coeffs, c.cmp, rhs));
    }
    for &(u, ub) in &extra_upper {
        let mut coeffs = vec![0.0; n_u];
        coeffs[u] = 1.0;
        rows.push((coeffs, Cmp::Le, ub));
    }

    // Objective in u coordinates (we minimize the negated objective; the
    // affine offsets drop out because we report c.x in original coordinates).
    let mut c_u = vec![0.0; n_u];
    for (j, &cj) in lp.objective.iter().enumerate() {
        match var_maps[j] {
            VarMap::Affine { u, sign, .. } => c_u[u] += cj * sign,
            VarMap::Split { plus, minus } => {
                c_u[plus] += cj;
                c_u[minus] -= cj;
            }
        }
    }

    // Standard form: append one slack per inequality, then flip rows to make
    // the right-hand side nonnegative.
    let m = rows.len();
    let n_slack = rows.iter().filter(|(_, cmp, _)| *cmp != Cmp::Eq).count();
    let width = n_u + n_slack;
    let mut a = vec![vec![0.0; width]; m];
    let mut b = vec![0.0; m];
    let mut slack_col_of_row = vec![usize::MAX; m];
    let mut next_slack = n_u;
    for (i, (coeffs, cmp, rhs)) in rows.iter().enumerate() {
        a[i][..n_u].copy_from_slice(coeffs);
        b[i] = *rhs;
        match cmp {
            Cmp::Le => {
                a[i][next_slack] = 1.0;
                slack_col_of_row[i] = next_slack;
                next_slack += 1;
            }
            Cmp::Ge => {
                a[i][next_slack] = -1.0;
                slack_col_of_row[i] = next_slack;
                next_slack += 1;
            }
            Cmp::Eq => {}
        }
    }
    let b_scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..m {
        if b[i] < 0.0 {
            b[i] = -b[i];
            for v in a[i].iter_mut() {
                *v = -*v;
            }
        }
    }

    // Initial basis: slacks that survived the sign flip with coefficient +1;
    // artificial columns everywhere else.
    let mut basis = vec![usize::MAX; m];
    let mut artificial_cols = Vec::new();
    for i in 0..m {
        let s = slack_col_of_row[i];
        if s != usize::MAX && a[i][s] == 1.0 {
            basis[i] = s;
        }
    }
    let mut tab_width = width;
    for i in 0..m {
        if basis[i] == usize::MAX {
            for row in a.iter_mut() {
                row.push(0.0);
            }
            a[i][tab_width] = 1.0;
            basis[i] = tab_width;
            artificial_cols.push(tab_width);
            tab_width += 1;
        }
    }

    let mut tab = Tableau {
        a,
        b,
        basis,
        n_cols: tab_width,
        pivots: 0,
        limit: 20_000 + 200 * (m as u64 + tab_width as u64),
    };

    // Phase 1: minimize the sum of artificials.
    if !artificial_cols.is_empty() {
        let mut cost = vec![0.0; tab_width];
        for &c in &artificial_cols {
            cost[c] = 1.0;
        }
        let reached = tab.minimize(&cost, width)?;
        let infeas: f64 = tab
            .basis
            .iter()
            .zip(&tab.b)
            .filter(|(&bi, _)| bi >= width)
            .map(|(_, &v)| v)
            .sum();
        if !reached || infeas > 1e-8 * b_scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::NAN,
                pivots: tab.pivots,
            });
        }
        tab.evict_artificials(width);
        tab.truncate_columns(width);
    }

    // Phase 2: minimize the negated original objective.
    let mut cost = vec![0.0; width];
    cost[..n_u].copy_from_slice(&c_u);
    for v in cost.iter_mut() {
        *v = -*v;
    }
    let bounded = tab.minimize(&cost, width)?;
    if !bounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective: f64::INFINITY,
            pivots: tab.pivots,
        });
    }

    // Recover the original coordinates.
    let mut u = vec![0.0; width];
    for (i, &bi) in tab.basis.iter().enumerate() {
        if bi < width {
            u[bi] = tab.b[i];
        }
    }
    let x: Vec<f64> = var_maps
        .iter()
        .map(|vm| match *vm {
            VarMap::Affine { u: ui, offset, sign } => offset + sign * u[ui],
            VarMap::Split { plus, minus } => u[plus] - u[minus],
        })
        .collect();
    let objective = x
        .iter()
        .zip(&lp.objective)
        .map(|(xi, ci)| xi * ci)
        .sum::<f64>();
    let status = if lp.objective.iter().all(|&c| c == 0.0) {
        LpStatus::Feasible
    } else {
        LpStatus::Optimal
    };
    Ok(LpSolution { status, x, objective, pivots: tab.pivots })
}

struct Tableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    basis: Vec<usize>,
    n_cols: usize,
    pivots: u64,
    limit: u64,
}

impl Tableau {
    /// Runs Bland-rule simplex on the given cost vector, considering only
    /// columns below `enter_limit` for entry (artificials are admitted only
    /// when their own phase-1 cost points at them). Returns false when the
    /// objective is unbounded below.
    fn minimize(&mut self, cost: &[f64], enter_limit: usize) -> Result<bool, LpError> {
        loop {
            // Reduced costs: r_j = c_j - c_B . B^{-1} A_j, computed fresh each
            // iteration; at these sizes recomputation is cheaper than keeping
            // an objective row numerically honest.
            let mut entering = usize::MAX;
            for j in 0..self.n_cols {
                if j >= enter_limit && cost[j] == 0.0 {
                    continue;
                }
                if self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j];
                for (i, &bi) in self.basis.iter().enumerate() {
                    let cb = cost.get(bi).copied().unwrap_or(0.0);
                    if cb != 0.0 {
                        r -= cb * self.a[i][j];
                    }
                }
                if r < -COST_TOL {
                    entering = j;
                    break; // Bland: smallest eligible index.
                }
            }
            if entering == usize::MAX {
                return Ok(true);
            }

            let mut leaving_row = usize::MAX;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.b.len() {
                let aij = self.a[i][entering];
                if aij > PIVOT_TOL {
                    let ratio = self.b[i].max(0.0) / aij;
                    let better = ratio < best_ratio - 1e-12
                        || (ratio <= best_ratio + 1e-12
                            && (leaving_row == usize::MAX
                                || self.basis[i] < self.basis[leaving_row]));
                    if better {
                        best_ratio = ratio;
                        leaving_row = i;
                    }
                }
            }
            if leaving_row == usize::MAX {
                return Ok(false);
            }
            self.pivot(leaving_row, entering)?;
        }
    }

    fn pivot(&mut self, row: usize, col: usize) -> Result<(), LpError> {
        self.pivots += 1;
        if self.pivots > self.limit {
            return Err(LpError::PivotLimit(self.pivots));
        }
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        self.b[row] /= p;
        for i in 0..self.b.len() {
            if i == row {
                continue;
            }
            let f = self.a[i][col];
            if f == 0.0 {
                continue;
            }
            for j in 0..self.n_cols {
                self.a[i][j] -= f * self.a[row][j];
            }
            self.b[i] -= f * self.b[row];
            if self.b[i] < 0.0 && self.b[i] > -1e-9 {
                self.b[i] = 0.0;
            }
        }
        self.basis[row] = col;
        Ok(())
    }

    /// Pivots basic artificial variables (columns >= `width`) out of the
    /// basis after phase 1; rows that admit no pivot are redundant and get
    /// dropped.
    fn evict_artificials(&mut self, width: usize) {
        let mut i = 0;
        while i < self.b.len() {
            if self.basis[i] >= width {
                let col = (0..width).find(|&j| self.a[i][j].abs() > PIVOT_TOL);
                match col {
                    Some(j) => {
                        self.pivot(i, j).expect("evicting artificials cannot cycle");
                        i += 1;
                    }
                    None => {
                        self.a.remove(i);
                        self.b.remove(i);
                        self.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    fn truncate_columns(&mut self, width: usize) {
        for row in self.a.iter_mut() {
            row.truncate(width);
        }
        self.n_cols = width;
    }
}
