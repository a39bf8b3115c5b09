//! Finite-dimensional least-squares programs over FIR coefficients.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, SupportedConeT,
};
use nalgebra::DVector;

use super::pattern::SparsityPattern;
use crate::error::{dim, Error, Result};
use crate::linalg::{lstsq_vec, null_space, Mat, RANK_TOL};
use crate::lti::Fir;

/// Equality residual above which a program is declared infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Handle to a decision variable of a [`ProgramBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub usize);

/// FIR-valued decision variable: coefficients `first..=horizon`, with the
/// entries outside `mask` fixed at zero (omitted from the flat vector).
#[derive(Debug, Clone, PartialEq)]
pub struct VarBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub first: usize,
    pub horizon: usize,
    offset: usize,
    /// Column-major entry -> position within one coefficient.
    slots: Vec<Option<usize>>,
    per_coeff: usize,
}

impl VarBlock {
    pub fn len(&self) -> usize {
        self.per_coeff * (self.horizon + 1 - self.first)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of entry `(i, j)` of coefficient `k`, if it is free.
    pub fn index(&self, k: usize, i: usize, j: usize) -> Option<usize> {
        if k < self.first || k > self.horizon {
            return None;
        }
        self.slots[j * self.rows + i].map(|s| self.offset + (k - self.first) * self.per_coeff + s)
    }
}

/// Map between FIR coefficients of the variables and the flat vector `x`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariableIndex {
    pub blocks: Vec<VarBlock>,
}

impl VariableIndex {
    pub fn len(&self) -> usize {
        self.blocks.iter().map(VarBlock::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, v: VarId) -> &VarBlock {
        &self.blocks[v.0]
    }

    pub fn find(&self, name: &str) -> Option<VarId> {
        self.blocks.iter().position(|b| b.name == name).map(VarId)
    }

    /// FIR value of `v` read from `x`, zero at fixed positions.
    pub fn value(&self, v: VarId, x: &DVector<f64>) -> Fir {
        let b = self.block(v);
        let coeffs = (0..=b.horizon)
            .map(|k| Mat::from_fn(b.rows, b.cols, |i, j| b.index(k, i, j).map_or(0.0, |idx| x[idx])))
            .collect();
        Fir::new(coeffs).expect("coefficients share the block shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    left: Fir,
    var: VarId,
    right: Fir,
    /// Multiplication by `z^shift`.
    shift: usize,
}

/// Affine FIR expression `constant + sum_t z^shift_t left_t X_t right_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearExpr {
    rows: usize,
    cols: usize,
    terms: Vec<Term>,
    constant: Fir,
}

impl LinearExpr {
    pub fn constant(c: Fir) -> Self {
        Self { rows: c.rows(), cols: c.cols(), terms: Vec::new(), constant: c }
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        Self::constant(Fir::zeros(rows, cols, 0))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Adds `z^shift left X right`.
    pub fn term(mut self, left: Fir, var: VarId, right: Fir, shift: usize) -> Result<Self> {
        if left.rows() != self.rows || right.cols() != self.cols {
            return Err(dim(format!(
                "expression term is {}x{}, expression is {}x{}",
                left.rows(),
                right.cols(),
                self.rows,
                self.cols
            )));
        }
        self.terms.push(Term { left, var, right, shift });
        Ok(self)
    }

    pub fn plus_constant(mut self, c: &Fir) -> Result<Self> {
        self.constant = self.constant.add(c)?;
        Ok(self)
    }

    pub fn plus(mut self, other: LinearExpr) -> Result<Self> {
        if other.shape() != self.shape() {
            return Err(dim("adding expressions of different shapes"));
        }
        self.constant = self.constant.add(&other.constant)?;
        self.terms.extend(other.terms);
        Ok(self)
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.constant = self.constant.scale(s);
        for t in &mut self.terms {
            t.left = t.left.scale(s);
        }
        self
    }

    /// Left-multiplies every term and the constant by `g`.
    pub fn left_mul(mut self, g: &Fir) -> Result<Self> {
        self.constant = g.mul(&self.constant)?;
        for t in &mut self.terms {
            t.left = g.mul(&t.left)?;
        }
        self.rows = g.rows();
        Ok(self)
    }

    /// Right-multiplies every term and the constant by `g`.
    pub fn right_mul(mut self, g: &Fir) -> Result<Self> {
        self.constant = self.constant.mul(g)?;
        for t in &mut self.terms {
            t.right = t.right.mul(g)?;
        }
        self.cols = g.cols();
        Ok(self)
    }

    /// Value at a given flat vector, as an FIR whose coefficient `k`
    /// multiplies `z^(lo - k)`; returns `(lo, fir)` with `lo <= 0`.
    pub fn evaluate(&self, index: &VariableIndex, x: &DVector<f64>) -> Result<(usize, Fir)> {
        let lo = self.terms.iter().map(|t| t.shift).max().unwrap_or(0);
        let mut acc = self.constant.delay(lo);
        for t in &self.terms {
            let xv = index.value(t.var, x);
            let prod = t.left.mul(&xv)?.mul(&t.right)?.delay(lo - t.shift);
            acc = acc.add(&prod)?;
        }
        Ok((lo, acc))
    }

    /// Dense map `x -> vec(coefficients)` and the constant part. Rows are
    /// ordered by coefficient (starting at `z^lead`), then column-major entry.
    fn expand(&self, index: &VariableIndex) -> Result<Expanded> {
        let lead = self.terms.iter().map(|t| t.shift).max().unwrap_or(0);
        let mut last = self.constant.horizon() + lead;
        for t in &self.terms {
            let b = index.block(t.var);
            if t.left.cols() != b.rows || t.right.rows() != b.cols {
                return Err(dim(format!("term around variable {} has inconsistent shapes", b.name)));
            }
            last = last.max(t.left.horizon() + b.horizon + t.right.horizon() + lead - t.shift);
        }
        let (rows, cols) = (self.rows, self.cols);
        let per = rows * cols;
        let ncoef = last + 1;
        let mut e = Mat::zeros(ncoef * per, index.len());
        let mut c = DVector::zeros(ncoef * per);
        for (k, ck) in self.constant.coeffs().iter().enumerate() {
            for j in 0..cols {
                for i in 0..rows {
                    c[(k + lead) * per + j * rows + i] += ck[(i, j)];
                }
            }
        }
        for t in &self.terms {
            let b = index.block(t.var);
            let off = lead - t.shift;
            for (ia, la) in t.left.coeffs().iter().enumerate() {
                if la.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for (ic, rc) in t.right.coeffs().iter().enumerate() {
                    if rc.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    // vec(L X R) = (R^T kron L) vec(X)
                    let kron = rc.transpose().kronecker(la);
                    for kb in b.first..=b.horizon {
                        let row0 = (ia + kb + ic + off) * per;
                        for q in 0..b.cols {
                            for p in 0..b.rows {
                                let Some(col) = b.index(kb, p, q) else { continue };
                                let kc = q * b.rows + p;
                                for r in 0..per {
                                    let v = kron[(r, kc)];
                                    if v != 0.0 {
                                        e[(row0 + r, col)] += v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Expanded { e, c, lead, rows, cols })
    }
}

struct Expanded {
    e: Mat,
    c: DVector<f64>,
    lead: usize,
    rows: usize,
    cols: usize,
}

impl Expanded {
    /// Row indices of entries outside `mask` (all coefficients).
    fn rows_outside(&self, mask: &SparsityPattern) -> Vec<usize> {
        let per = self.rows * self.cols;
        (0..self.e.nrows())
            .filter(|&r| {
                let entry = r % per;
                !mask.get(entry % self.rows, entry / self.rows)
            })
            .collect()
    }

    /// Row indices of coefficients `z^-k` with `k <= horizon` (including
    /// positive powers of `z`).
    fn rows_through(&self, horizon: usize) -> Vec<usize> {
        let per = self.rows * self.cols;
        (0..self.e.nrows()).filter(|&r| r / per <= self.lead + horizon).collect()
    }

    /// Row indices of coefficients `z^-k` with `k < 0` or `k > horizon`.
    fn rows_beyond(&self, horizon: usize) -> Vec<usize> {
        let per = self.rows * self.cols;
        (0..self.e.nrows())
            .filter(|&r| {
                let k = r / per;
                k < self.lead || k - self.lead > horizon
            })
            .collect()
    }
}

/// `min ||H x - h||^2` subject to `Aeq x = beq` and `lower <= G x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresProgram {
    pub h: Mat,
    pub hvec: DVector<f64>,
    pub aeq: Mat,
    pub beq: DVector<f64>,
    pub g: Mat,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub index: VariableIndex,
}

impl LeastSquaresProgram {
    pub fn nvars(&self) -> usize {
        self.index.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        (&self.h * x - &self.hvec).norm_squared()
    }

    pub fn equality_residual(&self, x: &DVector<f64>) -> f64 {
        if self.aeq.nrows() == 0 {
            return 0.0;
        }
        (&self.aeq * x - &self.beq).amax()
    }

    /// Largest violation of the inequality rows (zero when satisfied).
    pub fn inequality_violation(&self, x: &DVector<f64>) -> f64 {
        if self.g.nrows() == 0 {
            return 0.0;
        }
        let gx = &self.g * x;
        (0..gx.len()).map(|i| (self.lower[i] - gx[i]).max(gx[i] - self.upper[i]).max(0.0)).fold(0.0, f64::max)
    }
}

fn append_rows(m: &mut Mat, v: &mut DVector<f64>, rows: &Mat, vals: &DVector<f64>) {
    let (r0, c) = (m.nrows(), m.ncols());
    let add = rows.nrows();
    let mut out = Mat::zeros(r0 + add, c);
    out.view_mut((0, 0), (r0, c)).copy_from(m);
    out.view_mut((r0, 0), (add, c)).copy_from(rows);
    *m = out;
    let mut w = DVector::zeros(r0 + add);
    w.rows_mut(0, r0).copy_from(v);
    w.rows_mut(r0, add).copy_from(vals);
    *v = w;
}

fn select(e: &Mat, c: &DVector<f64>, rows: &[usize]) -> (Mat, DVector<f64>) {
    let m = Mat::from_fn(rows.len(), e.ncols(), |i, j| e[(rows[i], j)]);
    let v = DVector::from_fn(rows.len(), |i, _| c[rows[i]]);
    (m, v)
}

#[derive(Debug, Clone)]
enum Rows {
    All,
    Outside(SparsityPattern),
    Through(usize),
}

/// Incremental assembly of a [`LeastSquaresProgram`].
#[derive(Debug, Clone, Default)]
pub struct ProgramBuilder {
    index: VariableIndex,
    objective: Vec<LinearExpr>,
    equalities: Vec<(LinearExpr, Rows)>,
    tails: Vec<(LinearExpr, usize)>,
    bounds: Vec<(LinearExpr, f64, f64)>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares an FIR variable with coefficients `first..=horizon` and
    /// optional entry mask.
    pub fn variable(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        first: usize,
        horizon: usize,
        mask: Option<&SparsityPattern>,
    ) -> Result<VarId> {
        if let Some(m) = mask {
            if m.shape() != (rows, cols) {
                return Err(dim(format!("mask for {name} is {:?}, variable is {rows}x{cols}", m.shape())));
            }
        }
        let mut slots = vec![None; rows * cols];
        let mut per = 0;
        for j in 0..cols {
            for i in 0..rows {
                if mask.map_or(true, |m| m.get(i, j)) {
                    slots[j * rows + i] = Some(per);
                    per += 1;
                }
            }
        }
        let first = first.min(horizon + 1);
        let offset = self.index.len();
        self.index.blocks.push(VarBlock {
            name: name.to_string(),
            rows,
            cols,
            first,
            horizon,
            offset,
            slots,
            per_coeff: per,
        });
        Ok(VarId(self.index.blocks.len() - 1))
    }

    pub fn index(&self) -> &VariableIndex {
        &self.index
    }

    /// `I X I` for a declared variable.
    pub fn var(&self, v: VarId) -> LinearExpr {
        self.var_between(v, None, None, 0)
    }

    /// `z^shift left X right`, with identities for missing factors.
    pub fn var_between(&self, v: VarId, left: Option<&Fir>, right: Option<&Fir>, shift: usize) -> LinearExpr {
        let b = self.index.block(v);
        let left = left.cloned().unwrap_or_else(|| Fir::identity(b.rows));
        let right = right.cloned().unwrap_or_else(|| Fir::identity(b.cols));
        LinearExpr::zero(left.rows(), right.cols()).term(left, v, right, shift).expect("shapes follow from the factors")
    }

    /// Adds `||expr||^2` (sum of squared coefficient entries) to the objective.
    pub fn minimize(&mut self, expr: LinearExpr) {
        self.objective.push(expr);
    }

    /// Requires every coefficient of `expr` to vanish.
    pub fn require_zero(&mut self, expr: LinearExpr) {
        self.equalities.push((expr, Rows::All));
    }

    /// Requires the coefficients of `expr` up to `z^-horizon` to vanish; used
    /// where the operands are truncations of infinite series.
    pub fn require_zero_through(&mut self, expr: LinearExpr, horizon: usize) {
        self.equalities.push((expr, Rows::Through(horizon)));
    }

    /// Requires the entries of `expr` outside `mask` to vanish.
    pub fn require_pattern(&mut self, expr: LinearExpr, mask: SparsityPattern) -> Result<()> {
        if mask.shape() != expr.shape() {
            return Err(dim("pattern does not match the constrained expression"));
        }
        self.equalities.push((expr, Rows::Outside(mask)));
        Ok(())
    }

    /// Requires `expr` to be causal with no coefficients beyond `z^-horizon`.
    pub fn require_fir(&mut self, expr: LinearExpr, horizon: usize) {
        self.tails.push((expr, horizon));
    }

    /// `lower <= entry <= upper` for every coefficient entry of `expr`.
    pub fn bound(&mut self, expr: LinearExpr, lower: f64, upper: f64) {
        self.bounds.push((expr, lower, upper));
    }

    pub fn build(self) -> Result<LeastSquaresProgram> {
        let n = self.index.len();
        let mut h = Mat::zeros(0, n);
        let mut hvec = DVector::zeros(0);
        for expr in &self.objective {
            let ex = expr.expand(&self.index)?;
            append_rows(&mut h, &mut hvec, &ex.e, &(-&ex.c));
        }
        let mut aeq = Mat::zeros(0, n);
        let mut beq = DVector::zeros(0);
        for (expr, which) in &self.equalities {
            let ex = expr.expand(&self.index)?;
            let rows = match which {
                Rows::All => {
                    append_rows(&mut aeq, &mut beq, &ex.e, &(-&ex.c));
                    continue;
                }
                Rows::Outside(m) => ex.rows_outside(m),
                Rows::Through(h) => ex.rows_through(*h),
            };
            let (e, c) = select(&ex.e, &ex.c, &rows);
            append_rows(&mut aeq, &mut beq, &e, &(-c));
        }
        for (expr, horizon) in &self.tails {
            let ex = expr.expand(&self.index)?;
            let (e, c) = select(&ex.e, &ex.c, &ex.rows_beyond(*horizon));
            append_rows(&mut aeq, &mut beq, &e, &(-c));
        }
        let mut g = Mat::zeros(0, n);
        let mut lower = DVector::zeros(0);
        let mut upper = DVector::zeros(0);
        for (expr, lo, hi) in &self.bounds {
            let ex = expr.expand(&self.index)?;
            let lo_v = DVector::from_fn(ex.c.len(), |i, _| lo - ex.c[i]);
            let hi_v = DVector::from_fn(ex.c.len(), |i, _| hi - ex.c[i]);
            append_rows(&mut g, &mut lower, &ex.e, &lo_v);
            upper = DVector::from_iterator(upper.len() + hi_v.len(), upper.iter().chain(hi_v.iter()).copied());
        }
        Ok(LeastSquaresProgram { h, hvec, aeq, beq, g, lower, upper, index: self.index })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub x: DVector<f64>,
    /// `||H x - h||^2`.
    pub cost_sq: f64,
    pub equality_residual: f64,
    pub inequality_violation: f64,
    /// Dimension of the feasible affine set (before inequalities).
    pub free_dims: usize,
}

/// Equality-constrained least squares by the null-space method.
///
/// A particular solution of `Aeq x = beq` comes from the pseudo-inverse
/// (rank threshold `RANK_TOL`, which also discards redundant rows); an
/// orthonormal null-space basis `Z` reduces the objective to an
/// unconstrained problem in `y`, solved in the minimum-norm sense, so the
/// returned `x` is the minimum-norm optimizer. Inequality rows, if any, are
/// handled by an interior-point QP on the reduced variable.
pub fn solve_equality_ls(prog: &LeastSquaresProgram) -> Result<LsSolution> {
    let n = prog.nvars();
    let (xp, z) = if prog.aeq.nrows() == 0 {
        (DVector::zeros(n), Mat::identity(n, n))
    } else {
        let xp = lstsq_vec(&prog.aeq, &prog.beq, RANK_TOL);
        let residual = (&prog.aeq * &xp - &prog.beq).amax();
        if residual > FEASIBILITY_TOL * prog.beq.amax().max(1.0) {
            return Err(Error::Infeasible { residual });
        }
        (xp, null_space(&prog.aeq, RANK_TOL))
    };
    let hz = &prog.h * &z;
    let rhs = &prog.hvec - &prog.h * &xp;
    let y = if prog.g.nrows() == 0 || z.ncols() == 0 {
        lstsq_vec(&hz, &rhs, RANK_TOL)
    } else {
        reduced_qp(&hz, &rhs, &(&prog.g * &z), &(&prog.lower - &prog.g * &xp), &(&prog.upper - &prog.g * &xp))?
    };
    let x = &xp + &z * y;
    let sol = LsSolution {
        cost_sq: prog.objective(&x),
        equality_residual: prog.equality_residual(&x),
        inequality_violation: prog.inequality_violation(&x),
        free_dims: z.ncols(),
        x,
    };
    if sol.inequality_violation > FEASIBILITY_TOL {
        return Err(Error::Infeasible { residual: sol.inequality_violation });
    }
    Ok(sol)
}

fn dense_to_csc(m: &Mat, upper_only: bool) -> CscMatrix<f64> {
    let (rows, cols) = m.shape();
    let mut colptr = Vec::with_capacity(cols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for j in 0..cols {
        let last = if upper_only { (j + 1).min(rows) } else { rows };
        for i in 0..last {
            let v = m[(i, j)];
            if v != 0.0 {
                rowval.push(i);
                nzval.push(v);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(rows, cols, colptr, rowval, nzval)
}

/// `min ||A y - b||^2` subject to `lo <= G y <= hi` (infinite bounds skipped).
///
/// The interior-point solution is polished by re-solving the least-squares
/// problem with the active rows held as equalities, which recovers the
/// optimum to round-off when the active set is identified correctly; the
/// polished point is kept only if it stays feasible and is no worse.
fn reduced_qp(a: &Mat, b: &DVector<f64>, g: &Mat, lo: &DVector<f64>, hi: &DVector<f64>) -> Result<DVector<f64>> {
    let d = a.ncols();
    let p = a.transpose() * a * 2.0;
    let q = -(a.transpose() * b) * 2.0;
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..g.nrows() {
        let gi = g.row(i).transpose();
        if hi[i].is_finite() {
            rows.push(gi.clone());
            rhs.push(hi[i]);
        }
        if lo[i].is_finite() {
            rows.push(-gi);
            rhs.push(-lo[i]);
        }
    }
    let m = Mat::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-9)
        .tol_gap_rel(1e-9)
        .tol_feas(1e-9)
        .max_iter(500)
        .build()
        .map_err(|e| Error::Solver(format!("QP settings: {e:?}")))?;
    let cones: Vec<SupportedConeT<f64>> = vec![NonnegativeConeT(rows.len())];
    let mut solver =
        DefaultSolver::new(&dense_to_csc(&p, true), q.as_slice(), &dense_to_csc(&m, false), &rhs, &cones, settings)
            .map_err(|e| Error::Solver(format!("QP setup: {e:?}")))?;
    solver.solve();
    let y = DVector::from_vec(solver.solution.x.clone());
    let rhs = DVector::from_vec(rhs);
    let violation = (&m * &y - &rhs).max().max(0.0);
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::InsufficientProgress | SolverStatus::MaxIterations
            if violation <= QP_ACCEPT * rhs.amax().max(1.0) => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(Error::Infeasible { residual: f64::INFINITY })
        }
        other => return Err(Error::Solver(format!("QP status {other:?}"))),
    }
    Ok(polish(a, b, &m, &rhs, y))
}

const QP_ACCEPT: f64 = 1e-7;

fn polish(a: &Mat, b: &DVector<f64>, m: &Mat, rhs: &DVector<f64>, y: DVector<f64>) -> DVector<f64> {
    let scale = rhs.amax().max(1.0);
    let slack = rhs - m * &y;
    let active: Vec<usize> = (0..m.nrows()).filter(|&i| slack[i] <= QP_ACCEPT * scale).collect();
    let cost = |v: &DVector<f64>| (a * v - b).norm_squared();
    let candidate = if active.is_empty() {
        lstsq_vec(a, b, RANK_TOL)
    } else {
        let ma = Mat::from_fn(active.len(), m.ncols(), |i, j| m[(active[i], j)]);
        let ra = DVector::from_fn(active.len(), |i, _| rhs[active[i]]);
        let yp = lstsq_vec(&ma, &ra, RANK_TOL);
        let z = null_space(&ma, RANK_TOL);
        let w = lstsq_vec(&(a * &z), &(b - a * &yp), RANK_TOL);
        yp + z * w
    };
    let feasible = (m * &candidate - rhs).max() <= 1e-10 * scale;
    if feasible && cost(&candidate) <= cost(&y) * (1.0 + 1e-12) + 1e-14 {
        candidate
    } else {
        y
    }
}
