//! Dense block-diagonal semidefinite programming.
//!
//! An [`SdpInstance`] describes the conic pair
//!
//! ```text
//! (P)  min  <C, X> + d'u      s.t.  <A_k, X> + f_k'u = b_k,   X psd
//! (D)  max  b'y               s.t.  Z = C - sum_k y_k A_k psd,  sum_k y_k f_k = d
//! ```
//!
//! where `X` is block diagonal and `u` collects free scalar variables. With
//! [`Sense::Maximize`] the primal objective is maximized instead, and the dual
//! becomes `min b'y` subject to `Z = sum_k y_k A_k - C` psd.
//!
//! [`solve`] runs an infeasible primal-dual path-following method with the
//! Nesterov-Todd search direction and Mehrotra predictor-corrector steps. Free variables
//! are eliminated from the Schur complement system rather than split into
//! PSD parts.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("entry ({row}, {col}) is outside block {block} of dimension {dim}")]
    EntryOutOfRange {
        block: usize,
        row: usize,
        col: usize,
        dim: usize,
    },
    #[error("block index {0} out of range")]
    NoSuchBlock(usize),
    #[error("free variable index {0} out of range")]
    NoSuchFree(usize),
    #[error("solution does not match instance dimensions: {0}")]
    DimensionMismatch(String),
    #[error("invalid solver settings: {0}")]
    Settings(&'static str),
    #[error("cannot parse instance line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// One stored entry of a symmetric block matrix, upper triangle only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl BlockEntry {
    /// Stores `(row, col)` and its mirror; the pair is normalized to the upper triangle.
    pub fn new(block: usize, row: usize, col: usize, value: f64) -> Self {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        BlockEntry {
            block,
            row,
            col,
            value,
        }
    }
}

/// Symmetric block-sparse matrix: every off-diagonal entry stands for itself and its mirror.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseBlockMatrix {
    pub entries: Vec<BlockEntry>,
}

impl SparseBlockMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, block: usize, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.entries.push(BlockEntry::new(block, row, col, value));
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `<self, X>` for block-diagonal `X`.
    pub fn inner(&self, x: &[DMatrix<f64>]) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let v = x[e.block][(e.row, e.col)];
                if e.row == e.col {
                    e.value * v
                } else {
                    e.value * (v + x[e.block][(e.col, e.row)])
                }
            })
            .sum()
    }

    /// Adds `scale * self` into the dense blocks `out`.
    pub fn axpy_into(&self, scale: f64, out: &mut [DMatrix<f64>]) {
        for e in &self.entries {
            out[e.block][(e.row, e.col)] += scale * e.value;
            if e.row != e.col {
                out[e.block][(e.col, e.row)] += scale * e.value;
            }
        }
    }

    pub fn to_dense(&self, dims: &[usize]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        self.axpy_into(1.0, &mut out);
        out
    }

    fn frobenius_sq(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let s = e.value * e.value;
                if e.row == e.col {
                    s
                } else {
                    2.0 * s
                }
            })
            .sum()
    }
}

/// Equality constraint `<A, X> + f'u = rhs`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearConstraint {
    pub matrix: SparseBlockMatrix,
    /// `(free variable index, coefficient)` pairs.
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpInstance {
    pub block_dims: Vec<usize>,
    pub n_free: usize,
    pub constraints: Vec<LinearConstraint>,
    pub objective_matrix: SparseBlockMatrix,
    pub objective_free: Vec<f64>,
    /// Constant added to both objectives.
    pub objective_offset: f64,
    pub sense: Sense,
}

impl SdpInstance {
    pub fn new(block_dims: Vec<usize>, n_free: usize, sense: Sense) -> Self {
        SdpInstance {
            block_dims,
            n_free,
            constraints: Vec::new(),
            objective_matrix: SparseBlockMatrix::new(),
            objective_free: vec![0.0; n_free],
            objective_offset: 0.0,
            sense,
        }
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn push_constraint(&mut self, c: LinearConstraint) {
        self.constraints.push(c);
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.constraints.iter().map(|c| c.rhs).collect()
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let check = |m: &SparseBlockMatrix| -> Result<(), SdpError> {
            for e in &m.entries {
                let dim = *self
                    .block_dims
                    .get(e.block)
                    .ok_or(SdpError::NoSuchBlock(e.block))?;
                if e.col >= dim {
                    return Err(SdpError::EntryOutOfRange {
                        block: e.block,
                        row: e.row,
                        col: e.col,
                        dim,
                    });
                }
            }
            Ok(())
        };
        check(&self.objective_matrix)?;
        if self.objective_free.len() != self.n_free {
            return Err(SdpError::DimensionMismatch(
                "objective free coefficients".into(),
            ));
        }
        for c in &self.constraints {
            check(&c.matrix)?;
            for &(j, _) in &c.free {
                if j >= self.n_free {
                    return Err(SdpError::NoSuchFree(j));
                }
            }
        }
        Ok(())
    }

    /// Sparse text export for cross-checking with external solvers.
    ///
    /// ```text
    /// sense max|min
    /// blocks <n_1> <n_2> ...
    /// free <p>
    /// offset <c>                          optional objective constant
    /// constraints <m>
    /// <k> <block> <row> <col> <value>     matrix entry, k = 0 is the objective
    /// <k> f <index> <value>               free-variable coefficient
    /// rhs <k> <value>
    /// ```
    ///
    /// Constraint ids `k`, blocks, rows, columns and free indices are 1-based;
    /// only the upper triangle of each symmetric matrix is written.
    pub fn to_sparse_text(&self) -> String {
        let mut s = String::new();
        let sense = match self.sense {
            Sense::Minimize => "min",
            Sense::Maximize => "max",
        };
        let _ = writeln!(s, "sense {sense}");
        let dims: Vec<String> = self.block_dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "blocks {}", dims.join(" "));
        let _ = writeln!(s, "free {}", self.n_free);
        if self.objective_offset != 0.0 {
            let _ = writeln!(s, "offset {:e}", self.objective_offset);
        }
        let _ = writeln!(s, "constraints {}", self.constraints.len());
        let write_mat = |k: usize, m: &SparseBlockMatrix, free: &[(usize, f64)], s: &mut String| {
            for e in &m.entries {
                let _ = writeln!(
                    s,
                    "{k} {} {} {} {:e}",
                    e.block + 1,
                    e.row + 1,
                    e.col + 1,
                    e.value
                );
            }
            for &(j, v) in free {
                if v != 0.0 {
                    let _ = writeln!(s, "{k} f {} {:e}", j + 1, v);
                }
            }
        };
        let obj_free: Vec<(usize, f64)> = self.objective_free.iter().copied().enumerate().collect();
        write_mat(0, &self.objective_matrix, &obj_free, &mut s);
        for (k, c) in self.constraints.iter().enumerate() {
            write_mat(k + 1, &c.matrix, &c.free, &mut s);
        }
        for (k, c) in self.constraints.iter().enumerate() {
            let _ = writeln!(s, "rhs {} {:e}", k + 1, c.rhs);
        }
        s
    }

    pub fn from_sparse_text(text: &str) -> Result<Self, SdpError> {
        let mut sense = None;
        let mut dims: Option<Vec<usize>> = None;
        let mut n_free = None;
        let mut inst: Option<SdpInstance> = None;
        let mut offset = 0.0;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |r: &str| SdpError::Parse {
                line: i + 1,
                reason: r.to_string(),
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let num = |t: &str| t.parse::<usize>().map_err(|_| err("bad integer"));
            let val = |t: &str| t.parse::<f64>().map_err(|_| err("bad number"));
            match toks[0] {
                "sense" => {
                    sense = Some(match toks.get(1) {
                        Some(&"min") => Sense::Minimize,
                        Some(&"max") => Sense::Maximize,
                        _ => return Err(err("sense must be min or max")),
                    })
                }
                "blocks" => dims = Some(toks[1..].iter().map(|t| num(t)).collect::<Result<_, _>>()?),
                "offset" => offset = val(toks.get(1).ok_or_else(|| err("missing value"))?)?,
                "free" => n_free = Some(num(toks.get(1).ok_or_else(|| err("missing count"))?)?),
                "constraints" => {
                    let m = num(toks.get(1).ok_or_else(|| err("missing count"))?)?;
                    let (Some(sense), Some(dims), Some(p)) = (sense, dims.clone(), n_free) else {
                        return Err(err("header incomplete before constraints"));
                    };
                    let mut new = SdpInstance::new(dims, p, sense);
                    new.constraints = vec![LinearConstraint::default(); m];
                    inst = Some(new);
                }
                "rhs" => {
                    let inst = inst.as_mut().ok_or_else(|| err("entries before header"))?;
                    if toks.len() != 3 {
                        return Err(err("rhs line needs 2 fields"));
                    }
                    let k = num(toks[1])?;
                    let c = inst
                        .constraints
                        .get_mut(k.wrapping_sub(1))
                        .ok_or_else(|| err("constraint id out of range"))?;
                    c.rhs = val(toks[2])?;
                }
                _ => {
                    let inst = inst.as_mut().ok_or_else(|| err("entries before header"))?;
                    let k = num(toks[0])?;
                    if k > inst.constraints.len() {
                        return Err(err("constraint id out of range"));
                    }
                    if toks.get(1) == Some(&"f") {
                        if toks.len() != 4 {
                            return Err(err("free entry needs 4 fields"));
                        }
                        let j = num(toks[2])?.checked_sub(1).ok_or_else(|| err("index is 1-based"))?;
                        let v = val(toks[3])?;
                        if k == 0 {
                            if j >= inst.n_free {
                                return Err(err("free index out of range"));
                            }
                            inst.objective_free[j] = v;
                        } else {
                            inst.constraints[k - 1].free.push((j, v));
                        }
                    } else {
                        if toks.len() != 5 {
                            return Err(err("matrix entry needs 5 fields"));
                        }
                        let one = |t: &str| {
                            num(t)?.checked_sub(1).ok_or_else(|| err("indices are 1-based"))
                        };
                        let (b, r, c) = (one(toks[1])?, one(toks[2])?, one(toks[3])?);
                        let v = val(toks[4])?;
                        let target = if k == 0 {
                            &mut inst.objective_matrix
                        } else {
                            &mut inst.constraints[k - 1].matrix
                        };
                        target.push(b, r, c, v);
                    }
                }
            }
        }
        let mut inst = inst.ok_or(SdpError::Parse {
            line: 0,
            reason: "missing header".into(),
        })?;
        inst.objective_offset = offset;
        inst.validate()?;
        Ok(inst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
    pub step_fraction: f64,
    /// Newton refinement of the final point on the unperturbed optimality conditions.
    pub polish: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iters: 100,
            step_fraction: 0.98,
            polish: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SdpError> {
        if !(self.gap_tol > 0.0 && self.feas_tol > 0.0) {
            return Err(SdpError::Settings("tolerances must be positive"));
        }
        if self.max_iters == 0 {
            return Err(SdpError::Settings("max_iters must be positive"));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(SdpError::Settings("step fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    MaxIterations,
    NumericalFailure,
    Infeasible,
}

/// Per-iteration trace, recorded before each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `<X, Z>`.
    pub complementarity: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub primal_step: f64,
    pub dual_step: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x_blocks: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
    /// Dual multipliers in the convention of the instance's sense (see module docs).
    pub y: Vec<f64>,
    pub z_blocks: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|primal - dual| / (1 + |primal| + |dual|)`, offset included in the denominator.
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub status: SdpStatus,
    pub history: Vec<IterationLog>,
}

/// Absolute residual norms of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `||b - A(X) - F u||`.
    pub primal: f64,
    /// `||Z - (dual slack from y)||_F + ||F'y - d||`.
    pub dual: f64,
    /// `<X, Z>`.
    pub complementarity: f64,
    /// `|primal objective - dual objective|`.
    pub objective_gap: f64,
}

/// Internal minimization-form data: the instance with Maximize folded into signs.
struct MinForm<'a> {
    inst: &'a SdpInstance,
    sign: f64,
    cost: Vec<DMatrix<f64>>,
    cost_free: DVector<f64>,
    b: DVector<f64>,
    free_cols: DMatrix<f64>,
    /// Constraint entries expanded to both triangles, bucketed per block.
    per_block: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    /// Cholesky factor of `F' F`.
    free_gram: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl<'a> MinForm<'a> {
    fn new(inst: &'a SdpInstance) -> Self {
        let sign = match inst.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost = inst.objective_matrix.to_dense(&inst.block_dims);
        for c in cost.iter_mut() {
            *c *= sign;
        }
        let cost_free = DVector::from_iterator(
            inst.n_free,
            inst.objective_free.iter().map(|v| sign * v),
        );
        let m = inst.constraints.len();
        let b = DVector::from_iterator(m, inst.constraints.iter().map(|c| c.rhs));
        let mut free_cols = DMatrix::zeros(m, inst.n_free);
        for (k, c) in inst.constraints.iter().enumerate() {
            for &(j, v) in &c.free {
                free_cols[(k, j)] += v;
            }
        }
        let mut per_block: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> =
            vec![Vec::new(); inst.block_dims.len()];
        for (k, c) in inst.constraints.iter().enumerate() {
            let mut local: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); inst.block_dims.len()];
            for e in &c.matrix.entries {
                local[e.block].push((e.row, e.col, e.value));
                if e.row != e.col {
                    local[e.block].push((e.col, e.row, e.value));
                }
            }
            for (blk, l) in local.into_iter().enumerate() {
                if !l.is_empty() {
                    per_block[blk].push((k, l));
                }
            }
        }
        let mut form = MinForm {
            inst,
            sign,
            cost,
            cost_free,
            b,
            free_cols,
            per_block,
            free_gram: None,
        };
        if form.inst.n_free > 0 {
            form.free_gram = (form.free_cols.transpose() * &form.free_cols).cholesky();
        }
        form
    }

    fn a_op(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.inst.constraints.len(),
            self.inst.constraints.iter().map(|c| c.matrix.inner(x)),
        )
    }

    fn a_adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self
            .inst
            .block_dims
            .iter()
            .map(|&n| DMatrix::zeros(n, n))
            .collect();
        for (k, c) in self.inst.constraints.iter().enumerate() {
            if y[k] != 0.0 {
                c.matrix.axpy_into(y[k], &mut out);
            }
        }
        out
    }

    fn primal_residual(&self, x: &[DMatrix<f64>], u: &DVector<f64>) -> DVector<f64> {
        &self.b - self.a_op(x) - &self.free_cols * u
    }

    fn dual_residual(&self, y: &DVector<f64>, z: &[DMatrix<f64>]) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let aty = self.a_adjoint(y);
        let rd = self
            .cost
            .iter()
            .zip(&aty)
            .zip(z)
            .map(|((c, a), z)| c - a - z)
            .collect();
        let ru = &self.cost_free - self.free_cols.transpose() * y;
        (rd, ru)
    }

    fn primal_objective(&self, x: &[DMatrix<f64>], u: &DVector<f64>) -> f64 {
        block_inner(&self.cost, x) + self.cost_free.dot(u)
    }

    /// Rows `vec(G' A_i G)` stacked as columns, so that `M = T' T` with
    /// `M_ij = <A_i, W A_j W>` and `W = G G'`.
    fn schur_root(&self, g: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.inst.constraints.len();
        let n_rows: usize = self.inst.block_dims.iter().map(|n| n * n).sum();
        let mut t = DMatrix::<f64>::zeros(n_rows, m);
        let mut offset = 0;
        for (blk, cons) in self.per_block.iter().enumerate() {
            let n = self.inst.block_dims[blk];
            let gb = &g[blk];
            for (k, entries) in cons {
                let mut col = t.column_mut(*k);
                for &(r, c, v) in entries {
                    for a in 0..n {
                        let ga = v * gb[(r, a)];
                        if ga == 0.0 {
                            continue;
                        }
                        for b in 0..n {
                            col[offset + a + b * n] += ga * gb[(c, b)];
                        }
                    }
                }
            }
            offset += n * n;
        }
        t
    }
}

fn block_inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a.dot(b)).sum()
}

fn block_norm(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues().min()
}

/// Largest `alpha` keeping `diag(v) + alpha D` psd for every block; infinity if unbounded.
fn scaled_step(lambdas: &[&DVector<f64>], d: &[DMatrix<f64>]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (l, db) in lambdas.iter().zip(d) {
        let s = l.map(|v| 1.0 / v.sqrt());
        let mut t = DMatrix::from_fn(db.nrows(), db.ncols(), |i, j| s[i] * db[(i, j)] * s[j]);
        symmetrize(&mut t);
        let lam = t.symmetric_eigenvalues().min();
        if lam < 0.0 {
            alpha = alpha.min(-1.0 / lam);
        }
    }
    alpha
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    dz: Vec<DMatrix<f64>>,
    du: DVector<f64>,
    /// `G^-1 dX G^-T` and `G' dZ G`.
    sx: Vec<DMatrix<f64>>,
    sz: Vec<DMatrix<f64>>,
}

/// Nesterov-Todd scaling of one block: `G' Z G = G^-1 X G^-T = diag(lambda)`.
struct NtBlock {
    g: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl NtBlock {
    fn new(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Self> {
        let lx = x.clone().cholesky()?.l();
        let lz = z.clone().cholesky()?.l();
        let svd = (lz.transpose() * &lx).svd(true, true);
        let v = svd.v_t.as_ref()?.transpose();
        let lambda = svd.singular_values.clone();
        if lambda.iter().any(|s| !(*s > 0.0)) {
            return None;
        }
        let inv_sqrt = DMatrix::from_diagonal(&lambda.map(|s| 1.0 / s.sqrt()));
        let g = &lx * &v * inv_sqrt;
        let mut w = &g * g.transpose();
        symmetrize(&mut w);
        Some(NtBlock { g, w, lambda })
    }

    /// Solves `(V H + H V) / 2 = R` for diagonal `V`.
    fn lyapunov(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let l = &self.lambda;
        DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| 2.0 * r[(i, j)] / (l[i] + l[j]))
    }
}

/// Factor of the Schur matrix `M`.
enum SchurFactor {
    /// Upper triangular `R` with `M = R'R`.
    Root(DMatrix<f64>),
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
}

impl SchurFactor {
    fn new(form: &MinForm<'_>, g: &[DMatrix<f64>]) -> Option<Self> {
        let t = form.schur_root(g);
        let m = t.ncols();
        if t.nrows() >= m {
            let r = t.qr().r();
            let dmax = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if r.diagonal().iter().all(|v| v.abs() > 1e-15 * dmax) {
                return Some(SchurFactor::Root(r));
            }
            let mut schur = r.transpose() * &r;
            let scale = schur.diagonal().max().max(1e-300);
            for i in 0..m {
                schur[(i, i)] += 1e-14 * scale;
            }
            return schur.cholesky().map(SchurFactor::Chol);
        }
        let mut schur = t.transpose() * &t;
        let scale = schur.diagonal().max().max(1e-300);
        for i in 0..m {
            schur[(i, i)] += 1e-14 * scale;
        }
        schur.cholesky().map(SchurFactor::Chol)
    }

    fn solve(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SchurFactor::Root(r) => {
                let w = r.tr_solve_upper_triangular(h).expect("nonzero diagonal");
                r.solve_upper_triangular(&w).expect("nonzero diagonal")
            }
            SchurFactor::Chol(c) => c.solve(h),
        }
    }

    fn solve_vec(&self, h: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(h.len(), 1, h.as_slice());
        self.solve(&m).column(0).into_owned()
    }
}

/// Factorized Newton system for one iteration.
struct NewtonSystem<'a> {
    form: &'a MinForm<'a>,
    nt: Vec<NtBlock>,
    factor: SchurFactor,
    /// `M^-1 F` and the Cholesky factor of `F' M^-1 F`.
    minv_f: DMatrix<f64>,
    free_chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl<'a> NewtonSystem<'a> {
    fn new(form: &'a MinForm<'a>, x: &[DMatrix<f64>], z: &[DMatrix<f64>]) -> Option<Self> {
        let nt: Vec<NtBlock> = x.iter().zip(z).map(|(x, z)| NtBlock::new(x, z)).collect::<Option<_>>()?;
        let g: Vec<DMatrix<f64>> = nt.iter().map(|b| b.g.clone()).collect();
        let factor = SchurFactor::new(form, &g)?;
        let m = form.inst.constraints.len();
        let (minv_f, free_chol) = if form.inst.n_free > 0 {
            let minv_f = factor.solve(&form.free_cols);
            let s = form.free_cols.transpose() * &minv_f;
            (minv_f, Some(s.cholesky()?))
        } else {
            (DMatrix::zeros(m, 0), None)
        };
        Some(NewtonSystem {
            form,
            nt,
            factor,
            minv_f,
            free_chol,
        })
    }

    /// Diagonal of the scaled point per block.
    fn lambdas(&self) -> Vec<&DVector<f64>> {
        self.nt.iter().map(|b| &b.lambda).collect()
    }

    /// Solves `M dy + F du = h`, `F' dy = ru`.
    fn solve_schur(&self, h: &DVector<f64>, ru: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let minv_h = self.factor.solve_vec(h);
        match &self.free_chol {
            Some(sc) => {
                let rhs = self.form.free_cols.transpose() * &minv_h - ru;
                let du = sc.solve(&rhs);
                let dy = &minv_h - &self.minv_f * &du;
                (dy, du)
            }
            None => (minv_h, DVector::zeros(0)),
        }
    }

    /// Direction whose scaled complementarity reads `V o (dX~ + dZ~) = rc`.
    fn direction(
        &self,
        rp: &DVector<f64>,
        rd: &[DMatrix<f64>],
        ru: &DVector<f64>,
        rc: &[DMatrix<f64>],
    ) -> Direction {
        let form = self.form;
        // P = G H G' - W Rd W, so that dX = P + W A'(dy) W
        let p: Vec<DMatrix<f64>> = self
            .nt
            .iter()
            .zip(rc)
            .zip(rd)
            .map(|((nt, rc), rd)| {
                let h = nt.lyapunov(rc);
                let mut p = &nt.g * h * nt.g.transpose() - &nt.w * rd * &nt.w;
                symmetrize(&mut p);
                p
            })
            .collect();
        let h = rp - form.a_op(&p);
        let (mut dy, mut du) = self.solve_schur(&h, ru);
        let hs: Vec<DMatrix<f64>> = self.nt.iter().zip(rc).map(|(nt, rc)| nt.lyapunov(rc)).collect();
        let mut round = 0;
        loop {
            // least-norm correction restoring F' dy = ru
            if let Some(fg) = &form.free_gram {
                let eu = ru - form.free_cols.transpose() * &dy;
                dy += &form.free_cols * fg.solve(&eu);
            }
            // dX is rebuilt from the scaled complementarity equation, which avoids
            // the cancellation in W A'(dy) W on the nearly singular part of X
            let aty = form.a_adjoint(&dy);
            let mut dz = Vec::with_capacity(aty.len());
            let mut dx = Vec::with_capacity(aty.len());
            let mut sx = Vec::with_capacity(aty.len());
            let mut sz = Vec::with_capacity(aty.len());
            for (((nt, h), r), a) in self.nt.iter().zip(&hs).zip(rd).zip(&aty) {
                let mut d = r - a;
                symmetrize(&mut d);
                let mut dzs = nt.g.transpose() * &d * &nt.g;
                symmetrize(&mut dzs);
                let dxs = h - &dzs;
                let mut v = &nt.g * &dxs * nt.g.transpose();
                symmetrize(&mut v);
                dz.push(d);
                dx.push(v);
                sx.push(dxs);
                sz.push(dzs);
            }
            if round == 3 {
                return Direction { dx, dy, dz, du, sx, sz };
            }
            round += 1;
            let e = rp - form.a_op(&dx) - &form.free_cols * &du;
            let eu = ru - form.free_cols.transpose() * &dy;
            let (cy, cu) = self.solve_schur(&e, &eu);
            dy += cy;
            du += cu;
        }
    }
}

/// `target I - V^2 - sym(dX~ dZ~)` per block.
fn complementarity_rhs(
    lambdas: &[&DVector<f64>],
    target: f64,
    second_order: Option<(&[DMatrix<f64>], &[DMatrix<f64>])>,
) -> Vec<DMatrix<f64>> {
    lambdas
        .iter()
        .enumerate()
        .map(|(b, l)| {
            let n = l.len();
            let mut r = DMatrix::from_fn(n, n, |i, j| if i == j { target - l[i] * l[i] } else { 0.0 });
            if let Some((sx, sz)) = second_order {
                let prod = &sx[b] * &sz[b];
                r -= (&prod + prod.transpose()) * 0.5;
            }
            r
        })
        .collect()
}

type Point = (Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>);

/// Largest of the relative gap, the scaled complementarity and both infeasibilities.
fn merit(form: &MinForm<'_>, (x, u, y, z): &Point, b_scale: f64, c_scale: f64) -> f64 {
    let rp = form.primal_residual(x, u);
    let (rd, ru) = form.dual_residual(y, z);
    let pobj = form.primal_objective(x, u);
    let dobj = form.b.dot(y);
    let offset = form.inst.objective_offset;
    let scale = 1.0 + (form.sign * pobj + offset).abs() + (form.sign * dobj + offset).abs();
    let comp: f64 = x
        .iter()
        .zip(z)
        .map(|(a, b)| {
            let p = a * b;
            ((&p + p.transpose()) * 0.5).norm_squared()
        })
        .sum::<f64>()
        .sqrt();
    let pinf = rp.norm() / b_scale;
    let dinf = (block_norm(&rd) + ru.norm()) / c_scale;
    ((pobj - dobj).abs() / scale).max(comp / scale).max(pinf).max(dinf)
}

/// Full Newton steps on `A(X) + F u = b`, `A'(y) + Z = C`, `F' y = d`, `XZ + ZX = 0`.
/// The system is nonsingular at a nondegenerate strictly complementary solution, where
/// it converges quadratically; a step is kept only if it lowers the merit and leaves
/// both matrices psd up to rounding.
fn polish(form: &MinForm<'_>, start: Point, b_scale: f64, c_scale: f64) -> Point {
    let dims = &form.inst.block_dims;
    let m = form.inst.constraints.len();
    let nf = form.inst.n_free;
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &n| {
            let o = *acc;
            *acc += n * (n + 1) / 2;
            Some(o)
        })
        .collect();
    let n_sym: usize = dims.iter().map(|n| n * (n + 1) / 2).sum();
    let size = n_sym + m + nf;
    if size > 4000 {
        return start;
    }
    let adj: Vec<Vec<DMatrix<f64>>> = (0..m)
        .map(|j| {
            let mut e = DVector::zeros(m);
            e[j] = 1.0;
            form.a_adjoint(&e)
        })
        .collect();
    let psd_within = |blocks: &[DMatrix<f64>], tol: f64| {
        blocks.iter().all(|b| min_eigenvalue(b) >= -tol * (1.0 + b.amax()))
    };

    let start_merit = merit(form, &start, b_scale, c_scale);
    let mut best = start.clone();
    let mut best_merit = start_merit;
    let mut cur = start;
    let mut cur_merit = start_merit;
    for _ in 0..8 {
        let (x, u, y, z) = &cur;
        let rp = form.primal_residual(x, u);
        let (rd, ru) = form.dual_residual(y, z);
        let mut jac = DMatrix::<f64>::zeros(size, size);
        let mut rhs = DVector::<f64>::zeros(size);
        for (blk, &n) in dims.iter().enumerate() {
            let (xb, zb) = (&x[blk], &z[blk]);
            let row = |i: usize, j: usize| offsets[blk] + j * (j + 1) / 2 + i;
            let xz = xb * zb;
            let xr = xb * &rd[blk];
            for j in 0..n {
                for i in 0..=j {
                    let r = row(i, j);
                    rhs[r] = -0.5 * (xz[(i, j)] + xz[(j, i)]) - 0.5 * (xr[(i, j)] + xr[(j, i)]);
                }
            }
            // dX columns: (E Z + Z E) / 2
            for l in 0..n {
                for k in 0..=l {
                    let col = row(k, l);
                    for j in 0..n {
                        for i in 0..=j {
                            let mut v = 0.0;
                            if i == k {
                                v += zb[(l, j)];
                            }
                            if i == l && k != l {
                                v += zb[(k, j)];
                            }
                            if j == k {
                                v += zb[(i, l)];
                            }
                            if j == l && k != l {
                                v += zb[(i, k)];
                            }
                            if v != 0.0 {
                                jac[(row(i, j), col)] = 0.5 * v;
                            }
                        }
                    }
                }
            }
            // dy columns: dZ = -A_j gives -(X A_j + A_j X) / 2
            for (jj, a) in adj.iter().enumerate() {
                let xa = xb * &a[blk];
                if xa.amax() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    for i in 0..=j {
                        jac[(row(i, j), n_sym + jj)] = -0.5 * (xa[(i, j)] + xa[(j, i)]);
                    }
                }
                for l in 0..n {
                    for k in 0..=l {
                        let w = if k == l { 1.0 } else { 2.0 };
                        jac[(n_sym + jj, row(k, l))] = w * a[blk][(k, l)];
                    }
                }
            }
        }
        for jj in 0..m {
            rhs[n_sym + jj] = rp[jj];
            for f in 0..nf {
                jac[(n_sym + jj, n_sym + m + f)] = form.free_cols[(jj, f)];
                jac[(n_sym + m + f, n_sym + jj)] = form.free_cols[(jj, f)];
            }
        }
        for f in 0..nf {
            rhs[n_sym + m + f] = ru[f];
        }
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };
        if step.iter().any(|v| !v.is_finite()) {
            break;
        }
        let dy = step.rows(n_sym, m).into_owned();
        let du = step.rows(n_sym + m, nf).into_owned();
        let aty = form.a_adjoint(&dy);
        let mut nx = x.clone();
        let mut nz = z.clone();
        for (blk, &n) in dims.iter().enumerate() {
            for l in 0..n {
                for k in 0..=l {
                    let v = step[offsets[blk] + l * (l + 1) / 2 + k];
                    nx[blk][(k, l)] += v;
                    if k != l {
                        nx[blk][(l, k)] += v;
                    }
                }
            }
            nz[blk] += &rd[blk] - &aty[blk];
            symmetrize(&mut nz[blk]);
        }
        let cand = (nx, u + du, y + dy, nz);
        let cand_merit = merit(form, &cand, b_scale, c_scale);
        // intermediate points may be slightly indefinite; only psd points are returned
        if !(cand_merit < 0.5 * cur_merit) || !psd_within(&cand.0, 1e-6) || !psd_within(&cand.3, 1e-6) {
            break;
        }
        if cand_merit < best_merit && psd_within(&cand.0, 1e-12) && psd_within(&cand.3, 1e-12) {
            best = cand.clone();
            best_merit = cand_merit;
        }
        cur = cand;
        cur_merit = cand_merit;
    }
    best
}

/// Runs the interior-point method on `inst`.
pub fn solve(inst: &SdpInstance, settings: &SolverSettings) -> Result<SdpSolution, SdpError> {
    inst.validate()?;
    settings.validate()?;
    let form = MinForm::new(inst);
    let dims = &inst.block_dims;
    let n_total: usize = dims.iter().sum();
    let m = inst.constraints.len();

    let tau = 1.0 + form.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut x: Vec<DMatrix<f64>> = dims.iter().map(|&n| DMatrix::identity(n, n) * tau).collect();
    let mut z: Vec<DMatrix<f64>> = x.clone();
    let mut y = DVector::zeros(m);
    let mut u = DVector::zeros(inst.n_free);

    let b_scale = 1.0 + form.b.norm();
    let c_scale = 1.0 + block_norm(&form.cost) + form.cost_free.norm();

    let mut history = Vec::new();
    let mut status = SdpStatus::MaxIterations;
    let mut best_gap = f64::INFINITY;
    let mut stall = 0usize;
    let mut iterations = 0usize;
    let mut best: Option<(f64, Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>)> = None;

    for iter in 0..=settings.max_iters {
        let rp = form.primal_residual(&x, &u);
        let (rd, ru) = form.dual_residual(&y, &z);
        let pobj = form.primal_objective(&x, &u);
        let dobj = form.b.dot(&y);
        let comp = block_inner(&x, &z);
        let pinf = rp.norm() / b_scale;
        let dinf = (block_norm(&rd) + ru.norm()) / c_scale;
        let scale = 1.0
            + (form.sign * pobj + inst.objective_offset).abs()
            + (form.sign * dobj + inst.objective_offset).abs();
        let rel_gap = (pobj - dobj).abs() / scale;
        let comp_rel = comp.abs() / scale;

        if rel_gap <= settings.gap_tol
            && comp_rel <= settings.gap_tol
            && pinf <= settings.feas_tol
            && dinf <= settings.feas_tol
        {
            status = SdpStatus::Optimal;
            break;
        }
        let merit = rel_gap.max(comp_rel).max(pinf).max(dinf);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), u.clone(), y.clone(), z.clone()));
        }
        if iter == settings.max_iters {
            break;
        }

        // divergence with a stalled gap
        let size = block_norm(&x).max(block_norm(&z)).max(y.norm());
        if rel_gap < best_gap * 0.99 {
            best_gap = rel_gap;
            stall = 0;
        } else {
            stall += 1;
        }
        if size > 1e12 && stall >= 10 {
            status = SdpStatus::Infeasible;
            break;
        }

        let mu = comp / n_total as f64;
        let Some(system) = NewtonSystem::new(&form, &x, &z) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let lambdas = system.lambdas();

        // predictor
        let rc = complementarity_rhs(&lambdas, 0.0, None);
        let aff = system.direction(&rp, &rd, &ru, &rc);
        let ap = scaled_step(&lambdas, &aff.sx).min(1.0);
        let ad = scaled_step(&lambdas, &aff.sz).min(1.0);
        let x_aff: Vec<DMatrix<f64>> = x.iter().zip(&aff.dx).map(|(a, d)| a + d * ap).collect();
        let z_aff: Vec<DMatrix<f64>> = z.iter().zip(&aff.dz).map(|(a, d)| a + d * ad).collect();
        let mu_aff = block_inner(&x_aff, &z_aff) / n_total as f64;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        // corrector
        let rc = complementarity_rhs(&lambdas, sigma * mu, Some((&aff.sx, &aff.sz)));
        let dir = system.direction(&rp, &rd, &ru, &rc);
        let sp = scaled_step(&lambdas, &dir.sx);
        let sd = scaled_step(&lambdas, &dir.sz);
        let ap = (settings.step_fraction * sp).min(1.0);
        let ad = (settings.step_fraction * sd).min(1.0);

        history.push(IterationLog {
            primal_objective: form.sign * pobj + inst.objective_offset,
            dual_objective: form.sign * dobj + inst.objective_offset,
            complementarity: comp,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            primal_step: ap,
            dual_step: ad,
        });

        if ap < 1e-12 && ad < 1e-12 {
            status = SdpStatus::NumericalFailure;
            break;
        }

        for (xb, d) in x.iter_mut().zip(&dir.dx) {
            *xb += d * ap;
            symmetrize(xb);
        }
        u += &dir.du * ap;
        y += &dir.dy * ad;
        for (zb, d) in z.iter_mut().zip(&dir.dz) {
            *zb += d * ad;
            symmetrize(zb);
        }
        iterations = iter + 1;
    }

    if status != SdpStatus::Optimal {
        if let Some((_, bx, bu, by, bz)) = best {
            (x, u, y, z) = (bx, bu, by, bz);
        }
    }
    if settings.polish && status != SdpStatus::Infeasible {
        (x, u, y, z) = polish(&form, (x, u, y, z), b_scale, c_scale);
    }
    let rp = form.primal_residual(&x, &u);
    let (rd, ru) = form.dual_residual(&y, &z);
    let pobj = form.primal_objective(&x, &u);
    let dobj = form.b.dot(&y);
    let scale = 1.0
        + (form.sign * pobj + inst.objective_offset).abs()
        + (form.sign * dobj + inst.objective_offset).abs();
    let relative_gap = (pobj - dobj).abs() / scale;
    let pinf = rp.norm() / b_scale;
    let dinf = (block_norm(&rd) + ru.norm()) / c_scale;
    if matches!(status, SdpStatus::MaxIterations | SdpStatus::NumericalFailure)
        && relative_gap <= settings.gap_tol
        && block_inner(&x, &z).abs() / scale <= settings.gap_tol
        && pinf <= settings.feas_tol
        && dinf <= settings.feas_tol
    {
        status = SdpStatus::Optimal;
    }
    Ok(SdpSolution {
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        relative_gap,
        primal_objective: form.sign * pobj + inst.objective_offset,
        dual_objective: form.sign * dobj + inst.objective_offset,
        y: (y * form.sign).iter().copied().collect(),
        free: u.iter().copied().collect(),
        x_blocks: x,
        z_blocks: z,
        iterations,
        status,
        history,
    })
}

/// Residual norms of `(X, u, y, Z)` against `inst`, in the instance's own sign convention.
pub fn residuals(inst: &SdpInstance, sol: &SdpSolution) -> Result<Residuals, SdpError> {
    let dims_ok = sol.x_blocks.len() == inst.block_dims.len()
        && sol.z_blocks.len() == inst.block_dims.len()
        && sol
            .x_blocks
            .iter()
            .chain(&sol.z_blocks)
            .zip(inst.block_dims.iter().chain(&inst.block_dims))
            .all(|(m, &n)| m.nrows() == n && m.ncols() == n);
    if !dims_ok {
        return Err(SdpError::DimensionMismatch("matrix blocks".into()));
    }
    if sol.y.len() != inst.constraints.len() {
        return Err(SdpError::DimensionMismatch("dual vector".into()));
    }
    if sol.free.len() != inst.n_free {
        return Err(SdpError::DimensionMismatch("free variables".into()));
    }
    let form = MinForm::new(inst);
    let u = DVector::from_column_slice(&sol.free);
    let y_int = DVector::from_iterator(sol.y.len(), sol.y.iter().map(|v| v * form.sign));
    let rp = form.primal_residual(&sol.x_blocks, &u);
    let (rd, ru) = form.dual_residual(&y_int, &sol.z_blocks);
    let pobj = form.primal_objective(&sol.x_blocks, &u);
    let dobj = form.b.dot(&y_int);
    Ok(Residuals {
        primal: rp.norm(),
        dual: block_norm(&rd) + ru.norm(),
        complementarity: block_inner(&sol.x_blocks, &sol.z_blocks),
        objective_gap: (pobj - dobj).abs(),
    })
}

impl SdpInstance {
    /// Frobenius norm of each constraint matrix; used by tests and diagnostics.
    pub fn constraint_norms(&self) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| c.matrix.frobenius_sq().sqrt())
            .collect()
    }
}
