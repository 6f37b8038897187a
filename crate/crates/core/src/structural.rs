//! Shear-frame models, modal data and the modal dynamic residual.
//!
//! Units are inch/pound/second: floor weights in lb, inter-story stiffness in
//! lbf/in, and `g` in in/s^2 so that `weight / g` is a mass in lb·s²/in.
//! Stories and DOFs are numbered 1..N from the bottom in all public data; the
//! 0-based indices used internally never leak into files.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::{PolyError, Polynomial};
use crate::relaxation::{PolyProblem, RelaxationError};

pub const GRAVITY_IN_S2: f64 = 386.088;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructuralError {
    #[error("{what} {index} must be positive, got {value}")]
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("frame has no stories")]
    EmptyFrame,
    #[error("{0} stories given weights but {1} stiffness values")]
    LengthMismatch(usize, usize),
    #[error("mass matrix is not positive definite")]
    MassNotSpd,
    #[error("invalid parameter map: {0}")]
    InvalidParamMap(String),
    #[error("invalid modal data: {0}")]
    InvalidModalData(String),
    #[error("requested {requested} modes, frame has {available}")]
    TooManyModes { requested: usize, available: usize },
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("zero vector in MAC")]
    ZeroVector,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Relaxation(#[from] RelaxationError),
}

fn default_g() -> f64 {
    GRAVITY_IN_S2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearFrame {
    pub weights_lb: Vec<f64>,
    #[serde(default = "default_g")]
    pub g_in_s2: f64,
    /// Story 1 (bottom) to N.
    pub stiffness_lbf_in: Vec<f64>,
}

impl ShearFrame {
    pub fn new(weights_lb: Vec<f64>, stiffness_lbf_in: Vec<f64>) -> Result<Self, StructuralError> {
        let f = ShearFrame {
            weights_lb,
            g_in_s2: GRAVITY_IN_S2,
            stiffness_lbf_in,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn uniform(n: usize, weight_lb: f64, stiffness: f64) -> Result<Self, StructuralError> {
        ShearFrame::new(vec![weight_lb; n], vec![stiffness; n])
    }

    pub fn validate(&self) -> Result<(), StructuralError> {
        if self.weights_lb.is_empty() {
            return Err(StructuralError::EmptyFrame);
        }
        if self.weights_lb.len() != self.stiffness_lbf_in.len() {
            return Err(StructuralError::LengthMismatch(
                self.weights_lb.len(),
                self.stiffness_lbf_in.len(),
            ));
        }
        let check = |what, vals: &[f64]| {
            for (i, &v) in vals.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(StructuralError::NonPositive {
                        what,
                        index: i + 1,
                        value: v,
                    });
                }
            }
            Ok(())
        };
        check("weight", &self.weights_lb)?;
        check("stiffness", &self.stiffness_lbf_in)?;
        if !(self.g_in_s2 > 0.0) {
            return Err(StructuralError::NonPositive {
                what: "g",
                index: 0,
                value: self.g_in_s2,
            });
        }
        Ok(())
    }

    pub fn n_stories(&self) -> usize {
        self.weights_lb.len()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.weights_lb.iter().map(|w| w / self.g_in_s2).collect()
    }

    pub fn with_stiffness(&self, stiffness_lbf_in: Vec<f64>) -> Result<Self, StructuralError> {
        let f = ShearFrame {
            stiffness_lbf_in,
            ..self.clone()
        };
        f.validate()?;
        Ok(f)
    }
}

/// Tridiagonal shear-building stiffness; `k[j]` connects floor `j` to the one below.
pub fn stiffness_matrix(k: &[f64]) -> DMatrix<f64> {
    let n = k.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let above = if j + 1 < n { k[j + 1] } else { 0.0 };
        m[(j, j)] = k[j] + above;
        if j + 1 < n {
            m[(j, j + 1)] = -k[j + 1];
            m[(j + 1, j)] = -k[j + 1];
        }
    }
    m
}

/// `(M, K)`.
pub fn shear_frame_matrices(frame: &ShearFrame) -> Result<(DMatrix<f64>, DMatrix<f64>), StructuralError> {
    frame.validate()?;
    let m = DMatrix::from_diagonal(&DVector::from_vec(frame.masses()));
    Ok((m, stiffness_matrix(&frame.stiffness_lbf_in)))
}

/// Which stories each updating variable scales (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamMap {
    pub groups: Vec<Vec<usize>>,
}

impl ParamMap {
    /// One variable per story.
    pub fn per_story(n: usize) -> Self {
        ParamMap {
            groups: (1..=n).map(|s| vec![s]).collect(),
        }
    }

    pub fn n_theta(&self) -> usize {
        self.groups.len()
    }

    pub fn validate(&self, n_stories: usize) -> Result<(), StructuralError> {
        let mut seen = vec![false; n_stories];
        for (i, g) in self.groups.iter().enumerate() {
            if g.is_empty() {
                return Err(StructuralError::InvalidParamMap(format!("group {} is empty", i + 1)));
            }
            for &s in g {
                if s == 0 || s > n_stories {
                    return Err(StructuralError::InvalidParamMap(format!(
                        "story {s} out of range 1..={n_stories}"
                    )));
                }
                if seen[s - 1] {
                    return Err(StructuralError::InvalidParamMap(format!("story {s} mapped twice")));
                }
                seen[s - 1] = true;
            }
        }
        Ok(())
    }

    /// `K0` and the `K0_i` with `K(theta) = K0 + sum theta_i K0_i`.
    pub fn stiffness_terms(&self, nominal: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let k0 = stiffness_matrix(nominal);
        let parts = self
            .groups
            .iter()
            .map(|g| {
                let mut k = vec![0.0; nominal.len()];
                for &s in g {
                    k[s - 1] = nominal[s - 1];
                }
                stiffness_matrix(&k)
            })
            .collect();
        (k0, parts)
    }

    /// `k_s (1 + theta_i)` on mapped stories.
    pub fn updated_stiffness(&self, nominal: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut k = nominal.to_vec();
        for (g, t) in self.groups.iter().zip(theta) {
            for &s in g {
                k[s - 1] = nominal[s - 1] * (1.0 + t);
            }
        }
        k
    }

    /// `theta_i = k_s / nominal_s - 1`, read from the first story of each group.
    pub fn theta_from_stiffness(&self, nominal: &[f64], k: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| k[g[0] - 1] / nominal[g[0] - 1] - 1.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub omega: f64,
    /// Max |entry| = 1, that entry positive.
    pub shape: Vec<f64>,
}

impl Mode {
    pub fn frequency_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }
}

/// Scales `v` so its largest-magnitude entry is `+1`.
pub fn normalize_shape(v: &[f64]) -> Option<Vec<f64>> {
    let (mut best, mut idx) = (0.0f64, 0);
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if best == 0.0 {
        return None;
    }
    let s = v[idx];
    Some(v.iter().map(|x| x / s).collect())
}

/// Solves `K phi = omega^2 M phi`, ascending in `omega`.
pub fn generalized_eig(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<Mode>, StructuralError> {
    let n = m.nrows();
    let chol = m.clone().cholesky().ok_or(StructuralError::MassNotSpd)?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(StructuralError::MassNotSpd)?;
    let mut c = &linv * k * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lt = l.transpose();
    Ok(order
        .into_iter()
        .map(|i| {
            let v = eig.eigenvectors.column(i).into_owned();
            let phi = lt.solve_upper_triangular(&v).expect("nonsingular factor");
            Mode {
                omega: eig.eigenvalues[i].max(0.0).sqrt(),
                shape: normalize_shape(phi.as_slice()).expect("eigenvector is nonzero"),
            }
        })
        .collect())
}

pub fn frame_modes(frame: &ShearFrame) -> Result<Vec<Mode>, StructuralError> {
    let (m, k) = shear_frame_matrices(frame)?;
    generalized_eig(&k, &m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredMode {
    pub omega: f64,
    /// 1-based, ascending.
    pub measured_dofs: Vec<usize>,
    pub shape: Vec<f64>,
    /// Unmeasured entries in the same normalization, when known (simulation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_unmeasured: Option<Vec<f64>>,
}

impl MeasuredMode {
    pub fn frequency_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }

    /// 1-based DOFs not in `measured_dofs`.
    pub fn unmeasured_dofs(&self, n_dofs: usize) -> Vec<usize> {
        (1..=n_dofs).filter(|d| !self.measured_dofs.contains(d)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalData {
    pub modes: Vec<MeasuredMode>,
}

impl ModalData {
    pub fn validate(&self, n_dofs: usize) -> Result<(), StructuralError> {
        if self.modes.is_empty() {
            return Err(StructuralError::InvalidModalData("no modes".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            let bad = |msg: String| StructuralError::InvalidModalData(format!("mode {}: {msg}", i + 1));
            if !(m.omega > 0.0) || !m.omega.is_finite() {
                return Err(bad(format!("frequency {} must be positive", m.omega)));
            }
            if m.measured_dofs.is_empty() {
                return Err(bad("no measured DOFs".into()));
            }
            if m.measured_dofs.len() != m.shape.len() {
                return Err(bad(format!(
                    "{} measured DOFs but {} shape entries",
                    m.measured_dofs.len(),
                    m.shape.len()
                )));
            }
            if m.measured_dofs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(bad("measured DOFs must be strictly ascending".into()));
            }
            if m.measured_dofs.iter().any(|&d| d == 0 || d > n_dofs) {
                return Err(bad(format!("measured DOF out of range 1..={n_dofs}")));
            }
            if m.shape.iter().all(|v| *v == 0.0) || m.shape.iter().any(|v| !v.is_finite()) {
                return Err(bad("shape must be finite and nonzero".into()));
            }
        }
        Ok(())
    }

    /// Total number of unmeasured entries over all modes.
    pub fn n_unmeasured(&self, n_dofs: usize) -> usize {
        self.modes.iter().map(|m| n_dofs - m.measured_dofs.len()).sum()
    }
}

/// Lowest `n_modes` modes of `frame`, restricted to `measured_dofs` (1-based) and renormalized.
pub fn simulate_modal_data(
    frame: &ShearFrame,
    measured_dofs: &[usize],
    n_modes: usize,
) -> Result<ModalData, StructuralError> {
    let n = frame.n_stories();
    if measured_dofs.is_empty() {
        return Err(StructuralError::InvalidModalData("no measured DOFs".into()));
    }
    if n_modes > n {
        return Err(StructuralError::TooManyModes {
            requested: n_modes,
            available: n,
        });
    }
    let mut dofs = measured_dofs.to_vec();
    dofs.sort_unstable();
    dofs.dedup();
    if dofs.iter().any(|&d| d == 0 || d > n) {
        return Err(StructuralError::InvalidModalData(format!(
            "measured DOF out of range 1..={n}"
        )));
    }
    let modes = frame_modes(frame)?;
    let out = modes
        .into_iter()
        .take(n_modes)
        .map(|mode| {
            let raw: Vec<f64> = dofs.iter().map(|&d| mode.shape[d - 1]).collect();
            let normalized = normalize_shape(&raw).ok_or_else(|| {
                StructuralError::InvalidModalData("mode vanishes at all measured DOFs".into())
            })?;
            let scale = raw
                .iter()
                .zip(&normalized)
                .find(|(_, n)| **n != 0.0)
                .map(|(r, n)| r / n)
                .expect("nonzero entry");
            let unmeasured: Vec<f64> = (1..=n)
                .filter(|d| !dofs.contains(d))
                .map(|d| mode.shape[d - 1] / scale)
                .collect();
            Ok(MeasuredMode {
                omega: mode.omega,
                measured_dofs: dofs.clone(),
                shape: normalized,
                reference_unmeasured: Some(unmeasured),
            })
        })
        .collect::<Result<Vec<_>, StructuralError>>()?;
    Ok(ModalData { modes: out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub theta: Vec<(f64, f64)>,
    pub psi: Vec<(f64, f64)>,
}

impl Bounds {
    pub fn default_for(n_theta: usize, n_psi: usize) -> Self {
        Bounds {
            theta: vec![(-1.0, 1.0); n_theta],
            psi: vec![(-2.0, 2.0); n_psi],
        }
    }

    pub fn validate(&self, n_theta: usize, n_psi: usize) -> Result<(), StructuralError> {
        if self.theta.len() != n_theta || self.psi.len() != n_psi {
            return Err(StructuralError::InvalidBounds(format!(
                "expected {n_theta} theta and {n_psi} psi bounds, got {} and {}",
                self.theta.len(),
                self.psi.len()
            )));
        }
        for (l, u) in self.theta.iter().chain(&self.psi) {
            if !(l < u) {
                return Err(StructuralError::InvalidBounds(format!("empty interval [{l}, {u}]")));
            }
        }
        Ok(())
    }

    pub fn lower(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.psi).map(|b| b.0).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.psi).map(|b| b.1).collect()
    }
}

#[derive(Debug, Clone)]
struct ModeBlock {
    omega_sq: f64,
    /// 0-based DOFs, measured first then unmeasured; rows of the residual follow this order.
    order: Vec<usize>,
    n_measured: usize,
    measured_values: Vec<f64>,
    /// Index of this mode's first unmeasured entry in `x`.
    offset: usize,
}

/// Stacked residual `[K(theta) - omega_i^2 M] Psi_i` over modes as a function of `x = (theta, psi_u)`.
///
/// `psi_u` lists the unmeasured entries mode by mode, each in ascending DOF order.
#[derive(Debug, Clone)]
pub struct ModelUpdateProblem {
    pub frame: ShearFrame,
    pub params: ParamMap,
    pub bounds: Bounds,
    pub var_names: Vec<String>,
    data: ModalData,
    mass: DMatrix<f64>,
    k0: DMatrix<f64>,
    k_parts: Vec<DMatrix<f64>>,
    blocks: Vec<ModeBlock>,
    n_theta: usize,
    n_vars: usize,
}

impl ModelUpdateProblem {
    pub fn new(
        frame: &ShearFrame,
        params: &ParamMap,
        data: &ModalData,
        bounds: Option<Bounds>,
    ) -> Result<Self, StructuralError> {
        frame.validate()?;
        let n = frame.n_stories();
        params.validate(n)?;
        data.validate(n)?;
        let n_theta = params.n_theta();
        let n_psi = data.n_unmeasured(n);
        let bounds = bounds.unwrap_or_else(|| Bounds::default_for(n_theta, n_psi));
        bounds.validate(n_theta, n_psi)?;
        let (mass, _) = shear_frame_matrices(frame)?;
        let (k0, k_parts) = params.stiffness_terms(&frame.stiffness_lbf_in);

        let mut var_names: Vec<String> = (1..=n_theta).map(|i| format!("theta{i}")).collect();
        let mut blocks = Vec::with_capacity(data.modes.len());
        let mut offset = n_theta;
        for (i, m) in data.modes.iter().enumerate() {
            let unmeasured = m.unmeasured_dofs(n);
            let mut order: Vec<usize> = m.measured_dofs.iter().map(|d| d - 1).collect();
            order.extend(unmeasured.iter().map(|d| d - 1));
            for d in &unmeasured {
                var_names.push(format!("psi{}_{}", i + 1, d));
            }
            blocks.push(ModeBlock {
                omega_sq: m.omega * m.omega,
                order,
                n_measured: m.measured_dofs.len(),
                measured_values: m.shape.clone(),
                offset,
            });
            offset += unmeasured.len();
        }
        Ok(ModelUpdateProblem {
            frame: frame.clone(),
            params: params.clone(),
            bounds,
            var_names,
            data: data.clone(),
            mass,
            k0,
            k_parts,
            blocks,
            n_theta,
            n_vars: offset,
        })
    }

    pub fn data(&self) -> &ModalData {
        &self.data
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_residuals(&self) -> usize {
        self.blocks.len() * self.frame.n_stories()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.bounds.lower()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.bounds.upper()
    }

    /// `K(theta)`.
    pub fn stiffness(&self, theta: &[f64]) -> DMatrix<f64> {
        let mut k = self.k0.clone();
        for (t, part) in theta.iter().zip(&self.k_parts) {
            k += part * *t;
        }
        k
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    /// Full shape vector of mode `b` in natural DOF order.
    pub fn full_shape(&self, b: usize, x: &[f64]) -> Vec<f64> {
        let blk = &self.blocks[b];
        let mut psi = vec![0.0; self.frame.n_stories()];
        for (j, &d) in blk.order.iter().enumerate() {
            psi[d] = if j < blk.n_measured {
                blk.measured_values[j]
            } else {
                x[blk.offset + j - blk.n_measured]
            };
        }
        psi
    }

    pub fn residual(&self, x: &[f64]) -> DVector<f64> {
        let n = self.frame.n_stories();
        let k = self.stiffness(&x[..self.n_theta]);
        let mut r = DVector::zeros(self.n_residuals());
        for (b, blk) in self.blocks.iter().enumerate() {
            let a = &k - &self.mass * blk.omega_sq;
            let psi = DVector::from_vec(self.full_shape(b, x));
            let rb = a * psi;
            for (j, &d) in blk.order.iter().enumerate() {
                r[b * n + j] = rb[d];
            }
        }
        r
    }

    /// `d r / d x`: `K0_i Psi` for theta columns, columns of `K(theta) - omega^2 M` for psi.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.frame.n_stories();
        let k = self.stiffness(&x[..self.n_theta]);
        let mut jac = DMatrix::zeros(self.n_residuals(), self.n_vars);
        for (b, blk) in self.blocks.iter().enumerate() {
            let psi = DVector::from_vec(self.full_shape(b, x));
            let a = &k - &self.mass * blk.omega_sq;
            for (i, part) in self.k_parts.iter().enumerate() {
                let col = part * &psi;
                for (j, &d) in blk.order.iter().enumerate() {
                    jac[(b * n + j, i)] = col[d];
                }
            }
            for (u, &dof) in blk.order[blk.n_measured..].iter().enumerate() {
                for (j, &d) in blk.order.iter().enumerate() {
                    jac[(b * n + j, blk.offset + u)] = a[(d, dof)];
                }
            }
        }
        jac
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.residual(x).norm_squared()
    }

    /// Each residual entry as a polynomial in `x`.
    pub fn residual_polynomials(&self) -> Vec<Polynomial> {
        let nv = self.n_vars;
        let mut out = Vec::with_capacity(self.n_residuals());
        for blk in &self.blocks {
            // psi_k as a polynomial
            let n = self.frame.n_stories();
            let mut psi = vec![Polynomial::zero(nv); n];
            for (j, &d) in blk.order.iter().enumerate() {
                psi[d] = if j < blk.n_measured {
                    Polynomial::constant(nv, blk.measured_values[j])
                } else {
                    Polynomial::variable(nv, blk.offset + j - blk.n_measured)
                };
            }
            for &row in &blk.order {
                let mut r = Polynomial::zero(nv);
                for (col, p) in psi.iter().enumerate() {
                    let a = self.k0[(row, col)] - blk.omega_sq * self.mass[(row, col)];
                    if a != 0.0 {
                        r = r.add(&p.scale(a)).expect("same n");
                    }
                    for (i, part) in self.k_parts.iter().enumerate() {
                        let c = part[(row, col)];
                        if c != 0.0 {
                            let term = Polynomial::variable(nv, i).mul(p).expect("same n").scale(c);
                            r = r.add(&term).expect("same n");
                        }
                    }
                }
                out.push(r);
            }
        }
        out
    }

    /// `sum ||r||^2` as a polynomial.
    pub fn objective_polynomial(&self) -> Polynomial {
        self.residual_polynomials()
            .iter()
            .fold(Polynomial::zero(self.n_vars), |acc, r| acc.add(&r.square()).expect("same n"))
    }

    pub fn to_poly_problem(&self) -> Result<PolyProblem, StructuralError> {
        Ok(PolyProblem::with_box(
            self.objective_polynomial(),
            &self.lower(),
            &self.upper(),
            self.var_names.clone(),
        )?)
    }

    /// Split `x` into `theta` and the unmeasured entries of each mode.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], Vec<&'a [f64]>) {
        let mut per_mode = Vec::with_capacity(self.blocks.len());
        for (b, blk) in self.blocks.iter().enumerate() {
            let end = self.blocks.get(b + 1).map_or(self.n_vars, |nb| nb.offset);
            per_mode.push(&x[blk.offset..end]);
        }
        (&x[..self.n_theta], per_mode)
    }
}

/// Objective of the modal dynamic residual problem as a bounded polynomial program.
pub fn residual_problem(
    frame: &ShearFrame,
    params: &ParamMap,
    data: &ModalData,
    bounds: Option<Bounds>,
) -> Result<PolyProblem, StructuralError> {
    ModelUpdateProblem::new(frame, params, data, bounds)?.to_poly_problem()
}

/// Modal assurance criterion `(a'b)^2 / (a'a b'b)`.
pub fn mac(a: &[f64], b: &[f64]) -> Result<f64, StructuralError> {
    if a.len() != b.len() {
        return Err(StructuralError::InvalidModalData(format!(
            "MAC of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if aa == 0.0 || bb == 0.0 {
        return Err(StructuralError::ZeroVector);
    }
    Ok((ab * ab / (aa * bb)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub mode: usize,
    pub f_exp_hz: f64,
    pub f_model_hz: f64,
    pub delta_f_percent: f64,
    pub mac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalComparison {
    pub modes: Vec<ModeComparison>,
}

/// Pairs the i-th measured mode with the i-th model mode; MAC over the measured DOFs.
pub fn compare_models(data: &ModalData, candidate: &ShearFrame) -> Result<ModalComparison, StructuralError> {
    data.validate(candidate.n_stories())?;
    let model = frame_modes(candidate)?;
    if data.modes.len() > model.len() {
        return Err(StructuralError::TooManyModes {
            requested: data.modes.len(),
            available: model.len(),
        });
    }
    let modes = data
        .modes
        .iter()
        .zip(&model)
        .enumerate()
        .map(|(i, (exp, m))| {
            let f_exp = exp.frequency_hz();
            let f_model = m.frequency_hz();
            let restricted: Vec<f64> = exp.measured_dofs.iter().map(|&d| m.shape[d - 1]).collect();
            Ok(ModeComparison {
                mode: i + 1,
                f_exp_hz: f_exp,
                f_model_hz: f_model,
                delta_f_percent: (f_model - f_exp).abs() / f_exp * 100.0,
                mac: mac(&exp.shape, &restricted)?,
            })
        })
        .collect::<Result<Vec<_>, StructuralError>>()?;
    Ok(ModalComparison { modes })
}
