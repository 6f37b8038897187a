//! Sum-of-squares relaxation of box-constrained polynomial programs.
//!
//! For `min f(x)` subject to `g_i(x) >= 0` the relaxation looks for the
//! largest `gamma` such that
//!
//! ```text
//! f - gamma = z0' Q0 z0 + sum_i (zi' Qi zi) g_i,   Q0, Qi psd
//! ```
//!
//! Matching coefficients monomial by monomial gives one affine equality per
//! exponent vector of degree `<= 2t`. The dual of that SDP is posed over a
//! moment vector `y` with `y_0 = 1`, a psd moment matrix and psd localizing
//! matrices; at a tight relaxation the degree-one moments are the minimizer.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::polynomial::{MonomialBasis, PolyError, Polynomial, PowerVector};
use crate::sdp::{self, LinearConstraint, SdpError, SdpInstance, SdpSolution, SdpStatus, Sense, SolverSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxationError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("minimizer extraction failed: {0}")]
    ExtractionFailed(String),
    #[error("Gram block {block} is not psd (min eigenvalue {min_eigenvalue:e})")]
    PsdViolation { block: usize, min_eigenvalue: f64 },
    #[error("SOS reconstruction residual {residual:e} exceeds tolerance {tolerance:e}")]
    ReconstructionFailed { residual: f64, tolerance: f64 },
    #[error("primal solution has {found} blocks, relaxation expects {expected}")]
    BlockMismatch { expected: usize, found: usize },
}

/// `min f(x)` subject to `g_i(x) >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyProblem {
    pub objective: Polynomial,
    pub constraints: Vec<Polynomial>,
    pub var_names: Vec<String>,
}

impl PolyProblem {
    pub fn new(
        objective: Polynomial,
        constraints: Vec<Polynomial>,
        var_names: Vec<String>,
    ) -> Result<Self, RelaxationError> {
        let n = objective.n_vars();
        if var_names.len() != n {
            return Err(RelaxationError::InvalidProblem(format!(
                "{} variable names for {n} variables",
                var_names.len()
            )));
        }
        if constraints.is_empty() {
            return Err(RelaxationError::InvalidProblem(
                "at least one inequality constraint is required".into(),
            ));
        }
        for g in &constraints {
            if g.n_vars() != n {
                return Err(PolyError::DimensionMismatch {
                    expected: n,
                    found: g.n_vars(),
                }
                .into());
            }
        }
        Ok(PolyProblem {
            objective,
            constraints,
            var_names,
        })
    }

    /// Objective over the box `lower <= x <= upper`, one `(u - x)(x - l) >= 0` per variable.
    pub fn with_box(
        objective: Polynomial,
        lower: &[f64],
        upper: &[f64],
        var_names: Vec<String>,
    ) -> Result<Self, RelaxationError> {
        let n = objective.n_vars();
        if lower.len() != n || upper.len() != n {
            return Err(RelaxationError::InvalidProblem("bound length mismatch".into()));
        }
        let constraints = lower
            .iter()
            .zip(upper)
            .enumerate()
            .map(|(j, (&l, &u))| {
                if !(l < u) {
                    return Err(RelaxationError::InvalidProblem(format!(
                        "empty interval [{l}, {u}] for variable {j}"
                    )));
                }
                Ok(box_constraint(n, j, l, u))
            })
            .collect::<Result<Vec<_>, _>>()?;
        PolyProblem::new(objective, constraints, var_names)
    }

    pub fn n_vars(&self) -> usize {
        self.objective.n_vars()
    }

    /// Largest violation `max(0, -g_i(x))`.
    pub fn max_violation(&self, x: &[f64]) -> Result<f64, PolyError> {
        let mut worst = 0.0f64;
        for g in &self.constraints {
            worst = worst.max(-g.evaluate(x)?);
        }
        Ok(worst)
    }
}

/// `(upper - x_j)(x_j - lower)`.
pub fn box_constraint(n_vars: usize, var: usize, lower: f64, upper: f64) -> Polynomial {
    let x = Polynomial::variable(n_vars, var);
    let up = Polynomial::constant(n_vars, upper).sub(&x).expect("same n");
    let lo = x.sub(&Polynomial::constant(n_vars, lower)).expect("same n");
    up.mul(&lo).expect("same n")
}

/// Degrees and monomial bases of the minimal-order relaxation.
#[derive(Debug, Clone)]
pub struct RelaxationPlan {
    pub t: u32,
    /// `ceil(deg g_i / 2)` per constraint.
    pub half_degrees: Vec<u32>,
    pub z0: MonomialBasis,
    pub zi: Vec<MonomialBasis>,
    /// Every exponent of degree `<= 2t`; indexes constraints and moments.
    pub moments: MonomialBasis,
}

impl RelaxationPlan {
    pub fn n_vars(&self) -> usize {
        self.z0.n_vars()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        std::iter::once(self.z0.len())
            .chain(self.zi.iter().map(MonomialBasis::len))
            .collect()
    }

    pub fn n_constraints(&self) -> usize {
        self.moments.len()
    }
}

pub fn relaxation_order(problem: &PolyProblem) -> RelaxationPlan {
    let n = problem.n_vars();
    let max_deg = problem
        .constraints
        .iter()
        .map(Polynomial::degree)
        .chain(std::iter::once(problem.objective.degree()))
        .max()
        .unwrap_or(0);
    let t = max_deg.div_ceil(2).max(1);
    let half_degrees: Vec<u32> = problem
        .constraints
        .iter()
        .map(|g| g.degree().div_ceil(2))
        .collect();
    RelaxationPlan {
        t,
        z0: MonomialBasis::new(n, t),
        zi: half_degrees
            .iter()
            .map(|&e| MonomialBasis::new(n, t - e))
            .collect(),
        moments: MonomialBasis::new(n, 2 * t),
        half_degrees,
    }
}

/// Upper-triangle entries `(row, col, value)` of one symmetric selection matrix.
pub type SparseSelection = Vec<(usize, usize, f64)>;

/// `A_alpha` and `B_{i,alpha}` for every moment exponent `alpha`.
#[derive(Debug, Clone)]
pub struct SelectionMatrices {
    /// Indexed by moment index.
    pub moment: Vec<SparseSelection>,
    /// Indexed by constraint, then moment index.
    pub localizing: Vec<Vec<SparseSelection>>,
}

fn to_dense(entries: &SparseSelection, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for &(r, c, v) in entries {
        m[(r, c)] += v;
        if r != c {
            m[(c, r)] += v;
        }
    }
    m
}

impl SelectionMatrices {
    pub fn moment_dense(&self, plan: &RelaxationPlan, alpha: usize) -> DMatrix<f64> {
        to_dense(&self.moment[alpha], plan.z0.len())
    }

    pub fn localizing_dense(&self, plan: &RelaxationPlan, i: usize, alpha: usize) -> DMatrix<f64> {
        to_dense(&self.localizing[i][alpha], plan.zi[i].len())
    }
}

pub fn selection_matrices(plan: &RelaxationPlan, problem: &PolyProblem) -> SelectionMatrices {
    let n_mom = plan.moments.len();
    let mut moment = vec![Vec::new(); n_mom];
    for j in 0..plan.z0.len() {
        for k in j..plan.z0.len() {
            let alpha = plan.z0[j].add(&plan.z0[k]);
            let idx = plan.moments.index_of(&alpha).expect("degree <= 2t");
            moment[idx].push((j, k, 1.0));
        }
    }
    let localizing = problem
        .constraints
        .iter()
        .zip(&plan.zi)
        .map(|(g, zi)| {
            let mut acc: Vec<std::collections::BTreeMap<(usize, usize), f64>> =
                vec![Default::default(); n_mom];
            for j in 0..zi.len() {
                for k in j..zi.len() {
                    let base = zi[j].add(&zi[k]);
                    for (beta, h) in g.terms() {
                        let alpha = base.add(beta);
                        let idx = plan.moments.index_of(&alpha).expect("degree <= 2t");
                        *acc[idx].entry((j, k)).or_insert(0.0) += h;
                    }
                }
            }
            acc.into_iter()
                .map(|m| {
                    m.into_iter()
                        .filter(|&(_, v)| v != 0.0)
                        .map(|((j, k), v)| (j, k, v))
                        .collect()
                })
                .collect()
        })
        .collect();
    SelectionMatrices { moment, localizing }
}

/// SOS primal: maximize `gamma` over Gram blocks `Q0, Q1, ..`; free variable 0 is `gamma`.
pub fn assemble_primal(plan: &RelaxationPlan, problem: &PolyProblem) -> SdpInstance {
    let sel = selection_matrices(plan, problem);
    let mut inst = SdpInstance::new(plan.block_dims(), 1, Sense::Maximize);
    inst.objective_free[0] = 1.0;
    for (a, alpha) in plan.moments.iter().enumerate() {
        let mut c = LinearConstraint::default();
        for &(r, col, v) in &sel.moment[a] {
            c.matrix.push(0, r, col, v);
        }
        for (i, loc) in sel.localizing.iter().enumerate() {
            for &(r, col, v) in &loc[a] {
                c.matrix.push(i + 1, r, col, v);
            }
        }
        if alpha.is_constant() {
            c.free.push((0, 1.0));
        }
        c.rhs = problem.objective.coefficient(alpha);
        inst.push_constraint(c);
    }
    inst
}

/// Moment form: minimize `sum c_a y_a` with `y_0 = 1` substituted out.
///
/// Free variable `k` is the moment of `plan.moments[k + 1]`. Block 0 holds the
/// moment matrix and block `i + 1` the localizing matrix of `g_i`; each upper
/// triangle entry is tied to its moment expression by one equality.
pub fn assemble_dual(plan: &RelaxationPlan, problem: &PolyProblem) -> SdpInstance {
    let sel = selection_matrices(plan, problem);
    let n_mom = plan.moments.len();
    let mut inst = SdpInstance::new(plan.block_dims(), n_mom - 1, Sense::Minimize);
    for (a, alpha) in plan.moments.iter().enumerate() {
        let c = problem.objective.coefficient(alpha);
        if a == 0 {
            inst.objective_offset = c;
        } else {
            inst.objective_free[a - 1] = c;
        }
    }
    let mut push_block = |block: usize, dim: usize, per_alpha: &[SparseSelection]| {
        let mut rows: std::collections::BTreeMap<(usize, usize), Vec<(usize, f64)>> = Default::default();
        for j in 0..dim {
            for k in j..dim {
                rows.insert((j, k), Vec::new());
            }
        }
        for (a, entries) in per_alpha.iter().enumerate() {
            for &(j, k, v) in entries {
                rows.get_mut(&(j, k)).expect("upper triangle").push((a, v));
            }
        }
        for ((j, k), terms) in rows {
            let mut c = LinearConstraint::default();
            c.matrix.push(block, j, k, if j == k { 1.0 } else { 0.5 });
            for (a, v) in terms {
                if a == 0 {
                    c.rhs += v;
                } else {
                    c.free.push((a - 1, -v));
                }
            }
            inst.push_constraint(c);
        }
    };
    push_block(0, plan.z0.len(), &sel.moment);
    for (i, loc) in sel.localizing.iter().enumerate() {
        push_block(i + 1, plan.zi[i].len(), loc);
    }
    inst
}

/// Moments `y_alpha` indexed like `plan.moments`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub values: Vec<f64>,
}

impl MomentVector {
    /// Moments of the point mass at `x`: `y_alpha = x^alpha`.
    pub fn from_point(plan: &RelaxationPlan, x: &[f64]) -> Self {
        MomentVector {
            values: plan.moments.evaluate(x),
        }
    }

    /// Multipliers of the SOS primal equalities.
    pub fn from_primal_solution(sol: &SdpSolution) -> Self {
        MomentVector { values: sol.y.clone() }
    }

    /// Free variables of the moment-form instance, with `y_0 = 1` restored.
    pub fn from_dual_solution(sol: &SdpSolution) -> Self {
        let mut values = Vec::with_capacity(sol.free.len() + 1);
        values.push(1.0);
        values.extend_from_slice(&sol.free);
        MomentVector { values }
    }

    pub fn get(&self, plan: &RelaxationPlan, alpha: &PowerVector) -> Option<f64> {
        plan.moments.index_of(alpha).map(|i| self.values[i])
    }

    /// `sum_a c_a y_a`.
    pub fn objective(&self, plan: &RelaxationPlan, f: &Polynomial) -> f64 {
        plan.moments
            .iter()
            .zip(&self.values)
            .map(|(a, y)| f.coefficient(a) * y)
            .sum()
    }

    /// `U_0 = sum_a A_a y_a`.
    pub fn moment_matrix(&self, plan: &RelaxationPlan, sel: &SelectionMatrices) -> DMatrix<f64> {
        let mut u = DMatrix::zeros(plan.z0.len(), plan.z0.len());
        for (a, y) in self.values.iter().enumerate() {
            for &(r, c, v) in &sel.moment[a] {
                u[(r, c)] += v * y;
                if r != c {
                    u[(c, r)] += v * y;
                }
            }
        }
        u
    }

    /// `U_i = sum_a B_{i,a} y_a`.
    pub fn localizing_matrix(&self, plan: &RelaxationPlan, sel: &SelectionMatrices, i: usize) -> DMatrix<f64> {
        let n = plan.zi[i].len();
        let mut u = DMatrix::zeros(n, n);
        for (a, y) in self.values.iter().enumerate() {
            for &(r, c, v) in &sel.localizing[i][a] {
                u[(r, c)] += v * y;
                if r != c {
                    u[(c, r)] += v * y;
                }
            }
        }
        u
    }
}

/// Reads `x_j = y_{e_j}` after checking `y_0 ~ 1` and `|y_{2e_j} - x_j^2| <= moment_tol`.
pub fn extract_minimizer(
    y: &MomentVector,
    plan: &RelaxationPlan,
    moment_tol: f64,
) -> Result<Vec<f64>, RelaxationError> {
    let n = plan.n_vars();
    if y.values.len() != plan.moments.len() {
        return Err(RelaxationError::ExtractionFailed(format!(
            "moment vector has {} entries, expected {}",
            y.values.len(),
            plan.moments.len()
        )));
    }
    if (y.values[0] - 1.0).abs() > moment_tol {
        return Err(RelaxationError::ExtractionFailed(format!(
            "y_0 = {} is not normalized",
            y.values[0]
        )));
    }
    let mut x = Vec::with_capacity(n);
    for j in 0..n {
        let first = y.get(plan, &PowerVector::unit(n, j)).expect("degree 1 present");
        let mut two = vec![0; n];
        two[j] = 2;
        let second = y.get(plan, &PowerVector::new(two)).expect("degree 2 present");
        if !first.is_finite() {
            return Err(RelaxationError::ExtractionFailed(format!("moment of x{} is not finite", j + 1)));
        }
        let defect = (second - first * first).abs();
        if defect > moment_tol {
            return Err(RelaxationError::ExtractionFailed(format!(
                "second moment of x{} deviates from the squared first moment by {defect:e}",
                j + 1
            )));
        }
        x.push(first);
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CertificateStatus {
    GloballyCertified,
    RelaxationGap,
    ExtractionFailed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Allowed `f(x*) - gamma*`.
    pub cert: f64,
    pub feas: f64,
    pub psd: f64,
    /// Relative to the largest objective coefficient.
    pub recon: f64,
    /// Allowed `|y_{2e_j} - y_{e_j}^2|` during extraction.
    pub moment: f64,
}

impl Tolerances {
    /// For coefficients rounded to three decimals.
    pub fn rounded_data() -> Self {
        Tolerances {
            cert: 5e-3,
            ..Self::exact_data()
        }
    }

    /// For full-precision, internally generated problems.
    pub fn exact_data() -> Self {
        Tolerances {
            cert: 1e-5,
            feas: 1e-6,
            psd: 1e-7,
            recon: 1e-6,
            moment: 1e-3,
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::exact_data()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub gamma_star: f64,
    pub x_star: Vec<f64>,
    pub objective_at_x: f64,
    pub max_constraint_violation: f64,
    /// `objective_at_x - gamma_star`.
    pub gap: f64,
    pub status: CertificateStatus,
}

impl CertificateReport {
    pub fn extraction_failed(gamma_star: f64) -> Self {
        CertificateReport {
            gamma_star,
            x_star: Vec::new(),
            objective_at_x: f64::NAN,
            max_constraint_violation: f64::NAN,
            gap: f64::NAN,
            status: CertificateStatus::ExtractionFailed,
        }
    }

    pub fn is_certified(&self) -> bool {
        self.status == CertificateStatus::GloballyCertified
    }
}

pub fn certify(
    x_star: &[f64],
    gamma_star: f64,
    problem: &PolyProblem,
    tol: &Tolerances,
) -> Result<CertificateReport, RelaxationError> {
    let objective_at_x = problem.objective.evaluate(x_star)?;
    let max_constraint_violation = problem.max_violation(x_star)?;
    let gap = objective_at_x - gamma_star;
    let certified = gap.is_finite() && gap <= tol.cert && max_constraint_violation <= tol.feas;
    Ok(CertificateReport {
        gamma_star,
        x_star: x_star.to_vec(),
        objective_at_x,
        max_constraint_violation,
        gap,
        status: if certified {
            CertificateStatus::GloballyCertified
        } else {
            CertificateStatus::RelaxationGap
        },
    })
}

/// `s(x) = sum_j p_j(x)^2`, optionally multiplied by constraint `multiplier`.
#[derive(Debug, Clone)]
pub struct SquaredTerms {
    pub multiplier: Option<usize>,
    pub squares: Vec<Polynomial>,
}

impl SquaredTerms {
    pub fn sum(&self, n_vars: usize) -> Polynomial {
        self.squares
            .iter()
            .fold(Polynomial::zero(n_vars), |acc, p| acc.add(&p.square()).expect("same n"))
    }
}

#[derive(Debug, Clone)]
pub struct SosCertificate {
    pub gamma_star: f64,
    pub terms: Vec<SquaredTerms>,
    /// Max coefficient deviation of `s0 + sum s_i g_i` from `f - gamma`, relative to `max |c_a|`.
    pub residual: f64,
}

/// Factors each Gram block into squares and checks the decomposition reproduces `f - gamma*`.
pub fn sos_certificate(
    primal: &SdpSolution,
    plan: &RelaxationPlan,
    problem: &PolyProblem,
    tol: &Tolerances,
) -> Result<SosCertificate, RelaxationError> {
    let n = plan.n_vars();
    let expected = plan.block_dims().len();
    if primal.x_blocks.len() != expected || primal.free.len() != 1 {
        return Err(RelaxationError::BlockMismatch {
            expected,
            found: primal.x_blocks.len(),
        });
    }
    let gamma_star = primal.free[0];
    let mut terms = Vec::with_capacity(expected);
    let mut total = Polynomial::zero(n);
    for (b, q) in primal.x_blocks.iter().enumerate() {
        let basis = if b == 0 { &plan.z0 } else { &plan.zi[b - 1] };
        let mut sym = q.clone();
        sym = (&sym + sym.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let min_eigenvalue = eig.eigenvalues.min();
        if min_eigenvalue < -tol.psd {
            return Err(RelaxationError::PsdViolation {
                block: b,
                min_eigenvalue,
            });
        }
        let mut squares = Vec::new();
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            let s = lam.sqrt();
            let mut p = Polynomial::zero(n);
            for (r, m) in basis.iter().enumerate() {
                p.add_term(m.clone(), s * eig.eigenvectors[(r, k)]);
            }
            squares.push(p);
        }
        let st = SquaredTerms {
            multiplier: if b == 0 { None } else { Some(b - 1) },
            squares,
        };
        let mut s = st.sum(n);
        if let Some(i) = st.multiplier {
            s = s.mul(&problem.constraints[i])?;
        }
        total = total.add(&s)?;
        terms.push(st);
    }
    let target = problem
        .objective
        .sub(&Polynomial::constant(n, gamma_star))?;
    let diff = total.sub(&target)?;
    let residual = diff.max_abs_coefficient() / problem.objective.max_abs_coefficient().max(1e-300);
    if !(residual <= tol.recon) {
        return Err(RelaxationError::ReconstructionFailed {
            residual,
            tolerance: tol.recon,
        });
    }
    Ok(SosCertificate {
        gamma_star,
        terms,
        residual,
    })
}

/// Everything produced by one relaxation solve.
///
/// The SDPs are solved for `f / scale` with `scale = max |c_a|`; `primal` is
/// reported in those units while `report` and `certificate` are in the units of `f`.
#[derive(Debug, Clone)]
pub struct SosOutcome {
    pub plan: RelaxationPlan,
    pub scale: f64,
    pub primal: SdpSolution,
    /// Solution of the moment-form instance, when requested.
    pub moment_form: Option<SdpSolution>,
    pub moments: MomentVector,
    pub report: CertificateReport,
    pub certificate: Result<SosCertificate, RelaxationError>,
}

impl SosOutcome {
    pub fn gamma_star(&self) -> f64 {
        self.report.gamma_star
    }

    pub fn solved(&self) -> bool {
        self.primal.status == SdpStatus::Optimal
    }

    /// Moment-form objective `sum c_a y_a` in the units of `f`.
    pub fn dual_bound(&self) -> Option<f64> {
        self.moment_form.as_ref().map(|s| s.primal_objective * self.scale)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SosOptions {
    pub solver: SolverSettings,
    pub tolerances: Tolerances,
    /// Also solve the moment-form instance and extract from its solution.
    pub solve_moment_form: bool,
}

impl Default for SosOptions {
    fn default() -> Self {
        SosOptions {
            solver: SolverSettings::default(),
            tolerances: Tolerances::default(),
            solve_moment_form: true,
        }
    }
}

/// Copy of `problem` with the objective divided by its largest coefficient.
pub fn normalized(problem: &PolyProblem) -> (PolyProblem, f64) {
    let m = problem.objective.max_abs_coefficient();
    let scale = if m > 0.0 { m } else { 1.0 };
    let mut p = problem.clone();
    p.objective = problem.objective.scale(1.0 / scale);
    (p, scale)
}

/// Assemble, solve, extract and certify.
pub fn solve_relaxation(problem: &PolyProblem, opts: &SosOptions) -> Result<SosOutcome, RelaxationError> {
    let (scaled, scale) = normalized(problem);
    let plan = relaxation_order(&scaled);
    let primal = sdp::solve(&assemble_primal(&plan, &scaled), &opts.solver)?;
    let gamma_star = primal.primal_objective * scale;

    let moment_form = if opts.solve_moment_form {
        Some(sdp::solve(&assemble_dual(&plan, &scaled), &opts.solver)?)
    } else {
        None
    };
    // the multipliers of the primal are moments too; keep the more accurate set
    let merit = |s: &SdpSolution| {
        let m = s.relative_gap.max(s.primal_infeasibility).max(s.dual_infeasibility);
        if s.status == SdpStatus::Optimal { m } else { f64::INFINITY }
    };
    let moments = match &moment_form {
        Some(sol) if merit(sol) < merit(&primal) => MomentVector::from_dual_solution(sol),
        _ => MomentVector::from_primal_solution(&primal),
    };

    let report = if primal.status != SdpStatus::Optimal {
        CertificateReport::extraction_failed(gamma_star)
    } else {
        match extract_minimizer(&moments, &plan, opts.tolerances.moment) {
            Ok(x) => certify(&x, gamma_star, problem, &opts.tolerances)?,
            Err(_) => CertificateReport::extraction_failed(gamma_star),
        }
    };
    let mut unscaled = primal.clone();
    for q in &mut unscaled.x_blocks {
        *q *= scale;
    }
    for g in &mut unscaled.free {
        *g *= scale;
    }
    let certificate = sos_certificate(&unscaled, &plan, problem, &opts.tolerances);
    Ok(SosOutcome {
        plan,
        scale,
        primal,
        moment_form,
        moments,
        report,
        certificate,
    })
}

fn monomial_label(alpha: &PowerVector) -> String {
    alpha
        .exponents()
        .iter()
        .enumerate()
        .map(|(i, e)| format!("x{}^{}", i + 1, e))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One line per monomial: `x1^a .. : c = terms`, Gram indices 1-based.
pub fn dump_constraints(plan: &RelaxationPlan, problem: &PolyProblem) -> String {
    let sel = selection_matrices(plan, problem);
    let mut out = String::new();
    for (a, alpha) in plan.moments.iter().enumerate() {
        let mut rhs_terms = Vec::new();
        let mut emit = |blk: usize, entries: &SparseSelection| {
            for &(r, c, v) in entries {
                let w = if r == c { v } else { 2.0 * v };
                rhs_terms.push(format!("{w} Q{blk}[{},{}]", r + 1, c + 1));
            }
        };
        emit(0, &sel.moment[a]);
        for (i, loc) in sel.localizing.iter().enumerate() {
            emit(i + 1, &loc[a]);
        }
        let gamma = if alpha.is_constant() { " - gamma" } else { "" };
        let _ = writeln!(
            out,
            "{} : {}{} = {}",
            monomial_label(alpha),
            problem.objective.coefficient(alpha),
            gamma,
            rhs_terms.join(" + ")
        );
    }
    out
}
