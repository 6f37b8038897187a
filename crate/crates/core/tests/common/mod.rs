//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use modal_sos::sdp::{LinearConstraint, SdpInstance, Sense};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SDP built around a known strictly complementary optimum.
pub struct ConstructedSdp {
    pub instance: SdpInstance,
    pub x: Vec<DMatrix<f64>>,
    pub z: Vec<DMatrix<f64>>,
    pub y: Vec<f64>,
    pub free: Vec<f64>,
    pub objective: f64,
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

/// Picks `X = Q diag(l, 0) Q'`, `Z = Q diag(0, w) Q'` per block, random
/// constraint matrices and duals, then derives `b`, `C` and `d` so that the
/// triple is optimal. `sense` only flips the sign convention of `C` and `y`.
pub fn constructed_instance(seed: u64, sense: Sense, with_free: bool) -> ConstructedSdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_blocks = rng.random_range(1..=3);
    let dims: Vec<usize> = (0..n_blocks).map(|_| rng.random_range(3..=5)).collect();
    let ranks: Vec<usize> = dims.iter().map(|&n| rng.random_range(1..=n / 2)).collect();
    let sym_dim: usize = dims.iter().map(|n| n * (n + 1) / 2).sum();
    // primal nondegeneracy needs m <= tangent dimension of the rank-r face,
    // dual nondegeneracy needs m >= sum r(r+1)/2; the midpoint keeps both
    // X and y unique with some margin
    let tangent: usize = dims
        .iter()
        .zip(&ranks)
        .map(|(&n, &r)| r * (r + 1) / 2 + r * (n - r))
        .sum();
    let floor: usize = ranks.iter().map(|&r| r * (r + 1) / 2).sum();
    let n_free = if with_free { 1 } else { 0 };
    let m = (floor + tangent).div_ceil(2) + n_free;
    assert!(m < sym_dim);

    let mut x = Vec::new();
    let mut z = Vec::new();
    for (&n, &rank) in dims.iter().zip(&ranks) {
        let q = random_orthogonal(&mut rng, n);
        let mut lx = DMatrix::zeros(n, n);
        let mut lz = DMatrix::zeros(n, n);
        for i in 0..n {
            if i < rank {
                lx[(i, i)] = rng.random_range(0.5..2.0);
            } else {
                lz[(i, i)] = rng.random_range(0.5..2.0);
            }
        }
        x.push(&q * lx * q.transpose());
        z.push(&q * lz * q.transpose());
    }
    let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let free: Vec<f64> = (0..n_free).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut inst = SdpInstance::new(dims.clone(), n_free, sense);
    for k in 0..m {
        let mut c = LinearConstraint::default();
        for (b, &n) in dims.iter().enumerate() {
            for i in 0..n {
                for j in i..n {
                    if rng.random::<f64>() < 0.5 {
                        c.matrix.push(b, i, j, rng.random_range(-1.0..1.0));
                    }
                }
            }
        }
        if c.matrix.is_empty() {
            c.matrix.push(0, 0, 0, 1.0);
        }
        if with_free && (k == 0 || rng.random::<f64>() < 0.3) {
            c.free.push((0, rng.random_range(0.5..1.5)));
        }
        c.rhs = c.matrix.inner(&x) + c.free.iter().map(|&(j, v)| v * free[j]).sum::<f64>();
        inst.push_constraint(c);
    }
    // Minimize: C = sum y A + Z, d = F'y. Maximize: C = sum y A - Z, d = F'y.
    let sgn = match sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost: Vec<DMatrix<f64>> = z.iter().map(|zb| zb * sgn).collect();
    for (k, c) in inst.constraints.iter().enumerate() {
        c.matrix.axpy_into(y[k], &mut cost);
    }
    for (b, cb) in cost.iter().enumerate() {
        for i in 0..cb.nrows() {
            for j in i..cb.ncols() {
                inst.objective_matrix.push(b, i, j, cb[(i, j)]);
            }
        }
    }
    for (k, c) in inst.constraints.iter().enumerate() {
        for &(j, v) in &c.free {
            inst.objective_free[j] += v * y[k];
        }
    }
    let objective: f64 = inst.constraints.iter().zip(&y).map(|(c, yk)| c.rhs * yk).sum();
    ConstructedSdp {
        instance: inst,
        x,
        z,
        y,
        free,
        objective,
    }
}

use modal_sos::polynomial::Polynomial;
use modal_sos::relaxation::PolyProblem;
use modal_sos::structural::{simulate_modal_data, MeasuredMode, ModalData, ModelUpdateProblem, ParamMap, ShearFrame};

/// `(theta exponent, psi exponent, coefficient)` of the three-decimal reference objective.
pub const REFERENCE_COEFFICIENTS: [(u32, u32, f64); 9] = [
    (0, 0, 229.584),
    (1, 0, 427.670),
    (0, 1, -403.687),
    (2, 0, 200.0),
    (1, 1, -803.687),
    (0, 2, 177.455),
    (2, 1, -400.0),
    (1, 2, 376.017),
    (2, 2, 200.0),
];

pub fn reference_polynomial() -> Polynomial {
    Polynomial::from_terms(2, REFERENCE_COEFFICIENTS.iter().map(|&(a, b, c)| (vec![a, b], c))).unwrap()
}

pub fn reference_poly_problem() -> PolyProblem {
    PolyProblem::with_box(
        reference_polynomial(),
        &[-1.0, -2.0],
        &[1.0, 2.0],
        vec!["theta".into(), "psi4".into()],
    )
    .unwrap()
}

/// Four stories of 12.06 lb at 10 lbf/in; the as-built frame has k4 = 9.
pub fn four_story_frames() -> (ShearFrame, ShearFrame) {
    let nominal = ShearFrame::uniform(4, 12.06, 10.0).unwrap();
    let as_built = nominal.with_stiffness(vec![10.0, 10.0, 10.0, 9.0]).unwrap();
    (nominal, as_built)
}

pub fn fourth_story_map() -> ParamMap {
    ParamMap { groups: vec![vec![4]] }
}

/// First mode of the as-built frame measured at floors 1-3.
pub fn fourth_story_data(rounded: bool) -> ModalData {
    if rounded {
        return ModalData {
            modes: vec![MeasuredMode {
                omega: 6.196,
                measured_dofs: vec![1, 2, 3],
                shape: vec![0.395, 0.742, 1.0],
                reference_unmeasured: None,
            }],
        };
    }
    let (_, as_built) = four_story_frames();
    simulate_modal_data(&as_built, &[1, 2, 3], 1).unwrap()
}

pub fn fourth_story_problem(rounded: bool) -> ModelUpdateProblem {
    let (nominal, _) = four_story_frames();
    ModelUpdateProblem::new(&nominal, &fourth_story_map(), &fourth_story_data(rounded), None).unwrap()
}

pub const PLANTED_STIFFNESS: [f64; 4] = [6.949, 8.103, 9.094, 14.650];

/// All four stories updated, two modes measured at floors 1-3: four stiffness
/// variables plus the fourth shape entry of each mode.
pub fn partial_six_variable_problem() -> (ModelUpdateProblem, Vec<f64>) {
    let nominal = ShearFrame::uniform(4, 12.06, 10.0).unwrap();
    let truth = nominal.with_stiffness(PLANTED_STIFFNESS.to_vec()).unwrap();
    let data = simulate_modal_data(&truth, &[1, 2, 3], 2).unwrap();
    let map = ParamMap::per_story(4);
    let theta = map.theta_from_stiffness(&nominal.stiffness_lbf_in, &truth.stiffness_lbf_in);
    (ModelUpdateProblem::new(&nominal, &map, &data, None).unwrap(), theta)
}

/// Complete measurement of all four modes: the residual is affine in theta.
pub fn complete_measurement_problem() -> ModelUpdateProblem {
    let nominal = ShearFrame::uniform(4, 12.06, 10.0).unwrap();
    let truth = nominal.with_stiffness(PLANTED_STIFFNESS.to_vec()).unwrap();
    let data = simulate_modal_data(&truth, &[1, 2, 3, 4], 4).unwrap();
    ModelUpdateProblem::new(&nominal, &ParamMap::per_story(4), &data, None).unwrap()
}

/// Uniform point in `[lower, upper]` shrunk by `margin` on each side.
pub fn interior_point(rng: &mut ChaCha8Rng, lower: &[f64], upper: &[f64], margin: f64) -> Vec<f64> {
    lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| {
            let w = u - l;
            rng.random_range(l + margin * w..u - margin * w)
        })
        .collect()
}

/// Dense degree-4 polynomial in two variables with coefficients in [-1, 1] on [-1, 1]^2.
pub fn random_box_problem(seed: u64) -> PolyProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = modal_sos::polynomial::monomial_basis(2, 4);
    let f = Polynomial::from_terms(
        2,
        basis.iter().map(|a| (a.exponents().to_vec(), rng.random_range(-1.0..1.0))),
    )
    .unwrap();
    PolyProblem::with_box(f, &[-1.0, -1.0], &[1.0, 1.0], vec!["x".into(), "y".into()]).unwrap()
}

/// Minimum over an `n x n` grid spanning the box, endpoints included.
pub fn grid_minimum(p: &Polynomial, lower: [f64; 2], upper: [f64; 2], n: usize) -> f64 {
    let step = |k: usize, d: usize| lower[d] + (upper[d] - lower[d]) * k as f64 / (n - 1) as f64;
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            best = best.min(p.evaluate(&[step(i, 0), step(j, 1)]).unwrap());
        }
    }
    best
}

/// Central-difference Jacobian of the stacked residual.
pub fn central_differences(p: &ModelUpdateProblem, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut j = DMatrix::zeros(p.n_residuals(), n);
    for k in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let d = (p.residual(&xp) - p.residual(&xm)) / (2.0 * h);
        j.set_column(k, &d);
    }
    j
}
