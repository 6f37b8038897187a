//! Built-in cases regenerated by `reproduce`.

use std::path::Path;

use anyhow::{bail, Result};
use modal_sos::local::Method;
use modal_sos::polynomial::Polynomial;
use modal_sos::structural::{frame_modes, simulate_modal_data, ModelUpdateProblem, Mode};
use serde::Serialize;

use crate::commands::{load_builtin_model, run_local, run_sos, MethodReport, Outcome};
use crate::input::{parse_modal_data, Source};
use crate::output::{Cell, InputHash, OutDir, Table};

pub const CASES: [&str; 4] = ["table1", "eq6-fixture", "table3-freqs", "fig3-grid"];

const FOUR_STORY: &str = include_str!("../../../data/numerical/four_story.toml");
const ROUNDED_MODES: &str = include_str!("../../../data/numerical/four_story_rounded_modes.toml");

/// Three-decimal reference coefficients of the fourth-story objective, `(theta power, psi4 power, value)`.
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

/// Identified stiffness of the laboratory frame (lbf/in) and the frequencies it should produce (Hz).
pub const UPDATED_STIFFNESS: [f64; 4] = [6.949, 8.103, 9.094, 14.650];
pub const UPDATED_FREQUENCIES_HZ: [f64; 4] = [0.88, 2.74, 4.29, 5.53];
pub const FREQUENCY_TOL_HZ: f64 = 0.01;

pub fn reference_polynomial() -> Polynomial {
    Polynomial::from_terms(2, REFERENCE_COEFFICIENTS.iter().map(|&(a, b, c)| (vec![a, b], c))).expect("two variables")
}

/// The fourth-story problem from exact simulated data, or from the three-decimal data.
pub fn four_story_problem(rounded: bool) -> Result<(ModelUpdateProblem, Vec<InputHash>)> {
    let (model, mh) = load_builtin_model("four_story.toml", FOUR_STORY)?;
    let (data, dh) = if rounded {
        let src = Source {
            path: "builtin:four_story_rounded_modes.toml".into(),
            text: ROUNDED_MODES.into(),
        };
        let d = parse_modal_data(&src, model.frame.n_stories())?;
        (d, Some(InputHash::builtin("four_story_rounded_modes.toml", ROUNDED_MODES)))
    } else {
        let spec = model.simulate.as_ref().expect("builtin model has a simulation section");
        (simulate_modal_data(&model.simulation_frame()?, &spec.measured_dofs, spec.n_modes)?, None)
    };
    let n = model.frame.n_stories();
    let problem = ModelUpdateProblem::new(&model.frame, &model.params, &data, model.bounds_for(data.n_unmeasured(n)))?;
    Ok((problem, std::iter::once(mh).chain(dh).collect()))
}

#[derive(Serialize)]
struct CaseReport<T: Serialize> {
    command: &'static str,
    case: String,
    inputs: Vec<InputHash>,
    ok: bool,
    #[serde(flatten)]
    details: T,
}

fn finish<T: Serialize>(out: &Path, case: &str, inputs: Vec<InputHash>, ok: bool, table: Table, csv: &str, details: T) -> Result<Outcome> {
    let dir = OutDir::create(out)?;
    let files = vec![
        dir.write(csv, &table.to_csv())?,
        dir.write_json(
            "report.json",
            &CaseReport {
                command: "reproduce",
                case: case.into(),
                inputs,
                ok,
                details,
            },
        )?,
    ];
    // the grid is too long for the console
    let text = if table.rows.len() > 50 { String::new() } else { table.to_text() };
    Ok(Outcome { ok, text, files })
}

pub fn reproduce(case: &str, out: &Path, tol_cert: Option<f64>) -> Result<Outcome> {
    match case {
        "table1" => local_versus_global(out, tol_cert),
        "eq6-fixture" => coefficient_fixture(out),
        "table3-freqs" => updated_frequencies(out),
        "fig3-grid" => objective_grid(out),
        other => bail!("unknown case {other:?}; expected one of {}", CASES.join(", ")),
    }
}

#[derive(Serialize)]
struct RowsDetails {
    rows: Vec<MethodReport>,
}

fn local_versus_global(out: &Path, tol_cert: Option<f64>) -> Result<Outcome> {
    let (problem, inputs) = four_story_problem(false)?;
    let mut rows = vec![run_sos(&problem, tol_cert)];
    for start in [[0.0, 0.0], [-0.95, 1.0]] {
        for m in [Method::GaussNewton, Method::TrustRegion] {
            rows.push(run_local(&problem, m, &start).0);
        }
    }
    let mut t = Table::new(["method", "start_theta", "start_psi4", "theta", "psi4", "objective", "status"]);
    for r in &rows {
        let x = |v: Option<&Vec<f64>>| v.map_or(Cell::Text(String::new()), |v| Cell::Num(v[0]));
        let start = if r.method == "sos" { [Cell::Text(String::new()), Cell::Text(String::new())] } else { [r.start[0].into(), r.start[1].into()] };
        let [s0, s1] = start;
        t.push(vec![
            r.method.clone().into(),
            s0,
            s1,
            x(r.theta.as_ref()),
            x(r.psi_unmeasured.as_ref()),
            r.objective_final.map_or(Cell::Text(String::new()), Cell::Num),
            r.status.clone().into(),
        ]);
    }
    let ok = rows.iter().all(|r| r.ok);
    finish(out, "table1", inputs, ok, t, "table1.csv", RowsDetails { rows })
}

#[derive(Serialize)]
struct CoefficientDetails {
    max_abs_diff_rounded: f64,
    max_abs_diff_exact: f64,
}

fn coefficient_fixture(out: &Path) -> Result<Outcome> {
    let (rounded, inputs) = four_story_problem(true)?;
    let (exact, _) = four_story_problem(false)?;
    let (pr, pe) = (rounded.objective_polynomial(), exact.objective_polynomial());
    let reference = reference_polynomial();
    let mut t = Table::new(["theta_power", "psi4_power", "reference", "rounded_data", "exact_data", "diff_rounded", "diff_exact"]);
    let (mut dr, mut de) = (0.0f64, 0.0f64);
    for total in 0..=4u32 {
        for a in (0..=total).rev() {
            let e = [a, total - a];
            let (c, r, x) = (reference.coefficient_of(&e), pr.coefficient_of(&e), pe.coefficient_of(&e));
            dr = dr.max((r - c).abs());
            de = de.max((x - c).abs());
            t.push(vec![(a as usize).into(), ((total - a) as usize).into(), c.into(), r.into(), x.into(), (r - c).into(), (x - c).into()]);
        }
    }
    finish(
        out,
        "eq6-fixture",
        inputs,
        true,
        t,
        "coefficients.csv",
        CoefficientDetails {
            max_abs_diff_rounded: dr,
            max_abs_diff_exact: de,
        },
    )
}

#[derive(Serialize)]
struct FrequencyDetails {
    stiffness_lbf_in: Vec<f64>,
    frequencies_hz: Vec<f64>,
    within_tolerance: bool,
}

fn updated_frequencies(out: &Path) -> Result<Outcome> {
    let (model, mh) = load_builtin_model("four_story.toml", FOUR_STORY)?;
    let frame = model.frame.with_stiffness(UPDATED_STIFFNESS.to_vec())?;
    let modes = frame_modes(&frame)?;
    let f: Vec<f64> = modes.iter().map(Mode::frequency_hz).collect();
    let mut t = Table::new(["mode", "frequency_hz", "omega_rad_s", "reference_hz", "diff_hz"]);
    for (i, (m, r)) in modes.iter().zip(UPDATED_FREQUENCIES_HZ).enumerate() {
        t.push(vec![(i + 1).into(), m.frequency_hz().into(), m.omega.into(), r.into(), (m.frequency_hz() - r).into()]);
    }
    let within = f.iter().zip(UPDATED_FREQUENCIES_HZ).all(|(a, b)| (a - b).abs() <= FREQUENCY_TOL_HZ);
    finish(
        out,
        "table3-freqs",
        vec![mh],
        true,
        t,
        "frequencies.csv",
        FrequencyDetails {
            stiffness_lbf_in: UPDATED_STIFFNESS.to_vec(),
            frequencies_hz: f,
            within_tolerance: within,
        },
    )
}

/// Grid spacing in theta and psi4. The objective is far steeper across its
/// valley (mostly the psi4 direction) than along it, so psi4 is sampled finer.
pub const GRID_STEPS: [f64; 2] = [0.01, 0.002];

#[derive(Serialize)]
struct GridDetails {
    steps: [f64; 2],
    argmin: [f64; 2],
    minimum: f64,
    /// Closed box spanned by the cells adjacent to the minimum cell.
    neighborhood: [[f64; 2]; 2],
}

fn objective_grid(out: &Path) -> Result<Outcome> {
    let p = reference_polynomial();
    let [ht, hp] = GRID_STEPS;
    // nodes are integer multiples of the step so that e.g. -0.1 is hit exactly
    let (kt, kp) = ((1.0 / ht).round() as i64, (2.0 / hp).round() as i64);
    let theta_at = |i: i64| i as f64 * ht;
    let psi_at = |j: i64| j as f64 * hp;
    let mut t = Table::new(["theta", "psi4", "objective"]);
    let mut best = (f64::INFINITY, (0, 0));
    for i in -kt..=kt {
        for j in -kp..=kp {
            let v = p.evaluate(&[theta_at(i), psi_at(j)])?;
            if v < best.0 {
                best = (v, (i, j));
            }
            t.push(vec![theta_at(i).into(), psi_at(j).into(), v.into()]);
        }
    }
    let (bi, bj) = best.1;
    let (bt, bp) = (theta_at(bi), psi_at(bj));
    let neighborhood = [
        [theta_at((bi - 1).max(-kt)), theta_at((bi + 1).min(kt))],
        [psi_at((bj - 1).max(-kp)), psi_at((bj + 1).min(kp))],
    ];
    let outcome = finish(
        out,
        "fig3-grid",
        vec![],
        true,
        t,
        "grid.csv",
        GridDetails {
            steps: GRID_STEPS,
            argmin: [bt, bp],
            minimum: best.0,
            neighborhood,
        },
    )?;
    Ok(Outcome {
        text: format!("grid minimum {} at theta = {bt:.4}, psi4 = {bp:.4}\n", best.0),
        ..outcome
    })
}
