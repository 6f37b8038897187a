//! The `simulate`, `update`, `multistart` and `reproduce` pipelines.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use modal_sos::local::{
    multistart as run_multistart, project, Execution, LeastSquares, LocalOptions, LocalResult, Method,
    MultistartReport, HISTOGRAM_BINS,
};
use modal_sos::relaxation::{solve_relaxation, CertificateStatus, SosOptions, Tolerances};
use modal_sos::sdp::SdpStatus;
use modal_sos::structural::{
    compare_models, simulate_modal_data, ModalComparison, ModalData, ModelUpdateProblem,
};
use serde::Serialize;

use crate::input::{parse_modal_data, parse_model, write_modal_data, Model, Source};
use crate::output::{Cell, InputHash, OutDir, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSel {
    Sos,
    GaussNewton,
    TrustRegion,
    All,
}

impl MethodSel {
    fn includes_sos(self) -> bool {
        matches!(self, MethodSel::Sos | MethodSel::All)
    }

    fn local_methods(self) -> Vec<Method> {
        match self {
            MethodSel::Sos => vec![],
            MethodSel::GaussNewton => vec![Method::GaussNewton],
            MethodSel::TrustRegion => vec![Method::TrustRegion],
            MethodSel::All => vec![Method::GaussNewton, Method::TrustRegion],
        }
    }
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::GaussNewton => "gauss-newton",
        Method::TrustRegion => "trust-region",
    }
}

/// What a command produced, for the exit code and the console.
#[derive(Debug)]
pub struct Outcome {
    pub ok: bool,
    pub text: String,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.text)?;
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

fn load_model(path: &Path) -> Result<(Model, InputHash)> {
    let src = Source::read(path)?;
    let model = parse_model(&src)?;
    Ok((model, InputHash::of(path, &src.text)))
}

fn load_modal(path: &Path, n_dofs: usize) -> Result<(ModalData, InputHash)> {
    let src = Source::read(path)?;
    let data = parse_modal_data(&src, n_dofs)?;
    Ok((data, InputHash::of(path, &src.text)))
}

fn build_problem(model: &Model, data: &ModalData) -> Result<ModelUpdateProblem> {
    let n = model.frame.n_stories();
    let bounds = model.bounds_for(data.n_unmeasured(n));
    Ok(ModelUpdateProblem::new(&model.frame, &model.params, data, bounds)?)
}

pub struct SimulateConfig {
    pub model: PathBuf,
    pub out: PathBuf,
    pub measured_dofs: Option<Vec<usize>>,
    pub n_modes: Option<usize>,
}

#[derive(Serialize)]
struct SimulateReport {
    command: &'static str,
    inputs: Vec<InputHash>,
    stiffness_lbf_in: Vec<f64>,
    measured_dofs: Vec<usize>,
    data: ModalData,
}

pub fn simulate(cfg: &SimulateConfig) -> Result<Outcome> {
    let (model, hash) = load_model(&cfg.model)?;
    let spec = model.simulate.clone();
    let n = model.frame.n_stories();
    let dofs = cfg
        .measured_dofs
        .clone()
        .or_else(|| spec.as_ref().map(|s| s.measured_dofs.clone()))
        .unwrap_or_else(|| (1..=n).collect());
    let n_modes = cfg.n_modes.or(spec.as_ref().map(|s| s.n_modes)).unwrap_or(n);
    let frame = model.simulation_frame()?;
    let data = simulate_modal_data(&frame, &dofs, n_modes)?;

    let out = OutDir::create(&cfg.out)?;
    let mut table = Table::new(["mode", "frequency_hz", "omega_rad_s"]);
    let width = data.modes.iter().map(|m| m.shape.len()).max().unwrap_or(0);
    table.header.extend((1..=width).map(|i| format!("shape{i}")));
    for (i, m) in data.modes.iter().enumerate() {
        let mut row: Vec<Cell> = vec![(i + 1).into(), m.frequency_hz().into(), m.omega.into()];
        row.extend(m.shape.iter().map(|&v| Cell::from(v)));
        table.push(row);
    }
    let files = vec![
        out.write("modal_data.toml", &write_modal_data(&data))?,
        out.write("modes.csv", &table.to_csv())?,
        out.write_json(
            "report.json",
            &SimulateReport {
                command: "simulate",
                inputs: vec![hash],
                stiffness_lbf_in: frame.stiffness_lbf_in.clone(),
                measured_dofs: dofs,
                data,
            },
        )?,
    ];
    Ok(Outcome {
        ok: true,
        text: table.to_text(),
        files,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub status: String,
    pub ok: bool,
    pub start: Vec<f64>,
    pub theta: Option<Vec<f64>>,
    pub stiffness_lbf_in: Option<Vec<f64>>,
    pub psi_unmeasured: Option<Vec<f64>>,
    pub objective_initial: f64,
    pub objective_final: Option<f64>,
    pub gamma_star: Option<f64>,
    pub certificate: Option<CertificateStatus>,
    pub iterations: usize,
    pub comparison: Option<ModalComparison>,
    pub seconds: f64,
}

impl MethodReport {
    fn with_point(mut self, problem: &ModelUpdateProblem, x: &[f64]) -> Self {
        let nt = problem.n_theta();
        let theta = x[..nt].to_vec();
        let k = problem.params.updated_stiffness(&problem.frame.stiffness_lbf_in, &theta);
        self.comparison = problem
            .frame
            .with_stiffness(k.clone())
            .ok()
            .and_then(|f| compare_models(problem.data(), &f).ok());
        self.theta = Some(theta);
        self.stiffness_lbf_in = Some(k);
        self.psi_unmeasured = Some(x[nt..].to_vec());
        self.objective_final = Some(LeastSquares::objective(problem, x));
        self
    }
}

pub fn sos_options(tol_cert: Option<f64>) -> SosOptions {
    let mut tolerances = Tolerances::default();
    if let Some(t) = tol_cert {
        tolerances.cert = t;
    }
    SosOptions {
        tolerances,
        ..SosOptions::default()
    }
}

fn blank(problem: &ModelUpdateProblem, method: &str, start: &[f64]) -> MethodReport {
    MethodReport {
        method: method.into(),
        status: String::new(),
        ok: false,
        start: start.to_vec(),
        theta: None,
        stiffness_lbf_in: None,
        psi_unmeasured: None,
        objective_initial: LeastSquares::objective(problem, start),
        objective_final: None,
        gamma_star: None,
        certificate: None,
        iterations: 0,
        comparison: None,
        seconds: 0.0,
    }
}

pub fn run_sos(problem: &ModelUpdateProblem, tol_cert: Option<f64>) -> MethodReport {
    let t = Instant::now();
    let start = project(&vec![0.0; problem.n_vars()], &problem.lower(), &problem.upper());
    let base = blank(problem, "sos", &start);
    let poly = match problem.to_poly_problem() {
        Ok(p) => p,
        Err(e) => {
            return MethodReport {
                status: format!("error: {e}"),
                ..base
            }
        }
    };
    let mut rep = match solve_relaxation(&poly, &sos_options(tol_cert)) {
        Ok(out) => {
            let r = &out.report;
            let rep = MethodReport {
                status: format!("{:?}", out.primal.status),
                ok: out.primal.status == SdpStatus::Optimal,
                gamma_star: Some(out.gamma_star()),
                certificate: Some(r.status),
                iterations: out.primal.iterations,
                ..base
            };
            // no minimizer is reported unless one was extracted
            if r.x_star.is_empty() {
                rep
            } else {
                rep.with_point(problem, &r.x_star)
            }
        }
        Err(e) => MethodReport {
            status: format!("error: {e}"),
            ..base
        },
    };
    rep.seconds = t.elapsed().as_secs_f64();
    rep
}

pub fn run_local(problem: &ModelUpdateProblem, method: Method, start: &[f64]) -> (MethodReport, LocalResult) {
    let t = Instant::now();
    let start = project(start, &problem.lower(), &problem.upper());
    let r = method.run(problem, &start, &LocalOptions::default());
    let mut rep = MethodReport {
        status: r.reason(),
        ok: r.converged,
        iterations: r.iterations,
        ..blank(problem, method_name(method), &start)
    }
    .with_point(problem, &r.x_final);
    rep.seconds = t.elapsed().as_secs_f64();
    (rep, r)
}

fn opt(v: Option<f64>) -> Cell {
    v.map_or(Cell::Text(String::new()), Cell::Num)
}

fn results_table(problem: &ModelUpdateProblem, results: &[MethodReport]) -> Table {
    let mut t = Table::new(["method", "status", "certificate", "objective_initial", "objective_final", "gamma_star"]);
    t.header.extend(problem.var_names.iter().cloned());
    t.header.extend((1..=problem.frame.n_stories()).map(|i| format!("k{i}_lbf_in")));
    for r in results {
        let mut row: Vec<Cell> = vec![
            r.method.clone().into(),
            r.status.clone().into(),
            r.certificate.map_or(String::new(), |c| format!("{c:?}")).into(),
            r.objective_initial.into(),
            opt(r.objective_final),
            opt(r.gamma_star),
        ];
        let x: Option<Vec<f64>> = r.theta.as_ref().map(|t| t.iter().chain(r.psi_unmeasured.iter().flatten()).copied().collect());
        for i in 0..problem.n_vars() {
            row.push(opt(x.as_ref().map(|x| x[i])));
        }
        for i in 0..problem.frame.n_stories() {
            row.push(opt(r.stiffness_lbf_in.as_ref().map(|k| k[i])));
        }
        t.push(row);
    }
    t
}

fn comparison_table(results: &[MethodReport]) -> Table {
    let mut t = Table::new(["method", "mode", "f_exp_hz", "f_model_hz", "delta_f_percent", "mac"]);
    for r in results {
        for c in r.comparison.iter().flat_map(|c| &c.modes) {
            t.push(vec![
                r.method.clone().into(),
                c.mode.into(),
                c.f_exp_hz.into(),
                c.f_model_hz.into(),
                c.delta_f_percent.into(),
                c.mac.into(),
            ]);
        }
    }
    t
}

pub struct UpdateConfig {
    pub model: PathBuf,
    pub modal_data: PathBuf,
    pub method: MethodSel,
    pub out: PathBuf,
    pub tol_cert: Option<f64>,
}

#[derive(Serialize)]
struct UpdateReport<'a> {
    command: &'static str,
    inputs: Vec<InputHash>,
    var_names: &'a [String],
    lower: Vec<f64>,
    upper: Vec<f64>,
    results: &'a [MethodReport],
    ok: bool,
}

pub fn update(cfg: &UpdateConfig) -> Result<Outcome> {
    let (model, mh) = load_model(&cfg.model)?;
    let (data, dh) = load_modal(&cfg.modal_data, model.frame.n_stories())?;
    let problem = build_problem(&model, &data)?;
    let origin = vec![0.0; problem.n_vars()];
    let mut results = Vec::new();
    if cfg.method.includes_sos() {
        results.push(run_sos(&problem, cfg.tol_cert));
    }
    for m in cfg.method.local_methods() {
        results.push(run_local(&problem, m, &origin).0);
    }
    let ok = results.iter().all(|r| r.ok);
    let table = results_table(&problem, &results);
    let cmp = comparison_table(&results);
    let out = OutDir::create(&cfg.out)?;
    let files = vec![
        out.write("update.csv", &table.to_csv())?,
        out.write("comparison.csv", &cmp.to_csv())?,
        out.write_json(
            "report.json",
            &UpdateReport {
                command: "update",
                inputs: vec![mh, dh],
                var_names: &problem.var_names,
                lower: problem.lower(),
                upper: problem.upper(),
                results: &results,
                ok,
            },
        )?,
    ];
    Ok(Outcome {
        ok,
        text: format!("{}\n{}", table.to_text(), cmp.to_text()),
        files,
    })
}

pub struct MultistartConfig {
    pub model: PathBuf,
    pub modal_data: PathBuf,
    pub method: MethodSel,
    pub starts: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Also solve the relaxation and count starts that reach its bound.
    pub certify: bool,
    pub tol_cert: Option<f64>,
}

/// Starts within this distance (scaled by `max(1, |target|)`) of the target objective count as reaching it.
pub const OPTIMUM_TOL: f64 = 1e-4;

#[derive(Debug, Serialize)]
pub struct MultistartSummary {
    pub method: String,
    pub starts: usize,
    pub best_index: usize,
    pub best_objective: f64,
    pub best_x: Vec<f64>,
    pub best_converged: bool,
    pub target: f64,
    pub target_source: &'static str,
    pub reached_target: usize,
    pub converged: usize,
    pub histogram_edges: Vec<f64>,
    pub histogram_counts: Vec<usize>,
}

#[derive(Serialize)]
struct MultistartFile<'a> {
    command: &'static str,
    inputs: Vec<InputHash>,
    seed: u64,
    var_names: &'a [String],
    sos: Option<MethodReport>,
    summaries: Vec<MultistartSummary>,
    ok: bool,
}

pub fn summarize(report: &MultistartReport, gamma: Option<f64>) -> MultistartSummary {
    let best = report.best_result();
    let (target, target_source) = match gamma {
        Some(g) => (g, "gamma_star"),
        None => (best.objective_final, "best"),
    };
    MultistartSummary {
        method: method_name(report.method).into(),
        starts: report.starts.len(),
        best_index: report.best,
        best_objective: best.objective_final,
        best_x: best.x_final.clone(),
        best_converged: best.converged,
        target,
        target_source,
        reached_target: report.count_near(target, OPTIMUM_TOL * target.abs().max(1.0)),
        converged: report.starts.iter().filter(|s| s.result.converged).count(),
        histogram_edges: report.histogram.edges.clone(),
        histogram_counts: report.histogram.counts.clone(),
    }
}

pub fn multistart(cfg: &MultistartConfig) -> Result<Outcome> {
    if cfg.starts == 0 {
        bail!("--starts must be at least 1");
    }
    let methods = cfg.method.local_methods();
    if methods.is_empty() {
        bail!("multistart needs a local method (gauss-newton, trust-region or all)");
    }
    let (model, mh) = load_model(&cfg.model)?;
    let (data, dh) = load_modal(&cfg.modal_data, model.frame.n_stories())?;
    let problem = build_problem(&model, &data)?;
    let sos = cfg.certify.then(|| run_sos(&problem, cfg.tol_cert));
    let gamma = sos.as_ref().and_then(|s| s.gamma_star);

    let names = &problem.var_names;
    let mut starts = Table::new(["method", "index"]);
    starts.header.extend(names.iter().map(|n| format!("start_{n}")));
    starts.header.extend(names.iter().map(|n| format!("final_{n}")));
    starts.header.extend(["objective", "iterations", "converged", "reason"].map(String::from));
    let mut hist = Table::new(["method", "bin", "lower", "upper", "count"]);
    let mut summary = Table::new(["method", "starts", "best_objective", "target", "target_source", "reached_target", "converged"]);
    let mut summaries = Vec::new();
    for m in methods {
        let rep = run_multistart(&problem, cfg.starts, cfg.seed, m, &LocalOptions::default(), Execution::Parallel);
        for s in &rep.starts {
            let mut row: Vec<Cell> = vec![method_name(m).into(), s.index.into()];
            row.extend(s.start.iter().chain(&s.result.x_final).map(|&v| Cell::from(v)));
            row.extend([
                s.result.objective_final.into(),
                s.result.iterations.into(),
                s.result.converged.to_string().into(),
                s.result.reason().into(),
            ]);
            starts.push(row);
        }
        let h = &rep.histogram;
        for (b, c) in h.counts.iter().enumerate() {
            hist.push(vec![method_name(m).into(), b.into(), h.edges[b].into(), h.edges[b + 1].into(), (*c).into()]);
        }
        let s = summarize(&rep, gamma);
        summary.push(vec![
            s.method.clone().into(),
            s.starts.into(),
            s.best_objective.into(),
            s.target.into(),
            s.target_source.into(),
            s.reached_target.into(),
            s.converged.into(),
        ]);
        summaries.push(s);
    }
    debug_assert_eq!(hist.rows.len() % HISTOGRAM_BINS, 0);
    let ok = summaries.iter().all(|s| s.best_converged) && sos.as_ref().is_none_or(|s| s.ok);
    let out = OutDir::create(&cfg.out)?;
    let files = vec![
        out.write("starts.csv", &starts.to_csv())?,
        out.write("histogram.csv", &hist.to_csv())?,
        out.write("summary.csv", &summary.to_csv())?,
        out.write_json(
            "report.json",
            &MultistartFile {
                command: "multistart",
                inputs: vec![mh, dh],
                seed: cfg.seed,
                var_names: names,
                sos,
                summaries,
                ok,
            },
        )?,
    ];
    Ok(Outcome {
        ok,
        text: summary.to_text(),
        files,
    })
}

pub fn load_builtin_model(name: &str, text: &str) -> Result<(Model, InputHash)> {
    let src = Source {
        path: format!("builtin:{name}").into(),
        text: text.into(),
    };
    let model = parse_model(&src).with_context(|| format!("builtin model {name}"))?;
    Ok((model, InputHash::builtin(name, text)))
}
