//! Convergence studies on the two-patch benchmark and their CSV output.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::analysis::{eoc, error_dual, error_primal};
use crate::assembly::{assemble_constrained, dirichlet_values, recouple, ProblemData, SaddleSystem, Strategy};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::multipatch::{build_two_patch, Case, Decomposition, DualVariant};
use crate::solver::{solve, solve_with, PrimalFactor, Solution};

/// `u = cos(πx) (cos(πy/2) + sin(2πy))` on `(0,1) × (-1,1)` with `α = 1`, `β = 0`.
pub fn benchmark_problem() -> ProblemData {
    ProblemData {
        alpha: Arc::new(|_| 1.0),
        beta: Arc::new(|_| 0.0),
        source: Arc::new(|x: Point| {
            (PI * x[0]).cos() * (1.25 * PI * PI * (0.5 * PI * x[1]).cos() + 5.0 * PI * PI * (2.0 * PI * x[1]).sin())
        }),
        exact: Some(Arc::new(|x: Point| {
            (PI * x[0]).cos() * ((0.5 * PI * x[1]).cos() + (2.0 * PI * x[1]).sin())
        })),
        exact_gradient: Some(Arc::new(|x: Point| {
            let (c, s) = ((PI * x[0]).cos(), (PI * x[0]).sin());
            let g = (0.5 * PI * x[1]).cos() + (2.0 * PI * x[1]).sin();
            let dg = -0.5 * PI * (0.5 * PI * x[1]).sin() + 2.0 * PI * (2.0 * PI * x[1]).cos();
            [-PI * s * g, c * dg]
        })),
    }
}

/// `u = 1 + x + 2y`, reproduced exactly by every discrete space.
pub fn linear_problem() -> ProblemData {
    ProblemData {
        alpha: Arc::new(|_| 1.0),
        beta: Arc::new(|_| 0.0),
        source: Arc::new(|_| 0.0),
        exact: Some(Arc::new(|x: Point| 1.0 + x[0] + 2.0 * x[1])),
        exact_gradient: Some(Arc::new(|_| [1.0, 2.0])),
    }
}

/// Interface Gauss points per element, as an order offset or directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    /// `q`, giving `p + 1 + q` points.
    Order(usize),
    Points(usize),
}

impl Quadrature {
    pub fn gauss_points(self, degree: usize) -> usize {
        match self {
            Quadrature::Order(q) => degree + 1 + q,
            Quadrature::Points(n) => n,
        }
    }
}

/// Parses `M0`, `M2`, or an explicit dual degree (`2` or `P2`).
pub fn parse_dual(s: &str) -> Result<DualVariant> {
    let t = s.trim().to_ascii_uppercase();
    match t.as_str() {
        "M0" => Ok(DualVariant::M0),
        "M2" => Ok(DualVariant::M2),
        _ => t
            .trim_start_matches('P')
            .parse::<usize>()
            .map(DualVariant::Degree)
            .map_err(|_| Error::Config(format!("unknown dual space '{s}'"))),
    }
}

pub fn dual_name(d: DualVariant) -> String {
    match d {
        DualVariant::M0 => "M0".into(),
        DualVariant::M2 => "M2".into(),
        DualVariant::Degree(k) => format!("P{k}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub case: Case,
    pub degree: usize,
    pub dual: DualVariant,
    pub strategy: Strategy,
    pub quadrature: Quadrature,
    pub levels: usize,
    pub swap_roles: bool,
    pub out: Option<PathBuf>,
}

pub fn default_levels(case: Case) -> usize {
    match case {
        Case::M1 | Case::M2 => 8,
        Case::M3 | Case::Matching => 7,
    }
}

impl StudyConfig {
    pub fn new(case: Case, degree: usize) -> Self {
        Self {
            case,
            degree,
            dual: DualVariant::M0,
            strategy: Strategy::Exact,
            quadrature: Quadrature::Order(0),
            levels: default_levels(case),
            swap_roles: false,
            out: None,
        }
    }

    pub fn gauss_points(&self) -> usize {
        self.quadrature.gauss_points(self.degree)
    }

    pub fn dual_degree(&self) -> Result<usize> {
        self.dual.degree(self.degree)
    }

    /// True when primal and dual degrees differ in parity; such runs are
    /// carried out but no stability is claimed for them.
    pub fn parity_mismatch(&self) -> Result<bool> {
        Ok((self.degree + self.dual_degree()?) % 2 == 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.degree) {
            return Err(Error::Config(format!("degree must be in 1..=5, got {}", self.degree)));
        }
        if self.levels == 0 {
            return Err(Error::Config("at least one level is required".into()));
        }
        self.dual_degree()?;
        let n = self.gauss_points();
        if !(1..=crate::quadrature::MAX_GAUSS_POINTS).contains(&n) {
            return Err(Error::Config(format!("{n} Gauss points per element are not supported")));
        }
        Ok(())
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        let mut m = vec![
            ("case".to_string(), self.case.to_string()),
            ("degree".to_string(), self.degree.to_string()),
            ("dual".to_string(), dual_name(self.dual)),
            ("strategy".to_string(), self.strategy.to_string()),
            ("gauss_points".to_string(), self.gauss_points().to_string()),
            ("levels".to_string(), self.levels.to_string()),
            ("swap_roles".to_string(), self.swap_roles.to_string()),
        ];
        if let Quadrature::Order(q) = self.quadrature {
            m.push(("quad_order".to_string(), q.to_string()));
        }
        if let Ok(d) = self.dual_degree() {
            m.push(("dual_degree".to_string(), d.to_string()));
            m.push(("parity_mismatch".to_string(), ((self.degree + d) % 2 == 1).to_string()));
        }
        m
    }
}

/// Level-0 decomposition of a configuration.
pub fn build_case(config: &StudyConfig) -> Result<Decomposition> {
    build_two_patch(config.case, config.degree, 0, config.swap_roles)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRow {
    pub level: usize,
    pub h_slave: f64,
    pub h_master: f64,
    pub ndof_primal: usize,
    pub ndof_dual: usize,
    /// `None` when the system was singular; the message is kept.
    pub outcome: std::result::Result<LevelErrors, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelErrors {
    pub err_primal: f64,
    pub err_dual: f64,
    pub eoc_primal: Option<f64>,
    pub eoc_dual: Option<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub rows: Vec<LevelRow>,
}

pub const CSV_HEADER: &str =
    "level,h_slave,h_master,ndof_primal,ndof_dual,err_l2_primal,err_l2_dual,eoc_primal,eoc_dual,residual";

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.15e}")
    } else {
        "nan".into()
    }
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "nan".into(), fmt_float)
}

impl StudyReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{},{},{},",
                r.level,
                fmt_float(r.h_slave),
                fmt_float(r.h_master),
                r.ndof_primal,
                r.ndof_dual
            );
            match &r.outcome {
                Ok(e) => {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{}",
                        fmt_float(e.err_primal),
                        fmt_float(e.err_dual),
                        fmt_rate(e.eoc_primal),
                        fmt_rate(e.eoc_dual),
                        fmt_float(e.residual)
                    );
                }
                Err(_) => s.push_str("failed,failed,failed,failed,failed\n"),
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Rates between the last two levels.
    pub fn last_eoc(&self) -> (Option<f64>, Option<f64>) {
        match self.rows.last().map(|r| &r.outcome) {
            Some(Ok(e)) => (e.eoc_primal, e.eoc_dual),
            _ => (None, None),
        }
    }

    pub fn errors(&self) -> Vec<Option<&LevelErrors>> {
        self.rows.iter().map(|r| r.outcome.as_ref().ok()).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.outcome.as_ref().ok()).fold(0.0, |m, e| m.max(e.residual))
    }
}

/// Assembled, constrained and solved system of one level.
#[derive(Debug)]
pub struct LevelRun {
    pub decomposition: Decomposition,
    pub system: SaddleSystem,
    pub solution: Solution,
}

/// Assembles and solves one level of a configuration.
pub fn run_level(config: &StudyConfig, problem: &ProblemData, level: usize) -> Result<LevelRun> {
    config.validate()?;
    let dec = build_two_patch(config.case, config.degree, level, config.swap_roles)?;
    let system = assemble_constrained(&dec, problem, config.dual, config.strategy, config.gauss_points())?;
    let solution = solve(&system)?;
    Ok(LevelRun { decomposition: dec, system, solution })
}

/// Runs one configuration per quadrature choice, sharing geometry,
/// stiffness assembly and its factorization across the choices.
pub fn run_sweep(config: &StudyConfig, quadratures: &[Quadrature], problem: &ProblemData) -> Result<Vec<StudyReport>> {
    let configs: Vec<StudyConfig> =
        quadratures.iter().map(|&q| StudyConfig { quadrature: q, ..config.clone() }).collect();
    for c in &configs {
        c.validate()?;
    }
    let exact = problem.exact.clone().ok_or_else(|| Error::Config("problem has no exact solution".into()))?;
    let mut reports: Vec<StudyReport> =
        configs.iter().map(|c| StudyReport { config: c.clone(), rows: Vec::new() }).collect();
    for level in 0..config.levels {
        let dec = build_two_patch(config.case, config.degree, level, config.swap_roles)?;
        let iface = &dec.interfaces[0];
        let h_slave = dec.patches[iface.slave].mesh_size();
        let h_master = dec.patches[iface.master].mesh_size();
        let mut system: Option<SaddleSystem> = None;
        let mut factor: Option<Result<PrimalFactor>> = None;
        let mut dirichlet: Vec<f64> = Vec::new();
        for (c, report) in configs.iter().zip(reports.iter_mut()) {
            let n_g = c.gauss_points();
            let sys = match system.take() {
                None => {
                    let s = assemble_constrained(&dec, problem, c.dual, c.strategy, n_g)?;
                    dirichlet = dirichlet_values(&dec, &s.dofmap, problem)?;
                    s
                }
                Some(s) => recouple(s, &dec, c.dual, c.strategy, n_g, &dirichlet)?,
            };
            let f = factor.get_or_insert_with(|| PrimalFactor::new(&sys.a));
            let solved = match f {
                Ok(f) => solve_with(&sys, f),
                Err(_) => solve(&sys),
            };
            let outcome = match solved {
                Ok(sol) => {
                    let err_primal = error_primal(&dec, &sol.primal, exact.as_ref())?;
                    let err_dual = error_dual(&dec, &sys.dofmap, c.dual, &sol.dual, problem)?;
                    let prev = report.rows.last().and_then(|r| {
                        r.outcome.as_ref().ok().map(|e| (r.h_slave, e.err_primal, e.err_dual))
                    });
                    let (eoc_primal, eoc_dual) = match prev {
                        Some((h, ep, ed)) => (eoc(ep, err_primal, h, h_slave), eoc(ed, err_dual, h, h_slave)),
                        None => (None, None),
                    };
                    Ok(LevelErrors { err_primal, err_dual, eoc_primal, eoc_dual, residual: sol.residual })
                }
                Err(e @ Error::SingularSystem { .. }) => Err(e.to_string()),
                Err(e) => return Err(e),
            };
            report.rows.push(LevelRow {
                level,
                h_slave,
                h_master,
                ndof_primal: sys.dofmap.num_primal,
                ndof_dual: sys.dofmap.num_dual,
                outcome,
            });
            system = Some(sys);
        }
    }
    Ok(reports)
}

/// Runs a study on the benchmark problem.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    run_study_with(config, &benchmark_problem())
}

pub fn run_study_with(config: &StudyConfig, problem: &ProblemData) -> Result<StudyReport> {
    let mut reports = run_sweep(config, &[config.quadrature], problem)?;
    Ok(reports.remove(0))
}

/// One cell of the quadrature-order table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub case: Case,
    pub degree: usize,
    pub quad_order: usize,
    pub gauss_points: usize,
    pub last_eoc_primal: Option<f64>,
    pub last_eoc_dual: Option<f64>,
    pub max_residual: f64,
}

pub const TABLE1_HEADER: &str = "case,degree,quad_order,gauss_points,last_eoc_primal,last_eoc_dual";

pub const TABLE1_ORDERS: [usize; 6] = [0, 1, 2, 3, 4, 5];

/// Degree-5 equal-order pairing with slave integration on M1 and M2 for
/// quadrature orders 0 to 5.
pub fn table1_cells(levels: usize) -> Result<Vec<TableCell>> {
    let orders: Vec<Quadrature> = TABLE1_ORDERS.iter().map(|&q| Quadrature::Order(q)).collect();
    let problem = benchmark_problem();
    let mut cells = Vec::new();
    for case in [Case::M1, Case::M2] {
        let config = StudyConfig { strategy: Strategy::SlaveOnly, levels, ..StudyConfig::new(case, 5) };
        for (report, &q) in run_sweep(&config, &orders, &problem)?.iter().zip(&TABLE1_ORDERS) {
            let (last_eoc_primal, last_eoc_dual) = report.last_eoc();
            cells.push(TableCell {
                case,
                degree: 5,
                quad_order: q,
                gauss_points: report.config.gauss_points(),
                last_eoc_primal,
                last_eoc_dual,
                max_residual: report.max_residual(),
            });
        }
    }
    Ok(cells)
}

pub fn table1_csv(cells: &[TableCell]) -> String {
    let mut s = String::from(TABLE1_HEADER);
    s.push('\n');
    for c in cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            c.case,
            c.degree,
            c.quad_order,
            c.gauss_points,
            fmt_rate(c.last_eoc_primal),
            fmt_rate(c.last_eoc_dual)
        );
    }
    s
}

/// Computes the table with eight levels and writes it as CSV.
pub fn table1(out: &Path) -> Result<Vec<TableCell>> {
    let cells = table1_cells(8)?;
    std::fs::write(out, table1_csv(&cells))?;
    Ok(cells)
}

/// Study settings from flags or a `key=value` file; unset fields are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudySettings {
    pub case: Option<Case>,
    pub degree: Option<usize>,
    pub dual: Option<DualVariant>,
    pub strategy: Option<Strategy>,
    pub quadrature: Option<Quadrature>,
    pub levels: Option<usize>,
    pub swap_roles: Option<bool>,
    pub out: Option<PathBuf>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

impl StudySettings {
    /// Parses `key=value` lines; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = StudySettings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim().replace('_', "-"), value.trim());
            match key.as_str() {
                "case" => s.case = Some(value.parse()?),
                "degree" => s.degree = Some(parse_value(&key, value)?),
                "dual" => s.dual = Some(parse_dual(value)?),
                "strategy" => s.strategy = Some(value.parse()?),
                "quad-order" | "gauss-points" => {
                    let v = parse_value(&key, value)?;
                    let q = if key == "quad-order" { Quadrature::Order(v) } else { Quadrature::Points(v) };
                    if s.quadrature.is_some_and(|old| std::mem::discriminant(&old) != std::mem::discriminant(&q)) {
                        return Err(Error::Config("quad-order and gauss-points are mutually exclusive".into()));
                    }
                    s.quadrature = Some(q);
                }
                "levels" => s.levels = Some(parse_value(&key, value)?),
                "swap-roles" => s.swap_roles = Some(parse_value(&key, value)?),
                "out" => s.out = Some(PathBuf::from(value)),
                _ => return Err(Error::Config(format!("line {}: unknown key '{key}'", n + 1))),
            }
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fields of `over` take precedence.
    pub fn merged(self, over: StudySettings) -> StudySettings {
        StudySettings {
            case: over.case.or(self.case),
            degree: over.degree.or(self.degree),
            dual: over.dual.or(self.dual),
            strategy: over.strategy.or(self.strategy),
            quadrature: over.quadrature.or(self.quadrature),
            levels: over.levels.or(self.levels),
            swap_roles: over.swap_roles.or(self.swap_roles),
            out: over.out.or(self.out),
        }
    }

    pub fn into_config(self) -> Result<StudyConfig> {
        let case = self.case.ok_or_else(|| Error::Config("case is required".into()))?;
        let degree = self.degree.ok_or_else(|| Error::Config("degree is required".into()))?;
        let mut c = StudyConfig::new(case, degree);
        c.dual = self.dual.unwrap_or(c.dual);
        c.strategy = self.strategy.unwrap_or(c.strategy);
        c.quadrature = self.quadrature.unwrap_or(c.quadrature);
        c.levels = self.levels.unwrap_or(c.levels);
        c.swap_roles = self.swap_roles.unwrap_or(false);
        c.out = self.out;
        c.validate()?;
        Ok(c)
    }
}
