//! Stage orchestration for a scenario and the report it produces.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cell::Discretization;
use crate::dynamics::{self, BandFit, ErrorScan, ErrorVariant, ProbeSetup, ScanRecord};
use crate::error::{Error, Result};
use crate::germ::{CellSolution, ThetaScan};
use crate::lattice::theta_grid;
use crate::linalg::CMat;
use crate::pencil::{self, FitWindow, ProbeKind, ProbeRecord, SelftestReport};
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Effective,
    Germ,
    Bands,
    Fit,
    Scan,
    Probe,
    Selftest,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Effective, Stage::Germ, Stage::Bands, Stage::Fit, Stage::Scan, Stage::Probe, Stage::Selftest];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Effective => "effective",
            Stage::Germ => "germ",
            Stage::Bands => "bands",
            Stage::Fit => "fit",
            Stage::Scan => "scan",
            Stage::Probe => "probe",
            Stage::Selftest => "selftest",
        }
    }

    fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Germ | Stage::Scan => &[Stage::Effective],
            Stage::Fit | Stage::Probe => &[Stage::Effective, Stage::Germ],
            _ => &[],
        }
    }

    /// The stage and everything it depends on.
    pub fn with_dependencies(self) -> BTreeSet<Stage> {
        let mut s: BTreeSet<Stage> = self.requires().iter().copied().collect();
        s.insert(self);
        s
    }

    fn needs_scenario(self) -> bool {
        self != Stage::Selftest
    }
}

/// Time probe along τ = 1/ε.
pub const TIME_PROBE_TAUS: [f64; 4] = [10.0, 20.0, 40.0, 80.0];
/// Smoothing probe at τ = 1. Small enough that the probe point t(ε) sits well
/// inside the expansion regime for the builtins; at ε = 0.1 it lies near r0.
pub const SMOOTHING_PROBE_EPS: [f64; 4] = [2e-3, 1e-3, 5e-4, 2.5e-4];
pub const SMOOTHING_PROBE_S: f64 = 2.0;
/// Exponent below 2 reported next to the s = 2 probe.
pub const SMOOTHING_COMPANION_S: f64 = 4.0 / 3.0;
pub const SMOOTHING_MIN_GROWTH: f64 = 1.15;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub stages: BTreeSet<Stage>,
    /// Keep only the sup-over-k scan records.
    pub sup_only: bool,
    pub seed: u64,
    pub selftest_families: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { stages: BTreeSet::new(), sup_only: false, seed: 0, selftest_families: 50 }
    }
}

impl RunOptions {
    pub fn for_stage(stage: Stage) -> Self {
        RunOptions { stages: stage.with_dependencies(), ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Lt => "<",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        }
    }
}

/// An asserted tolerance and its outcome.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub stage: Stage,
    pub value: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, stage: Stage, value: f64, relation: Relation, tolerance: f64) -> Self {
        let passed = match relation {
            Relation::Le => value <= tolerance,
            Relation::Lt => value < tolerance,
            Relation::Ge => value >= tolerance,
            Relation::Gt => value > tolerance,
        };
        Check { name: name.into(), stage, value, relation, tolerance, passed }
    }
}

/// Complex matrix as separate real and imaginary row arrays.
#[derive(Clone, Debug, Serialize)]
pub struct MatrixOut {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMat> for MatrixOut {
    fn from(m: &CMat) -> Self {
        let rows = |f: fn(&crate::linalg::C64) -> f64| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect();
        MatrixOut { re: rows(|z| z.re), im: rows(|z| z.im) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EffectiveSummary {
    pub g0: MatrixOut,
    pub g_bar: MatrixOut,
    pub g_lower: MatrixOut,
    pub f0: MatrixOut,
    pub q_bar: MatrixOut,
    pub upper_margin: f64,
    pub lower_margin: f64,
    pub m_eq_n_gap: Option<f64>,
    pub lambda_residual: f64,
    pub lambda2_residuals: Vec<f64>,
    pub solvability: Vec<f64>,
    pub q_mean_residual: f64,
    pub g0_hermiticity: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DirectionGerm {
    pub theta: Vec<f64>,
    pub gammas: Vec<f64>,
    pub mus: Vec<f64>,
    pub nus: Vec<f64>,
    pub n: MatrixOut,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClosedFormComparison {
    pub kappa: f64,
    /// max |N − κθ₂³| / max(|κθ₂³|, 1e-6).
    pub max_rel_dev: f64,
    /// max |N| at θ = (±1, 0).
    pub axis_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GermSummary {
    pub c_star: f64,
    pub scan: ThetaScan,
    pub probe_direction: DirectionGerm,
    pub closed_form: Option<ClosedFormComparison>,
    /// Relative gap between the two evaluations of N_Q at the probe direction.
    pub n_q_two_way: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BandsSummary {
    pub theta: Vec<f64>,
    pub ts: Vec<f64>,
    /// bands[i][j]: E_{j+1}(ts[i]·θ).
    pub bands: Vec<Vec<f64>>,
    /// c_* r0², the lower bound for E_{n+1} in the Brillouin zone.
    pub gap_floor: f64,
    pub min_upper_band: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanSummary {
    pub variant: ErrorVariant,
    pub cells: usize,
    pub sup: Vec<ScanRecord>,
    /// (s, max/min of the linear-law ratio over the sup records).
    pub spread_linear: Vec<(f64, f64)>,
    pub spread_sqrt: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeSummary {
    pub time: Vec<ProbeRecord>,
    pub smoothing: Vec<ProbeRecord>,
    pub smoothing_companion: Vec<ProbeRecord>,
    /// Why a probe family was not run.
    pub skipped: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: Option<String>,
    pub cutoff: Option<f64>,
    pub modes: Option<usize>,
    pub blocks: Option<usize>,
    pub stages: Vec<Stage>,
    pub effective: Option<EffectiveSummary>,
    pub germ: Option<GermSummary>,
    pub bands: Option<BandsSummary>,
    pub fit: Option<BandFit>,
    pub scan: Option<ScanSummary>,
    pub probe: Option<ProbeSummary>,
    pub selftest: Option<SelftestReport>,
    pub checks: Vec<Check>,
    /// Per-k scan records; written to CSV only.
    #[serde(skip)]
    pub scan_cells: Vec<ScanRecord>,
    /// Wall-clock seconds per stage; kept out of the JSON so reruns are byte-identical.
    #[serde(skip)]
    pub timings: Vec<(Stage, f64)>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn tag<T>(stage: Stage, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage { stage: stage.name().into(), source: Box::new(e) })
}

pub fn run_pipeline(scenario: Option<&Scenario>, opts: &RunOptions) -> Result<RunReport> {
    let mut stages: BTreeSet<Stage> = BTreeSet::new();
    for s in &opts.stages {
        stages.extend(s.with_dependencies());
    }
    let mut report = RunReport {
        scenario: scenario.map(|s| s.name.clone()),
        cutoff: scenario.map(|s| s.cutoff),
        modes: None,
        blocks: None,
        stages: stages.iter().copied().collect(),
        effective: None,
        germ: None,
        bands: None,
        fit: None,
        scan: None,
        probe: None,
        selftest: None,
        checks: Vec::new(),
        scan_cells: Vec::new(),
        timings: Vec::new(),
    };
    let needs_scenario = stages.iter().any(|s| s.needs_scenario());
    let sc = match (needs_scenario, scenario) {
        (true, None) => return Err(Error::config("scenario", "the requested stages need a scenario")),
        (_, s) => s,
    };

    let mut disc = None;
    let mut sol = None;
    if let Some(sc) = sc.filter(|_| needs_scenario) {
        let start = Instant::now();
        let d = tag(Stage::Effective, Discretization::new(sc.op.clone(), sc.cutoff))?;
        report.modes = Some(d.modes.len());
        report.blocks = Some(d.blocks.len());
        if stages.iter().any(|s| !matches!(s, Stage::Bands | Stage::Selftest)) {
            sol = Some(tag(Stage::Effective, CellSolution::new(d.clone()))?);
        }
        disc = Some(d);
        report.timings.push((Stage::Effective, start.elapsed().as_secs_f64()));
    }

    for &stage in &stages {
        let start = Instant::now();
        match stage {
            Stage::Effective => effective_stage(sc.expect("scenario"), sol.as_ref().expect("solution"), &mut report),
            Stage::Germ => tag(stage, germ_stage(sc.expect("scenario"), sol.as_ref().expect("solution"), &mut report))?,
            Stage::Bands => bands_stage(sc.expect("scenario"), disc.as_ref().expect("discretization"), &mut report),
            Stage::Fit => tag(stage, fit_stage(sc.expect("scenario"), sol.as_ref().expect("solution"), &mut report))?,
            Stage::Scan => scan_stage(sc.expect("scenario"), sol.as_ref().expect("solution"), opts, &mut report),
            Stage::Probe => tag(stage, probe_stage(sc.expect("scenario"), sol.as_ref().expect("solution"), &mut report))?,
            Stage::Selftest => tag(stage, selftest_stage(opts, &mut report))?,
        }
        let t = start.elapsed().as_secs_f64();
        match report.timings.iter_mut().find(|(s, _)| *s == stage) {
            Some(entry) => entry.1 += t,
            None => report.timings.push((stage, t)),
        }
    }
    Ok(report)
}

fn effective_stage(sc: &Scenario, sol: &CellSolution, report: &mut RunReport) {
    let c = &sol.correctors;
    let vr = &c.voigt_reuss;
    report.checks.push(Check::new("g0 <= g_bar (min eig)", Stage::Effective, vr.upper_margin, Relation::Ge, -1e-10));
    report.checks.push(Check::new("g0 >= g_lower (min eig)", Stage::Effective, vr.lower_margin, Relation::Ge, -1e-10));
    if let Some(expected) = sc.expect.g0 {
        let dev = (c.g0[(0, 0)].re - expected).abs();
        report.checks.push(Check::new("|g0 - expected|", Stage::Effective, dev, Relation::Le, 1e-8));
    }
    report.effective = Some(EffectiveSummary {
        g0: (&c.g0).into(),
        g_bar: (&c.g_bar).into(),
        g_lower: (&c.g_lower).into(),
        f0: (&c.f0).into(),
        q_bar: (&c.q_bar).into(),
        upper_margin: vr.upper_margin,
        lower_margin: vr.lower_margin,
        m_eq_n_gap: vr.m_eq_n_gap,
        lambda_residual: c.lambda_residual,
        lambda2_residuals: c.lambda2_residuals.clone(),
        solvability: c.solvability.clone(),
        q_mean_residual: c.q_mean_residual,
        g0_hermiticity: c.g0_hermiticity,
    });
}

/// N(θ) against κθ₂³ over the scan grid.
fn closed_form(scan: &ThetaScan, kappa: f64) -> ClosedFormComparison {
    let mut max_rel_dev = 0.0f64;
    let mut axis_value = 0.0f64;
    for r in &scan.records {
        let Some(n) = r.n_scalar else { continue };
        let exact = kappa * r.theta[1].powi(3);
        max_rel_dev = max_rel_dev.max((n - exact).abs() / exact.abs().max(1e-6));
        if r.theta[1].abs() < 1e-12 {
            axis_value = axis_value.max(n.abs());
        }
    }
    ClosedFormComparison { kappa, max_rel_dev, axis_value }
}

fn germ_stage(sc: &Scenario, sol: &CellSolution, report: &mut RunReport) -> Result<()> {
    let scan = sol.scan_conditions(sc.theta_count)?;
    let tol = crate::germ::ZERO_REL_TOL * scan.scale;
    match sc.expect.n_zero {
        Some(true) => report.checks.push(Check::new("max ||N(theta)||", Stage::Germ, scan.max_n, Relation::Le, 1e-9)),
        Some(false) => report.checks.push(Check::new("max ||N(theta)|| (nonzero)", Stage::Germ, scan.max_n, Relation::Gt, tol)),
        None => {}
    }
    match sc.expect.n0_zero {
        Some(true) => report.checks.push(Check::new("max ||N0(theta)||", Stage::Germ, scan.max_n0, Relation::Le, 1e-9)),
        Some(false) => report.checks.push(Check::new("max ||N0(theta)|| (nonzero)", Stage::Germ, scan.max_n0, Relation::Gt, tol)),
        None => {}
    }
    let closed = sc.expect.n_theta2_cubed.filter(|_| sol.disc.op.d() == 2 && sol.disc.op.n() == 1).map(|k| closed_form(&scan, k));
    if let Some(cf) = &closed {
        report.checks.push(Check::new("N(theta) vs kappa theta2^3 (rel)", Stage::Germ, cf.max_rel_dev, Relation::Le, 1e-6));
        report.checks.push(Check::new("|N| at theta = (+-1, 0)", Stage::Germ, cf.axis_value, Relation::Le, 1e-12));
    }
    let pack = sol.germ_at(&sc.probe_theta)?;
    let n_q_two_way = sol.n_q_two_way(&sc.probe_theta)?.map(|c| c.rel);
    report.germ = Some(GermSummary {
        c_star: sol.c_star(),
        probe_direction: DirectionGerm {
            theta: sc.probe_theta.clone(),
            gammas: pack.gammas().to_vec(),
            mus: pack.mus(),
            nus: pack.nus(),
            n: (&pack.n).into(),
        },
        scan,
        closed_form: closed,
        n_q_two_way,
    });
    Ok(())
}

fn bands_stage(sc: &Scenario, disc: &Discretization, report: &mut RunReport) {
    let r0 = disc.op.lattice.r0;
    let n = disc.op.n();
    let ts: Vec<f64> = (0..=10).map(|i| r0 * i as f64 / 10.0).collect();
    let bands: Vec<Vec<f64>> = ts
        .iter()
        .map(|&t| {
            let k: Vec<f64> = sc.probe_theta.iter().map(|x| x * t).collect();
            dynamics::bands(disc, &k, n + 3)
        })
        .collect();
    let min_upper_band = bands.iter().map(|b| b[n]).fold(f64::INFINITY, f64::min);
    report.bands =
        Some(BandsSummary { theta: sc.probe_theta.clone(), ts, bands, gap_floor: disc.op.c_star() * r0 * r0, min_upper_band });
}

fn fit_stage(sc: &Scenario, sol: &CellSolution, report: &mut RunReport) -> Result<()> {
    let fit = dynamics::fit_band_expansion(sol, &sc.probe_theta, &FitWindow::default())?;
    report.checks.push(Check::new("band fit gamma (rel)", Stage::Fit, fit.gamma_rel_dev, Relation::Le, 1e-4));
    report.checks.push(Check::new("band fit mu (rel)", Stage::Fit, fit.mu_rel_dev, Relation::Le, 1e-4));
    report.checks.push(Check::new("band fit nu (rel)", Stage::Fit, fit.nu_rel_dev, Relation::Le, 1e-3));
    if sc.expect.nu_nonzero == Some(true) {
        let nu = fit.branches.iter().map(|b| b.nu_formula.abs()).fold(0.0, f64::max);
        report.checks.push(Check::new("max |nu| at probe direction", Stage::Fit, nu, Relation::Gt, 1e-6));
    }
    if let Some(kappa) = sc.expect.n_theta2_cubed.filter(|_| sc.probe_theta.len() == 2) {
        let exact = kappa * sc.probe_theta[1].powi(3);
        let dev = fit.branches.iter().map(|b| (b.mu_fit - exact).abs() / exact.abs().max(1e-6)).fold(0.0, f64::max);
        report.checks.push(Check::new("band fit mu vs kappa theta2^3 (rel)", Stage::Fit, dev, Relation::Le, 1e-4));
    }
    report.fit = Some(fit);
    Ok(())
}

fn scan_stage(sc: &Scenario, sol: &CellSolution, opts: &RunOptions, report: &mut RunReport) {
    let variant = ErrorVariant::native(&sol.disc);
    let scan: ErrorScan = dynamics::scan_errors(sol, &sc.scan, variant);
    let mut spread_linear = Vec::new();
    let mut spread_sqrt = Vec::new();
    for &s in &sc.scan.s {
        let lin = scan.ratio_spread(s, |r| r.ratio_linear);
        let sq = scan.ratio_spread(s, |r| r.ratio_sqrt);
        spread_linear.push((s, lin));
        spread_sqrt.push((s, sq));
        if s == 3.0 {
            report.checks.push(Check::new("s=3 sup ratio spread, (1+|tau|)eps law", Stage::Scan, lin, Relation::Lt, 2.0));
        }
        if s == 2.0 && sc.expect.n_zero == Some(true) {
            report.checks.push(Check::new("s=2 sup ratio spread, (1+|tau|^1/2)eps law", Stage::Scan, sq, Relation::Lt, 2.0));
        }
    }
    report.scan = Some(ScanSummary { variant, cells: scan.cells.len(), sup: scan.sup.clone(), spread_linear, spread_sqrt });
    if !opts.sup_only {
        report.scan_cells = scan.cells;
    }
}

/// Time probe along τ = 1/ε.
pub fn time_probe_series(setup: &ProbeSetup) -> Result<Vec<ProbeRecord>> {
    TIME_PROBE_TAUS.iter().map(|&tau| setup.probe(1.0 / tau, tau, ProbeKind::Time)).collect()
}

/// Smoothing probe at τ = 1 over the ε halvings.
pub fn smoothing_probe_series(setup: &ProbeSetup, s: f64) -> Result<Vec<ProbeRecord>> {
    SMOOTHING_PROBE_EPS.iter().map(|&eps| setup.probe(eps, 1.0, ProbeKind::Smoothing { s })).collect()
}

/// Smallest ratio between consecutive probe ratios.
pub fn min_growth(records: &[ProbeRecord]) -> f64 {
    records.windows(2).map(|w| w[1].ratio / w[0].ratio).fold(f64::INFINITY, f64::min)
}

fn probe_stage(sc: &Scenario, sol: &CellSolution, report: &mut RunReport) -> Result<()> {
    let setup = ProbeSetup::new(sol, &sc.probe_theta)?;
    let mut summary = ProbeSummary { time: Vec::new(), smoothing: Vec::new(), smoothing_companion: Vec::new(), skipped: Vec::new() };
    match time_probe_series(&setup) {
        Ok(recs) => {
            let last = recs.last().expect("nonempty series");
            report.checks.push(Check::new("time probe ratio growth along tau = 1/eps", Stage::Probe, min_growth(&recs), Relation::Ge, 1.0));
            report.checks.push(Check::new("time probe ratio at largest tau", Stage::Probe, last.ratio, Relation::Ge, last.lower_bound / last.eps));
            summary.time = recs;
        }
        Err(Error::CoefficientZero(what)) => summary.skipped.push(format!("time probe: {what} vanishes")),
        Err(e) => return Err(e),
    }
    match smoothing_probe_series(&setup, SMOOTHING_PROBE_S) {
        Ok(recs) => {
            report.checks.push(Check::new("s=2 smoothing probe growth per halving", Stage::Probe, min_growth(&recs), Relation::Ge, SMOOTHING_MIN_GROWTH));
            summary.smoothing = recs;
            summary.smoothing_companion = smoothing_probe_series(&setup, SMOOTHING_COMPANION_S)?;
        }
        Err(Error::CoefficientZero(what)) => summary.skipped.push(format!("smoothing probe: {what}")),
        Err(e) => return Err(e),
    }
    report.probe = Some(summary);
    Ok(())
}

fn selftest_stage(opts: &RunOptions, report: &mut RunReport) -> Result<()> {
    let r = pencil::run_selftest(opts.seed, opts.selftest_families)?;
    let (g, m, n) = pencil::FIT_TOLERANCES;
    let st = Stage::Selftest;
    report.checks.push(Check::new("families: gamma fit (rel)", st, r.max_gamma_dev, Relation::Le, g));
    report.checks.push(Check::new("families: mu fit (rel)", st, r.max_mu_dev, Relation::Le, m));
    report.checks.push(Check::new("families: nu fit (rel)", st, r.max_nu_dev, Relation::Le, n));
    report.checks.push(Check::new("families: sandwich identities", st, r.max_sandwich_residual, Relation::Le, pencil::SANDWICH_TOL));
    report.checks.push(Check::new("families: ||F(t)-P||/t variation", st, r.max_projector_variation, Relation::Lt, pencil::REMAINDER_VARIATION));
    report.checks.push(Check::new("families: fourth-order remainder variation", st, r.max_remainder_variation, Relation::Lt, pencil::REMAINDER_VARIATION));
    report.selftest = Some(r);
    Ok(())
}

/// Germ scan directions used by a scenario, exposed for the CSV writer.
pub fn scan_directions(sc: &Scenario) -> Vec<Vec<f64>> {
    theta_grid(sc.op.d(), sc.scan.theta_count).iter().map(|v| v.iter().copied().collect()).collect()
}
