//! Seeded experiment sweeps: every point of the sweep grid is run on the same
//! drops for every scheme, one CSV row per (point, drop, scheme, pilots),
//! with a JSON report and a trace CSV per run and a manifest per experiment.

pub mod oracle;
pub mod report;

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    ee_power_allocation, mmse_directions, run_orthogonal, run_rate_agnostic, run_uncoordinated, BaselineConfig,
    PowerTarget, SchemeOutcome,
};
use crate::metrics::{evaluate, BeamformerSet};
use crate::network::{ComplexityCharge, Network};
use crate::pilots::{allocate, allocate_greedy, PilotAllocation, PilotProblem, DEFAULT_CANDIDATE_CAP};
use crate::power::PowerModelParams;
use crate::scenario::{build_layout, contaminate, generate_drop, ChannelSet, ScenarioConfig};
use crate::solver::{Engine, Objective, SolverConfig, TraceRow};
use crate::{Error, Result};

pub use crate::metrics::fairness_index;
pub use oracle::{oracle_1d_power, OracleResult};
pub use report::{report, SummaryRow};

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Network-EE solver.
    Netee,
    /// Weighted-sum-EE solver with equal weights.
    Wsum,
    /// Normalized MMSE directions, network-EE power allocation.
    MmseMulti,
    /// Normalized MMSE directions, per-cell EE power allocation.
    MmseSingle,
    Uncoordinated,
    Orthogonal,
    /// Network-EE solver run with `P_RD = 0`.
    RateAgnosticNetee,
    /// Weighted-sum-EE solver run with `P_RD = 0`.
    RateAgnosticWsum,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Netee,
        Scheme::Wsum,
        Scheme::MmseMulti,
        Scheme::MmseSingle,
        Scheme::Uncoordinated,
        Scheme::Orthogonal,
        Scheme::RateAgnosticNetee,
        Scheme::RateAgnosticWsum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Netee => "netee",
            Scheme::Wsum => "wsum",
            Scheme::MmseMulti => "mmse-multi",
            Scheme::MmseSingle => "mmse-single",
            Scheme::Uncoordinated => "uncoordinated",
            Scheme::Orthogonal => "orthogonal",
            Scheme::RateAgnosticNetee => "rate-agnostic-netee",
            Scheme::RateAgnosticWsum => "rate-agnostic-wsum",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotPolicy {
    /// One resource per user; needs `tau_ul = |K|`.
    Orthogonal,
    /// Energy-efficiency grouping.
    Proposed,
    /// Largest sum path gain first.
    Greedy,
}

impl PilotPolicy {
    pub fn name(self) -> &'static str {
        match self {
            PilotPolicy::Orthogonal => "orthogonal",
            PilotPolicy::Proposed => "proposed",
            PilotPolicy::Greedy => "greedy",
        }
    }
}

/// Sweep axes; the experiment runs their cross product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub p_rd: Vec<f64>,
    pub m: Vec<f64>,
    pub antennas: Vec<usize>,
    pub q: Vec<usize>,
    /// `null` means one pilot per user.
    pub tau_ul: Vec<Option<usize>>,
    pub pilots: Vec<PilotPolicy>,
}

impl Default for Sweep {
    fn default() -> Self {
        let power = PowerModelParams::default();
        Sweep {
            p_rd: vec![power.p_rd],
            m: vec![power.m],
            antennas: vec![ScenarioConfig::default().antennas],
            q: vec![power.q],
            tau_ul: vec![None],
            pilots: vec![PilotPolicy::Orthogonal],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub power: PowerModelParams,
    pub solver: SolverConfig,
    pub baseline: BaselineConfig,
    pub schemes: Vec<Scheme>,
    pub sweep: Sweep,
    pub drops: usize,
    /// Seeds every drop; drop `i` uses stream `i` of this seed.
    pub seed: u64,
    pub out: PathBuf,
    /// Write a JSON report (with channels and beamformers) and a trace CSV
    /// per run.
    pub artifacts: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            scenario: ScenarioConfig::default(),
            power: PowerModelParams::default(),
            solver: SolverConfig::default(),
            baseline: BaselineConfig::default(),
            schemes: vec![Scheme::Netee, Scheme::Wsum],
            sweep: Sweep::default(),
            drops: 50,
            seed: 1,
            out: PathBuf::from("results"),
            artifacts: true,
        }
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub p_rd: f64,
    pub m: f64,
    pub antennas: usize,
    pub q: usize,
    pub tau_ul: Option<usize>,
    pub pilots: PilotPolicy,
}

impl ExperimentSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn points(&self) -> Vec<SweepPoint> {
        let s = &self.sweep;
        let mut out = Vec::new();
        for &p_rd in &s.p_rd {
            for &m in &s.m {
                for &antennas in &s.antennas {
                    for &q in &s.q {
                        for &tau_ul in &s.tau_ul {
                            for &pilots in &s.pilots {
                                let index = out.len();
                                out.push(SweepPoint { index, p_rd, m, antennas, q, tau_ul, pilots });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn scenario_at(&self, point: &SweepPoint) -> ScenarioConfig {
        ScenarioConfig { antennas: point.antennas, tau_ul: point.tau_ul, seed: self.seed, ..self.scenario.clone() }
    }

    pub fn power_at(&self, point: &SweepPoint) -> PowerModelParams {
        PowerModelParams { p_rd: point.p_rd, m: point.m, q: point.q, ..self.power.clone() }
    }

    /// Checks every field and every sweep point, listing all problems found.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let s = &self.sweep;
        for (name, empty) in [
            ("sweep.p_rd", s.p_rd.is_empty()),
            ("sweep.m", s.m.is_empty()),
            ("sweep.antennas", s.antennas.is_empty()),
            ("sweep.q", s.q.is_empty()),
            ("sweep.tau_ul", s.tau_ul.is_empty()),
            ("sweep.pilots", s.pilots.is_empty()),
            ("schemes", self.schemes.is_empty()),
        ] {
            if empty {
                bad.push(format!("{name} is empty"));
            }
        }
        if self.drops < 1 {
            bad.push("drops must be >= 1".into());
        }
        collect(&mut bad, self.solver.validate());
        collect(&mut bad, self.baseline.validate());
        let mut seen = HashSet::new();
        for point in self.points() {
            let scen = self.scenario_at(&point);
            let tag = format!("sweep point {}", point.index);
            if seen.insert((point.antennas, point.tau_ul)) {
                collect(&mut bad, scen.validate().map_err(|e| prefix(&tag, e)));
            }
            collect(&mut bad, self.power_at(&point).validate().map_err(|e| prefix(&tag, e)));
            if point.pilots == PilotPolicy::Orthogonal && scen.tau_ul() < scen.total_users() {
                bad.push(format!(
                    "{tag}: tau_ul={} below {} users needs a pilot-sharing policy",
                    scen.tau_ul(),
                    scen.total_users()
                ));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}

fn collect(bad: &mut Vec<String>, r: Result<()>) {
    match r {
        Ok(()) => {}
        Err(Error::Validation(v)) => bad.extend(v),
        Err(other) => bad.push(other.to_string()),
    }
}

fn prefix(tag: &str, e: Error) -> Error {
    match e {
        Error::Validation(v) => Error::Validation(v.into_iter().map(|m| format!("{tag}: {m}")).collect()),
        other => Error::Validation(vec![format!("{tag}: {other}")]),
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub key: String,
    pub point: usize,
    pub drop: u64,
    pub scheme: Scheme,
    pub pilots: PilotPolicy,
    pub p_rd: f64,
    pub m: f64,
    pub antennas: usize,
    pub q: usize,
    pub tau_ul: usize,
    pub seed: u64,
    /// bit/J.
    pub network_ee: f64,
    /// Equal-weight sum of per-cell EEs, bit/J.
    pub wsum_ee: f64,
    /// Jain index of the per-cell EEs.
    pub jain: f64,
    /// bit/s.
    pub sum_rate: f64,
    /// W.
    pub total_power: f64,
    pub iterations: usize,
    pub ota: usize,
    pub backhaul: usize,
    pub exchanged: usize,
    pub converged: bool,
}

/// Everything stored about one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub key: String,
    pub point: SweepPoint,
    pub drop: u64,
    pub scheme: Scheme,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub power: PowerModelParams,
    pub solver: SolverConfig,
    pub baseline: BaselineConfig,
    pub trace: Vec<TraceRow>,
    pub per_cell_ee: Vec<f64>,
    /// bit/s per BS.
    pub rates: Vec<f64>,
    /// W per BS.
    pub powers: Vec<f64>,
    pub network_ee: f64,
    pub wsum_ee: f64,
    pub ota: usize,
    pub backhaul: usize,
    pub exchanged: usize,
    pub wall_clock_s: f64,
    pub pilots: Option<PilotAllocation>,
    /// True channels; the design may have used contaminated observations.
    pub channels: ChannelSet,
    pub beamformers: BeamformerSet,
}

impl RunReport {
    /// Network the reported objectives were evaluated on.
    pub fn network(&self) -> Result<Network> {
        scheme_network(self.scheme, self.channels.clone(), &self.scenario, &self.power, &self.baseline)
    }

    /// Largest relative mismatch between the stored objectives and the ones
    /// recomputed from the stored channels and beamformers.
    pub fn recompute_error(&self) -> Result<f64> {
        let e = evaluate(&self.network()?, &self.beamformers)?;
        let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { (a - b).abs() / b.abs() };
        let mut worst = rel(e.network_ee, self.network_ee).max(rel(e.wsum_ee(&vec![1.0; e.per_cell_ee.len()]), self.wsum_ee));
        for (a, b) in e.per_cell_ee.iter().zip(&self.per_cell_ee) {
            worst = worst.max(rel(*a, *b));
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub spec: ExperimentSpec,
    pub points: Vec<SweepPoint>,
    pub rows_total: usize,
    pub rows_written: usize,
    pub rows_skipped: usize,
    pub wall_clock_s: f64,
}

/// Network a scheme runs and is evaluated on; carries its complexity charge.
pub fn scheme_network(
    scheme: Scheme,
    channels: ChannelSet,
    scenario: &ScenarioConfig,
    power: &PowerModelParams,
    baseline: &BaselineConfig,
) -> Result<Network> {
    match scheme {
        Scheme::MmseMulti | Scheme::MmseSingle => {
            Network::new(channels, scenario, power, ComplexityCharge::coordinated(baseline.mmse_q))
        }
        Scheme::Uncoordinated => Network::new(channels, scenario, power, ComplexityCharge::per_cell(power.q)),
        Scheme::Orthogonal => Network::orthogonal(channels, scenario, power, ComplexityCharge::per_cell(power.q)),
        _ => Network::new(channels, scenario, power, ComplexityCharge::coordinated(power.q)),
    }
}

/// Runs `scheme` designing on `design` and returns its outcome.
pub fn run_scheme(
    scheme: Scheme,
    design: &Network,
    baseline: &BaselineConfig,
    solver: &SolverConfig,
) -> Result<SchemeOutcome> {
    let equal = Objective::equal_weights(design.num_bs());
    match scheme {
        Scheme::Netee => Ok(Engine::new(design, Objective::Network, solver.clone())?.run()?.into()),
        Scheme::Wsum => Ok(Engine::new(design, equal, solver.clone())?.run()?.into()),
        Scheme::MmseMulti => {
            ee_power_allocation(design, &mmse_directions(design), PowerTarget::Network, baseline, solver)
        }
        Scheme::MmseSingle => {
            ee_power_allocation(design, &mmse_directions(design), PowerTarget::PerCell, baseline, solver)
        }
        Scheme::Uncoordinated => run_uncoordinated(design, baseline, solver),
        Scheme::Orthogonal => run_orthogonal(design, solver),
        Scheme::RateAgnosticNetee => run_rate_agnostic(design, Objective::Network, solver),
        Scheme::RateAgnosticWsum => run_rate_agnostic(design, equal, solver),
    }
}

/// Pilot allocation of a drop, `None` when every user has its own pilot.
pub fn pilot_allocation(
    policy: PilotPolicy,
    scenario: &ScenarioConfig,
    reference: &Network,
) -> Result<Option<PilotAllocation>> {
    let tau = scenario.tau_ul();
    let users = reference.num_users();
    if tau >= users {
        return Ok(None);
    }
    let problem = PilotProblem::from_network(reference);
    match policy {
        PilotPolicy::Orthogonal => Err(Error::InvalidTau {
            tau,
            reason: format!("orthogonal pilots need {users} resources"),
        }),
        PilotPolicy::Proposed => allocate(&problem, tau, DEFAULT_CANDIDATE_CAP).map(Some),
        PilotPolicy::Greedy => allocate_greedy(&problem, tau, DEFAULT_CANDIDATE_CAP).map(Some),
    }
}

pub fn run_key(point: usize, drop: u64, scheme: Scheme, pilots: PilotPolicy) -> String {
    format!("p{point}-d{drop}-{}-{}", scheme.name(), pilots.name())
}

/// Runs one (point, drop, scheme) cell.
pub fn run_cell(
    spec: &ExperimentSpec,
    point: &SweepPoint,
    drop_index: u64,
    scheme: Scheme,
) -> Result<(ResultRow, RunReport)> {
    let started = Instant::now();
    let scen = spec.scenario_at(point);
    let power = spec.power_at(point);
    let layout = build_layout(&scen)?;
    let drop = generate_drop(&scen, &layout, drop_index)?;
    let truth = scheme_network(scheme, drop.channels.clone(), &scen, &power, &spec.baseline)?;
    let pilots = pilot_allocation(point.pilots, &scen, &truth)?;
    let design = match &pilots {
        Some(alloc) => truth.with_channels(contaminate(&drop.channels, alloc)?.channels),
        None => truth.clone(),
    };
    let out = run_scheme(scheme, &design, &spec.baseline, &spec.solver)?;
    let eval = evaluate(&truth, &out.beamformers)?;
    let weights = vec![1.0; truth.num_bs()];
    let wsum_ee = eval.wsum_ee(&weights);
    let key = run_key(point.index, drop_index, scheme, point.pilots);
    let row = ResultRow {
        key: key.clone(),
        point: point.index,
        drop: drop_index,
        scheme,
        pilots: point.pilots,
        p_rd: point.p_rd,
        m: point.m,
        antennas: point.antennas,
        q: point.q,
        tau_ul: scen.tau_ul(),
        seed: spec.seed,
        network_ee: eval.network_ee,
        wsum_ee,
        jain: fairness_index(&eval.per_cell_ee).unwrap_or(f64::NAN),
        sum_rate: eval.rates.sum_rate() * std::f64::consts::LOG2_E,
        total_power: eval.power.total,
        iterations: out.iterations,
        ota: out.ota,
        backhaul: out.backhaul,
        exchanged: out.exchanged,
        converged: out.converged,
    };
    let report = RunReport {
        key,
        point: *point,
        drop: drop_index,
        scheme,
        seed: spec.seed,
        scenario: scen,
        power,
        solver: spec.solver.clone(),
        baseline: spec.baseline.clone(),
        trace: out.trace,
        rates: eval.rates.r_bs.iter().map(|r| r * std::f64::consts::LOG2_E).collect(),
        powers: eval.power.per_bs.clone(),
        per_cell_ee: eval.per_cell_ee,
        network_ee: eval.network_ee,
        wsum_ee,
        ota: out.ota,
        backhaul: out.backhaul,
        exchanged: out.exchanged,
        wall_clock_s: started.elapsed().as_secs_f64(),
        pilots,
        channels: drop.channels,
        beamformers: out.beamformers,
    };
    Ok((row, report))
}

/// Keys already present in an existing results file.
fn completed_keys(path: &Path) -> Result<HashSet<String>> {
    if !path.exists() {
        return Ok(HashSet::new());
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut keys = HashSet::new();
    for row in reader.deserialize::<ResultRow>() {
        keys.insert(row?.key);
    }
    Ok(keys)
}

/// Runs the full sweep with up to `jobs` worker threads (0 uses all cores),
/// skipping rows already present in `results.csv`.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<Manifest> {
    spec.validate()?;
    let started = Instant::now();
    let out = &spec.out;
    fs::create_dir_all(out)?;
    if spec.artifacts {
        fs::create_dir_all(out.join("runs"))?;
        fs::create_dir_all(out.join("traces"))?;
    }
    let results_path = out.join(RESULTS_FILE);
    let done = completed_keys(&results_path)?;
    let fresh = !results_path.exists();
    let file = OpenOptions::new().create(true).append(true).open(&results_path)?;
    let mut writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let points = spec.points();
    let (mut written, mut skipped, mut total) = (0, 0, 0);
    for point in &points {
        let cells: Vec<(u64, Scheme)> = (0..spec.drops as u64)
            .flat_map(|d| spec.schemes.iter().map(move |&s| (d, s)))
            .collect();
        total += cells.len();
        let todo: Vec<(u64, Scheme)> = cells
            .into_iter()
            .filter(|&(d, s)| !done.contains(&run_key(point.index, d, s, point.pilots)))
            .collect();
        skipped += spec.drops * spec.schemes.len() - todo.len();
        let results: Vec<Result<(ResultRow, RunReport)>> =
            pool.install(|| todo.par_iter().map(|&(d, s)| run_cell(spec, point, d, s)).collect());
        for r in results {
            let (row, report) = r?;
            if spec.artifacts {
                write_artifacts(out, &report)?;
            }
            writer.serialize(&row)?;
            written += 1;
        }
        writer.flush()?;
    }
    let manifest = Manifest {
        name: spec.name.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        spec: spec.clone(),
        points,
        rows_total: total,
        rows_written: written,
        rows_skipped: skipped,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    serde_json::to_writer_pretty(File::create(out.join(MANIFEST_FILE))?, &manifest)?;
    Ok(manifest)
}

fn write_artifacts(out: &Path, report: &RunReport) -> Result<()> {
    serde_json::to_writer(File::create(out.join("runs").join(format!("{}.json", report.key)))?, report)?;
    let mut w = csv::Writer::from_path(out.join("traces").join(format!("{}.csv", report.key)))?;
    for row in &report.trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads all rows of a results file.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(out: &Path) -> ExperimentSpec {
        ExperimentSpec {
            scenario: ScenarioConfig { antennas: 2, users_per_cell: 1, ..Default::default() },
            schemes: vec![Scheme::Netee, Scheme::Uncoordinated],
            sweep: Sweep { m: vec![1.0, 1.3], ..Default::default() },
            drops: 2,
            out: out.to_path_buf(),
            solver: SolverConfig { max_iterations: 15, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn empty_axis_is_rejected() {
        let mut spec = ExperimentSpec::default();
        spec.sweep.m.clear();
        spec.sweep.q.clear();
        match spec.validate() {
            Err(Error::Validation(v)) => {
                assert!(v.iter().any(|m| m.contains("sweep.m")));
                assert!(v.iter().any(|m| m.contains("sweep.q")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn orthogonal_pilots_need_enough_resources() {
        let mut spec = ExperimentSpec::default();
        spec.sweep.tau_ul = vec![Some(10)];
        assert!(spec.validate().is_err());
        spec.sweep.pilots = vec![PilotPolicy::Proposed];
        spec.validate().unwrap();
    }

    #[test]
    fn grid_is_the_cross_product() {
        let spec = ExperimentSpec {
            sweep: Sweep { p_rd: vec![0.0, 1.0, 2.0], m: vec![1.0, 1.2], ..Default::default() },
            ..Default::default()
        };
        let pts = spec.points();
        assert_eq!(pts.len(), 6);
        assert!(pts.iter().enumerate().all(|(i, p)| p.index == i));
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
        assert!("zf".parse::<Scheme>().is_err());
    }

    #[test]
    fn experiment_writes_rows_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny(dir.path());
        let m = run_experiment(&spec, 1).unwrap();
        assert_eq!(m.rows_written, 8);
        let rows = read_results(&dir.path().join(RESULTS_FILE)).unwrap();
        assert_eq!(rows.len(), 8);
        let again = run_experiment(&spec, 1).unwrap();
        assert_eq!(again.rows_written, 0);
        assert_eq!(again.rows_skipped, 8);
        assert_eq!(read_results(&dir.path().join(RESULTS_FILE)).unwrap(), rows);
        for row in &rows {
            let path = dir.path().join("runs").join(format!("{}.json", row.key));
            let report: RunReport = serde_json::from_reader(File::open(path).unwrap()).unwrap();
            assert!(report.recompute_error().unwrap() <= 1e-10);
            assert!(dir.path().join("traces").join(format!("{}.csv", row.key)).exists());
        }
    }
}
