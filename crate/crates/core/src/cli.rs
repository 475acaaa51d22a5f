//! Command-line front end: `gen`, `run`, `verify` and `bench`.
//!
//! Every run setting can come from a flat TOML document (`--config`) and
//! be overridden by a flag. Exit status is 0 on success, 1 on a tolerance
//! or validation failure and 2 on a usage error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::engine::{BalanceMetric, EngineConfig, SlabConfig, Simulation};
use crate::error::Error;
use crate::generate::{generate_fluid, FluidKind, FluidSpec, STANDARD_DENSITY, STANDARD_TEMPERATURE};
use crate::gridder::{build_cluster_grid, CellSizing};
use crate::kernels::{compute_nonbonded, flop_count, ClusterAttributes, KernelLayout};
use crate::model::{validate_system, NonbondedParams, SystemFile};
use crate::oracle::{
    brute_force_nonbonded, brute_force_pairs, max_relative_force_error, relative_error,
};
use crate::pairlist::{admitted_pairs, build_pair_list, interaction_stats, prune_pair_list, write_diagnostics};

/// Largest system `verify` will hand to the O(N²) oracle.
pub const VERIFY_MAX_PARTICLES: usize = 20_000;
pub const FORCE_TOLERANCE: f64 = 1e-10;
pub const ENERGY_TOLERANCE: f64 = 1e-12;
/// First column of every bench row.
pub const BENCH_SCHEMA: &str = "cpmd-bench/1";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(Error::Parameter(_)) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cpmd", version, about = "Cluster-pair short-range MD engine and benchmark harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an argon-like fluid and write it as a system file.
    Gen(GenArgs),
    /// Run velocity-Verlet MD and print the run log.
    Run(RunArgs),
    /// Compare the cluster-pair path against the brute-force oracle.
    Verify(VerifyArgs),
    /// Sweep layouts, worker counts and rebuild intervals into a CSV table.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Kind {
    LjFluid,
    ChargedFluid,
}

impl From<Kind> for FluidKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::LjFluid => FluidKind::LjFluid,
            Kind::ChargedFluid => FluidKind::ChargedFluid,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// measured kernel time per slab
    Time,
    /// admitted pair count per slab
    Pairs,
}

/// `M,N` or `MxN`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayoutArg(pub KernelLayout);

impl FromStr for LayoutArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (m, n) = s
            .split_once([',', 'x'])
            .ok_or_else(|| format!("layout {s:?} is not of the form M,N"))?;
        let m: usize = m.trim().parse().map_err(|_| format!("bad cluster size in {s:?}"))?;
        let n: usize = n.trim().parse().map_err(|_| format!("bad lane width in {s:?}"))?;
        KernelLayout::new(m, n).map(LayoutArg).map_err(|e| e.to_string())
    }
}

impl<'de> Deserialize<'de> for LayoutArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

/// The `--config` document. Keys mirror the long flags with `_` for `-`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    system: Option<PathBuf>,
    out: Option<PathBuf>,
    log: Option<PathBuf>,
    csv: Option<PathBuf>,
    pairlist_csv: Option<PathBuf>,
    kind: Option<Kind>,
    n: Option<usize>,
    density: Option<f64>,
    temperature: Option<f64>,
    seed: Option<u64>,
    dt: Option<f64>,
    steps: Option<u64>,
    rcut: Option<f64>,
    rlist: Option<f64>,
    shift: Option<bool>,
    layout: Option<OneOrMany<LayoutArg>>,
    supercluster: Option<OneOrMany<usize>>,
    rebuild_interval: Option<OneOrMany<u64>>,
    workers: Option<OneOrMany<usize>>,
    prune: Option<bool>,
    slabs: Option<bool>,
    balance: Option<Metric>,
    report_interval: Option<u64>,
    repeats: Option<usize>,
}

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// flat TOML key-value file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// system JSON file; a fluid is generated from --kind/--n/--seed if absent
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    #[arg(long)]
    pub n: Option<usize>,
    /// particles per nm³
    #[arg(long)]
    pub density: Option<f64>,
    /// kelvin
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct PhysicsArgs {
    /// cutoff radius (nm)
    #[arg(long)]
    pub rcut: Option<f64>,
    /// pair-list radius (nm)
    #[arg(long)]
    pub rlist: Option<f64>,
    /// shift potentials to zero at the cutoff
    #[arg(long)]
    pub shift: Option<bool>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// output file; stdout if absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    /// kernel layout as M,N
    #[arg(long)]
    pub layout: Option<LayoutArg>,
    /// 1 or 8
    #[arg(long)]
    pub supercluster: Option<usize>,
    /// time step (ps)
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub rebuild_interval: Option<u64>,
    #[arg(long)]
    pub prune: Option<bool>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// one slab per worker along x, rebalanced at every list build
    #[arg(long)]
    pub slabs: bool,
    /// what drives the slab widths
    #[arg(long, value_enum)]
    pub balance: Option<Metric>,
    /// steps between log lines; 0 logs only the initial state
    #[arg(long)]
    pub report_interval: Option<u64>,
    /// final state in the system JSON format
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// run log; stdout if absent
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// cluster-pair diagnostics of the initial list
    #[arg(long)]
    pub pairlist_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[arg(long)]
    pub layout: Option<LayoutArg>,
    #[arg(long)]
    pub supercluster: Option<usize>,
    #[arg(long)]
    pub prune: Option<bool>,
    /// cluster-pair diagnostics of the checked list
    #[arg(long)]
    pub pairlist_csv: Option<PathBuf>,
    /// fault injection: remove one cluster pair before checking
    #[arg(long, hide = true)]
    pub drop_pair: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    /// repeatable; one sweep axis
    #[arg(long)]
    pub layout: Vec<LayoutArg>,
    #[arg(long)]
    pub supercluster: Option<usize>,
    /// repeatable; one sweep axis
    #[arg(long)]
    pub workers: Vec<usize>,
    /// repeatable; one sweep axis
    #[arg(long)]
    pub rebuild_interval: Vec<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub slabs: bool,
    #[arg(long, value_enum)]
    pub balance: Option<Metric>,
    /// CSV output; stdout if absent
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// A sweep axis: flags if given, else the config list, else `default`.
fn axis<T: Clone>(flag: &[T], file: &Option<OneOrMany<T>>, default: T) -> Vec<T> {
    if !flag.is_empty() {
        flag.to_vec()
    } else {
        file.clone().map(OneOrMany::into_vec).unwrap_or_else(|| vec![default])
    }
}

fn first<T: Clone>(v: &Option<OneOrMany<T>>) -> Option<T> {
    v.clone().and_then(|x| x.into_vec().into_iter().next())
}

fn load_system(src: &SourceArgs, cfg: &FileConfig) -> CliResult<SystemFile> {
    match src.system.as_ref().or(cfg.system.as_ref()) {
        Some(path) => SystemFile::load(path)
            .map_err(|e| CliError::Usage(format!("cannot load system {}: {e}", path.display()))),
        None => Ok(generate_fluid(&fluid_spec(src, cfg))?),
    }
}

fn fluid_spec(src: &SourceArgs, cfg: &FileConfig) -> FluidSpec {
    FluidSpec {
        kind: pick(src.kind, cfg.kind, Kind::LjFluid).into(),
        n: pick(src.n, cfg.n, 1000),
        density: pick(src.density, cfg.density, STANDARD_DENSITY),
        temperature: pick(src.temperature, cfg.temperature, STANDARD_TEMPERATURE),
        seed: pick(src.seed, cfg.seed, 1),
    }
}

fn nonbonded(file: &SystemFile, phys: &PhysicsArgs, cfg: &FileConfig) -> NonbondedParams {
    NonbondedParams::new(
        pick(phys.rcut, cfg.rcut, 0.9),
        pick(phys.rlist, cfg.rlist, 1.0),
        file.lj_table.clone(),
    )
    .shifted(pick(phys.shift, cfg.shift, true))
}

fn check_supercluster(s: usize) -> CliResult<usize> {
    if s == 1 || s == 8 {
        Ok(s)
    } else {
        Err(CliError::Usage(format!("--supercluster must be 1 or 8, got {s}")))
    }
}

fn check_valid(file: &SystemFile, params: &NonbondedParams) -> CliResult<()> {
    let report = validate_system(&file.system, params);
    if report.is_empty() {
        Ok(())
    } else {
        let lines: Vec<String> = report.iter().map(|v| format!("  {v}")).collect();
        Err(CliError::Failed(format!("system fails validation:\n{}", lines.join("\n"))))
    }
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let cfg = load_config(args.source.config.as_deref())?;
    let file = generate_fluid(&fluid_spec(&args.source, &cfg))?;
    let mut out = output(args.out.as_deref().or(cfg.out.as_deref()))?;
    writeln!(out, "{}", file.to_json()?)?;
    out.flush()?;
    Ok(())
}

struct EngineChoice {
    config: EngineConfig,
    steps: u64,
}

#[allow(clippy::too_many_arguments)]
fn engine_config(
    params: NonbondedParams,
    layout: KernelLayout,
    supercluster: usize,
    dt: f64,
    rebuild_interval: u64,
    prune: bool,
    workers: usize,
    slabs: bool,
    metric: Metric,
) -> EngineConfig {
    let mut config = EngineConfig::new(params, layout, dt);
    config.supercluster_size = supercluster;
    config.policy.rebuild_interval = rebuild_interval;
    config.policy.prune_on_build = prune;
    config.workers = workers;
    config.sizing = CellSizing::default();
    if slabs {
        config.slabs = Some(SlabConfig {
            metric: match metric {
                Metric::Time => BalanceMetric::WallTime,
                Metric::Pairs => BalanceMetric::AdmittedPairs,
            },
            ..SlabConfig::default()
        });
    }
    config
}

fn run_choice(args: &RunArgs, cfg: &FileConfig, params: NonbondedParams) -> CliResult<EngineChoice> {
    let layout = pick(args.layout, first(&cfg.layout), LayoutArg(KernelLayout::new(4, 4)?)).0;
    let supercluster = check_supercluster(pick(args.supercluster, first(&cfg.supercluster), 1))?;
    let config = engine_config(
        params,
        layout,
        supercluster,
        pick(args.dt, cfg.dt, 2e-3),
        pick(args.rebuild_interval, first(&cfg.rebuild_interval), 10),
        pick(args.prune, cfg.prune, true),
        pick(args.workers, first(&cfg.workers), 1),
        args.slabs || cfg.slabs.unwrap_or(false),
        pick(args.balance, cfg.balance, Metric::Time),
    );
    Ok(EngineChoice {
        config,
        steps: pick(args.steps, cfg.steps, 1000),
    })
}

pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let cfg = load_config(args.source.config.as_deref())?;
    let file = load_system(&args.source, &cfg)?;
    let params = nonbonded(&file, &args.physics, &cfg);
    check_valid(&file, &params)?;
    let choice = run_choice(args, &cfg, params)?;
    let lj_table = file.lj_table.clone();
    let mut sim = Simulation::new(file.system, choice.config)?;
    if let Some(path) = args.pairlist_csv.as_deref().or(cfg.pairlist_csv.as_deref()) {
        let st = &sim.state;
        write_diagnostics(&st.list, &st.grid, &st.grid.clustered_positions, &st.system.sim_box, File::create(path)?)?;
    }
    let mut log = output(args.log.as_deref().or(cfg.log.as_deref()))?;
    let report_interval = pick(args.report_interval, cfg.report_interval, 100);
    sim.run(choice.steps, report_interval, &mut log)?;
    log.flush()?;
    if let Some(path) = args.out.as_deref().or(cfg.out.as_deref()) {
        SystemFile {
            system: sim.state.system.clone(),
            lj_table,
        }
        .save(path)?;
    }
    Ok(())
}

/// Outcome of one `verify` pass.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub n_particles: usize,
    pub max_force_error: f64,
    pub lj_energy_error: f64,
    pub coulomb_energy_error: f64,
    pub total_energy_error: f64,
    /// brute-force pairs within r_list absent from the list
    pub missing_pairs: usize,
    pub dropped: Option<(usize, usize)>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.max_force_error <= FORCE_TOLERANCE
            && self.lj_energy_error <= ENERGY_TOLERANCE
            && self.coulomb_energy_error <= ENERGY_TOLERANCE
            && self.total_energy_error <= ENERGY_TOLERANCE
            && self.missing_pairs == 0
    }
}

pub fn verify_system(
    file: &SystemFile,
    params: &NonbondedParams,
    layout: KernelLayout,
    supercluster: usize,
    prune: bool,
    drop_pair: bool,
    diagnostics: Option<&Path>,
) -> CliResult<VerifyReport> {
    let system = &file.system;
    let n = system.len();
    if n > VERIFY_MAX_PARTICLES {
        return Err(CliError::Usage(format!(
            "{n} particles exceed the oracle limit of {VERIFY_MAX_PARTICLES}"
        )));
    }
    let grid = build_cluster_grid(system, layout.m, CellSizing::default())?;
    let mut list = build_pair_list(&grid, &system.sim_box, params.r_list, layout.n_lane, supercluster)?;
    if prune {
        list = prune_pair_list(&list, &grid.clustered_positions, &system.sim_box);
    }
    let mut dropped = None;
    if drop_pair {
        let target = list
            .entries
            .iter()
            .enumerate()
            .find_map(|(ci, js)| js.first().map(|e| (ci, e.j)));
        if let Some((ci, j)) = target {
            list.remove_pair(ci, j);
            dropped = Some((ci, j as usize));
        }
    }
    if let Some(path) = diagnostics {
        write_diagnostics(&list, &grid, &grid.clustered_positions, &system.sim_box, File::create(path)?)?;
    }
    let attrs = ClusterAttributes::gather(&grid, system);
    let got = compute_nonbonded(&list, &grid, &grid.clustered_positions, &attrs, params, &system.sim_box, layout)?
        .to_original(&grid)?;
    let reference = brute_force_nonbonded(system, params)?;
    let admitted = admitted_pairs(&list, &grid);
    let needed = brute_force_pairs(&system.positions, &system.sim_box, params.r_list);
    Ok(VerifyReport {
        n_particles: n,
        max_force_error: max_relative_force_error(&got.forces, &reference.forces),
        lj_energy_error: relative_error(got.e_lj, reference.e_lj),
        coulomb_energy_error: relative_error(got.e_coulomb, reference.e_coulomb),
        total_energy_error: relative_error(got.potential(), reference.potential()),
        missing_pairs: needed.difference(&admitted).count(),
        dropped,
    })
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    let cfg = load_config(args.source.config.as_deref())?;
    let file = load_system(&args.source, &cfg)?;
    let params = nonbonded(&file, &args.physics, &cfg);
    check_valid(&file, &params)?;
    let layout = pick(args.layout, first(&cfg.layout), LayoutArg(KernelLayout::new(4, 4)?)).0;
    let supercluster = check_supercluster(pick(args.supercluster, first(&cfg.supercluster), 1))?;
    let prune = pick(args.prune, cfg.prune, true);
    let diagnostics = args.pairlist_csv.as_deref().or(cfg.pairlist_csv.as_deref());
    let report = verify_system(&file, &params, layout, supercluster, prune, args.drop_pair, diagnostics)?;

    let mut out = io::stdout().lock();
    writeln!(out, "particles              {}", report.n_particles)?;
    writeln!(out, "layout                 {layout} supercluster {supercluster} prune {prune}")?;
    if let Some((ci, cj)) = report.dropped {
        writeln!(out, "dropped cluster pair   ({ci}, {cj})")?;
    }
    writeln!(out, "max_force_rel_error    {:.3e} (tolerance {FORCE_TOLERANCE:e})", report.max_force_error)?;
    writeln!(out, "lj_energy_rel_error    {:.3e} (tolerance {ENERGY_TOLERANCE:e})", report.lj_energy_error)?;
    writeln!(out, "coul_energy_rel_error  {:.3e} (tolerance {ENERGY_TOLERANCE:e})", report.coulomb_energy_error)?;
    writeln!(out, "total_energy_rel_error {:.3e} (tolerance {ENERGY_TOLERANCE:e})", report.total_energy_error)?;
    writeln!(out, "missing_pairs          {}", report.missing_pairs)?;
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    writeln!(out, "result                 {verdict}")?;
    out.flush()?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failed("verification failed".into()))
    }
}

pub const BENCH_SECTIONS: [&str; 4] = ["update", "pairsearch", "force", "output"];

/// One bench table row.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub layout: KernelLayout,
    pub supercluster: usize,
    pub workers: usize,
    pub rebuild_interval: u64,
    pub steps: u64,
    pub repeats: usize,
    pub steps_per_s_median: f64,
    /// max minus min over repeats
    pub steps_per_s_spread: f64,
    pub ns_per_day: f64,
    pub pair_ratio: f64,
    pub flop_ratio: f64,
    /// mean share of run wall time per entry of [`BENCH_SECTIONS`]
    pub section_shares: [f64; 4],
    /// total energy at step 0
    pub e0_total: f64,
}

pub fn bench_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "schema",
        "layout",
        "supercluster",
        "workers",
        "rebuild_interval",
        "steps",
        "repeats",
        "steps_per_s_median",
        "steps_per_s_spread",
        "ns_per_day",
        "pair_ratio",
        "flop_ratio",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(BENCH_SECTIONS.iter().map(|s| format!("share_{s}")));
    h.push("e0_total".into());
    h
}

impl BenchRow {
    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            BENCH_SCHEMA.to_string(),
            self.layout.to_string(),
            self.supercluster.to_string(),
            self.workers.to_string(),
            self.rebuild_interval.to_string(),
            self.steps.to_string(),
            self.repeats.to_string(),
            format!("{}", self.steps_per_s_median),
            format!("{}", self.steps_per_s_spread),
            format!("{}", self.ns_per_day),
            format!("{}", self.pair_ratio),
            format!("{}", self.flop_ratio),
        ];
        r.extend(self.section_shares.iter().map(|s| format!("{s}")));
        r.push(format!("{:.17e}", self.e0_total));
        r
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs one sweep cell `repeats` times from the same initial state.
pub fn bench_cell(file: &SystemFile, config: &EngineConfig, steps: u64, repeats: usize) -> CliResult<BenchRow> {
    let mut rates = Vec::with_capacity(repeats);
    let mut shares = [0.0; 4];
    let mut first: Option<(f64, f64, f64)> = None;
    for _ in 0..repeats {
        let mut sim = Simulation::new(file.system.clone(), config.clone())?;
        if first.is_none() {
            let st = &sim.state;
            let r_cut = config.params.r_cut;
            let pos = &st.grid.clustered_positions;
            let stats = interaction_stats(&st.list, &st.grid, pos, &st.system.sim_box, r_cut);
            let flops = flop_count(&st.list, &st.grid, config.layout, pos, &st.system.sim_box, r_cut);
            first = Some((stats.ratio, flops.ratio(), sim.energies().total()));
        }
        let summary = sim.run(steps, 0, &mut io::sink())?;
        rates.push(summary.steps_per_second());
        let wall = summary.wall.as_secs_f64();
        for (k, name) in BENCH_SECTIONS.iter().enumerate() {
            let t = sim.timing.get(name).map_or(0.0, |s| s.total.as_secs_f64());
            if wall > 0.0 {
                shares[k] += t / wall / repeats as f64;
            }
        }
    }
    let (pair_ratio, flop_ratio, e0_total) = first.unwrap_or((0.0, 0.0, 0.0));
    let spread = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let med = median(&mut rates);
    Ok(BenchRow {
        layout: config.layout,
        supercluster: config.supercluster_size,
        workers: config.workers,
        rebuild_interval: config.policy.rebuild_interval,
        steps,
        repeats,
        steps_per_s_median: med,
        steps_per_s_spread: spread,
        ns_per_day: med * config.dt * 86.4,
        pair_ratio,
        flop_ratio,
        section_shares: shares,
        e0_total,
    })
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    let cfg = load_config(args.source.config.as_deref())?;
    let file = load_system(&args.source, &cfg)?;
    let params = nonbonded(&file, &args.physics, &cfg);
    check_valid(&file, &params)?;
    let layouts: Vec<LayoutArg> = axis(&args.layout, &cfg.layout, LayoutArg(KernelLayout::new(4, 4)?));
    let workers: Vec<usize> = axis(&args.workers, &cfg.workers, 1);
    let intervals: Vec<u64> = axis(&args.rebuild_interval, &cfg.rebuild_interval, 10);
    let supercluster = check_supercluster(pick(args.supercluster, first(&cfg.supercluster), 1))?;
    let repeats = pick(args.repeats, cfg.repeats, 3);
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let steps = pick(args.steps, cfg.steps, 100);
    let dt = pick(args.dt, cfg.dt, 2e-3);
    let slabs = args.slabs || cfg.slabs.unwrap_or(false);
    let metric = pick(args.balance, cfg.balance, Metric::Time);
    let prune = cfg.prune.unwrap_or(true);

    let mut w = csv::Writer::from_writer(output(args.csv.as_deref().or(cfg.csv.as_deref()))?);
    w.write_record(bench_header()).map_err(Error::from)?;
    for layout in &layouts {
        for &wk in &workers {
            for &interval in &intervals {
                let config = engine_config(params.clone(), layout.0, supercluster, dt, interval, prune, wk, slabs, metric);
                let row = bench_cell(&file, &config, steps, repeats)?;
                w.write_record(row.record()).map_err(Error::from)?;
                w.flush()?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

/// Parses `std::env::args`, runs the command and maps the outcome to an
/// exit status.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cpmd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
