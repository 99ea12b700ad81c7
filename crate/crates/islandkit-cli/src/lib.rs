//! Command-line surface for the islandkit library: coherency detection,
//! islanding runs, assignment evaluation, exhaustive oracles, synthetic
//! scenario generation, and graph exports.
//!
//! Exit codes: 0 success, 1 domain error (machine-readable JSON on stderr),
//! 2 usage error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use islandkit::error::Error;
use islandkit::export::{export_graph, ExportFormat};
use islandkit::grid::{
    load_flow_snapshot, load_topology, load_waveforms, validate_snapshot, GridTopology,
    PowerFlowSnapshot, WaveformSet,
};
use islandkit::layers::{ClampPolicy, LayerKind, LayerMode};
use islandkit::modularity::{detect_coherent_groups, Partition};
use islandkit::oracle::{
    exact_max_modularity, exact_min_disruption, DEFAULT_DISRUPTION_NODE_LIMIT,
    DEFAULT_MODULARITY_NODE_LIMIT,
};
use islandkit::pipeline::{
    balance_report, build_layer, cut_set, disruption_metrics, msci, single_layer_islanding,
    CaseMode, CutBranch, Island, KSelect, LayerBuildOptions, PipelineConfig,
};
use islandkit::signal::WindowFn;
use islandkit::synth::{synth_scenario, write_scenario, BridgeSpec, SynthSpec};
use islandkit::Result;

pub mod config;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "islandkit",
    version,
    about = "Two-stage multi-layer spectral clustering for controlled islanding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect coherent bus groups by modularity clustering (stage I).
    Coherency(CoherencyArgs),
    /// Compute an islanding solution (stage I + stage II).
    Island(IslandArgs),
    /// Evaluate a given island assignment: cut-set, disruption, balance.
    Evaluate(EvaluateArgs),
    /// Exhaustive optima for small instances.
    Oracle(OracleArgs),
    /// Generate a planted synthetic scenario on disk.
    Synth(SynthArgs),
    /// Re-render a saved solution as DOT, GraphML, or cut-set CSV.
    Export(ExportArgs),
}

/// Input file paths shared by the analysis subcommands.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Topology JSON document.
    #[arg(long)]
    pub topology: PathBuf,
    /// Branch-flow CSV. The bus table defaults to `<flows>.buses.csv`.
    #[arg(long)]
    pub flows: Option<PathBuf>,
    /// Bus-table CSV (voltages, injections, optional admittance rows).
    #[arg(long)]
    pub bus_table: Option<PathBuf>,
    /// Waveform CSV (`t,<bus1>,...`), required for the frequency layer.
    #[arg(long)]
    pub waveforms: Option<PathBuf>,
}

/// Layer-construction and pipeline tuning flags. A `--config` file of
/// `key=value` lines overrides any of them.
#[derive(Debug, Clone, Args)]
pub struct TuningArgs {
    /// DFT band as `lo:hi` in Hz.
    #[arg(long)]
    pub band: Option<String>,
    /// Negative-correlation handling: `zero` or `shift`.
    #[arg(long)]
    pub clamp: Option<String>,
    /// Window applied before the DFT: `none` or `hann`.
    #[arg(long)]
    pub window: Option<String>,
    /// Power-layer weights: `measured` or `formula`.
    #[arg(long)]
    pub layer_mode: Option<String>,
    /// Divide each layer by its largest entry.
    #[arg(long)]
    pub normalize_layers: bool,
    /// Subspace-merging weight in the modified Laplacian.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// k-means seed (falls back to $ISLANDKIT_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// k-means restarts.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Config file of `key=value` lines; its values override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoherencyArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Layer to cluster: freq, p, or q.
    #[arg(long, default_value = "freq")]
    pub layer: String,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IslandArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Case preset 1-4 (frequency / reactive / active / all three).
    #[arg(long)]
    pub case: Option<u8>,
    /// Comma-separated layer list (freq,p,q) when no case is given.
    #[arg(long)]
    pub layers: Option<String>,
    /// Island count: `auto` (stage I) or an explicit number.
    #[arg(long, default_value = "auto")]
    pub k: String,
    /// Stage-I layer override.
    #[arg(long)]
    pub stage1_layer: Option<String>,
    /// Write the solution JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also export the solution graph: dot, graphml, or csv.
    #[arg(long)]
    pub export: Option<String>,
    /// Path for the export artifact.
    #[arg(long)]
    pub export_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Assignment JSON: {"islands": [["B1", ...], ...]}.
    #[arg(long)]
    pub assignment: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Objective: `disruption` or `modularity`.
    #[arg(long)]
    pub objective: String,
    /// Layer the objective is evaluated on: freq, p, or q.
    #[arg(long, default_value = "p")]
    pub layer: String,
    /// Cluster count for the disruption objective.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Enumeration size guard.
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Drop the island-connectivity filter (pure graph cut).
    #[arg(long)]
    pub unconstrained: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for topology.json, flows.csv, flows.buses.csv,
    /// waveforms.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub groups: usize,
    #[arg(long, default_value_t = 4)]
    pub buses_per_group: usize,
    /// Comma-separated per-group frequencies in Hz.
    #[arg(long, default_value = "0.3,0.5,0.8")]
    pub freqs: String,
    /// Comma-separated per-group phase offsets in radians.
    #[arg(long)]
    pub phases: Option<String>,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Bridges as `fromGroup-toGroup:P_MW:Q_Mvar`, comma-separated.
    /// Default: a chain carrying 5 MW / 2 Mvar.
    #[arg(long)]
    pub bridges: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub topology: PathBuf,
    /// Solution JSON produced by the island subcommand.
    #[arg(long)]
    pub solution: PathBuf,
    /// dot, graphml, or csv.
    #[arg(long)]
    pub format: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses argv and executes, returning (exit code, stdout, stderr).
pub fn run_from<I, T>(args: I) -> (i32, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return if e.use_stderr() {
                (2, String::new(), e.to_string())
            } else {
                // --help / --version
                (0, e.to_string(), String::new())
            };
        }
    };
    match execute(cli) {
        Ok(output) => (0, output, String::new()),
        Err(e) => {
            let payload = serde_json::json!({
                "error": { "code": e.code(), "message": e.to_string() }
            });
            (1, String::new(), format!("{payload:#}\n"))
        }
    }
}

/// Executes a parsed invocation; returns the primary JSON output (already
/// written to `--out` when given).
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Coherency(args) => cmd_coherency(args),
        Command::Island(args) => cmd_island(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Export(args) => cmd_export(args),
    }
}

fn emit(json: String, out: Option<&Path>) -> Result<String> {
    if let Some(path) = out {
        std::fs::write(path, &json).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(json)
}

/// Loads the snapshot when branch flows were supplied; the bus table path
/// defaults to the flows path with a `.buses.csv` extension.
fn load_inputs(
    inputs: &InputArgs,
) -> Result<(GridTopology, Option<PowerFlowSnapshot>, Option<WaveformSet>)> {
    let topo = load_topology(&inputs.topology)?;
    let snap = match &inputs.flows {
        Some(flows) => {
            let bus_table = inputs
                .bus_table
                .clone()
                .unwrap_or_else(|| flows.with_extension("buses.csv"));
            Some(load_flow_snapshot(flows, bus_table, &topo)?)
        }
        None => None,
    };
    let waveforms = match &inputs.waveforms {
        Some(path) => Some(load_waveforms(path)?),
        None => None,
    };
    Ok((topo, snap, waveforms))
}

fn require_snapshot(snap: Option<PowerFlowSnapshot>) -> Result<PowerFlowSnapshot> {
    snap.ok_or_else(|| Error::Config("this command needs --flows (branch-flow CSV)".into()))
}

/// Placeholder snapshot for frequency-only runs without flow data: zero
/// flows and unit voltages, so power metrics are all zero.
fn zero_snapshot(topo: &GridTopology) -> Result<PowerFlowSnapshot> {
    use islandkit::grid::{BranchFlow, BusState};
    PowerFlowSnapshot::new(
        topo,
        vec![
            BranchFlow {
                p_from_mw: 0.0,
                q_from_mvar: 0.0,
                p_to_mw: 0.0,
                q_to_mvar: 0.0,
            };
            topo.branches().len()
        ],
        vec![
            BusState {
                v_pu: 1.0,
                phi_rad: 0.0,
                p_gen_mw: 0.0,
                q_gen_mvar: 0.0,
                p_load_mw: 0.0,
                q_load_mvar: 0.0,
            };
            topo.bus_count()
        ],
        None,
    )
}

#[derive(Debug, Serialize)]
struct CoherencyReport {
    layer: LayerKind,
    k: usize,
    q: f64,
    groups: Vec<Vec<String>>,
    merge_history: Vec<islandkit::modularity::MergeStep>,
}

fn cmd_coherency(args: CoherencyArgs) -> Result<String> {
    let cfg = RunConfig::resolve(&args.tuning)?;
    let (topo, snap, waveforms) = load_inputs(&args.inputs)?;
    let kind = config::parse_layer_kind(&args.layer)?;
    let snap = match (kind, snap) {
        (LayerKind::Frequency, maybe) => maybe.map_or_else(|| zero_snapshot(&topo), Ok)?,
        (_, maybe) => require_snapshot(maybe)?,
    };
    let layer = build_layer(kind, &topo, &snap, waveforms.as_ref(), &cfg.build_options())?;
    let res = detect_coherent_groups(&layer)?;
    let report = CoherencyReport {
        layer: kind,
        k: res.partition.k(),
        q: res.q,
        groups: clusters_as_labels(&res.partition, &topo),
        merge_history: res.merge_history,
    };
    emit(to_pretty_json(&report), args.out.as_deref())
}

fn clusters_as_labels(p: &Partition, topo: &GridTopology) -> Vec<Vec<String>> {
    p.clusters()
        .iter()
        .map(|members| {
            members
                .iter()
                .map(|&b| topo.buses()[b].label.clone())
                .collect()
        })
        .collect()
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    s.push('\n');
    s
}

fn cmd_island(args: IslandArgs) -> Result<String> {
    let cfg = RunConfig::resolve(&args.tuning)?;
    let (topo, snap, waveforms) = load_inputs(&args.inputs)?;

    let case = match cfg.case.or(args.case) {
        Some(n) => Some(CaseMode::from_number(n).ok_or_else(|| {
            Error::Config(format!("unknown case {n}; expected 1, 2, 3, or 4"))
        })?),
        None => None,
    };
    let (kinds, stage1_default) = match case {
        Some(c) => c.layer_plan(),
        None => {
            let kinds = match cfg.layers.clone().or(args.layers.clone()) {
                Some(spec) => config::parse_layer_list(&spec)?,
                None => vec![LayerKind::Frequency, LayerKind::Active, LayerKind::Reactive],
            };
            let stage1 = if kinds.contains(&LayerKind::Frequency) {
                LayerKind::Frequency
            } else {
                kinds[0]
            };
            (kinds, stage1)
        }
    };
    let stage1 = match cfg.stage1.clone().or(args.stage1_layer.clone()) {
        Some(s) => config::parse_layer_kind(&s)?,
        None => stage1_default,
    };
    let k_override = config::parse_k(cfg.k.as_deref().unwrap_or(&args.k))?;

    let needs_flows = kinds
        .iter()
        .any(|k| matches!(k, LayerKind::Active | LayerKind::Reactive));
    let snap = if needs_flows {
        require_snapshot(snap)?
    } else {
        snap.map_or_else(|| zero_snapshot(&topo), Ok)?
    };

    let opts = cfg.build_options();
    let pipeline_config = PipelineConfig {
        alpha: cfg.alpha,
        seed: cfg.seed,
        restarts: cfg.restarts,
        stage1,
        k_override,
        layer_mode: opts.mode,
        case: case.map(|c| c.number()),
    };

    let layers: Vec<islandkit::layers::SimilarityMatrix> = kinds
        .iter()
        .map(|&kind| build_layer(kind, &topo, &snap, waveforms.as_ref(), &opts))
        .collect::<Result<_>>()?;

    let solution = if layers.len() == 1 {
        let k_sel = match k_override {
            Some(k) => KSelect::Fixed(k),
            None => KSelect::Auto,
        };
        single_layer_islanding(&layers[0], &topo, &snap, k_sel, &pipeline_config)?
    } else {
        let graph = islandkit::layers::assemble_multilayer(layers)?;
        msci(&graph, &topo, &snap, &pipeline_config)?
    };

    if let Some(format) = &args.export {
        let format: ExportFormat = format.parse()?;
        let path = args.export_out.clone().ok_or_else(|| {
            Error::Config("--export needs --export-out <path>".into())
        })?;
        export_graph(&solution, &topo, format, path)?;
    }

    let mut json = solution.to_json();
    json.push('\n');
    emit(json, args.out.as_deref())
}

#[derive(Debug, Deserialize)]
struct AssignmentDoc {
    islands: Vec<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    k: usize,
    islands: Vec<Island>,
    cut_set: Vec<CutBranch>,
    active_disruption_mw: f64,
    reactive_disruption_mvar: f64,
    balance: islandkit::pipeline::BalanceReport,
    islands_connected: Vec<bool>,
    diagnostics: islandkit::grid::SnapshotDiagnostics,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<String> {
    let (topo, snap, _) = load_inputs(&args.inputs)?;
    let snap = require_snapshot(snap)?;
    let text = std::fs::read_to_string(&args.assignment).map_err(|source| Error::Io {
        path: args.assignment.display().to_string(),
        source,
    })?;
    let doc: AssignmentDoc = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: args.assignment.display().to_string(),
        detail: e.to_string(),
    })?;

    let mut assignment = vec![usize::MAX; topo.bus_count()];
    for (island, labels) in doc.islands.iter().enumerate() {
        for label in labels {
            let idx = topo.index_of(label).ok_or_else(|| {
                Error::Validation(format!("assignment references unknown bus '{label}'"))
            })?;
            if assignment[idx] != usize::MAX {
                return Err(Error::Validation(format!(
                    "bus '{label}' appears in more than one island"
                )));
            }
            assignment[idx] = island;
        }
    }
    if let Some(missing) = assignment.iter().position(|&a| a == usize::MAX) {
        return Err(Error::Validation(format!(
            "bus '{}' is not assigned to any island",
            topo.buses()[missing].label
        )));
    }
    let partition = Partition::new(assignment)?;

    let cut = cut_set(&topo, &partition);
    let (dp, dq) = disruption_metrics(&snap, &topo, &partition)?;
    let cut_branches: Vec<CutBranch> = cut
        .iter()
        .map(|c| {
            let flow = snap.branch_flow(c.index);
            CutBranch {
                id: c.id.clone(),
                from: topo.buses()[c.from].label.clone(),
                to: topo.buses()[c.to].label.clone(),
                p_mw: (flow.p_from_mw.abs() + flow.p_to_mw.abs()) / 2.0,
                q_mvar: (flow.q_from_mvar.abs() + flow.q_to_mvar.abs()) / 2.0,
            }
        })
        .collect();
    let islands: Vec<Island> = partition
        .clusters()
        .iter()
        .enumerate()
        .map(|(id, members)| Island {
            id,
            buses: members
                .iter()
                .map(|&b| topo.buses()[b].label.clone())
                .collect(),
        })
        .collect();
    let islands_connected = partition
        .clusters()
        .iter()
        .map(|members| island_is_connected(&topo, members))
        .collect();

    let report = EvaluationReport {
        k: partition.k(),
        islands,
        cut_set: cut_branches,
        active_disruption_mw: dp,
        reactive_disruption_mvar: dq,
        balance: balance_report(&snap, &partition),
        islands_connected,
        diagnostics: validate_snapshot(&snap, &topo),
    };
    emit(to_pretty_json(&report), args.out.as_deref())
}

fn island_is_connected(topo: &GridTopology, members: &[usize]) -> bool {
    if members.is_empty() {
        return true;
    }
    let inside: std::collections::HashSet<usize> = members.iter().copied().collect();
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![members[0]];
    seen.insert(members[0]);
    while let Some(v) = stack.pop() {
        for &(nb, _) in topo.neighbors(v) {
            if inside.contains(&nb) && seen.insert(nb) {
                stack.push(nb);
            }
        }
    }
    seen.len() == members.len()
}

#[derive(Debug, Serialize)]
struct OracleReport {
    objective: String,
    layer: LayerKind,
    value: f64,
    k: usize,
    islands: Vec<Vec<String>>,
    evaluated: u64,
    feasible: u64,
    enumeration_space: String,
}

fn cmd_oracle(args: OracleArgs) -> Result<String> {
    let cfg = RunConfig::resolve(&args.tuning)?;
    let (topo, snap, waveforms) = load_inputs(&args.inputs)?;
    let kind = config::parse_layer_kind(&args.layer)?;
    let snap = match (kind, snap) {
        (LayerKind::Frequency, maybe) => maybe.map_or_else(|| zero_snapshot(&topo), Ok)?,
        (_, maybe) => require_snapshot(maybe)?,
    };
    let layer = build_layer(kind, &topo, &snap, waveforms.as_ref(), &cfg.build_options())?;

    let result = match args.objective.as_str() {
        "disruption" => {
            let limit = args.max_nodes.unwrap_or(DEFAULT_DISRUPTION_NODE_LIMIT);
            exact_min_disruption(&layer, &topo, args.k, limit, !args.unconstrained)?
        }
        "modularity" => {
            let limit = args.max_nodes.unwrap_or(DEFAULT_MODULARITY_NODE_LIMIT);
            exact_max_modularity(&layer, limit)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown objective '{other}' (expected disruption or modularity)"
            )))
        }
    };

    let report = OracleReport {
        objective: args.objective,
        layer: kind,
        value: result.objective,
        k: result.partition.k(),
        islands: clusters_as_labels(&result.partition, &topo),
        evaluated: result.evaluated,
        feasible: result.feasible,
        enumeration_space: result.enumeration_space,
    };
    emit(to_pretty_json(&report), args.out.as_deref())
}

#[derive(Debug, Serialize)]
struct SynthReport {
    dir: String,
    files: Vec<String>,
    buses: usize,
    branches: usize,
    groups: Vec<Vec<String>>,
    seed: u64,
}

fn cmd_synth(args: SynthArgs) -> Result<String> {
    let seed = match args.seed {
        Some(s) => s,
        None => config::seed_from_env().unwrap_or(0),
    };
    let spec = SynthSpec {
        groups: args.groups,
        buses_per_group: args.buses_per_group,
        freqs_hz: config::parse_f64_list(&args.freqs, "freqs")?,
        phase_offsets_rad: match &args.phases {
            Some(p) => config::parse_f64_list(p, "phases")?,
            None => Vec::new(),
        },
        noise_amplitude_rad: args.noise,
        duration_s: args.duration,
        dt_s: args.dt,
        bridges: match &args.bridges {
            Some(b) => parse_bridges(b)?,
            None => Vec::new(),
        },
        seed,
    };
    let scenario = synth_scenario(&spec)?;
    write_scenario(&scenario, &args.out)?;
    let report = SynthReport {
        dir: args.out.display().to_string(),
        files: vec![
            islandkit::synth::TOPOLOGY_FILE.into(),
            islandkit::synth::FLOWS_FILE.into(),
            islandkit::synth::BUS_TABLE_FILE.into(),
            islandkit::synth::WAVEFORMS_FILE.into(),
        ],
        buses: scenario.topology.bus_count(),
        branches: scenario.topology.branches().len(),
        groups: scenario
            .groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&b| scenario.topology.buses()[b].label.clone())
                    .collect()
            })
            .collect(),
        seed,
    };
    Ok(to_pretty_json(&report))
}

fn parse_bridges(spec: &str) -> Result<Vec<BridgeSpec>> {
    spec.split(',')
        .map(|item| {
            let parts: Vec<&str> = item.split(':').collect();
            let bad = || Error::Config(format!("bridge '{item}' is not 'a-b:P:Q'"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let (groups, p, q) = (parts[0], parts[1], parts[2]);
            let g: Vec<&str> = groups.split('-').collect();
            if g.len() != 2 {
                return Err(bad());
            }
            Ok(BridgeSpec {
                from_group: g[0].trim().parse().map_err(|_| bad())?,
                to_group: g[1].trim().parse().map_err(|_| bad())?,
                p_mw: p.trim().parse().map_err(|_| bad())?,
                q_mvar: q.trim().parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

fn cmd_export(args: ExportArgs) -> Result<String> {
    let topo = load_topology(&args.topology)?;
    let text = std::fs::read_to_string(&args.solution).map_err(|source| Error::Io {
        path: args.solution.display().to_string(),
        source,
    })?;
    let solution: islandkit::pipeline::IslandingSolution =
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: args.solution.display().to_string(),
            detail: e.to_string(),
        })?;
    let format: ExportFormat = args.format.parse()?;
    export_graph(&solution, &topo, format, &args.out)?;
    let report: BTreeMap<&str, String> = BTreeMap::from([
        ("format", args.format.clone()),
        ("out", args.out.display().to_string()),
    ]);
    Ok(to_pretty_json(&report))
}
