//! Orchestration of the two-stage islanding algorithm: stage I fixes the
//! island count from coherency clustering, stage II merges the layer
//! embeddings and clusters the merged embedding, then physical connectivity
//! is enforced and cut/disruption/balance metrics are reported.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridTopology, PowerFlowSnapshot, WaveformSet};
use crate::layers::{
    active_power_layer, assemble_multilayer, frequency_layer, reactive_power_layer, ClampPolicy,
    LayerKind, LayerMode, MultiLayerGraph, SimilarityMatrix,
};
use crate::modularity::{detect_coherent_groups, CoherencyResult, Partition};
use crate::signal::{angular_velocity, correlation_matrix, dft_spectrum_windowed, WindowFn};
use crate::spectral::{
    kmeans_cluster, modified_laplacian, normalized_laplacian, row_normalize, spectral_embedding,
    EmbeddingMatrix, LaplacianMatrix,
};

/// The four case presets: which layers participate and which layer stage I
/// clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseMode {
    /// Case 1: frequency-similarity layer only.
    FrequencyOnly,
    /// Case 2: reactive-power layer only.
    ReactiveOnly,
    /// Case 3: active-power layer only.
    ActiveOnly,
    /// Case 4: all three layers, stage I on the frequency layer.
    AllCriteria,
}

impl CaseMode {
    pub fn from_number(n: u8) -> Option<CaseMode> {
        match n {
            1 => Some(CaseMode::FrequencyOnly),
            2 => Some(CaseMode::ReactiveOnly),
            3 => Some(CaseMode::ActiveOnly),
            4 => Some(CaseMode::AllCriteria),
            _ => None,
        }
    }

    pub fn number(&self) -> u8 {
        match self {
            CaseMode::FrequencyOnly => 1,
            CaseMode::ReactiveOnly => 2,
            CaseMode::ActiveOnly => 3,
            CaseMode::AllCriteria => 4,
        }
    }

    /// Layers the case uses, in canonical order, and the stage-I layer.
    pub fn layer_plan(&self) -> (Vec<LayerKind>, LayerKind) {
        match self {
            CaseMode::FrequencyOnly => (vec![LayerKind::Frequency], LayerKind::Frequency),
            CaseMode::ReactiveOnly => (vec![LayerKind::Reactive], LayerKind::Reactive),
            CaseMode::ActiveOnly => (vec![LayerKind::Active], LayerKind::Active),
            CaseMode::AllCriteria => (
                vec![LayerKind::Frequency, LayerKind::Active, LayerKind::Reactive],
                LayerKind::Frequency,
            ),
        }
    }
}

/// Pipeline configuration. Every field has a documented default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Subspace-merging weight in the modified Laplacian. Default 0.5.
    pub alpha: f64,
    /// k-means seed. Default 0.
    pub seed: u64,
    /// k-means restarts. Default 20.
    pub restarts: usize,
    /// Layer clustered in stage I. Default frequency.
    pub stage1: LayerKind,
    /// Explicit island count; `None` takes k from stage I. Default `None`.
    pub k_override: Option<usize>,
    /// How power-layer weights were obtained (echoed in the solution).
    pub layer_mode: LayerMode,
    /// Case preset that produced this run, if any (echoed in the solution).
    pub case: Option<u8>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 0.5,
            seed: 0,
            restarts: 20,
            stage1: LayerKind::Frequency,
            k_override: None,
            layer_mode: LayerMode::Measured,
            case: None,
        }
    }
}

/// One island's generation/load totals and imbalance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandBalance {
    pub island: usize,
    pub p_gen_mw: f64,
    pub p_load_mw: f64,
    pub q_gen_mvar: f64,
    pub q_load_mvar: f64,
    pub delta_p_mw: f64,
    pub delta_q_mvar: f64,
}

/// Per-island balance rows plus the totals of absolute imbalances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub islands: Vec<IslandBalance>,
    pub sum_abs_delta_p_mw: f64,
    pub sum_abs_delta_q_mvar: f64,
}

/// A severed branch with its measured flow weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutBranch {
    pub id: String,
    pub from: String,
    pub to: String,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Island {
    pub id: usize,
    pub buses: Vec<String>,
}

/// Stage-I echo carried in the solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage1Echo {
    pub k: usize,
    pub q: f64,
    pub groups: Vec<Vec<String>>,
}

/// Configuration echo carried in the solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionConfig {
    pub case: Option<u8>,
    pub layers: Vec<LayerKind>,
    pub layer_mode: LayerMode,
    pub alpha: f64,
    pub seed: u64,
    pub restarts: usize,
    pub stage1_layer: LayerKind,
    pub k: usize,
    pub k_from_stage1: bool,
}

/// The complete islanding result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IslandingSolution {
    pub config: SolutionConfig,
    pub k: usize,
    pub partition: Partition,
    pub islands: Vec<Island>,
    pub cut_set: Vec<CutBranch>,
    pub active_disruption_mw: f64,
    pub reactive_disruption_mvar: f64,
    pub balance: BalanceReport,
    pub stage1: Option<Stage1Echo>,
    pub warnings: Vec<String>,
}

impl IslandingSolution {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serialization cannot fail")
    }
}

/// Branches whose endpoints lie in different clusters, ordered by
/// (id, from index, to index).
pub fn cut_set(topo: &GridTopology, p: &Partition) -> Vec<CutBranchRef> {
    let mut cut: Vec<CutBranchRef> = topo
        .branches()
        .iter()
        .enumerate()
        .filter(|(_, br)| p.cluster_of(br.from) != p.cluster_of(br.to))
        .map(|(bx, br)| CutBranchRef {
            index: bx,
            id: br.id.clone(),
            from: br.from,
            to: br.to,
        })
        .collect();
    cut.sort_by(|a, b| (&a.id, a.from, a.to).cmp(&(&b.id, b.from, b.to)));
    cut
}

/// A cut branch reference: topology branch index plus identifying fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutBranchRef {
    pub index: usize,
    pub id: String,
    pub from: usize,
    pub to: usize,
}

/// Active/reactive power severed by a partition: the sums over distinct cut
/// pairs of the measured-layer weights, so the result is arithmetically
/// identical to summing those layers over the cut-set.
pub fn disruption_metrics(
    snap: &PowerFlowSnapshot,
    topo: &GridTopology,
    p: &Partition,
) -> Result<(f64, f64)> {
    let active = active_power_layer(snap, topo, LayerMode::Measured)?;
    let reactive = reactive_power_layer(snap, topo, LayerMode::Measured)?;
    Ok(disruption_from_layers(&active, &reactive, p))
}

/// Sums layer weights over distinct cut pairs in ascending (i, j) order.
pub fn disruption_from_layers(
    active: &SimilarityMatrix,
    reactive: &SimilarityMatrix,
    p: &Partition,
) -> (f64, f64) {
    let n = active.dim();
    let mut p_sum = 0.0;
    let mut q_sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if p.cluster_of(i) != p.cluster_of(j) {
                p_sum += active.weight(i, j);
                q_sum += reactive.weight(i, j);
            }
        }
    }
    (p_sum, q_sum)
}

/// Per-island generation/load sums and imbalances.
pub fn balance_report(snap: &PowerFlowSnapshot, p: &Partition) -> BalanceReport {
    let clusters = p.clusters();
    let mut islands = Vec::with_capacity(clusters.len());
    let mut sum_abs_p = 0.0;
    let mut sum_abs_q = 0.0;
    for (id, members) in clusters.iter().enumerate() {
        let mut row = IslandBalance {
            island: id,
            p_gen_mw: 0.0,
            p_load_mw: 0.0,
            q_gen_mvar: 0.0,
            q_load_mvar: 0.0,
            delta_p_mw: 0.0,
            delta_q_mvar: 0.0,
        };
        for &b in members {
            let st = snap.bus_state(b);
            row.p_gen_mw += st.p_gen_mw;
            row.p_load_mw += st.p_load_mw;
            row.q_gen_mvar += st.q_gen_mvar;
            row.q_load_mvar += st.q_load_mvar;
        }
        row.delta_p_mw = row.p_gen_mw - row.p_load_mw;
        row.delta_q_mvar = row.q_gen_mvar - row.q_load_mvar;
        sum_abs_p += row.delta_p_mw.abs();
        sum_abs_q += row.delta_q_mvar.abs();
        islands.push(row);
    }
    BalanceReport {
        islands,
        sum_abs_delta_p_mw: sum_abs_p,
        sum_abs_delta_q_mvar: sum_abs_q,
    }
}

/// Makes every cluster induce a connected subgraph of the topology. Each
/// cluster keeps its largest connected component (ties by total internal
/// repair weight, then lowest bus index); every other fragment joins the
/// adjacent cluster with the largest total boundary repair weight. A fragment
/// with no neighbors outside itself becomes its own cluster. Iterates to a
/// fixpoint, bounded by the bus count.
pub fn enforce_connectivity(
    topo: &GridTopology,
    p: &Partition,
    repair_weights: &SimilarityMatrix,
) -> Partition {
    let n = p.len();
    let mut assignment = p.assignment().to_vec();
    let mut next_id = p.k();

    for _ in 0..n {
        let mut changed = false;
        let ids: BTreeSet<usize> = assignment.iter().copied().collect();
        for &c in &ids {
            let members: Vec<usize> = (0..n).filter(|&v| assignment[v] == c).collect();
            let comps = cluster_components(topo, &members);
            if comps.len() <= 1 {
                continue;
            }
            let keep = select_kept_component(&comps, repair_weights, topo);
            for (ci, comp) in comps.iter().enumerate() {
                if ci == keep {
                    continue;
                }
                // Boundary repair weight per adjacent cluster, counted once
                // per bus pair.
                let mut boundary: BTreeMap<usize, f64> = BTreeMap::new();
                let mut seen_pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
                for &v in comp {
                    for &(nb, _) in topo.neighbors(v) {
                        if assignment[nb] == c {
                            continue;
                        }
                        let pair = (v.min(nb), v.max(nb));
                        if !seen_pairs.insert(pair) {
                            continue;
                        }
                        *boundary.entry(assignment[nb]).or_insert(0.0) +=
                            repair_weights.weight(v, nb);
                    }
                }
                let target = boundary
                    .iter()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(a.0)))
                    .map(|(&d, _)| d);
                let target = match target {
                    Some(d) => d,
                    None => {
                        // Isolated fragment: becomes its own cluster.
                        let d = next_id;
                        next_id += 1;
                        d
                    }
                };
                for &v in comp {
                    assignment[v] = target;
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Partition::canonicalize(&assignment)
}

fn cluster_components(topo: &GridTopology, members: &[usize]) -> Vec<Vec<usize>> {
    let in_cluster: BTreeSet<usize> = members.iter().copied().collect();
    let index_of: BTreeMap<usize, usize> = members.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let local = crate::grid::components_of(members.len(), |li| {
        let v = members[li];
        topo.neighbors(v)
            .iter()
            .filter(|(nb, _)| in_cluster.contains(nb))
            .map(|&(nb, _)| index_of[&nb])
            .collect()
    });
    local
        .into_iter()
        .map(|comp| comp.into_iter().map(|li| members[li]).collect())
        .collect()
}

fn select_kept_component(
    comps: &[Vec<usize>],
    repair: &SimilarityMatrix,
    topo: &GridTopology,
) -> usize {
    let mut best = 0;
    let mut best_key = component_key(&comps[0], repair, topo);
    for (ci, comp) in comps.iter().enumerate().skip(1) {
        let key = component_key(comp, repair, topo);
        // Larger count wins, then larger weight, then smaller min bus index.
        if key.0 > best_key.0
            || (key.0 == best_key.0 && key.1 > best_key.1)
            || (key.0 == best_key.0 && key.1 == best_key.1 && comp[0] < comps[best][0])
        {
            best = ci;
            best_key = key;
        }
    }
    best
}

fn component_key(comp: &[usize], repair: &SimilarityMatrix, topo: &GridTopology) -> (usize, f64) {
    let inside: BTreeSet<usize> = comp.iter().copied().collect();
    let mut weight = 0.0;
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &v in comp {
        for &(nb, _) in topo.neighbors(v) {
            if inside.contains(&nb) {
                let pair = (v.min(nb), v.max(nb));
                if seen.insert(pair) {
                    weight += repair.weight(v, nb);
                }
            }
        }
    }
    (comp.len(), weight)
}

/// Sum of the measured active and reactive layers; the default repair-weight
/// matrix for connectivity enforcement.
pub fn default_repair_weights(
    snap: &PowerFlowSnapshot,
    topo: &GridTopology,
) -> Result<SimilarityMatrix> {
    let active = active_power_layer(snap, topo, LayerMode::Measured)?;
    let reactive = reactive_power_layer(snap, topo, LayerMode::Measured)?;
    SimilarityMatrix::new(LayerKind::Active, active.weights() + reactive.weights())
}

/// Which stage-II embedding route a run takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage2Route {
    /// Per-layer embeddings merged through the modified Laplacian.
    Merged,
    /// Single-layer shortcut: embed the layer's Laplacian directly. For one
    /// layer the deflation term only shifts the eigenvalues of its own
    /// eigenvectors, so both routes span the same subspace.
    SingleDirect,
}

/// Full multi-layer pipeline. Stage I fixes k on the configured layer unless
/// the config overrides it; stage II embeds each layer, merges the subspaces
/// through the modified Laplacian, row-normalizes and k-means-clusters the
/// merged embedding; connectivity repair and metrics follow.
pub fn msci(
    graph: &MultiLayerGraph,
    topo: &GridTopology,
    snap: &PowerFlowSnapshot,
    config: &PipelineConfig,
) -> Result<IslandingSolution> {
    run_pipeline(graph, topo, snap, config, Stage2Route::Merged)
}

fn run_pipeline(
    graph: &MultiLayerGraph,
    topo: &GridTopology,
    snap: &PowerFlowSnapshot,
    config: &PipelineConfig,
    route: Stage2Route,
) -> Result<IslandingSolution> {
    if graph.vertex_count() != topo.bus_count() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} vertices, topology {} buses",
            graph.vertex_count(),
            topo.bus_count()
        )));
    }
    let stage1_layer = graph.layer_of_kind(config.stage1).ok_or_else(|| {
        Error::Config(format!(
            "stage-I layer '{}' is not among the assembled layers",
            config.stage1
        ))
    })?;
    let stage1 = if config.k_override.is_none() {
        Some(detect_coherent_groups(stage1_layer)?)
    } else {
        None
    };
    let k = resolve_k(config, stage1.as_ref(), topo.bus_count())?;

    let (partition, mut warnings) = if k == 1 {
        (Partition::single_cluster(topo.bus_count()), Vec::new())
    } else {
        let merged = stage2_embedding(graph, k, config.alpha, route)?;
        let rn = row_normalize(&merged);
        let mut warnings = Vec::new();
        if !rn.zero_rows.is_empty() {
            warnings.push(format!(
                "row normalization left {} zero embedding row(s): buses {:?}",
                rn.zero_rows.len(),
                rn.zero_rows
                    .iter()
                    .map(|&b| topo.buses()[b].label.clone())
                    .collect::<Vec<_>>()
            ));
        }
        let p = kmeans_cluster(&rn.matrix, k, config.seed, config.restarts)?;
        (p, warnings)
    };

    let repair = default_repair_weights(snap, topo)?;
    let repaired = enforce_connectivity(topo, &partition, &repair);

    finish_solution(
        graph.layer_kinds(),
        topo,
        snap,
        config,
        k,
        stage1,
        repaired,
        &mut warnings,
    )
}

fn stage2_embedding(
    graph: &MultiLayerGraph,
    k: usize,
    alpha: f64,
    route: Stage2Route,
) -> Result<EmbeddingMatrix> {
    let laplacians: Vec<LaplacianMatrix> =
        graph.layers().iter().map(normalized_laplacian).collect();
    if route == Stage2Route::SingleDirect && graph.layer_count() == 1 {
        let u = spectral_embedding(&laplacians[0], k)?;
        #[cfg(debug_assertions)]
        {
            // Cross-check the claimed equivalence with the merged route.
            let lm = modified_laplacian(&laplacians, std::slice::from_ref(&u), alpha)?;
            let u_merged = spectral_embedding(&lm, k)?;
            let d = crate::spectral::projection_distance(&u, &[u_merged])?;
            debug_assert!(
                d.abs() <= 1e-6,
                "single-layer embedding differs from merged route: d^2 = {d}"
            );
        }
        return Ok(u);
    }
    let subspaces: Vec<EmbeddingMatrix> = laplacians
        .iter()
        .map(|l| spectral_embedding(l, k))
        .collect::<Result<_>>()?;
    let lm = modified_laplacian(&laplacians, &subspaces, alpha)?;
    spectral_embedding(&lm, k)
}

fn resolve_k(
    config: &PipelineConfig,
    stage1: Option<&CoherencyResult>,
    n: usize,
) -> Result<usize> {
    let k = match config.k_override {
        Some(k) => k,
        None => stage1.map(|s| s.partition.k()).unwrap_or(1),
    };
    if k == 0 || k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    if k == n && n > 1 {
        return Err(Error::NonIslanding(k));
    }
    Ok(k)
}

#[allow(clippy::too_many_arguments)]
fn finish_solution(
    layer_kinds: Vec<LayerKind>,
    topo: &GridTopology,
    snap: &PowerFlowSnapshot,
    config: &PipelineConfig,
    k_requested: usize,
    stage1: Option<CoherencyResult>,
    partition: Partition,
    warnings: &mut Vec<String>,
) -> Result<IslandingSolution> {
    // Post-hoc coherency check: a stage-I group split across islands is
    // reported, not repaired.
    if let Some(s1) = &stage1 {
        for (gid, group) in s1.partition.clusters().iter().enumerate() {
            let islands: BTreeSet<usize> =
                group.iter().map(|&b| partition.cluster_of(b)).collect();
            if islands.len() > 1 {
                warnings.push(format!(
                    "coherent group {gid} is split across {} islands",
                    islands.len()
                ));
            }
        }
    }

    let cut = cut_set(topo, &partition);
    let active = active_power_layer(snap, topo, LayerMode::Measured)?;
    let reactive = reactive_power_layer(snap, topo, LayerMode::Measured)?;
    let (p_disruption, q_disruption) = disruption_from_layers(&active, &reactive, &partition);

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

    let islands = partition
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

    let balance = balance_report(snap, &partition);
    let stage1_echo = stage1.map(|s| Stage1Echo {
        k: s.partition.k(),
        q: s.q,
        groups: s
            .partition
            .clusters()
            .iter()
            .map(|g| g.iter().map(|&b| topo.buses()[b].label.clone()).collect())
            .collect(),
    });

    Ok(IslandingSolution {
        config: SolutionConfig {
            case: config.case,
            layers: layer_kinds,
            layer_mode: config.layer_mode,
            alpha: config.alpha,
            seed: config.seed,
            restarts: config.restarts,
            stage1_layer: config.stage1,
            k: k_requested,
            k_from_stage1: config.k_override.is_none(),
        },
        k: partition.k(),
        islands,
        cut_set: cut_branches,
        active_disruption_mw: p_disruption,
        reactive_disruption_mvar: q_disruption,
        balance,
        stage1: stage1_echo,
        warnings: std::mem::take(warnings),
        partition,
    })
}

/// Island count selection for single-layer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSelect {
    /// Run stage I on the given layer.
    Auto,
    Fixed(usize),
}

/// Single-layer islanding: the same pipeline with M = 1. The embedding is
/// computed directly from the layer's Laplacian, which equals the merged
/// embedding because the deflation term only shifts its own eigenvalues.
pub fn single_layer_islanding(
    layer: &SimilarityMatrix,
    topo: &GridTopology,
    snap: &PowerFlowSnapshot,
    k: KSelect,
    config: &PipelineConfig,
) -> Result<IslandingSolution> {
    let mut effective = config.clone();
    effective.stage1 = layer.kind();
    effective.k_override = match k {
        KSelect::Auto => None,
        KSelect::Fixed(k) => Some(k),
    };
    let graph = assemble_multilayer(vec![layer.clone()])?;
    run_pipeline(&graph, topo, snap, &effective, Stage2Route::SingleDirect)
}

/// Options for building layers from raw inputs.
#[derive(Debug, Clone)]
pub struct LayerBuildOptions {
    pub mode: LayerMode,
    pub band_hz: (f64, f64),
    pub clamp: ClampPolicy,
    pub window: WindowFn,
    /// Divide each layer by its largest entry before assembly. Off by
    /// default; the merged objective mixes layers at raw scale.
    pub normalize: bool,
}

impl Default for LayerBuildOptions {
    fn default() -> Self {
        LayerBuildOptions {
            mode: LayerMode::Measured,
            band_hz: (0.1, 1.0),
            clamp: ClampPolicy::Zero,
            window: WindowFn::Rectangular,
            normalize: false,
        }
    }
}

/// Builds one layer of the requested kind from raw inputs. Waveforms are
/// required for the frequency kind and must cover the topology's buses.
pub fn build_layer(
    kind: LayerKind,
    topo: &GridTopology,
    snap: &PowerFlowSnapshot,
    waveforms: Option<&WaveformSet>,
    opts: &LayerBuildOptions,
) -> Result<SimilarityMatrix> {
    let layer = match kind {
        LayerKind::Frequency => {
            let w = waveforms.ok_or_else(|| {
                Error::Config("frequency layer requires waveforms".into())
            })?;
            let aligned = w.align_to_topology(topo)?;
            let velocities = angular_velocity(&aligned);
            let spectrum = dft_spectrum_windowed(&velocities, opts.band_hz, opts.window)?;
            let corr = correlation_matrix(&spectrum)?;
            frequency_layer(&corr, opts.clamp)
        }
        LayerKind::Active => active_power_layer(snap, topo, opts.mode)?,
        LayerKind::Reactive => reactive_power_layer(snap, topo, opts.mode)?,
    };
    Ok(if opts.normalize {
        layer.max_normalized()
    } else {
        layer
    })
}

/// Builds the case's layers and runs the pipeline.
pub fn run_case(
    case: CaseMode,
    topo: &GridTopology,
    snap: &PowerFlowSnapshot,
    waveforms: Option<&WaveformSet>,
    opts: &LayerBuildOptions,
    config: &PipelineConfig,
) -> Result<IslandingSolution> {
    let (kinds, stage1) = case.layer_plan();
    let mut effective = config.clone();
    effective.stage1 = stage1;
    effective.case = Some(case.number());
    effective.layer_mode = opts.mode;
    let layers: Vec<SimilarityMatrix> = kinds
        .iter()
        .map(|&kind| build_layer(kind, topo, snap, waveforms, opts))
        .collect::<Result<_>>()?;
    let graph = assemble_multilayer(layers)?;
    msci(&graph, topo, snap, &effective)
}
