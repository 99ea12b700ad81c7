//! Construction of the three similarity layers (frequency, active power,
//! reactive power) and assembly of the multi-layer graph over the common bus
//! vertex set.
//!
//! The measured layer mode averages the two directed flow magnitudes per
//! branch. Formula mode evaluates the printed admittance expressions
//! verbatim; it is opt-in because those expressions transpose G/B and
//! cos/sin relative to standard line-flow approximations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridTopology, PowerFlowSnapshot};
use crate::signal::CorrelationMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Frequency,
    Active,
    Reactive,
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LayerKind::Frequency => "frequency",
            LayerKind::Active => "active",
            LayerKind::Reactive => "reactive",
        };
        write!(f, "{s}")
    }
}

/// How branch weights are obtained for the power layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerMode {
    /// Average of the two measured directed flow magnitudes.
    #[default]
    Measured,
    /// |V_i||V_j||G_ij cos(dphi)| (reactive) / |V_i||V_j||B_ij sin(dphi)|
    /// (active), evaluated from bus voltages and admittances.
    Formula,
}

/// How negative correlations are mapped into edge weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampPolicy {
    /// w = max(0, c). Anti-correlated buses get no attraction.
    #[default]
    Zero,
    /// w = c + 1, mapping [-1, 1] onto [0, 2].
    Shift,
}

/// Symmetric nonnegative edge-weight matrix for one graph layer: zero
/// diagonal, entries >= 0. The frequency kind keeps its pre-clamp
/// correlations for reporting.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    kind: LayerKind,
    weights: DMatrix<f64>,
    pre_clamp: Option<DMatrix<f64>>,
}

impl SimilarityMatrix {
    pub fn new(kind: LayerKind, weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "similarity matrix is {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for i in 0..weights.nrows() {
            if weights[(i, i)] != 0.0 {
                return Err(Error::Validation(format!(
                    "similarity diagonal entry ({i},{i}) = {} must be 0",
                    weights[(i, i)]
                )));
            }
            for j in 0..weights.ncols() {
                let w = weights[(i, j)];
                if w < 0.0 || !w.is_finite() {
                    return Err(Error::Validation(format!(
                        "similarity entry ({i},{j}) = {w} must be finite and nonnegative"
                    )));
                }
                if weights[(i, j)] != weights[(j, i)] {
                    return Err(Error::Validation(format!(
                        "similarity matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(SimilarityMatrix {
            kind,
            weights,
            pre_clamp: None,
        })
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Raw correlation values before clamping, kept on frequency layers.
    pub fn pre_clamp(&self) -> Option<&DMatrix<f64>> {
        self.pre_clamp.as_ref()
    }

    /// Total edge weight counting each unordered pair once.
    pub fn total_weight(&self) -> f64 {
        let n = self.dim();
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                total += self.weights[(i, j)];
            }
        }
        total
    }

    /// Same layer scaled so the largest entry is 1. Identity for an all-zero
    /// layer.
    pub fn max_normalized(&self) -> SimilarityMatrix {
        let max = self.weights.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return self.clone();
        }
        SimilarityMatrix {
            kind: self.kind,
            weights: &self.weights / max,
            pre_clamp: self.pre_clamp.clone(),
        }
    }
}

/// Builds a symmetric branch-supported weight matrix; parallel branches
/// accumulate into the same entry.
fn branch_weight_matrix<F>(topo: &GridTopology, mut weight_of: F) -> DMatrix<f64>
where
    F: FnMut(usize) -> f64,
{
    let n = topo.bus_count();
    let mut w = DMatrix::zeros(n, n);
    for (bx, br) in topo.branches().iter().enumerate() {
        let value = weight_of(bx);
        w[(br.from, br.to)] += value;
        w[(br.to, br.from)] += value;
    }
    w
}

/// Active-power layer: measured mode takes (|P_ij| + |P_ji|)/2 per branch;
/// formula mode evaluates |V_i||V_j||B_ij sin(phi_i - phi_j)|.
pub fn active_power_layer(
    snap: &PowerFlowSnapshot,
    topo: &GridTopology,
    mode: LayerMode,
) -> Result<SimilarityMatrix> {
    power_layer(snap, topo, mode, LayerKind::Active)
}

/// Reactive-power layer: measured mode takes (|Q_ij| + |Q_ji|)/2 per branch;
/// formula mode evaluates |V_i||V_j||G_ij cos(phi_i - phi_j)|.
pub fn reactive_power_layer(
    snap: &PowerFlowSnapshot,
    topo: &GridTopology,
    mode: LayerMode,
) -> Result<SimilarityMatrix> {
    power_layer(snap, topo, mode, LayerKind::Reactive)
}

fn power_layer(
    snap: &PowerFlowSnapshot,
    topo: &GridTopology,
    mode: LayerMode,
    kind: LayerKind,
) -> Result<SimilarityMatrix> {
    let weights = match mode {
        LayerMode::Measured => branch_weight_matrix(topo, |bx| {
            let f = snap.branch_flow(bx);
            match kind {
                LayerKind::Active => (f.p_from_mw.abs() + f.p_to_mw.abs()) / 2.0,
                LayerKind::Reactive => (f.q_from_mvar.abs() + f.q_to_mvar.abs()) / 2.0,
                LayerKind::Frequency => unreachable!(),
            }
        }),
        LayerMode::Formula => {
            if !snap.has_admittance() {
                return Err(Error::Config(
                    "formula-mode layers require admittance columns in the bus table".into(),
                ));
            }
            branch_weight_matrix(topo, |bx| {
                let br = &topo.branches()[bx];
                let (i, j) = (br.from, br.to);
                let (g, b) = snap.admittance_entry(i, j).unwrap();
                let vi = snap.bus_state(i).v_pu.abs();
                let vj = snap.bus_state(j).v_pu.abs();
                let dphi = snap.bus_state(i).phi_rad - snap.bus_state(j).phi_rad;
                match kind {
                    LayerKind::Active => vi * vj * (b * dphi.sin()).abs(),
                    LayerKind::Reactive => vi * vj * (g * dphi.cos()).abs(),
                    LayerKind::Frequency => unreachable!(),
                }
            })
        }
    };
    SimilarityMatrix::new(kind, weights)
}

/// Frequency layer: a complete graph with w_ij from the clamped
/// correlations, diagonal zeroed. The raw correlations are retained.
pub fn frequency_layer(corr: &CorrelationMatrix, clamp: ClampPolicy) -> SimilarityMatrix {
    let n = corr.dim();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let c = corr.value(i, j);
            w[(i, j)] = match clamp {
                ClampPolicy::Zero => c.max(0.0),
                ClampPolicy::Shift => c + 1.0,
            };
        }
    }
    SimilarityMatrix {
        kind: LayerKind::Frequency,
        weights: w,
        pre_clamp: Some(corr.values().clone()),
    }
}

/// Common vertex set plus M weighted layers.
#[derive(Debug, Clone)]
pub struct MultiLayerGraph {
    vertex_count: usize,
    layers: Vec<SimilarityMatrix>,
}

impl MultiLayerGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[SimilarityMatrix] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &SimilarityMatrix {
        &self.layers[i]
    }

    pub fn layer_kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(|l| l.kind()).collect()
    }

    /// First layer of the given kind, if present.
    pub fn layer_of_kind(&self, kind: LayerKind) -> Option<&SimilarityMatrix> {
        self.layers.iter().find(|l| l.kind() == kind)
    }
}

/// Assembles layers of equal dimension into a multi-layer graph. The
/// canonical three-layer order is [frequency, active, reactive].
pub fn assemble_multilayer(layers: Vec<SimilarityMatrix>) -> Result<MultiLayerGraph> {
    if layers.is_empty() {
        return Err(Error::DimensionMismatch(
            "multi-layer graph needs at least one layer".into(),
        ));
    }
    let n = layers[0].dim();
    for (i, layer) in layers.iter().enumerate() {
        if layer.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "layer 0 is {n}x{n} but layer {i} is {d}x{d}",
                d = layer.dim()
            )));
        }
    }
    Ok(MultiLayerGraph {
        vertex_count: n,
        layers,
    })
}
