//! Physical network model and ingestion of topology, flow snapshots, and
//! bus-angle waveforms.
//!
//! Bus ordering everywhere is the file order of the topology document; every
//! matrix in the crate indexes buses by that order. Flows are stored exactly
//! as measured (no symmetrization): a branch may be lossy, with
//! `P_from != -P_to`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bus (substation or transformer node), identified by its position in the
/// topology file and its unique label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusId {
    pub index: usize,
    pub label: String,
}

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)
    }
}

/// An undirected physical branch between two buses. `(from, to)` and
/// `(to, from)` denote the same branch; the stored orientation is the file
/// orientation and fixes which measured flow is "from-side".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub id: String,
}

/// Orientation of a branch lookup relative to the stored `(from, to)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Forward,
    Reverse,
}

/// The physical network: buses and undirected branches.
#[derive(Debug, Clone)]
pub struct GridTopology {
    buses: Vec<BusId>,
    branches: Vec<Branch>,
    label_to_index: HashMap<String, usize>,
    /// adjacency[i] lists (neighbor bus, branch index) pairs.
    adjacency: Vec<Vec<(usize, usize)>>,
}

#[derive(Debug, Deserialize, Serialize)]
struct TopologyDoc {
    buses: Vec<BusDoc>,
    branches: Vec<BranchDoc>,
}

#[derive(Debug, Deserialize, Serialize)]
struct BusDoc {
    label: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct BranchDoc {
    from: String,
    to: String,
    id: String,
}

impl GridTopology {
    /// Builds a validated topology from bus labels and labelled branches.
    pub fn new(bus_labels: Vec<String>, branch_docs: Vec<(String, String, String)>) -> Result<Self> {
        if bus_labels.is_empty() {
            return Err(Error::Topology("topology lists no buses".into()));
        }
        let mut label_to_index = HashMap::new();
        let mut buses = Vec::with_capacity(bus_labels.len());
        for (index, label) in bus_labels.into_iter().enumerate() {
            if label.trim().is_empty() {
                return Err(Error::Topology(format!("bus {index} has an empty label")));
            }
            if label_to_index.insert(label.clone(), index).is_some() {
                return Err(Error::Topology(format!("duplicate bus label '{label}'")));
            }
            buses.push(BusId { index, label });
        }

        let mut branches = Vec::with_capacity(branch_docs.len());
        let mut seen = HashMap::new();
        let mut adjacency = vec![Vec::new(); buses.len()];
        for (from_label, to_label, id) in branch_docs {
            let from = *label_to_index.get(&from_label).ok_or_else(|| {
                Error::Topology(format!(
                    "branch '{id}' references unknown bus '{from_label}'"
                ))
            })?;
            let to = *label_to_index.get(&to_label).ok_or_else(|| {
                Error::Topology(format!("branch '{id}' references unknown bus '{to_label}'"))
            })?;
            if from == to {
                return Err(Error::Topology(format!(
                    "branch '{id}' connects bus '{from_label}' to itself"
                )));
            }
            // Undirected: (from,to,id) and (to,from,id) are the same triple.
            let key = (from.min(to), from.max(to), id.clone());
            if seen.insert(key, ()).is_some() {
                return Err(Error::Topology(format!(
                    "duplicate branch '{id}' between '{from_label}' and '{to_label}'"
                )));
            }
            let branch_idx = branches.len();
            adjacency[from].push((to, branch_idx));
            adjacency[to].push((from, branch_idx));
            branches.push(Branch { from, to, id });
        }

        Ok(GridTopology {
            buses,
            branches,
            label_to_index,
            adjacency,
        })
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn buses(&self) -> &[BusId] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn bus_labels(&self) -> Vec<String> {
        self.buses.iter().map(|b| b.label.clone()).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.label_to_index.get(label).copied()
    }

    /// Neighbors of bus `i` as (neighbor, branch index) pairs, in file order.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    /// All branches between buses `i` and `j` (parallel circuits included),
    /// with the orientation of the lookup relative to the stored record.
    pub fn branches_between(&self, i: usize, j: usize) -> Vec<(&Branch, Orientation)> {
        self.adjacency[i]
            .iter()
            .filter(|(nb, _)| *nb == j)
            .map(|&(_, bx)| {
                let br = &self.branches[bx];
                let orient = if br.from == i {
                    Orientation::Forward
                } else {
                    Orientation::Reverse
                };
                (br, orient)
            })
            .collect()
    }

    /// Whether the whole network is a single connected component. Reported,
    /// not required.
    pub fn is_connected(&self) -> bool {
        self.connected_components().len() <= 1
    }

    /// Connected components over all buses, each sorted by bus index.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        components_of(self.bus_count(), |i| {
            self.adjacency[i].iter().map(|&(nb, _)| nb).collect()
        })
    }
}

/// Generic component search used by the topology and by connectivity repair.
pub(crate) fn components_of<F>(n: usize, neighbors: F) -> Vec<Vec<usize>>
where
    F: Fn(usize) -> Vec<usize>,
{
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = Vec::new();
        seen[start] = true;
        while let Some(v) = stack.pop() {
            comp.push(v);
            for nb in neighbors(v) {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Loads and validates a topology JSON document.
pub fn load_topology(path: impl AsRef<Path>) -> Result<GridTopology> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_topology(&text, &path.display().to_string())
}

/// Parses a topology document from JSON text.
pub fn parse_topology(text: &str, origin: &str) -> Result<GridTopology> {
    let doc: TopologyDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        detail: e.to_string(),
    })?;
    GridTopology::new(
        doc.buses.into_iter().map(|b| b.label).collect(),
        doc.branches
            .into_iter()
            .map(|b| (b.from, b.to, b.id))
            .collect(),
    )
}

/// Serializes a topology back to its JSON document form.
pub fn topology_to_json(topo: &GridTopology) -> String {
    let doc = TopologyDoc {
        buses: topo
            .buses
            .iter()
            .map(|b| BusDoc {
                label: b.label.clone(),
            })
            .collect(),
        branches: topo
            .branches
            .iter()
            .map(|br| BranchDoc {
                from: topo.buses[br.from].label.clone(),
                to: topo.buses[br.to].label.clone(),
                id: br.id.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("topology serialization cannot fail")
}

/// Directed measured flows on one branch, in the stored branch orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub p_from_mw: f64,
    pub q_from_mvar: f64,
    pub p_to_mw: f64,
    pub q_to_mvar: f64,
}

/// Measured operating state of one bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusState {
    pub v_pu: f64,
    pub phi_rad: f64,
    pub p_gen_mw: f64,
    pub q_gen_mvar: f64,
    pub p_load_mw: f64,
    pub q_load_mvar: f64,
}

/// Real and imaginary bus admittance matrices (per-unit), row-major.
pub type AdmittanceMatrices = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// A measured operating point: per-branch directed flows, per-bus state, and
/// optionally the bus admittance matrices used by formula-mode layers.
#[derive(Debug, Clone)]
pub struct PowerFlowSnapshot {
    /// One record per topology branch, indexed like `GridTopology::branches`.
    branch_flows: Vec<BranchFlow>,
    /// One record per bus, indexed like `GridTopology::buses`.
    bus_states: Vec<BusState>,
    admittance: Option<AdmittanceMatrices>,
}

impl PowerFlowSnapshot {
    pub fn new(
        topo: &GridTopology,
        branch_flows: Vec<BranchFlow>,
        bus_states: Vec<BusState>,
        admittance: Option<AdmittanceMatrices>,
    ) -> Result<Self> {
        if branch_flows.len() != topo.branches().len() {
            return Err(Error::MissingRecord(format!(
                "{} branch flow records for {} branches",
                branch_flows.len(),
                topo.branches().len()
            )));
        }
        if bus_states.len() != topo.bus_count() {
            return Err(Error::MissingRecord(format!(
                "{} bus records for {} buses",
                bus_states.len(),
                topo.bus_count()
            )));
        }
        for (i, st) in bus_states.iter().enumerate() {
            if !st.v_pu.is_finite() || st.v_pu <= 0.0 {
                return Err(Error::Validation(format!(
                    "bus '{}' has non-positive voltage magnitude {}",
                    topo.buses()[i].label,
                    st.v_pu
                )));
            }
        }
        if let Some((g, b)) = &admittance {
            let n = topo.bus_count();
            if g.len() != n || b.len() != n || g.iter().any(|r| r.len() != n) || b.iter().any(|r| r.len() != n) {
                return Err(Error::DimensionMismatch(format!(
                    "admittance matrices must be {n}x{n}"
                )));
            }
        }
        Ok(PowerFlowSnapshot {
            branch_flows,
            bus_states,
            admittance,
        })
    }

    pub fn branch_flow(&self, branch_index: usize) -> &BranchFlow {
        &self.branch_flows[branch_index]
    }

    pub fn branch_flows(&self) -> &[BranchFlow] {
        &self.branch_flows
    }

    pub fn bus_state(&self, bus_index: usize) -> &BusState {
        &self.bus_states[bus_index]
    }

    pub fn bus_states(&self) -> &[BusState] {
        &self.bus_states
    }

    pub fn has_admittance(&self) -> bool {
        self.admittance.is_some()
    }

    /// Admittance entry (G_ij, B_ij) if the matrices were supplied.
    pub fn admittance_entry(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        self.admittance.as_ref().map(|(g, b)| (g[i][j], b[i][j]))
    }
}

const BRANCH_HEADER: [&str; 7] = [
    "branch_id",
    "from",
    "to",
    "P_from_MW",
    "Q_from_Mvar",
    "P_to_MW",
    "Q_to_Mvar",
];

const BUS_HEADER: [&str; 7] = [
    "bus", "V_pu", "phi_rad", "PG_MW", "QG_Mvar", "PL_MW", "QL_Mvar",
];

fn parse_f64(field: &str, path: &str, what: &str) -> Result<f64> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Err(Error::MissingRecord(format!("{what} is empty in {path}")));
    }
    trimmed.parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_string(),
        detail: format!("{what}: '{field}' is not a number"),
    })
}

/// Loads a flow snapshot from a branch-flow CSV and a bus-table CSV, keyed to
/// the given topology. Every topology branch and bus must have exactly one
/// record.
///
/// Bus-table admittance columns are optional: after the seven fixed columns,
/// `G_<label>` columns for every bus in topology order, then `B_<label>`
/// columns, give that bus's rows of the real and imaginary admittance
/// matrices.
pub fn load_flow_snapshot(
    branch_csv: impl AsRef<Path>,
    bus_csv: impl AsRef<Path>,
    topo: &GridTopology,
) -> Result<PowerFlowSnapshot> {
    let branch_path = branch_csv.as_ref().display().to_string();
    let bus_path = bus_csv.as_ref().display().to_string();

    let mut rdr = csv_reader(branch_csv.as_ref())?;
    expect_header(&mut rdr, &BRANCH_HEADER, &branch_path, false)?;

    // Records are keyed by (min,max,id) so file orientation is free; flows are
    // reoriented into the topology's stored branch orientation.
    let mut by_key: HashMap<(usize, usize, String), BranchFlow> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            path: branch_path.clone(),
            detail: e.to_string(),
        })?;
        if record.len() < 7 {
            return Err(Error::Parse {
                path: branch_path.clone(),
                detail: format!("row has {} fields, expected 7", record.len()),
            });
        }
        let id = record[0].trim().to_string();
        let from_label = record[1].trim();
        let to_label = record[2].trim();
        let from = topo.index_of(from_label).ok_or_else(|| {
            Error::Validation(format!("flow row references unknown bus '{from_label}'"))
        })?;
        let to = topo.index_of(to_label).ok_or_else(|| {
            Error::Validation(format!("flow row references unknown bus '{to_label}'"))
        })?;
        let flow = BranchFlow {
            p_from_mw: parse_f64(&record[3], &branch_path, "P_from_MW")?,
            q_from_mvar: parse_f64(&record[4], &branch_path, "Q_from_Mvar")?,
            p_to_mw: parse_f64(&record[5], &branch_path, "P_to_MW")?,
            q_to_mvar: parse_f64(&record[6], &branch_path, "Q_to_Mvar")?,
        };
        // Store keyed in canonical (min,max) order, flow oriented min->max.
        let (key, oriented) = if from <= to {
            ((from, to, id.clone()), flow)
        } else {
            (
                (to, from, id.clone()),
                BranchFlow {
                    p_from_mw: flow.p_to_mw,
                    q_from_mvar: flow.q_to_mvar,
                    p_to_mw: flow.p_from_mw,
                    q_to_mvar: flow.q_from_mvar,
                },
            )
        };
        if by_key.insert(key, oriented).is_some() {
            return Err(Error::Validation(format!(
                "duplicate flow record for branch '{id}' ({from_label}-{to_label})"
            )));
        }
    }

    let mut branch_flows = Vec::with_capacity(topo.branches().len());
    for br in topo.branches() {
        let key = (br.from.min(br.to), br.from.max(br.to), br.id.clone());
        let stored = by_key.remove(&key).ok_or_else(|| {
            Error::MissingRecord(format!(
                "no flow record for branch '{}' ({}-{})",
                br.id,
                topo.buses()[br.from].label,
                topo.buses()[br.to].label
            ))
        })?;
        // Reorient from canonical (min->max) into the stored branch direction.
        let flow = if br.from <= br.to {
            stored
        } else {
            BranchFlow {
                p_from_mw: stored.p_to_mw,
                q_from_mvar: stored.q_to_mvar,
                p_to_mw: stored.p_from_mw,
                q_to_mvar: stored.q_from_mvar,
            }
        };
        branch_flows.push(flow);
    }
    if let Some(((i, j, id), _)) = by_key.into_iter().next() {
        return Err(Error::Validation(format!(
            "flow record for branch '{id}' ({}-{}) does not match any topology branch",
            topo.buses()[i].label,
            topo.buses()[j].label
        )));
    }

    // Bus table.
    let mut rdr = csv_reader(bus_csv.as_ref())?;
    let header = expect_header(&mut rdr, &BUS_HEADER, &bus_path, true)?;
    let n = topo.bus_count();
    let has_admittance = header.len() > BUS_HEADER.len();
    if has_admittance && header.len() != BUS_HEADER.len() + 2 * n {
        return Err(Error::Parse {
            path: bus_path.clone(),
            detail: format!(
                "bus table has {} columns; expected {} (no admittance) or {} (G rows then B rows)",
                header.len(),
                BUS_HEADER.len(),
                BUS_HEADER.len() + 2 * n
            ),
        });
    }

    let mut bus_states: Vec<Option<BusState>> = vec![None; n];
    let mut g_rows: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut b_rows: Vec<Vec<f64>> = vec![Vec::new(); n];
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            path: bus_path.clone(),
            detail: e.to_string(),
        })?;
        let label = record[0].trim();
        let idx = topo
            .index_of(label)
            .ok_or_else(|| Error::Validation(format!("bus table references unknown bus '{label}'")))?;
        if bus_states[idx].is_some() {
            return Err(Error::Validation(format!(
                "duplicate bus table row for '{label}'"
            )));
        }
        bus_states[idx] = Some(BusState {
            v_pu: parse_f64(&record[1], &bus_path, "V_pu")?,
            phi_rad: parse_f64(&record[2], &bus_path, "phi_rad")?,
            p_gen_mw: parse_f64(&record[3], &bus_path, "PG_MW")?,
            q_gen_mvar: parse_f64(&record[4], &bus_path, "QG_Mvar")?,
            p_load_mw: parse_f64(&record[5], &bus_path, "PL_MW")?,
            q_load_mvar: parse_f64(&record[6], &bus_path, "QL_Mvar")?,
        });
        if has_admittance {
            if record.len() != BUS_HEADER.len() + 2 * n {
                return Err(Error::Parse {
                    path: bus_path.clone(),
                    detail: format!("bus '{label}' row has {} fields", record.len()),
                });
            }
            for j in 0..n {
                g_rows[idx].push(parse_f64(&record[7 + j], &bus_path, "G entry")?);
            }
            for j in 0..n {
                b_rows[idx].push(parse_f64(&record[7 + n + j], &bus_path, "B entry")?);
            }
        }
    }

    let mut states = Vec::with_capacity(n);
    for (i, st) in bus_states.into_iter().enumerate() {
        states.push(st.ok_or_else(|| {
            Error::MissingRecord(format!("no bus table row for '{}'", topo.buses()[i].label))
        })?);
    }
    let admittance = if has_admittance {
        Some((g_rows, b_rows))
    } else {
        None
    };
    PowerFlowSnapshot::new(topo, branch_flows, states, admittance)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
}

fn expect_header(
    rdr: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
    path: &str,
    allow_extra: bool,
) -> Result<Vec<String>> {
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Parse {
            path: path.to_string(),
            detail: "file is empty".into(),
        })?
        .map_err(|e| Error::Parse {
            path: path.to_string(),
            detail: e.to_string(),
        })?;
    let fields: Vec<String> = header.iter().map(|f| f.trim().to_string()).collect();
    let ok = fields.len() >= expected.len()
        && fields.iter().zip(expected).all(|(a, b)| a == b)
        && (allow_extra || fields.len() == expected.len());
    if !ok {
        return Err(Error::Parse {
            path: path.to_string(),
            detail: format!(
                "unexpected header '{}'; expected '{}'",
                fields.join(","),
                expected.join(",")
            ),
        });
    }
    Ok(fields)
}

/// Writes a snapshot back to the two-CSV form. Numbers use Rust's shortest
/// round-trip formatting, so load → save → load is lossless.
pub fn save_flow_snapshot(
    snap: &PowerFlowSnapshot,
    topo: &GridTopology,
    branch_csv: impl AsRef<Path>,
    bus_csv: impl AsRef<Path>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&BRANCH_HEADER.join(","));
    out.push('\n');
    for (br, flow) in topo.branches().iter().zip(snap.branch_flows()) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            br.id,
            topo.buses()[br.from].label,
            topo.buses()[br.to].label,
            flow.p_from_mw,
            flow.q_from_mvar,
            flow.p_to_mw,
            flow.q_to_mvar
        ));
    }
    write_file(branch_csv.as_ref(), &out)?;

    let mut out = String::new();
    out.push_str(&BUS_HEADER.join(","));
    if snap.has_admittance() {
        for b in topo.buses() {
            out.push_str(&format!(",G_{}", b.label));
        }
        for b in topo.buses() {
            out.push_str(&format!(",B_{}", b.label));
        }
    }
    out.push('\n');
    for (i, st) in snap.bus_states().iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            topo.buses()[i].label,
            st.v_pu,
            st.phi_rad,
            st.p_gen_mw,
            st.q_gen_mvar,
            st.p_load_mw,
            st.q_load_mvar
        ));
        if snap.has_admittance() {
            let n = topo.bus_count();
            for j in 0..n {
                let (g, _) = snap.admittance_entry(i, j).unwrap();
                out.push_str(&format!(",{g}"));
            }
            for j in 0..n {
                let (_, b) = snap.admittance_entry(i, j).unwrap();
                out.push_str(&format!(",{b}"));
            }
        }
        out.push('\n');
    }
    write_file(bus_csv.as_ref(), &out)
}

pub(crate) fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Per-bus phase-angle time series on a uniform grid.
#[derive(Debug, Clone)]
pub struct WaveformSet {
    labels: Vec<String>,
    dt_s: f64,
    /// series[b][k] = theta of bus b at sample k, radians.
    series: Vec<Vec<f64>>,
}

impl WaveformSet {
    pub fn new(labels: Vec<String>, dt_s: f64, series: Vec<Vec<f64>>) -> Result<Self> {
        if !dt_s.is_finite() || dt_s <= 0.0 {
            return Err(Error::Validation(format!(
                "sample interval must be positive, got {dt_s}"
            )));
        }
        if labels.len() != series.len() || labels.is_empty() {
            return Err(Error::Validation(
                "waveform labels and series counts disagree".into(),
            ));
        }
        let n = series[0].len();
        if let Some((b, s)) = series.iter().enumerate().find(|(_, s)| s.len() != n) {
            return Err(Error::RaggedSeries(format!(
                "bus '{}' has {} samples, bus '{}' has {}",
                labels[0],
                n,
                labels[b],
                s.len()
            )));
        }
        if n < 3 {
            return Err(Error::Validation(format!(
                "waveforms need at least 3 samples, got {n}"
            )));
        }
        Ok(WaveformSet {
            labels,
            dt_s,
            series,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_s
    }

    /// Number of samples N per series.
    pub fn sample_count(&self) -> usize {
        self.series[0].len()
    }

    pub fn bus_count(&self) -> usize {
        self.series.len()
    }

    pub fn series(&self, bus: usize) -> &[f64] {
        &self.series[bus]
    }

    /// Total covered time span (N-1)*dt in seconds.
    pub fn span_s(&self) -> f64 {
        (self.sample_count() - 1) as f64 * self.dt_s
    }

    /// Reorders bus series into topology order. Errors when the label sets
    /// differ.
    pub fn align_to_topology(&self, topo: &GridTopology) -> Result<WaveformSet> {
        if self.bus_count() != topo.bus_count() {
            return Err(Error::Validation(format!(
                "waveforms cover {} buses, topology has {}",
                self.bus_count(),
                topo.bus_count()
            )));
        }
        let mut series = Vec::with_capacity(topo.bus_count());
        let mut labels = Vec::with_capacity(topo.bus_count());
        let pos: HashMap<&str, usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        for bus in topo.buses() {
            let &src = pos.get(bus.label.as_str()).ok_or_else(|| {
                Error::Validation(format!("waveforms missing bus '{}'", bus.label))
            })?;
            labels.push(bus.label.clone());
            series.push(self.series[src].clone());
        }
        WaveformSet::new(labels, self.dt_s, series)
    }
}

/// Relative jitter above which the time column is rejected as nonuniform.
const GRID_JITTER_TOL: f64 = 1e-9;

/// Loads waveforms from a CSV with header `t,<bus1>,<bus2>,...`.
pub fn load_waveforms(path: impl AsRef<Path>) -> Result<WaveformSet> {
    let path_str = path.as_ref().display().to_string();
    let mut rdr = csv_reader(path.as_ref())?;
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Parse {
            path: path_str.clone(),
            detail: "file is empty".into(),
        })?
        .map_err(|e| Error::Parse {
            path: path_str.clone(),
            detail: e.to_string(),
        })?;
    let fields: Vec<String> = header.iter().map(|f| f.trim().to_string()).collect();
    if fields.len() < 2 || fields[0] != "t" {
        return Err(Error::Parse {
            path: path_str.clone(),
            detail: format!(
                "expected header 't,<bus1>,...', got '{}'",
                fields.join(",")
            ),
        });
    }
    let labels: Vec<String> = fields[1..].to_vec();

    let mut times = Vec::new();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for record in records {
        let record = record.map_err(|e| Error::Parse {
            path: path_str.clone(),
            detail: e.to_string(),
        })?;
        if record.len() != labels.len() + 1 {
            return Err(Error::RaggedSeries(format!(
                "row {} has {} fields, expected {}",
                times.len() + 2,
                record.len(),
                labels.len() + 1
            )));
        }
        times.push(parse_f64(&record[0], &path_str, "t")?);
        for (b, slot) in series.iter_mut().enumerate() {
            slot.push(parse_f64(&record[b + 1], &path_str, &labels[b])?);
        }
    }
    if times.len() < 3 {
        return Err(Error::Validation(format!(
            "waveforms need at least 3 samples, got {}",
            times.len()
        )));
    }
    let dt = times[1] - times[0];
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::NonuniformGrid(format!(
            "first step is {dt} s; time must be strictly increasing"
        )));
    }
    for k in 1..times.len() {
        let step = times[k] - times[k - 1];
        if (step - dt).abs() > GRID_JITTER_TOL * dt.abs().max(1.0) {
            return Err(Error::NonuniformGrid(format!(
                "step {step} s at row {} differs from {dt} s",
                k + 1
            )));
        }
    }
    WaveformSet::new(labels, dt, series)
}

/// Writes waveforms in the `t,<bus1>,...` CSV form with round-trip precision.
pub fn save_waveforms(w: &WaveformSet, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("t");
    for l in w.labels() {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for k in 0..w.sample_count() {
        out.push_str(&format!("{}", k as f64 * w.dt_s()));
        for b in 0..w.bus_count() {
            out.push_str(&format!(",{}", w.series(b)[k]));
        }
        out.push('\n');
    }
    write_file(path.as_ref(), &out)
}

/// Loss flag raised when a branch's two directed flows do not roughly cancel.
#[derive(Debug, Clone, Serialize)]
pub struct LossFlag {
    pub branch_id: String,
    pub from: String,
    pub to: String,
    pub p_from_mw: f64,
    pub p_to_mw: f64,
    /// |P_from + P_to| relative to the larger flow magnitude.
    pub relative_loss: f64,
}

/// Diagnostics report for a loaded snapshot. Informational only.
#[derive(Debug, Clone, Serialize)]
pub struct SnapshotDiagnostics {
    pub total_p_gen_mw: f64,
    pub total_p_load_mw: f64,
    pub total_q_gen_mvar: f64,
    pub total_q_load_mvar: f64,
    pub loss_flags: Vec<LossFlag>,
    pub topology_connected: bool,
}

/// Fraction of the larger flow magnitude above which |P_ij + P_ji| is flagged.
const LOSS_REL_THRESHOLD: f64 = 0.05;
/// Absolute floor (MW) so zero-flow branches are never flagged.
const LOSS_ABS_FLOOR_MW: f64 = 1e-6;

/// Sanity report: line-loss flags and system-wide generation/load totals.
pub fn validate_snapshot(snap: &PowerFlowSnapshot, topo: &GridTopology) -> SnapshotDiagnostics {
    let mut flags = Vec::new();
    for (br, flow) in topo.branches().iter().zip(snap.branch_flows()) {
        let mismatch = (flow.p_from_mw + flow.p_to_mw).abs();
        let scale = flow.p_from_mw.abs().max(flow.p_to_mw.abs());
        if mismatch > LOSS_ABS_FLOOR_MW.max(LOSS_REL_THRESHOLD * scale) {
            flags.push(LossFlag {
                branch_id: br.id.clone(),
                from: topo.buses()[br.from].label.clone(),
                to: topo.buses()[br.to].label.clone(),
                p_from_mw: flow.p_from_mw,
                p_to_mw: flow.p_to_mw,
                relative_loss: if scale > 0.0 { mismatch / scale } else { f64::INFINITY },
            });
        }
    }
    SnapshotDiagnostics {
        total_p_gen_mw: snap.bus_states().iter().map(|s| s.p_gen_mw).sum(),
        total_p_load_mw: snap.bus_states().iter().map(|s| s.p_load_mw).sum(),
        total_q_gen_mvar: snap.bus_states().iter().map(|s| s.q_gen_mvar).sum(),
        total_q_load_mvar: snap.bus_states().iter().map(|s| s.q_load_mvar).sum(),
        loss_flags: flags,
        topology_connected: topo.is_connected(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus_topo() -> GridTopology {
        GridTopology::new(
            vec!["B1".into(), "B2".into()],
            vec![("B1".into(), "B2".into(), "L1".into())],
        )
        .unwrap()
    }

    #[test]
    fn smallest_valid_network() {
        let topo = two_bus_topo();
        assert_eq!(topo.bus_count(), 2);
        assert_eq!(topo.branches().len(), 1);
        assert!(topo.is_connected());
    }

    #[test]
    fn dangling_endpoint_rejected() {
        let err = GridTopology::new(
            vec!["B1".into()],
            vec![("B1".into(), "B99".into(), "L1".into())],
        )
        .unwrap_err();
        assert_eq!(err.code(), "topology_error");
    }

    #[test]
    fn duplicate_bus_label_rejected() {
        let err = GridTopology::new(vec!["B1".into(), "B1".into()], vec![]).unwrap_err();
        assert_eq!(err.code(), "topology_error");
    }

    #[test]
    fn self_loop_rejected() {
        let err = GridTopology::new(
            vec!["B1".into(), "B2".into()],
            vec![("B1".into(), "B1".into(), "L1".into())],
        )
        .unwrap_err();
        assert_eq!(err.code(), "topology_error");
    }

    #[test]
    fn duplicate_branch_triple_rejected_either_orientation() {
        let err = GridTopology::new(
            vec!["B1".into(), "B2".into()],
            vec![
                ("B1".into(), "B2".into(), "L1".into()),
                ("B2".into(), "B1".into(), "L1".into()),
            ],
        )
        .unwrap_err();
        assert_eq!(err.code(), "topology_error");
        // Parallel circuits with distinct ids are fine.
        let topo = GridTopology::new(
            vec!["B1".into(), "B2".into()],
            vec![
                ("B1".into(), "B2".into(), "L1".into()),
                ("B2".into(), "B1".into(), "L2".into()),
            ],
        )
        .unwrap();
        assert_eq!(topo.branches().len(), 2);
    }

    #[test]
    fn branch_lookup_is_undirected() {
        let topo = two_bus_topo();
        let fwd = topo.branches_between(0, 1);
        let rev = topo.branches_between(1, 0);
        assert_eq!(fwd.len(), 1);
        assert_eq!(rev.len(), 1);
        assert_eq!(fwd[0].0, rev[0].0);
        assert_eq!(fwd[0].1, Orientation::Forward);
        assert_eq!(rev[0].1, Orientation::Reverse);
    }

    #[test]
    fn parse_topology_json() {
        let text = r#"{"buses":[{"label":"B1"},{"label":"B2"}],
                       "branches":[{"from":"B1","to":"B2","id":"L1"}]}"#;
        let topo = parse_topology(text, "inline").unwrap();
        assert_eq!(topo.bus_count(), 2);
        let round = parse_topology(&topology_to_json(&topo), "round").unwrap();
        assert_eq!(round.bus_count(), 2);
        assert_eq!(round.branches(), topo.branches());
    }

    fn flow(p_f: f64, q_f: f64, p_t: f64, q_t: f64) -> BranchFlow {
        BranchFlow {
            p_from_mw: p_f,
            q_from_mvar: q_f,
            p_to_mw: p_t,
            q_to_mvar: q_t,
        }
    }

    fn state(v: f64) -> BusState {
        BusState {
            v_pu: v,
            phi_rad: 0.0,
            p_gen_mw: 0.0,
            q_gen_mvar: 0.0,
            p_load_mw: 0.0,
            q_load_mvar: 0.0,
        }
    }

    #[test]
    fn flows_stored_as_given() {
        let topo = two_bus_topo();
        let snap = PowerFlowSnapshot::new(
            &topo,
            vec![flow(100.0, 10.0, -98.0, -9.0)],
            vec![state(1.0), state(1.0)],
            None,
        )
        .unwrap();
        let f = snap.branch_flow(0);
        assert_eq!(f.p_from_mw, 100.0);
        assert_eq!(f.p_to_mw, -98.0);
    }

    #[test]
    fn negative_voltage_rejected() {
        let topo = two_bus_topo();
        let err = PowerFlowSnapshot::new(
            &topo,
            vec![flow(0.0, 0.0, 0.0, 0.0)],
            vec![state(1.0), state(-0.9)],
            None,
        )
        .unwrap_err();
        assert_eq!(err.code(), "validation_error");
    }

    #[test]
    fn loss_flags() {
        let topo = two_bus_topo();
        let lossless = PowerFlowSnapshot::new(
            &topo,
            vec![flow(100.0, 10.0, -100.0, -10.0)],
            vec![state(1.0), state(1.0)],
            None,
        )
        .unwrap();
        assert!(validate_snapshot(&lossless, &topo).loss_flags.is_empty());

        let same_sign = PowerFlowSnapshot::new(
            &topo,
            vec![flow(100.0, 10.0, 100.0, 10.0)],
            vec![state(1.0), state(1.0)],
            None,
        )
        .unwrap();
        assert_eq!(validate_snapshot(&same_sign, &topo).loss_flags.len(), 1);
    }

    #[test]
    fn diagnostics_totals() {
        let topo = two_bus_topo();
        let mut s1 = state(1.0);
        s1.p_gen_mw = 5727.0;
        s1.p_load_mw = 5985.0;
        let mut s2 = state(1.0);
        s2.p_gen_mw = 3525.0;
        s2.p_load_mw = 3161.0;
        let snap = PowerFlowSnapshot::new(
            &topo,
            vec![flow(0.0, 0.0, 0.0, 0.0)],
            vec![s1, s2],
            None,
        )
        .unwrap();
        let diag = validate_snapshot(&snap, &topo);
        assert_eq!(diag.total_p_gen_mw, 9252.0);
        assert_eq!(diag.total_p_load_mw, 9146.0);
    }

    #[test]
    fn waveform_invariants() {
        let err = WaveformSet::new(
            vec!["B1".into(), "B2".into()],
            0.01,
            vec![vec![0.0; 100], vec![0.0; 99]],
        )
        .unwrap_err();
        assert_eq!(err.code(), "ragged_series");

        let err = WaveformSet::new(vec!["B1".into()], 0.01, vec![vec![0.0, 1.0]]).unwrap_err();
        assert_eq!(err.code(), "validation_error");

        let w = WaveformSet::new(vec!["B1".into()], 0.01, vec![vec![0.0; 500]]).unwrap();
        assert_eq!(w.sample_count(), 500);
        assert_eq!(w.dt_s(), 0.01);
    }

    #[test]
    fn csv_round_trips() {
        let dir = std::env::temp_dir().join(format!("islandkit-grid-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();

        let topo = two_bus_topo();
        let snap = PowerFlowSnapshot::new(
            &topo,
            vec![flow(100.125, 10.5, -98.0625, -9.25)],
            vec![state(1.02), state(0.97)],
            None,
        )
        .unwrap();
        let branch_csv = dir.join("flows.csv");
        let bus_csv = dir.join("flows.buses.csv");
        save_flow_snapshot(&snap, &topo, &branch_csv, &bus_csv).unwrap();
        let reloaded = load_flow_snapshot(&branch_csv, &bus_csv, &topo).unwrap();
        assert_eq!(snap.branch_flows(), reloaded.branch_flows());
        assert_eq!(snap.bus_states(), reloaded.bus_states());

        let w = WaveformSet::new(
            vec!["B1".into(), "B2".into()],
            0.01,
            vec![vec![0.0, 0.1, 0.2], vec![0.5, 0.5, 0.5]],
        )
        .unwrap();
        let wpath = dir.join("waves.csv");
        save_waveforms(&w, &wpath).unwrap();
        let rw = load_waveforms(&wpath).unwrap();
        assert_eq!(rw.dt_s(), 0.01);
        assert_eq!(rw.series(0), w.series(0));
        assert_eq!(rw.series(1), w.series(1));

        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn nonuniform_grid_rejected() {
        let dir = std::env::temp_dir().join(format!("islandkit-grid2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "t,B1\n0,0.0\n0.01,0.1\n0.03,0.2\n").unwrap();
        let err = load_waveforms(&path).unwrap_err();
        assert_eq!(err.code(), "nonuniform_grid");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn missing_flow_field_is_missing_record() {
        let dir = std::env::temp_dir().join(format!("islandkit-grid3-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let topo = two_bus_topo();
        let branch_csv = dir.join("flows.csv");
        let bus_csv = dir.join("buses.csv");
        std::fs::write(
            &branch_csv,
            "branch_id,from,to,P_from_MW,Q_from_Mvar,P_to_MW,Q_to_Mvar\nL1,B1,B2,100,10,-98,\n",
        )
        .unwrap();
        std::fs::write(
            &bus_csv,
            "bus,V_pu,phi_rad,PG_MW,QG_Mvar,PL_MW,QL_Mvar\nB1,1,0,0,0,0,0\nB2,1,0,0,0,0,0\n",
        )
        .unwrap();
        let err = load_flow_snapshot(&branch_csv, &bus_csv, &topo).unwrap_err();
        assert_eq!(err.code(), "missing_record");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn missing_branch_record_rejected() {
        let dir = std::env::temp_dir().join(format!("islandkit-grid4-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let topo = GridTopology::new(
            vec!["B1".into(), "B2".into(), "B3".into()],
            vec![
                ("B1".into(), "B2".into(), "L1".into()),
                ("B2".into(), "B3".into(), "L2".into()),
            ],
        )
        .unwrap();
        let branch_csv = dir.join("flows.csv");
        let bus_csv = dir.join("buses.csv");
        std::fs::write(
            &branch_csv,
            "branch_id,from,to,P_from_MW,Q_from_Mvar,P_to_MW,Q_to_Mvar\nL1,B1,B2,1,0,-1,0\n",
        )
        .unwrap();
        std::fs::write(
            &bus_csv,
            "bus,V_pu,phi_rad,PG_MW,QG_Mvar,PL_MW,QL_Mvar\nB1,1,0,0,0,0,0\nB2,1,0,0,0,0,0\nB3,1,0,0,0,0,0\n",
        )
        .unwrap();
        let err = load_flow_snapshot(&branch_csv, &bus_csv, &topo).unwrap_err();
        assert_eq!(err.code(), "missing_record");
        std::fs::remove_dir_all(&dir).ok();
    }
}
