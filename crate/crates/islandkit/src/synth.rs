//! Synthetic-scenario generation: planted coherent groups with oscillating
//! bus angles, star-shaped intra-group flows, and weak inter-group bridges.
//! Stands in for time-domain simulation data in tests and demos.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    save_flow_snapshot, save_waveforms, topology_to_json, write_file, BranchFlow, BusState,
    GridTopology, PowerFlowSnapshot, WaveformSet,
};

/// A weak branch joining two groups, with its carried flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub from_group: usize,
    pub to_group: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
}

/// Specification of a planted scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub groups: usize,
    pub buses_per_group: usize,
    /// Per-group oscillation frequency; pairwise distinct by >= 0.1 Hz.
    pub freqs_hz: Vec<f64>,
    /// Per-group phase offset; empty means all zero.
    pub phase_offsets_rad: Vec<f64>,
    /// Additive noise amplitude; must stay below the unit signal amplitude.
    /// Per-bus phase jitter scales with it (0.1x), so zero noise means
    /// bitwise-identical signals within a group.
    pub noise_amplitude_rad: f64,
    pub duration_s: f64,
    pub dt_s: f64,
    /// Inter-group bridges; empty means a default chain g -> g+1 carrying
    /// 5 MW / 2 Mvar.
    pub bridges: Vec<BridgeSpec>,
    pub seed: u64,
}

/// Spokes carry this much active/reactive power inside a group.
const INTRA_P_MW: f64 = 100.0;
const INTRA_Q_MVAR: f64 = 30.0;
const DEFAULT_BRIDGE_P_MW: f64 = 5.0;
const DEFAULT_BRIDGE_Q_MVAR: f64 = 2.0;
/// Minimum spacing between group frequencies.
const FREQ_SPACING_HZ: f64 = 0.1;

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            groups: 3,
            buses_per_group: 4,
            freqs_hz: vec![0.3, 0.5, 0.8],
            phase_offsets_rad: Vec::new(),
            noise_amplitude_rad: 0.02,
            duration_s: 10.0,
            dt_s: 0.01,
            bridges: Vec::new(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.buses_per_group == 0 {
            return Err(Error::Validation(
                "synth spec needs at least one group and one bus per group".into(),
            ));
        }
        if self.freqs_hz.len() != self.groups {
            return Err(Error::Validation(format!(
                "{} group frequencies for {} groups",
                self.freqs_hz.len(),
                self.groups
            )));
        }
        for (a, &fa) in self.freqs_hz.iter().enumerate() {
            if !fa.is_finite() || fa <= 0.0 {
                return Err(Error::Validation(format!(
                    "group {a} frequency {fa} Hz must be positive"
                )));
            }
            for (b, &fb) in self.freqs_hz.iter().enumerate().skip(a + 1) {
                if (fa - fb).abs() < FREQ_SPACING_HZ {
                    return Err(Error::Validation(format!(
                        "group frequencies {fa} Hz (group {a}) and {fb} Hz (group {b}) are closer than {FREQ_SPACING_HZ} Hz"
                    )));
                }
            }
        }
        if !self.phase_offsets_rad.is_empty() && self.phase_offsets_rad.len() != self.groups {
            return Err(Error::Validation(format!(
                "{} phase offsets for {} groups",
                self.phase_offsets_rad.len(),
                self.groups
            )));
        }
        if !(self.noise_amplitude_rad >= 0.0 && self.noise_amplitude_rad < 1.0) {
            return Err(Error::Validation(format!(
                "noise amplitude {} must lie in [0, 1) (signal amplitude is 1)",
                self.noise_amplitude_rad
            )));
        }
        if self.duration_s <= 0.0 || self.dt_s <= 0.0 || !self.duration_s.is_finite() || !self.dt_s.is_finite() {
            return Err(Error::Validation(
                "duration and sample interval must be positive".into(),
            ));
        }
        for b in &self.bridges {
            if b.from_group >= self.groups || b.to_group >= self.groups || b.from_group == b.to_group
            {
                return Err(Error::Validation(format!(
                    "bridge references invalid group pair ({}, {})",
                    b.from_group, b.to_group
                )));
            }
        }
        Ok(())
    }

    fn effective_bridges(&self) -> Vec<BridgeSpec> {
        if !self.bridges.is_empty() {
            return self.bridges.clone();
        }
        (0..self.groups.saturating_sub(1))
            .map(|g| BridgeSpec {
                from_group: g,
                to_group: g + 1,
                p_mw: DEFAULT_BRIDGE_P_MW,
                q_mvar: DEFAULT_BRIDGE_Q_MVAR,
            })
            .collect()
    }
}

/// A generated scenario with its planted group membership.
#[derive(Debug, Clone)]
pub struct SynthScenario {
    pub topology: GridTopology,
    pub snapshot: PowerFlowSnapshot,
    pub waveforms: WaveformSet,
    /// Planted membership: groups[g] lists the bus indices of group g.
    pub groups: Vec<Vec<usize>>,
}

/// Generates the scenario: star topology per group (hub = first bus), chain
/// bridges between groups, per-group oscillating angles.
pub fn synth_scenario(spec: &SynthSpec) -> Result<SynthScenario> {
    spec.validate()?;
    let n_per = spec.buses_per_group;
    let n = spec.groups * n_per;

    let labels: Vec<String> = (1..=n).map(|i| format!("B{i}")).collect();
    let groups: Vec<Vec<usize>> = (0..spec.groups)
        .map(|g| (g * n_per..(g + 1) * n_per).collect())
        .collect();

    // Branches: per-group star out of the hub, then bridges from the last bus
    // of one group to the hub of the other.
    let mut branch_docs = Vec::new();
    let mut flows = Vec::new();
    let mut lx = 0;
    for g in 0..spec.groups {
        let hub = g * n_per;
        for s in 1..n_per {
            lx += 1;
            branch_docs.push((
                labels[hub].clone(),
                labels[hub + s].clone(),
                format!("L{lx}"),
            ));
            flows.push(BranchFlow {
                p_from_mw: INTRA_P_MW,
                q_from_mvar: INTRA_Q_MVAR,
                p_to_mw: -INTRA_P_MW,
                q_to_mvar: -INTRA_Q_MVAR,
            });
        }
    }
    for bridge in spec.effective_bridges() {
        let from = bridge.from_group * n_per + (n_per - 1);
        let to = bridge.to_group * n_per;
        lx += 1;
        branch_docs.push((labels[from].clone(), labels[to].clone(), format!("T{lx}")));
        flows.push(BranchFlow {
            p_from_mw: bridge.p_mw,
            q_from_mvar: bridge.q_mvar,
            p_to_mw: -bridge.p_mw,
            q_to_mvar: -bridge.q_mvar,
        });
    }
    let topology = GridTopology::new(labels.clone(), branch_docs)?;

    // Hubs generate what their spokes consume.
    let states: Vec<BusState> = (0..n)
        .map(|b| {
            let is_hub = b % n_per == 0;
            BusState {
                v_pu: 1.0,
                phi_rad: 0.0,
                p_gen_mw: if is_hub { INTRA_P_MW * (n_per - 1) as f64 } else { 0.0 },
                q_gen_mvar: if is_hub { INTRA_Q_MVAR * (n_per - 1) as f64 } else { 0.0 },
                p_load_mw: if is_hub { 0.0 } else { INTRA_P_MW },
                q_load_mvar: if is_hub { 0.0 } else { INTRA_Q_MVAR },
            }
        })
        .collect();
    let snapshot = PowerFlowSnapshot::new(&topology, flows, states, None)?;

    let group_of: Vec<usize> = (0..n).map(|b| b / n_per).collect();
    let phases: Vec<f64> = if spec.phase_offsets_rad.is_empty() {
        vec![0.0; spec.groups]
    } else {
        spec.phase_offsets_rad.clone()
    };
    let waveforms = synth_waveforms(
        &labels,
        &group_of,
        &spec.freqs_hz,
        &phases,
        spec.noise_amplitude_rad,
        spec.duration_s,
        spec.dt_s,
        spec.seed,
    )?;

    Ok(SynthScenario {
        topology,
        snapshot,
        waveforms,
        groups,
    })
}

/// Per-group oscillating bus angles: theta_b(t) = sin(2 pi f_g t + phi_g +
/// jitter_b) + noise. Jitter amplitude is a tenth of the noise amplitude, so
/// zero noise gives bitwise-identical signals within a group.
#[allow(clippy::too_many_arguments)]
pub fn synth_waveforms(
    labels: &[String],
    group_of: &[usize],
    freqs_hz: &[f64],
    phase_offsets_rad: &[f64],
    noise_amplitude_rad: f64,
    duration_s: f64,
    dt_s: f64,
    seed: u64,
) -> Result<WaveformSet> {
    if labels.len() != group_of.len() {
        return Err(Error::Validation(
            "labels and group assignment lengths differ".into(),
        ));
    }
    let samples = (duration_s / dt_s).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter_amp = 0.1 * noise_amplitude_rad;
    let jitters: Vec<f64> = (0..labels.len())
        .map(|_| {
            if jitter_amp > 0.0 {
                rng.gen_range(-jitter_amp..jitter_amp)
            } else {
                0.0
            }
        })
        .collect();
    let mut series = Vec::with_capacity(labels.len());
    for (b, &g) in group_of.iter().enumerate() {
        let f = freqs_hz[g];
        let phase = phase_offsets_rad.get(g).copied().unwrap_or(0.0) + jitters[b];
        let mut theta = Vec::with_capacity(samples);
        for k in 0..samples {
            let t = k as f64 * dt_s;
            let noise = if noise_amplitude_rad > 0.0 {
                rng.gen_range(-noise_amplitude_rad..noise_amplitude_rad)
            } else {
                0.0
            };
            theta.push((std::f64::consts::TAU * f * t + phase).sin() + noise);
        }
        series.push(theta);
    }
    WaveformSet::new(labels.to_vec(), dt_s, series)
}

/// File names produced by [`write_scenario`].
pub const TOPOLOGY_FILE: &str = "topology.json";
pub const FLOWS_FILE: &str = "flows.csv";
pub const BUS_TABLE_FILE: &str = "flows.buses.csv";
pub const WAVEFORMS_FILE: &str = "waveforms.csv";

/// Writes the scenario in the standard input formats. Deterministic in the
/// spec: the same seed produces byte-identical files.
pub fn write_scenario(scenario: &SynthScenario, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(&dir.join(TOPOLOGY_FILE), &topology_to_json(&scenario.topology))?;
    save_flow_snapshot(
        &scenario.snapshot,
        &scenario.topology,
        dir.join(FLOWS_FILE),
        dir.join(BUS_TABLE_FILE),
    )?;
    save_waveforms(&scenario.waveforms, dir.join(WAVEFORMS_FILE))
}
