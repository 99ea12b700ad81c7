//! Static renderings of an islanding solution: DOT and GraphML with island
//! annotations and marked cut branches, and a CSV listing of the cut-set.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{write_file, GridTopology};
use crate::pipeline::IslandingSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    GraphMl,
    Csv,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(ExportFormat::Dot),
            "graphml" => Ok(ExportFormat::GraphMl),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown export format '{other}' (expected dot, graphml, or csv)"
            ))),
        }
    }
}

/// Renders the solution in the requested format.
pub fn render(solution: &IslandingSolution, topo: &GridTopology, format: ExportFormat) -> String {
    match format {
        ExportFormat::Dot => to_dot(solution, topo),
        ExportFormat::GraphMl => to_graphml(solution, topo),
        ExportFormat::Csv => cut_csv(solution),
    }
}

/// Renders and writes the solution to a file.
pub fn export_graph(
    solution: &IslandingSolution,
    topo: &GridTopology,
    format: ExportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_file(path.as_ref(), &render(solution, topo, format))
}

fn is_cut(solution: &IslandingSolution, branch_id: &str, from: &str, to: &str) -> bool {
    solution
        .cut_set
        .iter()
        .any(|c| c.id == branch_id && c.from == from && c.to == to)
}

/// DOT graph: one cluster per island, cut branches dashed.
pub fn to_dot(solution: &IslandingSolution, topo: &GridTopology) -> String {
    let mut out = String::from("graph islands {\n");
    for island in &solution.islands {
        out.push_str(&format!("  subgraph cluster_{} {{\n", island.id));
        out.push_str(&format!("    label=\"island {}\";\n", island.id));
        for bus in &island.buses {
            out.push_str(&format!("    \"{bus}\";\n"));
        }
        out.push_str("  }\n");
    }
    for br in topo.branches() {
        let from = &topo.buses()[br.from].label;
        let to = &topo.buses()[br.to].label;
        if is_cut(solution, &br.id, from, to) {
            out.push_str(&format!(
                "  \"{from}\" -- \"{to}\" [label=\"{}\", style=dashed, color=red];\n",
                br.id
            ));
        } else {
            out.push_str(&format!("  \"{from}\" -- \"{to}\" [label=\"{}\"];\n", br.id));
        }
    }
    out.push_str("}\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// GraphML document with an `island` attribute per node and a `cut` flag per
/// edge.
pub fn to_graphml(solution: &IslandingSolution, topo: &GridTopology) -> String {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n\
         <key id=\"island\" for=\"node\" attr.name=\"island\" attr.type=\"int\"/>\n\
         <key id=\"cut\" for=\"edge\" attr.name=\"cut\" attr.type=\"boolean\"/>\n\
         <graph id=\"G\" edgedefault=\"undirected\">\n",
    );
    for (b, bus) in topo.buses().iter().enumerate() {
        let island = solution.partition.cluster_of(b);
        out.push_str(&format!(
            "  <node id=\"{}\"><data key=\"island\">{island}</data></node>\n",
            xml_escape(&bus.label)
        ));
    }
    for br in topo.branches() {
        let from = &topo.buses()[br.from].label;
        let to = &topo.buses()[br.to].label;
        let cut = is_cut(solution, &br.id, from, to);
        out.push_str(&format!(
            "  <edge id=\"{}\" source=\"{}\" target=\"{}\"><data key=\"cut\">{cut}</data></edge>\n",
            xml_escape(&br.id),
            xml_escape(from),
            xml_escape(to)
        ));
    }
    out.push_str("</graph>\n</graphml>\n");
    out
}

/// Cut branches with their measured flow weights.
pub fn cut_csv(solution: &IslandingSolution) -> String {
    let mut out = String::from("branch_id,from,to,P_MW,Q_Mvar\n");
    for c in &solution.cut_set {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.id, c.from, c.to, c.p_mw, c.q_mvar
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BranchFlow, BusState, PowerFlowSnapshot};
    use crate::layers::{active_power_layer, LayerMode};
    use crate::pipeline::{single_layer_islanding, KSelect, PipelineConfig};

    fn path_solution(k: KSelect) -> (IslandingSolution, GridTopology) {
        let topo = GridTopology::new(
            (1..=4).map(|i| format!("B{i}")).collect(),
            vec![
                ("B1".into(), "B2".into(), "L1".into()),
                ("B2".into(), "B3".into(), "L2".into()),
                ("B3".into(), "B4".into(), "L3".into()),
            ],
        )
        .unwrap();
        let flows = [5.0, 1.0, 7.0]
            .iter()
            .map(|&p| BranchFlow {
                p_from_mw: p,
                q_from_mvar: p / 5.0,
                p_to_mw: -p,
                q_to_mvar: -p / 5.0,
            })
            .collect();
        let states = vec![
            BusState {
                v_pu: 1.0,
                phi_rad: 0.0,
                p_gen_mw: 0.0,
                q_gen_mvar: 0.0,
                p_load_mw: 0.0,
                q_load_mvar: 0.0,
            };
            4
        ];
        let snap = PowerFlowSnapshot::new(&topo, flows, states, None).unwrap();
        let layer = active_power_layer(&snap, &topo, LayerMode::Measured).unwrap();
        let sol =
            single_layer_islanding(&layer, &topo, &snap, k, &PipelineConfig::default()).unwrap();
        (sol, topo)
    }

    #[test]
    fn dot_marks_cut_edges() {
        let (sol, topo) = path_solution(KSelect::Fixed(2));
        let dot = to_dot(&sol, &topo);
        assert!(dot.contains("subgraph cluster_0"));
        assert!(dot.contains("subgraph cluster_1"));
        assert!(dot.contains("\"B2\" -- \"B3\" [label=\"L2\", style=dashed, color=red];"));
        assert!(!dot.contains("\"B1\" -- \"B2\" [label=\"L1\", style=dashed"));
    }

    #[test]
    fn dot_without_cut_has_no_dashes() {
        let (sol, topo) = path_solution(KSelect::Fixed(1));
        let dot = to_dot(&sol, &topo);
        assert!(!dot.contains("dashed"));
    }

    #[test]
    fn csv_lists_cut_with_weights() {
        let (sol, _) = path_solution(KSelect::Fixed(2));
        let csv = cut_csv(&sol);
        assert_eq!(csv, "branch_id,from,to,P_MW,Q_Mvar\nL2,B2,B3,1,0.2\n");
    }

    #[test]
    fn graphml_annotates_islands() {
        let (sol, topo) = path_solution(KSelect::Fixed(2));
        let xml = to_graphml(&sol, &topo);
        assert!(xml.contains("<node id=\"B1\"><data key=\"island\">0</data></node>"));
        assert!(xml.contains("<node id=\"B4\"><data key=\"island\">1</data></node>"));
        assert!(xml.contains("<edge id=\"L2\" source=\"B2\" target=\"B3\"><data key=\"cut\">true</data></edge>"));
        assert!(xml.contains("<edge id=\"L1\" source=\"B1\" target=\"B2\"><data key=\"cut\">false</data></edge>"));
    }
}
