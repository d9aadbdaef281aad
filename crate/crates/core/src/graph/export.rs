use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ConceptGraph;
use crate::{CoreError, Result};

pub const P_MATRIX_FILE: &str = "p_matrix.csv";
pub const T_TILDE_FILE: &str = "t_tilde.csv";
pub const EDGES_FILE: &str = "edges.json";
pub const RELATIONS_FILE: &str = "relations.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

/// Counts of unordered concept pairs by transition pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationReport {
    /// `T_ij = T_ji = 1`
    pub mutual: usize,
    /// Exactly one direction set; these are the prerequisite edges.
    pub directed: usize,
    pub unrelated: usize,
}

pub fn relation_report(graph: &ConceptGraph) -> RelationReport {
    let t = &graph.transitions;
    let mut r = RelationReport {
        mutual: 0,
        directed: 0,
        unrelated: 0,
    };
    for i in 0..t.k {
        for j in i + 1..t.k {
            match (t.has(i, j), t.has(j, i)) {
                (true, true) => r.mutual += 1,
                (false, false) => r.unrelated += 1,
                _ => r.directed += 1,
            }
        }
    }
    r
}

pub fn matrix_csv<T: std::fmt::Display>(k: usize, values: &[T]) -> String {
    let mut out = String::new();
    for i in 0..k {
        for j in 0..k {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", values[i * k + j]);
        }
        out.push('\n');
    }
    out
}

/// Edge list of the prerequisite matrix, weighted by normalized transition.
pub fn edges(graph: &ConceptGraph, names: &[String]) -> Vec<Edge> {
    graph
        .prerequisites
        .edge_list()
        .into_iter()
        .map(|(i, j)| Edge {
            from: names.get(i).cloned().unwrap_or_else(|| i.to_string()),
            to: names.get(j).cloned().unwrap_or_else(|| j.to_string()),
            weight: graph.transitions.normalized(i, j),
        })
        .collect()
}

/// Writes the P matrix and normalized transitions as K×K CSV, the edge list
/// and the relation counts as JSON.
pub fn write_graph(graph: &ConceptGraph, names: &[String], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    let k = graph.k();
    let p: Vec<u8> = graph.prerequisites.edges.iter().map(|&b| b as u8).collect();
    let files = [
        (P_MATRIX_FILE, matrix_csv(k, &p)),
        (T_TILDE_FILE, matrix_csv(k, &graph.transitions.t_tilde)),
        (EDGES_FILE, serde_json::to_string_pretty(&edges(graph, names))?),
        (RELATIONS_FILE, serde_json::to_string_pretty(&relation_report(graph))?),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| CoreError::io(&path, e))?;
    }
    Ok(())
}
