//! Neighborhood inspection: for a questioned dissimilarity sample, the K
//! training neighbors with labels and provenance, plus the resulting kDN.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dichotomy::{DissimilaritySample, Label, QueryKind};
use crate::error::Result;
use crate::hardness::{k_nearest, HardnessScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborRow {
    pub distance: f64,
    pub label: Label,
    pub query_kind: QueryKind,
    pub query_ref: (u32, u32),
    pub reference_ref: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodDump {
    pub query_label: Label,
    pub query_kind: QueryKind,
    pub query_ref: (u32, u32),
    pub reference_ref: (u32, u32),
    pub hardness: HardnessScore,
    /// K rows sorted by non-decreasing distance.
    pub neighbors: Vec<NeighborRow>,
}

impl NeighborhoodDump {
    /// File name derived from the query provenance.
    pub fn file_name(&self) -> String {
        format!(
            "neigh_{}_q{}s{}_r{}s{}.txt",
            self.query_kind.as_str(),
            self.query_ref.0,
            self.query_ref.1,
            self.reference_ref.0,
            self.reference_ref.1
        )
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "query: kind={} label={} writer={} sig={} (reference writer={} sig={})",
            self.query_kind.as_str(),
            self.query_label.as_str(),
            self.query_ref.0,
            self.query_ref.1,
            self.reference_ref.0,
            self.reference_ref.1
        );
        let _ = writeln!(
            out,
            "kDN = {}/{} = {:.4}",
            self.hardness.disagreeing,
            self.hardness.k,
            self.hardness.value()
        );
        let _ = writeln!(out, "rank,distance,label,query_kind,q_writer,q_sig,r_writer,r_sig");
        for (rank, n) in self.neighbors.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                rank + 1,
                n.distance,
                n.label.as_str(),
                n.query_kind.as_str(),
                n.query_ref.0,
                n.query_ref.1,
                n.reference_ref.0,
                n.reference_ref.1
            );
        }
        out
    }
}

/// Collects the K nearest training neighbors of `query.u`, with the same
/// neighbor selection and tie rule as the hardness module. Both the query
/// and the training collection must be in the same (standardized) space.
pub fn dump_neighborhood(
    query: &DissimilaritySample,
    training: &[DissimilaritySample],
    k: usize,
) -> Result<NeighborhoodDump> {
    let indices = k_nearest(&query.u, training, k)?;
    let neighbors: Vec<NeighborRow> = indices
        .iter()
        .map(|&i| {
            let s = &training[i];
            let d2: f64 = query
                .u
                .iter()
                .zip(&s.u)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            NeighborRow {
                distance: d2.sqrt(),
                label: s.label,
                query_kind: s.query_kind,
                query_ref: s.query_ref,
                reference_ref: s.reference_ref,
            }
        })
        .collect();
    let disagreeing = neighbors.iter().filter(|n| n.label != query.label).count();
    Ok(NeighborhoodDump {
        query_label: query.label,
        query_kind: query.query_kind,
        query_ref: query.query_ref,
        reference_ref: query.reference_ref,
        hardness: HardnessScore { disagreeing, k },
        neighbors,
    })
}
