//! Nearest-neighbour statistics from the Delaunay triangulation.
//!
//! On a convex hull with concave stretches, Delaunay also joins outer ions across the
//! gaps. Those long edges are not first-shell neighbours, so each ion keeps only the
//! Delaunay edges no longer than [`FIRST_SHELL_FACTOR`] times its own shortest edge.

use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};

pub const FIRST_SHELL_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborEntry {
    pub ion: usize,
    pub neighbor: usize,
    pub distance: f64,
    /// Distance of `ion` from the trap axis.
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborReport {
    /// Every Delaunay edge once, `(i, j, r_ij)` with `i < j`, sorted.
    pub delaunay_edges: Vec<(usize, usize, f64)>,
    /// Per-ion first-shell neighbours, both directions of each kept edge.
    pub first_shell: Vec<NeighborEntry>,
    pub radii: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Mean and variance over all Delaunay edges, unfiltered.
    pub raw_mean: f64,
    pub raw_variance: f64,
}

fn mean_variance(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let variance = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, variance)
}

pub fn delaunay_edges(positions: &[[f64; 2]]) -> Result<Vec<(usize, usize, f64)>> {
    if positions.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "triangulation needs at least 3 ions, got {}",
            positions.len()
        )));
    }
    let mut triangulation: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut handle_to_ion = Vec::with_capacity(positions.len());
    for (ion, p) in positions.iter().enumerate() {
        let handle = triangulation
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| Error::DegenerateGeometry(format!("ion {ion}: {e:?}")))?;
        if handle.index() != handle_to_ion.len() {
            return Err(Error::DegenerateGeometry(format!("ion {ion} duplicates another ion")));
        }
        handle_to_ion.push(ion);
    }
    if triangulation.num_inner_faces() == 0 {
        return Err(Error::DegenerateGeometry("all ions are collinear".into()));
    }
    let mut edges: Vec<(usize, usize, f64)> = triangulation
        .undirected_edges()
        .map(|edge| {
            let [a, b] = edge.vertices();
            let (i, j) = (handle_to_ion[a.fix().index()], handle_to_ion[b.fix().index()]);
            let (i, j) = if i < j { (i, j) } else { (j, i) };
            let d = (positions[i][0] - positions[j][0]).hypot(positions[i][1] - positions[j][1]);
            (i, j, d)
        })
        .collect();
    edges.sort_by_key(|e| (e.0, e.1));
    Ok(edges)
}

pub fn nearest_neighbor_distances(positions: &[[f64; 2]]) -> Result<NeighborReport> {
    let edges = delaunay_edges(positions)?;
    let n = positions.len();
    let radii: Vec<f64> = positions.iter().map(|p| p[0].hypot(p[1])).collect();

    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(i, j, d) in &edges {
        adjacency[i].push((j, d));
        adjacency[j].push((i, d));
    }
    let mut first_shell = Vec::new();
    for (ion, list) in adjacency.iter_mut().enumerate() {
        list.sort_by_key(|e| e.0);
        let shortest = list.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        for &(neighbor, distance) in list.iter() {
            if distance <= FIRST_SHELL_FACTOR * shortest {
                first_shell.push(NeighborEntry {
                    ion,
                    neighbor,
                    distance,
                    rho: radii[ion],
                });
            }
        }
    }

    let (mean, variance) = mean_variance(first_shell.iter().map(|e| e.distance));
    let (raw_mean, raw_variance) = mean_variance(edges.iter().map(|e| e.2));
    Ok(NeighborReport {
        delaunay_edges: edges,
        first_shell,
        radii,
        mean,
        variance,
        raw_mean,
        raw_variance,
    })
}
