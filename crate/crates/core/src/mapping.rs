//! Monolithic map of static radar points with voxel downsampling and exact
//! radius-neighborhood statistics.

use std::collections::HashSet;
use std::io::Write;

use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RioError};

type Index = ImmutableKdTree<f64, u64, 3, 32>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    /// m
    pub voxel_size: f64,
    /// m
    pub radius: f64,
    pub min_neighbors: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.5,
            radius: 1.0,
            min_neighbors: 5,
        }
    }
}

/// Centroid and sample covariance of the map points around a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodStats {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    pub count: usize,
}

pub struct PointMap {
    config: MapConfig,
    points: Vec<Vector3<f64>>,
    occupied: HashSet<[i64; 3]>,
    index: Option<Index>,
}

impl PointMap {
    pub fn new(config: MapConfig) -> Result<Self> {
        if !(config.voxel_size > 0.0) {
            return Err(RioError::config("voxel_size", "must be positive"));
        }
        if !(config.radius > 0.0) {
            return Err(RioError::config("radius", "must be positive"));
        }
        if config.min_neighbors == 0 {
            return Err(RioError::config("min_neighbors", "must be at least 1"));
        }
        Ok(Self {
            config,
            points: Vec::new(),
            occupied: HashSet::new(),
            index: None,
        })
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    fn voxel(&self, p: &Vector3<f64>) -> [i64; 3] {
        let s = self.config.voxel_size;
        [(p.x / s).floor() as i64, (p.y / s).floor() as i64, (p.z / s).floor() as i64]
    }

    /// Adds world-frame points, keeping the first point seen in each voxel,
    /// and rebuilds the search index.
    pub fn insert_scan(&mut self, points: &[Vector3<f64>]) -> Result<()> {
        if let Some(p) = points.iter().find(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(RioError::Domain(format!("non-finite map point {p:?}")));
        }
        let before = self.points.len();
        for p in points {
            if self.occupied.insert(self.voxel(p)) {
                self.points.push(*p);
            }
        }
        if self.points.len() != before || self.index.is_none() {
            self.rebuild_index();
        }
        Ok(())
    }

    fn rebuild_index(&mut self) {
        let coords: Vec<[f64; 3]> = self.points.iter().map(|p| [p.x, p.y, p.z]).collect();
        self.index = Some(Index::new_from_slice(&coords));
    }

    /// Indices of all map points within `radius` (inclusive) of `query`.
    pub fn within(&self, query: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let Some(index) = &self.index else { return Vec::new() };
        if self.points.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<usize> = index
            .within_unsorted::<SquaredEuclidean>(&[query.x, query.y, query.z], radius * radius)
            .into_iter()
            .map(|n| n.item as usize)
            .collect();
        out.sort_unstable();
        out
    }

    /// Statistics of the neighbors within `radius`, or `None` when fewer than
    /// `min_neighbors` are found.
    pub fn radius_neighbors(&self, query: &Vector3<f64>, radius: f64) -> Option<NeighborhoodStats> {
        neighborhood_stats(&self.points, &self.within(query, radius), self.config.min_neighbors)
    }

    pub fn export(&self, mut w: impl Write) -> Result<()> {
        for p in &self.points {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        Ok(())
    }
}

pub fn neighborhood_stats(points: &[Vector3<f64>], idx: &[usize], min_neighbors: usize) -> Option<NeighborhoodStats> {
    let n = idx.len();
    if n == 0 || n < min_neighbors {
        return None;
    }
    let mean = idx.iter().map(|&i| points[i]).sum::<Vector3<f64>>() / n as f64;
    let covariance = if n > 1 {
        let c = idx
            .iter()
            .map(|&i| (points[i] - mean) * (points[i] - mean).transpose())
            .sum::<Matrix3<f64>>()
            / (n as f64 - 1.0);
        0.5 * (c + c.transpose())
    } else {
        Matrix3::zeros()
    };
    Some(NeighborhoodStats {
        mean,
        covariance,
        count: n,
    })
}

/// Reference radius search by exhaustive scan.
pub fn brute_force_within(points: &[Vector3<f64>], query: &Vector3<f64>, radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    (0..points.len())
        .filter(|&i| {
            let d = points[i] - query;
            d.x * d.x + d.y * d.y + d.z * d.z <= r2
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(min: usize) -> MapConfig {
        MapConfig {
            min_neighbors: min,
            ..MapConfig::default()
        }
    }

    #[test]
    fn voxel_keep_first() {
        let mut m = PointMap::new(cfg(1)).unwrap();
        let a = Vector3::new(0.1, 0.1, 0.1);
        let b = Vector3::new(0.2, 0.3, 0.4);
        let c = Vector3::new(1.1, 0.1, 0.1);
        m.insert_scan(&[a, b, c]).unwrap();
        assert_eq!(m.points(), &[a, c]);
        m.insert_scan(&[a, b, c]).unwrap();
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn single_neighbor_and_square() {
        let mut m = PointMap::new(cfg(1)).unwrap();
        assert!(m.radius_neighbors(&Vector3::zeros(), 1.0).is_none());
        m.insert_scan(&[Vector3::new(0.2, 0.0, 0.0)]).unwrap();
        let s = m.radius_neighbors(&Vector3::zeros(), 1.0).unwrap();
        assert_eq!((s.mean, s.covariance, s.count), (Vector3::new(0.2, 0.0, 0.0), Matrix3::zeros(), 1));

        let mut m = PointMap::new(cfg(4)).unwrap();
        let sq = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]].map(|[x, y]| Vector3::new(x + 5.25, y + 5.25, 0.25));
        m.insert_scan(&sq).unwrap();
        let s = m.radius_neighbors(&Vector3::new(5.25, 5.25, 0.25), 1.5).unwrap();
        assert!((s.mean - Vector3::new(5.25, 5.25, 0.25)).norm() < 1e-12);
        assert!(m.radius_neighbors(&Vector3::new(5.25, 5.25, 0.25), 1.0).is_none());
    }

    #[test]
    fn index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = PointMap::new(MapConfig {
            voxel_size: 0.05,
            radius: 1.0,
            min_neighbors: 1,
        })
        .unwrap();
        let mut pts: Vec<Vector3<f64>> = (0..2000)
            .map(|_| Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0)))
            .collect();
        // a planar wall with many identical coordinates
        pts.extend((0..200).map(|k| Vector3::new(2.0, -5.0 + 0.05 * k as f64, 0.5)));
        m.insert_scan(&pts).unwrap();
        for _ in 0..1000 {
            let q = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0));
            let r = rng.random_range(0.1..1.5);
            assert_eq!(m.within(&q, r), brute_force_within(m.points(), &q, r));
        }
        let q = Vector3::new(0.3, 0.2, 0.0);
        let idx = brute_force_within(m.points(), &q, 1.0);
        let a = m.radius_neighbors(&q, 1.0).unwrap();
        let b = neighborhood_stats(m.points(), &idx, 1).unwrap();
        assert!((a.mean - b.mean).norm() < 1e-12 && (a.covariance - b.covariance).norm() < 1e-12);
    }
}
