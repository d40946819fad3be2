//! Cellular geometry, cell membership and training groups.

use std::fmt::Write as _;

use rand::Rng;

use crate::config::NetworkConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    pub fn horizontal_distance(&self, other: &Point3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Static network geometry.
///
/// `cell_of[k]` is the nearest core of tag `k`; tags of a cell are split
/// into training groups by `group_of[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub core_positions: Vec<Point3>,
    pub tag_positions: Vec<Point3>,
    /// `distances[k][b]`, meters.
    pub distances: Vec<Vec<f64>>,
    pub cell_of: Vec<usize>,
    pub group_of: Vec<usize>,
    /// Subcarrier frequencies in Hz.
    pub subcarriers: Vec<f64>,
    pub n_training: usize,
}

/// Orthogonal ±1 training sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSet {
    /// `sequences[m]` is the m-th column x^(m).
    pub sequences: Vec<Vec<i8>>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn inner_product(&self, m: usize, n: usize) -> i64 {
        self.sequences[m]
            .iter()
            .zip(&self.sequences[n])
            .map(|(&a, &b)| i64::from(a) * i64::from(b))
            .sum()
    }
}

/// Sylvester-construction Hadamard columns.
pub fn hadamard_training_set(m_tr: usize) -> Result<TrainingSet> {
    if m_tr == 0 || !m_tr.is_power_of_two() {
        return Err(Error::UnsupportedSize(m_tr));
    }
    let mut h: Vec<Vec<i8>> = vec![vec![1]];
    while h.len() < m_tr {
        let n = h.len();
        let mut next = vec![vec![0i8; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                let v = h[i][j];
                next[i][j] = v;
                next[i][j + n] = v;
                next[i + n][j] = v;
                next[i + n][j + n] = -v;
            }
        }
        h = next;
    }
    // Sylvester matrices are symmetric, so rows and columns coincide.
    Ok(TrainingSet { sequences: h })
}

/// First `count` cells of a hexagonal lattice with neighbor spacing
/// `spacing`, filled ring by ring outward from the origin.
pub fn hex_core_layout(count: usize, spacing: f64, height: f64) -> Vec<Point3> {
    // axial hex directions, counter-clockwise
    const DIRS: [(i64, i64); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];
    let to_point = |q: i64, r: i64| {
        let x = spacing * (q as f64 + r as f64 / 2.0);
        let y = spacing * (3f64.sqrt() / 2.0) * r as f64;
        Point3::new(x, y, height)
    };
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(to_point(0, 0));
    let mut ring = 1i64;
    while out.len() < count {
        // start at DIRS[4] * ring and walk the six sides
        let (mut q, mut r) = (DIRS[4].0 * ring, DIRS[4].1 * ring);
        for &(dq, dr) in &DIRS {
            for _ in 0..ring {
                if out.len() == count {
                    return out;
                }
                out.push(to_point(q, r));
                q += dq;
                r += dr;
            }
        }
        ring += 1;
    }
    out
}

impl Topology {
    /// Builds a topology from explicit positions. Cell membership is the
    /// 3-D nearest core; every tag starts in training group 0.
    pub fn from_positions(
        core_positions: Vec<Point3>,
        tag_positions: Vec<Point3>,
        subcarriers: Vec<f64>,
    ) -> Self {
        let distances: Vec<Vec<f64>> = tag_positions
            .iter()
            .map(|t| core_positions.iter().map(|c| t.distance(c)).collect())
            .collect();
        let cell_of = distances
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |best, (b, &d)| if d < best.1 { (b, d) } else { best })
                    .0
            })
            .collect();
        let n = tag_positions.len();
        Self {
            core_positions,
            tag_positions,
            distances,
            cell_of,
            group_of: vec![0; n],
            subcarriers,
            n_training: 1,
        }
    }

    pub fn n_cores(&self) -> usize {
        self.core_positions.len()
    }

    pub fn n_tags(&self) -> usize {
        self.tag_positions.len()
    }

    pub fn n_subchannels(&self) -> usize {
        self.subcarriers.len()
    }

    /// Tags served by core `b`, ascending.
    pub fn cell_members(&self, b: usize) -> Vec<usize> {
        (0..self.n_tags()).filter(|&k| self.cell_of[k] == b).collect()
    }

    /// Training groups of cell `b`: entry `m` lists the tags of K_bm.
    pub fn groups(&self, b: usize) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_training];
        for k in self.cell_members(b) {
            groups[self.group_of[k]].push(k);
        }
        groups
    }

    /// Azimuth of tag `k` seen from core `b`, radians.
    pub fn azimuth(&self, k: usize, b: usize) -> f64 {
        let t = &self.tag_positions[k];
        let c = &self.core_positions[b];
        (t.y - c.y).atan2(t.x - c.x)
    }

    /// Distributes the tags of every cell round-robin over `m_tr` training
    /// sequences, in ascending tag order.
    pub fn assign_training_groups(mut self, m_tr: usize) -> Result<Self> {
        if m_tr == 0 {
            return Err(Error::InvalidConfig("training sequence count must be at least 1".into()));
        }
        self.n_training = m_tr;
        for b in 0..self.n_cores() {
            for (i, k) in self.cell_members(b).into_iter().enumerate() {
                self.group_of[k] = i % m_tr;
            }
        }
        self.check_feasible()?;
        Ok(self)
    }

    /// Every training group must fit in the available subchannels.
    pub fn check_feasible(&self) -> Result<()> {
        let c = self.n_subchannels();
        for b in 0..self.n_cores() {
            for (m, g) in self.groups(b).iter().enumerate() {
                if g.len() > c {
                    return Err(Error::Infeasible {
                        core: b,
                        group: m,
                        size: g.len(),
                        subchannels: c,
                    });
                }
            }
        }
        Ok(())
    }

    /// Tab-separated export: tag id, position, cell, group.
    pub fn to_table(&self) -> String {
        let mut out = String::from("tag\tx_m\ty_m\tz_m\tcell\tgroup\n");
        for (k, p) in self.tag_positions.iter().enumerate() {
            let _ = writeln!(
                out,
                "{k}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
                p.x, p.y, p.z, self.cell_of[k], self.group_of[k]
            );
        }
        out
    }
}

/// Places cores on a hexagonal grid with spacing √3·R and scatters tags
/// uniformly over the disk of radius R around their home core.
///
/// Tag `k` is homed at core `k mod B`, which gives K/B tags per core with
/// the remainder spread round-robin. Cell membership is then recomputed
/// as the nearest core.
pub fn build_cellular_topology<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Result<Topology> {
    cfg.validate()?;
    let spacing = 3f64.sqrt() * cfg.cell_radius_m;
    let cores = hex_core_layout(cfg.cores, spacing, cfg.core_height_m);
    let tags = (0..cfg.tags)
        .map(|k| {
            let home = &cores[k % cfg.cores];
            let radius = cfg.cell_radius_m * rng.random::<f64>().sqrt();
            let angle = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            let h = cfg.tag_height_min_m
                + (cfg.tag_height_max_m - cfg.tag_height_min_m) * rng.random::<f64>();
            Point3::new(home.x + radius * angle.cos(), home.y + radius * angle.sin(), h)
        })
        .collect();
    Topology::from_positions(cores, tags, cfg.subcarriers()).assign_training_groups(cfg.training_sequences)
}
