//! Per-core tag-to-subchannel assignment.
//!
//! Each core maximizes Σ_k Σ_c g(avg SINR_kc) v_kc subject to every tag
//! taking exactly one subchannel and no subchannel being reused inside a
//! training group. [`run_max_sum`] solves it by damped Max-Sum message
//! passing; [`exact_optimal`] is the Hungarian-method oracle and
//! [`random_orthogonal_allocation`] the feasible random baseline.

mod hungarian;
mod max_sum;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::measurement::SinrTable;
use crate::rng::{stream, sub_rng};
use crate::topology::Topology;
use crate::{Error, Result};

pub use hungarian::max_weight_assignment;
pub use max_sum::{
    extract_assignment, max_sum_iterate, nmae, run_max_sum, ConvergenceTrace, Extraction, IterationRecord,
    MaxSumOutcome, MessageState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GKind {
    #[default]
    Identity,
    Log1p,
}

impl GKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            GKind::Identity => x,
            GKind::Log1p => x.ln_1p(),
        }
    }
}

/// Row-major weight matrix of one cell: row `i` is tag `tags[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub tags: Vec<usize>,
    n_subchannels: usize,
    w: Vec<f64>,
}

impl Weights {
    pub fn new(tags: Vec<usize>, n_subchannels: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != tags.len() * n_subchannels {
            return Err(Error::Dimension(format!(
                "{} weights for {} tags x {n_subchannels} subchannels",
                w.len(),
                tags.len()
            )));
        }
        if let Some(x) = w.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("weight {x} is not finite")));
        }
        Ok(Self { tags, n_subchannels, w })
    }

    /// Weights from dense rows, tags numbered 0..rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::Dimension("ragged weight rows".into()));
        }
        Self::new((0..rows.len()).collect(), c, rows.concat())
    }

    pub fn n_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.w[i * self.n_subchannels + c]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n_subchannels..(i + 1) * self.n_subchannels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn max_abs(&self) -> f64 {
        self.w.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Adds U[0, rel · max|w|] to every entry, seeded.
    pub fn with_jitter(&self, rel: f64, seed: u64) -> Self {
        let mag = rel * self.max_abs();
        let mut rng = sub_rng(seed, &[stream::JITTER]);
        let w = self.w.iter().map(|&x| x + mag * rng.random::<f64>()).collect();
        Self { w, ..self.clone() }
    }

    /// Sub-problem restricted to the rows in `rows`.
    pub fn restrict(&self, rows: &[usize]) -> Vec<Vec<f64>> {
        rows.iter().map(|&i| self.row(i).to_vec()).collect()
    }
}

/// w_kc = g(avg SINR_kc) for the tags served by `cell`.
pub fn build_weights(table: &SinrTable, cell: usize, g: GKind) -> Result<Weights> {
    let c = table.n_subchannels();
    let tags: Vec<usize> = (0..table.n_tags()).filter(|&k| table.cell_of(k) == cell).collect();
    let mut w = Vec::with_capacity(tags.len() * c);
    for &k in &tags {
        for ch in 0..c {
            let avg = table.avg(k, ch).ok_or(Error::IncompleteTable { tag: k, subchannel: ch })?;
            w.push(g.apply(avg));
        }
    }
    Weights::new(tags, c, w)
}

/// Training groups as lists of weight-row indices.
pub type Groups = Vec<Vec<usize>>;

/// One core's assignment problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProblem {
    pub core: usize,
    pub weights: Weights,
    pub groups: Groups,
}

impl CellProblem {
    pub fn from_table(table: &SinrTable, topology: &Topology, core: usize, g: GKind) -> Result<Self> {
        let weights = build_weights(table, core, g)?;
        let groups = topology
            .groups(core)
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|g| {
                g.into_iter()
                    .map(|k| weights.tags.iter().position(|&t| t == k).expect("group member belongs to cell"))
                    .collect()
            })
            .collect();
        Ok(Self { core, weights, groups })
    }
}

/// Checks that `groups` partitions the rows and fits the subchannels.
pub(crate) fn validate_groups(n_tags: usize, n_subchannels: usize, groups: &Groups) -> Result<()> {
    let mut seen = vec![false; n_tags];
    for (m, g) in groups.iter().enumerate() {
        if g.len() > n_subchannels {
            return Err(Error::InfeasibleGroup {
                group: m,
                size: g.len(),
                subchannels: n_subchannels,
            });
        }
        for &i in g {
            if i >= n_tags || seen[i] {
                return Err(Error::Dimension(format!("row {i} is out of range or in two groups")));
            }
            seen[i] = true;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Dimension(format!("row {i} belongs to no training group")));
    }
    Ok(())
}

/// Binary indicators v_kc, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    n_subchannels: usize,
    v: Vec<bool>,
}

impl Assignment {
    pub fn from_indicators(n_subchannels: usize, v: Vec<bool>) -> Self {
        assert_eq!(v.len() % n_subchannels.max(1), 0, "indicator length");
        Self { n_subchannels, v }
    }

    pub fn from_channels(n_subchannels: usize, channels: &[usize]) -> Self {
        let mut v = vec![false; channels.len() * n_subchannels];
        for (i, &c) in channels.iter().enumerate() {
            v[i * n_subchannels + c] = true;
        }
        Self { n_subchannels, v }
    }

    pub fn n_tags(&self) -> usize {
        self.v.len().checked_div(self.n_subchannels).unwrap_or(0)
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    pub fn get(&self, i: usize, c: usize) -> bool {
        self.v[i * self.n_subchannels + c]
    }

    /// The single subchannel of row `i`, if exactly one is set.
    pub fn channel_of(&self, i: usize) -> Option<usize> {
        let row = &self.v[i * self.n_subchannels..(i + 1) * self.n_subchannels];
        let mut it = row.iter().enumerate().filter(|(_, &b)| b).map(|(c, _)| c);
        match (it.next(), it.next()) {
            (Some(c), None) => Some(c),
            _ => None,
        }
    }

    pub fn channels(&self) -> Option<Vec<usize>> {
        (0..self.n_tags()).map(|i| self.channel_of(i)).collect()
    }

    /// Every tag on exactly one subchannel and no subchannel shared within
    /// a training group.
    pub fn check_feasible(&self, groups: &Groups) -> Result<()> {
        for i in 0..self.n_tags() {
            let n = (0..self.n_subchannels).filter(|&c| self.get(i, c)).count();
            if n != 1 {
                return Err(Error::ConstraintViolation(format!(
                    "one-subchannel-per-tag: row {i} has {n} subchannels"
                )));
            }
        }
        for (m, g) in groups.iter().enumerate() {
            for c in 0..self.n_subchannels {
                let n = g.iter().filter(|&&i| self.get(i, c)).count();
                if n > 1 {
                    return Err(Error::ConstraintViolation(format!(
                        "subchannel-unique-per-group: group {m} uses subchannel {c} {n} times"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Σ w_kc v_kc of a feasible assignment.
pub fn objective_value(weights: &Weights, groups: &Groups, assignment: &Assignment) -> Result<f64> {
    if assignment.n_tags() != weights.n_tags() || assignment.n_subchannels() != weights.n_subchannels() {
        return Err(Error::Dimension("assignment and weights differ in shape".into()));
    }
    assignment.check_feasible(groups)?;
    Ok(assignment
        .channels()
        .expect("feasible assignment has one channel per tag")
        .iter()
        .enumerate()
        .map(|(i, &c)| weights.get(i, c))
        .sum())
}

/// Global optimum by solving each training group as a maximum-weight
/// bipartite matching; the groups share no constraint.
pub fn exact_optimal(weights: &Weights, groups: &Groups) -> Result<Assignment> {
    validate_groups(weights.n_tags(), weights.n_subchannels(), groups)?;
    let mut channels = vec![0; weights.n_tags()];
    for g in groups {
        let sub = weights.restrict(g);
        for (&i, c) in g.iter().zip(max_weight_assignment(&sub)) {
            channels[i] = c;
        }
    }
    Ok(Assignment::from_channels(weights.n_subchannels(), &channels))
}

/// Uniformly random injective map of each group's tags to subchannels.
pub fn random_orthogonal_allocation<R: Rng + ?Sized>(
    groups: &Groups,
    n_tags: usize,
    n_subchannels: usize,
    rng: &mut R,
) -> Result<Assignment> {
    validate_groups(n_tags, n_subchannels, groups)?;
    let mut channels = vec![0; n_tags];
    let mut perm: Vec<usize> = (0..n_subchannels).collect();
    for g in groups {
        perm.shuffle(rng);
        for (&i, &c) in g.iter().zip(&perm) {
            channels[i] = c;
        }
    }
    Ok(Assignment::from_channels(n_subchannels, &channels))
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub n_max: usize,
    /// Damping weight of the previous message, in [0, 1).
    pub alpha: f64,
    /// NMAE termination threshold.
    pub epsilon: f64,
    /// Relative magnitude of the tie-breaking perturbation, if any.
    pub jitter: Option<f64>,
    pub jitter_seed: u64,
    pub g: GKind,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            n_max: 100,
            alpha: 0.05,
            epsilon: 1e-5,
            jitter: None,
            jitter_seed: 0,
            g: GKind::Identity,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} must lie in [0, 1)", self.alpha)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon {} must be positive", self.epsilon)));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidConfig("n_max must be at least 1".into()));
        }
        if let Some(j) = self.jitter {
            if !(j >= 0.0) {
                return Err(Error::InvalidConfig("jitter must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// CSV of an assignment table: `core,tag,subchannel`.
pub fn assignments_to_csv(cells: &[(usize, &Weights, &Assignment)]) -> String {
    let mut out = String::from("core,tag,subchannel\n");
    for (core, w, a) in cells {
        for (i, &k) in w.tags.iter().enumerate() {
            let c = a.channel_of(i).map_or(String::from("-"), |c| c.to_string());
            let _ = writeln!(out, "{core},{k},{c}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn weights_identity_and_log1p() {
        assert_eq!(GKind::Identity.apply(5.0), 5.0);
        assert_eq!(GKind::Log1p.apply(0.0), 0.0);
        let mut rng = rng_from_seed(1);
        for _ in 0..1000 {
            let a: f64 = rng.random::<f64>() * 100.0;
            let b: f64 = rng.random::<f64>() * 100.0;
            if a > b {
                assert!(GKind::Identity.apply(a) > GKind::Identity.apply(b));
                assert!(GKind::Log1p.apply(a) > GKind::Log1p.apply(b));
            }
        }
    }

    #[test]
    fn build_weights_from_table() {
        let table = SinrTable::from_averages(vec![0, 1, 0], 2, &[5.0, 1.0, 2.0, 2.0, 0.0, 3.0]);
        let w = build_weights(&table, 0, GKind::Identity).unwrap();
        assert_eq!(w.tags, vec![0, 2]);
        assert_eq!(w.row(0), &[5.0, 1.0]);
        assert_eq!(w.row(1), &[0.0, 3.0]);
        let w = build_weights(&table, 0, GKind::Log1p).unwrap();
        assert_eq!(w.get(1, 0), 0.0);

        let mut sparse = SinrTable::new(vec![0], 2);
        sparse.record(0, 0, 1.0);
        assert!(matches!(
            build_weights(&sparse, 0, GKind::Identity),
            Err(Error::IncompleteTable { tag: 0, subchannel: 1 })
        ));
    }

    #[test]
    fn exact_two_by_two() {
        let w = Weights::from_rows(&[vec![3.0, 1.0], vec![2.0, 4.0]]).unwrap();
        let groups = vec![vec![0, 1]];
        let a = exact_optimal(&w, &groups).unwrap();
        assert_eq!(a.channels().unwrap(), vec![0, 1]);
        assert_eq!(objective_value(&w, &groups, &a).unwrap(), 7.0);
    }

    #[test]
    fn exact_singleton_groups_take_argmax() {
        let w = Weights::from_rows(&[vec![3.0, 1.0, 2.0], vec![3.0, 1.0, 2.0]]).unwrap();
        let a = exact_optimal(&w, &vec![vec![0], vec![1]]).unwrap();
        assert_eq!(a.channels().unwrap(), vec![0, 0]);
    }

    #[test]
    fn exact_diagonal() {
        let w = Weights::from_rows(&[vec![9.0, 1.0, 1.0], vec![1.0, 9.0, 1.0], vec![1.0, 1.0, 9.0]]).unwrap();
        let a = exact_optimal(&w, &vec![vec![0, 1, 2]]).unwrap();
        assert_eq!(a.channels().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn objective_rejects_violations() {
        let w = Weights::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let groups = vec![vec![0, 1]];
        let ok = Assignment::from_channels(2, &[0, 1]);
        assert_eq!(objective_value(&w, &groups, &ok).unwrap(), 0.0);
        let clash = Assignment::from_channels(2, &[1, 1]);
        let msg = objective_value(&w, &groups, &clash).unwrap_err().to_string();
        assert!(msg.contains("subchannel-unique-per-group"), "{msg}");
        let double = Assignment::from_indicators(2, vec![true, true, false, true]);
        let msg = objective_value(&w, &groups, &double).unwrap_err().to_string();
        assert!(msg.contains("one-subchannel-per-tag"), "{msg}");
    }

    #[test]
    fn per_tag_constant_shift() {
        let mut rng = rng_from_seed(17);
        for _ in 0..50 {
            let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
            let groups = vec![vec![0, 1, 2]];
            let w = Weights::from_rows(&rows).unwrap();
            let base = exact_optimal(&w, &groups).unwrap();
            let delta = 0.75;
            let mut shifted = rows.clone();
            shifted[1].iter_mut().for_each(|x| *x += delta);
            let ws = Weights::from_rows(&shifted).unwrap();
            let a = exact_optimal(&ws, &groups).unwrap();
            assert_eq!(a, base);
            let diff = objective_value(&ws, &groups, &base).unwrap() - objective_value(&w, &groups, &base).unwrap();
            assert!((diff - delta).abs() < 1e-12);
        }
    }

    #[test]
    fn random_orthogonal_is_feasible_and_uniform() {
        let groups = vec![vec![0, 1, 2, 3]];
        let mut rng = rng_from_seed(5);
        let mut first = [0usize; 4];
        for _ in 0..4000 {
            let a = random_orthogonal_allocation(&groups, 4, 4, &mut rng).unwrap();
            a.check_feasible(&groups).unwrap();
            first[a.channel_of(0).unwrap()] += 1;
        }
        assert!(first.iter().all(|&n| (800..1200).contains(&n)), "{first:?}");
    }

    #[test]
    fn random_below_optimum_on_average() {
        let mut rng = rng_from_seed(8);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| rng.random()).collect()).collect();
        let w = Weights::from_rows(&rows).unwrap();
        let groups = vec![vec![0, 1, 2], vec![3, 4], vec![5]];
        let opt = objective_value(&w, &groups, &exact_optimal(&w, &groups).unwrap()).unwrap();
        let mean = (0..1000)
            .map(|_| {
                let a = random_orthogonal_allocation(&groups, 6, 4, &mut rng).unwrap();
                objective_value(&w, &groups, &a).unwrap()
            })
            .sum::<f64>()
            / 1000.0;
        assert!(mean <= opt);
    }

    #[test]
    fn overfull_group_is_rejected() {
        let w = Weights::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            exact_optimal(&w, &vec![vec![0, 1]]),
            Err(Error::InfeasibleGroup { group: 0, size: 2, subchannels: 1 })
        ));
    }
}
