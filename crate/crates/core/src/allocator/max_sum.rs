//! Damped Max-Sum message passing for the per-core assignment problem.
//!
//! Messages live on (tag, subchannel) pairs. φ carries the one-subchannel
//! constraint of a tag, ρ the subchannel-reuse constraint of its training
//! group, and χ = φ + ρ − w is the soft estimate; v̂ = 1 where χ ≤ 0.

use std::fmt::Write as _;

use super::{exact_optimal, validate_groups, Assignment, Groups, SolverParams, Weights};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub phi: Vec<f64>,
    pub rho: Vec<f64>,
    pub chi: Vec<f64>,
    pub n: usize,
}

impl MessageState {
    /// φ = ρ = 0, hence χ = −w.
    pub fn initial(weights: &Weights) -> Self {
        let len = weights.as_slice().len();
        Self {
            phi: vec![0.0; len],
            rho: vec![0.0; len],
            chi: weights.as_slice().iter().map(|w| -w).collect(),
            n: 0,
        }
    }
}

/// Largest and second-largest value with the index of the largest.
fn top_two(values: impl Iterator<Item = f64>) -> (f64, usize, f64) {
    let (mut best, mut arg, mut second) = (f64::NEG_INFINITY, usize::MAX, f64::NEG_INFINITY);
    for (i, x) in values.enumerate() {
        if x > best {
            second = best;
            best = x;
            arg = i;
        } else if x > second {
            second = x;
        }
    }
    (best, arg, second)
}

/// One synchronous round: all φ from ρ⁽ⁿ⁻¹⁾, then all ρ from φ⁽ⁿ⁾.
/// Costs O(C·K) thanks to top-two maxima.
pub fn max_sum_iterate(state: &MessageState, weights: &Weights, groups: &Groups, alpha: f64) -> Result<MessageState> {
    let c_n = weights.n_subchannels();
    let k_n = weights.n_tags();
    if c_n < 2 {
        return Err(Error::Domain("message passing needs at least two subchannels".into()));
    }
    if state.phi.len() != k_n * c_n || state.rho.len() != k_n * c_n {
        return Err(Error::Dimension("message state does not match weights".into()));
    }
    let w = weights.as_slice();
    let keep = 1.0 - alpha;

    let mut phi = vec![0.0; k_n * c_n];
    for k in 0..k_n {
        let row = k * c_n..(k + 1) * c_n;
        let (best, arg, second) = top_two(row.clone().map(|i| w[i] - state.rho[i]));
        for (c, i) in row.enumerate() {
            let fresh = if c == arg { second } else { best };
            phi[i] = alpha * state.phi[i] + keep * fresh;
        }
    }

    let mut rho = vec![0.0; k_n * c_n];
    for g in groups {
        for c in 0..c_n {
            let (best, arg, second) = top_two(g.iter().map(|&k| w[k * c_n + c] - phi[k * c_n + c]));
            for (pos, &k) in g.iter().enumerate() {
                let i = k * c_n + c;
                let other = if pos == arg { second } else { best };
                rho[i] = alpha * state.rho[i] + keep * other.max(0.0);
            }
        }
    }

    let chi = (0..k_n * c_n).map(|i| phi[i] + rho[i] - w[i]).collect();
    Ok(MessageState {
        phi,
        rho,
        chi,
        n: state.n + 1,
    })
}

/// max|χₙ − χₙ₋₁| / max|χₙ|, with 0/0 = 0 and x/0 = ∞.
pub fn nmae(current: &[f64], previous: &[f64]) -> f64 {
    assert_eq!(current.len(), previous.len(), "nmae on states of different size");
    let num = current.iter().zip(previous).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let den = current.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub assignment: Assignment,
    /// The χ ≤ 0 rule alone produced a feasible assignment.
    pub raw_feasible: bool,
    pub repaired: bool,
}

/// Reads v̂ from χ; falls back to argmin χ per tag and exact re-solves of
/// any group whose picks collide.
pub fn extract_assignment(state: &MessageState, weights: &Weights, groups: &Groups) -> Extraction {
    let c_n = weights.n_subchannels();
    let k_n = weights.n_tags();
    let raw: Vec<bool> = state.chi.iter().map(|&x| x <= 0.0).collect();
    let raw = Assignment::from_indicators(c_n, raw);
    if raw.check_feasible(groups).is_ok() {
        return Extraction {
            assignment: raw,
            raw_feasible: true,
            repaired: false,
        };
    }

    let mut channels: Vec<usize> = (0..k_n)
        .map(|k| {
            let row = &state.chi[k * c_n..(k + 1) * c_n];
            let mut best = 0;
            for (c, &x) in row.iter().enumerate() {
                if x < row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    for g in groups {
        let mut used = vec![false; c_n];
        let clash = g.iter().any(|&k| std::mem::replace(&mut used[channels[k]], true));
        if clash {
            let sub = Weights::from_rows(&weights.restrict(g)).expect("rows of a valid weight matrix");
            let local = exact_optimal(&sub, &vec![(0..g.len()).collect()]).expect("group fits the subchannels");
            for (j, &k) in g.iter().enumerate() {
                channels[k] = local.channel_of(j).expect("exact assignment is integral");
            }
        }
    }
    Extraction {
        assignment: Assignment::from_channels(c_n, &channels),
        raw_feasible: false,
        repaired: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub nmae: f64,
    pub objective: f64,
    pub feasible: bool,
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    pub records: Vec<IterationRecord>,
    pub iterations: usize,
    pub terminated_by_nmae: bool,
}

impl ConvergenceTrace {
    /// Whether the returned assignment needed repair.
    pub fn repaired(&self) -> bool {
        self.records.last().is_some_and(|r| r.repaired)
    }

    /// First iteration whose extracted objective is within `tol` (relative)
    /// of `target`.
    pub fn first_reaching(&self, target: f64, tol: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| (target - r.objective) <= tol * target.abs().max(f64::MIN_POSITIVE))
            .map(|r| r.iteration)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,nmae,objective,feasible,repaired\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{},{}",
                r.iteration, r.nmae, r.objective, r.feasible, r.repaired
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxSumOutcome {
    pub assignment: Assignment,
    pub trace: ConvergenceTrace,
}

/// Runs damped Max-Sum until NMAE < ε or n = n_max.
///
/// The objective in the trace is always taken on the unperturbed weights.
pub fn run_max_sum(weights: &Weights, groups: &Groups, params: &SolverParams) -> Result<MaxSumOutcome> {
    params.validate()?;
    let c_n = weights.n_subchannels();
    validate_groups(weights.n_tags(), c_n, groups)?;
    let objective = |a: &Assignment| {
        a.channels()
            .expect("extraction is integral")
            .iter()
            .enumerate()
            .map(|(k, &c)| weights.get(k, c))
            .sum::<f64>()
    };

    if c_n == 1 || weights.n_tags() == 0 {
        let assignment = Assignment::from_channels(c_n, &vec![0; weights.n_tags()]);
        return Ok(MaxSumOutcome {
            assignment,
            trace: ConvergenceTrace {
                records: Vec::new(),
                iterations: 0,
                terminated_by_nmae: true,
            },
        });
    }

    let solved = match params.jitter {
        Some(rel) if rel > 0.0 => weights.with_jitter(rel, params.jitter_seed),
        _ => weights.clone(),
    };
    let mut state = MessageState::initial(&solved);
    let mut trace = ConvergenceTrace::default();
    let mut last = None;
    for _ in 0..params.n_max {
        let next = max_sum_iterate(&state, &solved, groups, params.alpha)?;
        let err = nmae(&next.chi, &state.chi);
        let ex = extract_assignment(&next, &solved, groups);
        trace.records.push(IterationRecord {
            iteration: next.n,
            nmae: err,
            objective: objective(&ex.assignment),
            feasible: ex.raw_feasible,
            repaired: ex.repaired,
        });
        state = next;
        last = Some(ex.assignment);
        if err < params.epsilon {
            trace.terminated_by_nmae = true;
            break;
        }
    }
    trace.iterations = state.n;
    Ok(MaxSumOutcome {
        assignment: last.expect("at least one iteration"),
        trace,
    })
}
