//! Exhaustive search over all legal paths of a small line, used as the
//! optimality oracle for [`solve_line`](super::solve_line).
//!
//! Depth-first enumeration with a branch-and-bound cut that only discards
//! prefixes whose lower bound is strictly worse than the incumbent, so every
//! minimum-cost path is still visited and ties are resolved over complete
//! paths.

use std::cmp::Ordering;

use super::machine::{kinds, pair_cost, start_allowed, terminal_key, transition_allowed, transition_key, State};
use super::{DPParams, LineSolution};
use crate::costvolume::MatchDistanceSlice;
use crate::error::{Error, Result};

pub const BRUTE_FORCE_MAX_NX: usize = 16;
pub const BRUTE_FORCE_MAX_ND: usize = 5;

const PRUNE_SLACK: f64 = 1e-9;

struct Search<'a> {
    slice: &'a MatchDistanceSlice,
    params: &'a DPParams,
    states: Vec<State>,
    suffix_lb: Vec<f64>,
    path: Vec<State>,
    best: Option<(f64, Vec<State>)>,
}

impl Search<'_> {
    fn unary(&self, x2: usize, s: State) -> Option<f64> {
        if s.kind.occluded() {
            Some(self.params.lambda)
        } else if self.slice.valid(x2, s.d) {
            Some(self.slice.fm(x2, s.d))
        } else {
            None
        }
    }

    fn dfs(&mut self, x2: usize, partial: f64) {
        let nx = self.slice.nx();
        if x2 == nx {
            self.offer(partial);
            return;
        }
        if let Some((best, _)) = &self.best {
            if partial + self.suffix_lb[x2] > best + PRUNE_SLACK {
                return;
            }
        }
        let mut children: Vec<(f64, State)> = Vec::new();
        for &s in &self.states {
            let Some(u) = self.unary(x2, s) else { continue };
            let cost = if x2 == 0 {
                if !start_allowed(s) {
                    continue;
                }
                u
            } else {
                let prev = self.path[x2 - 1];
                if !transition_allowed(prev, s) {
                    continue;
                }
                (partial + pair_cost(prev, s, self.params.epsilon)) + u
            };
            children.push((cost, s));
        }
        children.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (cost, s) in children {
            self.path.push(s);
            self.dfs(x2 + 1, cost);
            self.path.pop();
        }
    }

    fn offer(&mut self, cost: f64) {
        let better = match &self.best {
            None => true,
            Some((b, p)) => cost < *b || (cost == *b && reversed_order(&self.path, p) == Ordering::Less),
        };
        if better {
            self.best = Some((cost, self.path.clone()));
        }
    }
}

/// Compares complete paths by the solver's tie-break: terminal state first,
/// then each predecessor choice walking backwards.
fn reversed_order(a: &[State], b: &[State]) -> Ordering {
    let n = a.len();
    terminal_key(a[n - 1]).cmp(&terminal_key(b[n - 1])).then_with(|| {
        for x in (1..n).rev() {
            let o = transition_key(a[x - 1], a[x]).cmp(&transition_key(b[x - 1], b[x]));
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    })
}

pub fn brute_force_line(slice: &MatchDistanceSlice, params: &DPParams) -> Result<LineSolution> {
    params.validate()?;
    let (nx, nd) = (slice.nx(), slice.nd());
    if nx > BRUTE_FORCE_MAX_NX || nd > BRUTE_FORCE_MAX_ND {
        return Err(Error::TooLarge(format!(
            "{nx}x{nd} slice exceeds {BRUTE_FORCE_MAX_NX}x{BRUTE_FORCE_MAX_ND}"
        )));
    }
    let states: Vec<State> = (0..nd)
        .flat_map(|d| kinds(params.strict_gc1_runs).iter().map(move |&kind| State { kind, d }))
        .collect();
    // Per column, no state can add less than min(best visible distance, λ − ε).
    let mut suffix_lb = vec![0.0; nx + 1];
    for x2 in (0..nx).rev() {
        let vis = (0..nd)
            .filter(|d| slice.valid(x2, *d))
            .map(|d| slice.fm(x2, d))
            .fold(f64::INFINITY, f64::min);
        suffix_lb[x2] = suffix_lb[x2 + 1] + vis.min(params.lambda - params.epsilon);
    }
    let mut search = Search {
        slice,
        params,
        states,
        suffix_lb,
        path: Vec::with_capacity(nx),
        best: None,
    };
    search.dfs(0, 0.0);
    let (cost, path) = search.best.ok_or(Error::DegenerateLine(slice.line()))?;
    let occluded = path.iter().map(|s| s.kind.occluded()).collect();
    let d2 = path.iter().map(|s| s.d as u32).collect();
    LineSolution::from_path(slice.line(), occluded, d2, cost)
}
