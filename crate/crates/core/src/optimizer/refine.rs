//! Relaxation-guided search: fix every traveler the LP assigns integrally,
//! then branch on the few fractional ones with LP bounds.

use super::instance::{Choices, Instance, Solution};
use super::lp::lp_relaxation;

const INTEGRAL_EPS: f64 = 1e-7;

/// Free travelers of `base` with everyone in `fixed` removed and their load
/// taken off the capacities. Returns the residual and its traveler map.
fn residual(base: &Instance, fixed: &[Option<Option<usize>>]) -> (Instance, Vec<usize>) {
    let mut capacity = base.capacity.clone();
    let mut bundles = Vec::new();
    let mut map = Vec::new();
    for (u, f) in fixed.iter().enumerate() {
        match f {
            Some(Some(b)) => {
                for &r in &base.bundles[u][*b].resources {
                    capacity[r] -= base.load;
                }
            }
            Some(None) => {}
            None => {
                bundles.push(base.bundles[u].clone());
                map.push(u);
            }
        }
    }
    (
        Instance {
            bundles,
            capacity,
            load: base.load,
            allow_stay: base.allow_stay,
        },
        map,
    )
}

/// The integral choice of traveler `u` in `x`, if it has one.
fn integral_choice(x: &[f64]) -> Option<Option<usize>> {
    let total: f64 = x.iter().sum();
    if total < INTEGRAL_EPS {
        return Some(None);
    }
    x.iter().position(|&v| v > 1.0 - INTEGRAL_EPS).map(Some)
}

struct Branching<'a> {
    base: &'a Instance,
    best: Option<Solution>,
    nodes: u64,
    budget: u64,
    eps: f64,
}

impl Branching<'_> {
    /// False when the node budget ran out before the subtree was closed.
    fn run(&mut self, fixed: &mut Vec<Option<Option<usize>>>, fixed_score: f64) -> bool {
        if self.nodes >= self.budget {
            return false;
        }
        self.nodes += 1;
        let (sub, map) = residual(self.base, fixed);
        let Ok(relax) = lp_relaxation(&sub) else {
            return true;
        };
        let bound = fixed_score + relax.bound;
        if self.best.as_ref().is_some_and(|b| bound <= b.objective + self.eps) {
            return true;
        }

        // the most fractional traveler: largest mass not on its top value
        let mut branch: Option<(usize, f64)> = None;
        let mut choices: Choices = fixed.iter().map(|f| f.flatten()).collect();
        for (i, x) in relax.x.iter().enumerate() {
            match integral_choice(x) {
                Some(c) => choices[map[i]] = c,
                None => {
                    let top = x.iter().copied().fold(0.0, f64::max);
                    let frac = 1.0 - top;
                    if branch.is_none_or(|(_, f)| frac > f) {
                        branch = Some((i, frac));
                    }
                }
            }
        }
        let Some((i, _)) = branch else {
            if self.base.is_feasible(&choices) {
                let objective = self.base.objective(&choices);
                if self.best.as_ref().is_none_or(|b| objective > b.objective) {
                    self.best = Some(Solution { choices, objective });
                }
            }
            return true;
        };

        let u = map[i];
        let x = &relax.x[i];
        let mut options: Vec<Option<usize>> = (0..x.len()).map(Some).collect();
        options.sort_by(|a, b| x[b.unwrap()].total_cmp(&x[a.unwrap()]).then(a.cmp(b)));
        if self.base.allow_stay {
            options.push(None);
        }
        let mut complete = true;
        for opt in options {
            if let Some(b) = opt {
                let fits_alone = self.base.bundles[u][b]
                    .resources
                    .iter()
                    .all(|&r| sub.load <= sub.capacity[r]);
                if !fits_alone || (self.base.allow_stay && self.base.bundles[u][b].score <= 0.0) {
                    continue;
                }
            }
            let score = opt.map_or(0.0, |b| self.base.bundles[u][b].score);
            fixed[u] = Some(opt);
            complete &= self.run(fixed, fixed_score + score);
            fixed[u] = None;
            if !complete {
                break;
            }
        }
        complete
    }
}

/// Fixes the integral part of the root relaxation `x` and searches the
/// rest exactly within `node_budget` relaxations. The result is optimal for
/// that fixing when the search completes, not necessarily overall.
pub fn fix_and_branch(inst: &Instance, x: &[Vec<f64>], node_budget: u64) -> Option<Solution> {
    let mut fixed: Vec<Option<Option<usize>>> = x.iter().map(|row| integral_choice(row)).collect();
    let fixed_score: f64 = fixed
        .iter()
        .enumerate()
        .map(|(u, f)| f.flatten().map_or(0.0, |b| inst.bundles[u][b].score))
        .sum();
    let scale = 1.0 + inst.bundles.iter().flatten().map(|b| b.score.abs()).sum::<f64>();
    let mut search = Branching {
        base: inst,
        best: None,
        nodes: 0,
        budget: node_budget,
        eps: 1e-9 * scale,
    };
    search.run(&mut fixed, fixed_score);
    search.best.filter(|s| inst.is_feasible(&s.choices))
}
