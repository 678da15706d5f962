//! Generalized assignment over travelers and scored bundles with shared
//! capacity resources, and the heuristic/exact solvers for it.

use serde::{Deserialize, Serialize};

use super::refine::fix_and_branch;

/// Relaxations solved by the fix-and-branch start.
const REFINE_NODES: u64 = 400;

/// One option for a traveler: its score and the distinct capacity
/// resources (link/slot pairs) it consumes, each by [`Instance::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub score: f64,
    pub resources: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Options per traveler, in preference order.
    pub bundles: Vec<Vec<Bundle>>,
    /// Remaining capacity per resource; may be infinite or negative.
    pub capacity: Vec<f64>,
    /// Units one traveler adds to each resource on its bundle.
    pub load: f64,
    /// Whether a traveler may be left out ("stay") at score 0.
    pub allow_stay: bool,
}

/// Bundle index per traveler; `None` is the null "stay" bundle.
pub type Choices = Vec<Option<usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub choices: Choices,
    pub objective: f64,
}

impl Instance {
    pub fn n_travelers(&self) -> usize {
        self.bundles.len()
    }

    /// Sum of chosen scores in traveler order; stay contributes 0.
    pub fn objective(&self, choices: &[Option<usize>]) -> f64 {
        choices
            .iter()
            .enumerate()
            .fold(0.0, |acc, (u, c)| acc + c.map_or(0.0, |b| self.bundles[u][b].score))
    }

    /// Whether `count + 1` travelers fit on every resource of the bundle.
    pub(crate) fn fits(&self, counts: &[u32], bundle: &Bundle) -> bool {
        bundle
            .resources
            .iter()
            .all(|&r| (counts[r] + 1) as f64 * self.load <= self.capacity[r])
    }

    /// Traveler counts per resource under `choices`.
    pub fn usage(&self, choices: &[Option<usize>]) -> Vec<u32> {
        let mut counts = vec![0u32; self.capacity.len()];
        for (u, c) in choices.iter().enumerate() {
            if let Some(b) = c {
                for &r in &self.bundles[u][*b].resources {
                    counts[r] += 1;
                }
            }
        }
        counts
    }

    /// A complete assignment that respects every capacity.
    pub fn is_feasible(&self, choices: &[Option<usize>]) -> bool {
        if choices.len() != self.n_travelers() {
            return false;
        }
        if !self.allow_stay && choices.iter().any(Option::is_none) {
            return false;
        }
        let counts = self.usage(choices);
        counts
            .iter()
            .enumerate()
            .all(|(r, &c)| c == 0 || c as f64 * self.load <= self.capacity[r])
    }

    fn add(&self, counts: &mut [u32], u: usize, choice: Option<usize>) {
        if let Some(b) = choice {
            for &r in &self.bundles[u][b].resources {
                counts[r] += 1;
            }
        }
    }

    fn remove(&self, counts: &mut [u32], u: usize, choice: Option<usize>) {
        if let Some(b) = choice {
            for &r in &self.bundles[u][b].resources {
                counts[r] -= 1;
            }
        }
    }

    fn score(&self, u: usize, choice: Option<usize>) -> f64 {
        choice.map_or(0.0, |b| self.bundles[u][b].score)
    }

    /// Options considered for a traveler: bundles in order, then stay.
    fn options(&self, u: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        (0..self.bundles[u].len())
            .map(Some)
            .chain(self.allow_stay.then_some(None))
    }
}

/// Outcome of the greedy pass: travelers it could not place are `None`
/// and listed in `unassigned` when staying is not allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyResult {
    pub choices: Choices,
    pub unassigned: Vec<usize>,
}

/// Score-per-capacity-use greedy. Each bundle's efficiency is
/// `score / (1 + sum_r load / capacity_r)`; candidates are taken in
/// descending efficiency while they fit.
pub fn greedy(inst: &Instance) -> GreedyResult {
    let mut cands: Vec<(f64, f64, usize, usize)> = Vec::new();
    for (u, bundles) in inst.bundles.iter().enumerate() {
        for (b, bundle) in bundles.iter().enumerate() {
            if inst.allow_stay && bundle.score < 0.0 {
                continue;
            }
            let mut use_frac = 0.0;
            let mut ok = true;
            for &r in &bundle.resources {
                let cap = inst.capacity[r];
                if !(inst.load <= cap) {
                    ok = false;
                    break;
                }
                if cap.is_finite() {
                    use_frac += inst.load / cap;
                }
            }
            if ok {
                cands.push((bundle.score / (1.0 + use_frac), bundle.score, u, b));
            }
        }
    }
    cands.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });

    let mut counts = vec![0u32; inst.capacity.len()];
    let mut choices: Choices = vec![None; inst.n_travelers()];
    let mut placed = vec![false; inst.n_travelers()];
    for &(_, _, u, b) in &cands {
        if placed[u] {
            continue;
        }
        let bundle = &inst.bundles[u][b];
        if inst.fits(&counts, bundle) {
            inst.add(&mut counts, u, Some(b));
            choices[u] = Some(b);
            placed[u] = true;
        }
    }
    let unassigned = if inst.allow_stay {
        Vec::new()
    } else {
        (0..inst.n_travelers()).filter(|&u| !placed[u]).collect()
    };
    GreedyResult { choices, unassigned }
}

const GAIN_EPS: f64 = 1e-12;

/// Improves a feasible assignment with single moves and pairwise
/// exchanges until no strictly improving step remains. Travelers left
/// unassigned (`None` without stay) are only ever moved to a bundle.
pub fn local_search(inst: &Instance, choices: &mut Choices, max_passes: usize) {
    let mut counts = inst.usage(choices);
    for _ in 0..max_passes {
        let mut improved = false;

        // single moves
        for u in 0..inst.n_travelers() {
            let cur = choices[u];
            let cur_score = inst.score(u, cur);
            inst.remove(&mut counts, u, cur);
            let mut best = cur;
            let mut best_score = cur_score;
            for opt in inst.options(u) {
                let s = inst.score(u, opt);
                let ok = match opt {
                    Some(b) => inst.fits(&counts, &inst.bundles[u][b]),
                    None => true,
                };
                if ok && s > best_score + GAIN_EPS {
                    best = opt;
                    best_score = s;
                }
            }
            inst.add(&mut counts, u, best);
            if best != cur {
                choices[u] = best;
                improved = true;
            }
        }

        // pairwise exchanges: u takes a blocked better bundle, v moves aside
        for u in 0..inst.n_travelers() {
            let cur_u = choices[u];
            let score_u = inst.score(u, cur_u);
            let better: Vec<usize> = (0..inst.bundles[u].len())
                .filter(|&b| inst.bundles[u][b].score > score_u + GAIN_EPS)
                .collect();
            if better.is_empty() {
                continue;
            }
            let mut best: Option<(f64, usize, usize, Option<usize>)> = None;
            inst.remove(&mut counts, u, cur_u);
            for &bu in &better {
                let bundle_u = &inst.bundles[u][bu];
                if inst.fits(&counts, bundle_u) {
                    // a single move would do; the next pass handles it
                    continue;
                }
                let gain_u = bundle_u.score - score_u;
                for v in 0..inst.n_travelers() {
                    if v == u {
                        continue;
                    }
                    let Some(bv) = choices[v] else { continue };
                    let res_v = &inst.bundles[v][bv].resources;
                    if !bundle_u.resources.iter().any(|r| res_v.contains(r)) {
                        continue;
                    }
                    let score_v = inst.bundles[v][bv].score;
                    inst.remove(&mut counts, v, Some(bv));
                    if inst.fits(&counts, bundle_u) {
                        inst.add(&mut counts, u, Some(bu));
                        for alt in inst.options(v) {
                            if alt == Some(bv) {
                                continue;
                            }
                            let gain = gain_u + inst.score(v, alt) - score_v;
                            if gain <= GAIN_EPS || best.as_ref().is_some_and(|b| gain <= b.0) {
                                continue;
                            }
                            let ok = match alt {
                                Some(b) => inst.fits(&counts, &inst.bundles[v][b]),
                                None => true,
                            };
                            if ok {
                                best = Some((gain, bu, v, alt));
                            }
                        }
                        inst.remove(&mut counts, u, Some(bu));
                    }
                    inst.add(&mut counts, v, Some(bv));
                }
            }
            match best {
                Some((_, bu, v, alt)) => {
                    inst.remove(&mut counts, v, choices[v]);
                    inst.add(&mut counts, u, Some(bu));
                    inst.add(&mut counts, v, alt);
                    choices[u] = Some(bu);
                    choices[v] = alt;
                    improved = true;
                }
                None => inst.add(&mut counts, u, cur_u),
            }
        }

        if !improved {
            break;
        }
    }
}

/// Depth-first branch and bound over travelers in index order, options in
/// bundle order then stay. Only solutions strictly better than `incumbent`
/// replace it. Returns whether the search completed within `node_budget`.
pub fn branch_and_bound(inst: &Instance, incumbent: &mut Option<Solution>, node_budget: u64) -> bool {
    let n = inst.n_travelers();
    let best_option: Vec<f64> = (0..n)
        .map(|u| {
            inst.options(u)
                .map(|o| inst.score(u, o))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut suffix = vec![0.0; n + 1];
    for u in (0..n).rev() {
        suffix[u] = suffix[u + 1] + best_option[u].max(0.0);
    }
    let scale = 1.0 + suffix[0].abs();

    struct Search<'a> {
        inst: &'a Instance,
        suffix: Vec<f64>,
        slack: f64,
        counts: Vec<u32>,
        choices: Choices,
        nodes: u64,
        budget: u64,
    }

    impl Search<'_> {
        fn run(&mut self, u: usize, partial: f64, incumbent: &mut Option<Solution>) -> bool {
            self.nodes += 1;
            if self.nodes > self.budget {
                return false;
            }
            if u == self.choices.len() {
                let better = match incumbent {
                    None => true,
                    Some(s) => partial > s.objective,
                };
                if better {
                    *incumbent = Some(Solution {
                        choices: self.choices.clone(),
                        objective: partial,
                    });
                }
                return true;
            }
            if let Some(s) = incumbent.as_ref() {
                if partial + self.suffix[u] < s.objective - self.slack {
                    return true;
                }
            }
            let opts: Vec<Option<usize>> = self.inst.options(u).collect();
            for opt in opts {
                let ok = match opt {
                    Some(b) => self.inst.fits(&self.counts, &self.inst.bundles[u][b]),
                    None => true,
                };
                if !ok {
                    continue;
                }
                self.inst.add(&mut self.counts, u, opt);
                self.choices[u] = opt;
                let done = self.run(u + 1, partial + self.inst.score(u, opt), incumbent);
                self.inst.remove(&mut self.counts, u, opt);
                self.choices[u] = None;
                if !done {
                    return false;
                }
            }
            true
        }
    }

    let mut search = Search {
        inst,
        suffix,
        slack: 1e-9 * scale,
        counts: vec![0; inst.capacity.len()],
        choices: vec![None; n],
        nodes: 0,
        budget: node_budget,
    };
    search.run(0, 0.0, incumbent)
}

/// Greedy, then local search, then branch and bound seeded with that
/// incumbent. The result is exact when `exact` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub solution: Option<Solution>,
    pub greedy_objective: Option<f64>,
    pub exact: bool,
}

pub fn solve(inst: &Instance, node_budget: u64) -> SolveOutcome {
    solve_from(inst, None, None, node_budget)
}

/// As [`solve`], also polishing `warm` (when feasible) and keeping the better
/// start. Used to carry a plan across a sweep of loosening capacities.
/// Rounds a fractional assignment: pairs are taken in decreasing order of
/// their fractional value, then score, whenever the traveler is still free
/// and the bundle fits. `None` when some traveler that must be placed is left
/// without a bundle.
pub fn lp_round(inst: &Instance, x: &[Vec<f64>]) -> Option<Choices> {
    let mut pairs: Vec<(usize, usize)> = (0..inst.n_travelers())
        .flat_map(|u| (0..inst.bundles[u].len()).map(move |b| (u, b)))
        .collect();
    let value = |&(u, b): &(usize, usize)| x.get(u).and_then(|r| r.get(b)).copied().unwrap_or(0.0);
    pairs.sort_by(|p, q| {
        value(q)
            .total_cmp(&value(p))
            .then(inst.bundles[q.0][q.1].score.total_cmp(&inst.bundles[p.0][p.1].score))
            .then(p.cmp(q))
    });
    let mut choices: Choices = vec![None; inst.n_travelers()];
    let mut placed = vec![false; inst.n_travelers()];
    let mut counts = vec![0u32; inst.capacity.len()];
    for (u, b) in pairs {
        if placed[u] || (inst.allow_stay && inst.bundles[u][b].score <= 0.0) {
            continue;
        }
        if inst.fits(&counts, &inst.bundles[u][b]) {
            inst.add(&mut counts, u, Some(b));
            choices[u] = Some(b);
            placed[u] = true;
        }
    }
    (inst.allow_stay || placed.iter().all(|&p| p)).then_some(choices)
}

/// Best of greedy, the warm start and the rounded relaxation `hint` after
/// local search, then branch and bound from there.
pub fn solve_from(
    inst: &Instance,
    warm: Option<&[Option<usize>]>,
    hint: Option<&[Vec<f64>]>,
    node_budget: u64,
) -> SolveOutcome {
    let g = greedy(inst);
    let greedy_complete = g.unassigned.is_empty();
    let greedy_objective = greedy_complete.then(|| inst.objective(&g.choices));
    let mut incumbent: Option<Solution> = None;
    let mut starts = Vec::new();
    if greedy_complete {
        starts.push(g.choices);
    }
    if let Some(x) = hint {
        if let Some(rounded) = lp_round(inst, x) {
            starts.push(rounded);
        }
        if let Some(s) = fix_and_branch(inst, x, REFINE_NODES) {
            starts.push(s.choices);
        }
    }
    if let Some(w) = warm.filter(|w| w.len() == inst.n_travelers() && inst.is_feasible(w)) {
        starts.push(w.to_vec());
    }
    for mut choices in starts {
        local_search(inst, &mut choices, 50);
        let objective = inst.objective(&choices);
        if incumbent.as_ref().is_none_or(|s| objective > s.objective) {
            incumbent = Some(Solution { choices, objective });
        }
    }
    let exact = branch_and_bound(inst, &mut incumbent, node_budget);
    SolveOutcome {
        solution: incumbent,
        greedy_objective,
        exact,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_by_two() -> Instance {
        // traveler t, bundle j uses resource j; each resource holds one traveler
        Instance {
            bundles: vec![
                vec![
                    Bundle {
                        score: 5.0,
                        resources: vec![0],
                    },
                    Bundle {
                        score: 1.0,
                        resources: vec![1],
                    },
                ],
                vec![
                    Bundle {
                        score: 4.0,
                        resources: vec![0],
                    },
                    Bundle {
                        score: 2.0,
                        resources: vec![1],
                    },
                ],
            ],
            capacity: vec![1.0, 1.0],
            load: 1.0,
            allow_stay: false,
        }
    }

    #[test]
    fn solve_two_by_two() {
        let inst = two_by_two();
        let out = solve(&inst, 1_000_000);
        let sol = out.solution.unwrap();
        assert!(out.exact);
        assert_eq!(sol.choices, vec![Some(0), Some(1)]);
        assert_eq!(sol.objective, 7.0);
    }

    #[test]
    fn feasibility_counts_loads() {
        let inst = two_by_two();
        assert!(inst.is_feasible(&[Some(0), Some(1)]));
        assert!(!inst.is_feasible(&[Some(0), Some(0)]));
        assert!(!inst.is_feasible(&[Some(0), None]));
    }

    #[test]
    fn zero_capacity_with_stay() {
        let mut inst = two_by_two();
        inst.capacity = vec![0.0, 0.0];
        inst.allow_stay = true;
        let out = solve(&inst, 1_000);
        let sol = out.solution.unwrap();
        assert_eq!(sol.choices, vec![None, None]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn zero_capacity_without_stay_has_no_solution() {
        let mut inst = two_by_two();
        inst.capacity = vec![0.0, 0.0];
        let out = solve(&inst, 1_000);
        assert!(out.solution.is_none());
        assert!(out.exact);
        assert_eq!(greedy(&inst).unassigned, vec![0, 1]);
    }

    #[test]
    fn exchange_move_escapes_greedy_trap() {
        // greedy gives resource 0 to traveler 0; swapping yields more
        let inst = Instance {
            bundles: vec![
                vec![
                    Bundle {
                        score: 10.0,
                        resources: vec![0],
                    },
                    Bundle {
                        score: 9.0,
                        resources: vec![1],
                    },
                ],
                vec![
                    Bundle {
                        score: 9.5,
                        resources: vec![0],
                    },
                    Bundle {
                        score: 0.0,
                        resources: vec![2],
                    },
                ],
            ],
            capacity: vec![1.0, 1.0, 1.0],
            load: 1.0,
            allow_stay: false,
        };
        let mut choices = greedy(&inst).choices;
        assert_eq!(choices, vec![Some(0), Some(1)]);
        local_search(&inst, &mut choices, 10);
        assert_eq!(choices, vec![Some(1), Some(0)]);
        assert_eq!(inst.objective(&choices), 18.5);
    }

    #[test]
    fn infinite_capacity_takes_first_best_bundle() {
        let inst = Instance {
            bundles: vec![vec![
                Bundle {
                    score: 3.0,
                    resources: vec![0],
                },
                Bundle {
                    score: 3.0,
                    resources: vec![1],
                },
            ]],
            capacity: vec![f64::INFINITY, f64::INFINITY],
            load: 2.0,
            allow_stay: true,
        };
        assert_eq!(solve(&inst, 100).solution.unwrap().choices, vec![Some(0)]);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let bundles: Vec<Vec<Bundle>> = (0..12)
            .map(|u| {
                (0..4)
                    .map(|b| Bundle {
                        score: ((u * 7 + b * 3) % 5) as f64,
                        resources: vec![b],
                    })
                    .collect()
            })
            .collect();
        let inst = Instance {
            bundles,
            capacity: vec![3.0; 4],
            load: 1.0,
            allow_stay: true,
        };
        let out = solve(&inst, 10);
        assert!(!out.exact);
        assert!(out.solution.is_some());
    }
}
