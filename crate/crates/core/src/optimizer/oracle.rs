//! Exhaustive enumeration over every complete assignment.

use thiserror::Error;

use super::instance::{Choices, Instance};

/// Largest enumeration the oracle accepts.
pub const MAX_ASSIGNMENTS: f64 = 1e7;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance has {0} assignments, above the oracle limit of 1e7")]
    TooLarge(f64),
    #[error("no feasible assignment exists")]
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub objective: f64,
    pub choices: Choices,
}

/// Exact optimum by enumeration. Options per traveler are tried in bundle
/// order followed by stay; the first assignment (in that lexicographic
/// order) reaching the maximum is returned.
pub fn oracle(inst: &Instance) -> Result<OracleResult, OracleError> {
    let n = inst.bundles.len();
    let options: Vec<Vec<Option<usize>>> = inst
        .bundles
        .iter()
        .map(|bs| {
            let mut o: Vec<Option<usize>> = (0..bs.len()).map(Some).collect();
            if inst.allow_stay {
                o.push(None);
            }
            o
        })
        .collect();
    let size: f64 = options.iter().map(|o| o.len() as f64).product();
    if size > MAX_ASSIGNMENTS {
        return Err(OracleError::TooLarge(size));
    }

    let mut best: Option<OracleResult> = None;
    let mut current: Choices = vec![None; n];
    let mut cursor = vec![0usize; n];
    // odometer over all assignments in lexicographic order
    'outer: loop {
        for u in 0..n {
            current[u] = options[u][cursor[u]];
        }
        if within_capacity(inst, &current) {
            let value = current
                .iter()
                .enumerate()
                .fold(0.0, |acc, (u, c)| acc + c.map_or(0.0, |b| inst.bundles[u][b].score));
            if best.as_ref().is_none_or(|b| value > b.objective) {
                best = Some(OracleResult {
                    objective: value,
                    choices: current.clone(),
                });
            }
        }
        let mut u = n;
        loop {
            if u == 0 {
                break 'outer;
            }
            u -= 1;
            cursor[u] += 1;
            if cursor[u] < options[u].len() {
                break;
            }
            cursor[u] = 0;
        }
    }
    best.ok_or(OracleError::Infeasible)
}

fn within_capacity(inst: &Instance, choices: &[Option<usize>]) -> bool {
    let mut counts = vec![0u32; inst.capacity.len()];
    for (u, c) in choices.iter().enumerate() {
        if let Some(b) = c {
            for &r in &inst.bundles[u][*b].resources {
                counts[r] += 1;
            }
        }
    }
    counts
        .iter()
        .zip(&inst.capacity)
        .all(|(&c, &cap)| c == 0 || c as f64 * inst.load <= cap)
}
