//! Linear-relaxation upper bound for the assignment problem.

use std::collections::BTreeMap;

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Variable};
use thiserror::Error;

use super::instance::Instance;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    /// Travelers that cannot take any bundle on their own, stay disabled.
    #[error("relaxation infeasible: travelers {0:?} have no bundle that fits")]
    NoFeasibleBundle(Vec<usize>),
    #[error("relaxation infeasible: capacity rows cannot all hold with every traveler assigned")]
    CapacityInfeasible,
    #[error("lp solver failed: {0}")]
    Solver(String),
}

/// Optimal fractional assignment: `x[u][b]` per traveler and bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRelaxation {
    pub bound: f64,
    pub x: Vec<Vec<f64>>,
}

/// Value of the relaxation with fractional `x_ub in [0, 1]`, one unit of
/// assignment per traveler (or at most one when staying is allowed) and a
/// row per finite capacity resource. Always at least the integer optimum.
pub fn lp_bound(inst: &Instance) -> Result<f64, LpError> {
    lp_relaxation(inst).map(|r| r.bound)
}

pub fn lp_relaxation(inst: &Instance) -> Result<LpRelaxation, LpError> {
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let mut rows: BTreeMap<usize, Vec<(Variable, f64)>> = BTreeMap::new();
    let mut stranded = Vec::new();
    let mut any_var = false;
    let mut vars: Vec<Vec<Option<Variable>>> = inst.bundles.iter().map(|b| vec![None; b.len()]).collect();

    for (u, bundles) in inst.bundles.iter().enumerate() {
        let mut assign: Vec<(Variable, f64)> = Vec::new();
        for (b, bundle) in bundles.iter().enumerate() {
            // a bundle that cannot fit even alone is fixed at zero
            if bundle.resources.iter().any(|&r| !(inst.load <= inst.capacity[r])) {
                continue;
            }
            if inst.allow_stay && bundle.score <= 0.0 {
                continue;
            }
            let x = problem.add_var(bundle.score, (0.0, 1.0));
            vars[u][b] = Some(x);
            any_var = true;
            assign.push((x, 1.0));
            let mut seen = Vec::with_capacity(bundle.resources.len());
            for &r in &bundle.resources {
                // microlp rejects a variable listed twice in one row
                if seen.contains(&r) {
                    continue;
                }
                seen.push(r);
                if inst.capacity[r].is_finite() {
                    rows.entry(r).or_default().push((x, inst.load));
                }
            }
        }
        if assign.is_empty() {
            if !inst.allow_stay {
                stranded.push(u);
            }
            continue;
        }
        let op = if inst.allow_stay {
            ComparisonOp::Le
        } else {
            ComparisonOp::Eq
        };
        problem.add_constraint(assign.into_iter().collect::<LinearExpr>(), op, 1.0);
    }
    if !stranded.is_empty() {
        return Err(LpError::NoFeasibleBundle(stranded));
    }
    let zeros = || inst.bundles.iter().map(|b| vec![0.0; b.len()]).collect::<Vec<_>>();
    if !any_var {
        return Ok(LpRelaxation { bound: 0.0, x: zeros() });
    }
    for (r, terms) in rows {
        let total: f64 = terms.iter().map(|t| t.1).sum();
        if total <= inst.capacity[r] {
            continue;
        }
        problem.add_constraint(terms.into_iter().collect::<LinearExpr>(), ComparisonOp::Le, inst.capacity[r]);
    }
    match problem.solve() {
        Ok(outcome) => {
            let sol = outcome
                .solution()
                .ok_or_else(|| LpError::Solver("solve interrupted".into()))?;
            let mut x = zeros();
            for (u, row) in vars.iter().enumerate() {
                for (b, v) in row.iter().enumerate() {
                    if let Some(v) = v {
                        x[u][b] = sol.var_value(*v).clamp(0.0, 1.0);
                    }
                }
            }
            Ok(LpRelaxation {
                bound: sol.objective(),
                x,
            })
        }
        Err(microlp::Error::Infeasible) => Err(LpError::CapacityInfeasible),
        Err(e) => Err(LpError::Solver(e.to_string())),
    }
}
