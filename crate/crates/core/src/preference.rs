//! Latent-factor preference model fitted to visit frequencies.
//!
//! Every `(user, location)` cell is a training target: visited cells carry
//! their visit count with confidence `1 + w0 * count`, unvisited cells carry
//! zero with confidence 1. The loss is
//!
//! ```text
//! sum_uj c_uj (p_uj - U_u . L_j)^2 + lambda (|U|^2 + |L|^2)
//! ```

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{TowerRegistry, UserProfile};
use crate::network::RoadNetwork;
use crate::rng::substream;

#[derive(Debug, Error)]
pub enum PreferenceError {
    #[error("tower `{0}` has no location at the chosen resolution")]
    UnknownLocation(String),
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("index out of range: user {user}, location {location}")]
    OutOfIndex { user: usize, location: usize },
    #[error("latent dimension k={k} must lie in [1, {max}]")]
    InvalidRank { k: usize, max: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),
    #[error("training diverged at epoch {epoch} (loss {loss}); try a smaller learning rate")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty matrix")]
    Empty,
}

/// Location ids sorted ascending plus the tower-to-location mapping for a
/// chosen spatial resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationIndex {
    locations: Vec<String>,
    tower_to_location: BTreeMap<String, usize>,
}

impl LocationIndex {
    /// Builds an index over `extra_locations` plus every location referenced
    /// by the tower mapping.
    pub fn new(
        extra_locations: impl IntoIterator<Item = String>,
        tower_to_location_id: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        let pairs: Vec<(String, String)> = tower_to_location_id.into_iter().collect();
        let mut locations: Vec<String> = extra_locations.into_iter().collect();
        locations.extend(pairs.iter().map(|(_, l)| l.clone()));
        locations.sort();
        locations.dedup();
        let tower_to_location = pairs
            .into_iter()
            .map(|(t, l)| {
                let i = locations.binary_search(&l).expect("location inserted above");
                (t, i)
            })
            .collect();
        Self {
            locations,
            tower_to_location,
        }
    }

    /// Locations are road-network nodes.
    pub fn from_network(network: &RoadNetwork) -> Self {
        Self::new(
            network.nodes().iter().map(|n| n.node_id.clone()),
            network.node_towers().map(|(n, t)| (t.to_string(), n.to_string())),
        )
    }

    /// Locations are merged tower groups.
    pub fn from_merged_groups(towers: &TowerRegistry) -> Self {
        Self::new(
            std::iter::empty(),
            towers.iter().map(|t| (t.tower_id.clone(), t.merged_group_id.clone())),
        )
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn location_of_tower(&self, tower_id: &str) -> Option<usize> {
        self.tower_to_location.get(tower_id).copied()
    }

    pub fn position(&self, location_id: &str) -> Option<usize> {
        self.locations.binary_search_by(|l| l.as_str().cmp(location_id)).ok()
    }
}

/// Visit counts per `(user, location)`, stored row-sparse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedTrips {
    users: Vec<String>,
    locations: Vec<String>,
    rows: Vec<Vec<(usize, u32)>>,
}

impl RealizedTrips {
    pub fn from_rows(users: Vec<String>, locations: Vec<String>, rows: Vec<Vec<(usize, u32)>>) -> Self {
        Self { users, locations, rows }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn row(&self, user: usize) -> &[(usize, u32)] {
        &self.rows[user]
    }

    pub fn get(&self, user: usize, location: usize) -> u32 {
        self.rows[user]
            .binary_search_by_key(&location, |&(j, _)| j)
            .map(|i| self.rows[user][i].1)
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flatten().map(|&(_, c)| c as u64).sum()
    }

    pub fn user_position(&self, user_id: &str) -> Option<usize> {
        self.users.iter().position(|u| u == user_id)
    }

    /// Row-major dense copy of the counts.
    pub fn dense(&self) -> Vec<f64> {
        let m = self.n_locations();
        let mut out = vec![0.0; self.n_users() * m];
        for (u, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                out[u * m + j] = c as f64;
            }
        }
        out
    }
}

/// Realized-trip matrix with one row per profile (in profile order).
pub fn build_matrix(profiles: &[UserProfile], index: &LocationIndex) -> Result<RealizedTrips, PreferenceError> {
    let mut rows = Vec::with_capacity(profiles.len());
    for p in profiles {
        let mut row: BTreeMap<usize, u32> = BTreeMap::new();
        for (tower, &count) in &p.visit_counts {
            let j = index
                .location_of_tower(tower)
                .ok_or_else(|| PreferenceError::UnknownLocation(tower.clone()))?;
            *row.entry(j).or_insert(0) += count;
        }
        rows.push(row.into_iter().collect());
    }
    Ok(RealizedTrips {
        users: profiles.iter().map(|p| p.user_id.clone()).collect(),
        locations: index.locations().to_vec(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Alternating weighted least squares.
    Als,
    /// Full-batch gradient descent at `learning_rate`.
    GradientDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitParams {
    pub k: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Confidence slope `w0` in `c = 1 + w0 * count`.
    pub confidence_weight: f64,
    pub solver: Solver,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            k: 16,
            lambda: 0.1,
            learning_rate: 0.01,
            epochs: 200,
            confidence_weight: 1.0,
            solver: Solver::Als,
        }
    }
}

/// Dense training problem: targets and per-cell weights, row-major.
/// A zero weight removes the cell from the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTargets {
    pub n_users: usize,
    pub n_locations: usize,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedTargets {
    pub fn implicit(trips: &RealizedTrips, confidence_weight: f64) -> Self {
        let targets = trips.dense();
        let weights = targets.iter().map(|&p| 1.0 + confidence_weight * p).collect();
        Self {
            n_users: trips.n_users(),
            n_locations: trips.n_locations(),
            targets,
            weights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceModel {
    pub k: usize,
    pub seed: u64,
    pub params: FitParams,
    pub users: Vec<String>,
    pub locations: Vec<String>,
    /// Row-major `users x k`.
    pub user_factors: Vec<f64>,
    /// Row-major `locations x k`.
    pub location_factors: Vec<f64>,
    /// Loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl PreferenceModel {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.k..(u + 1) * self.k]
    }

    pub fn location_row(&self, j: usize) -> &[f64] {
        &self.location_factors[j * self.k..(j + 1) * self.k]
    }

    /// Raw latent score `U_u . L_j`.
    pub fn predict(&self, user: usize, location: usize) -> Result<f64, PreferenceError> {
        if user >= self.n_users() || location >= self.n_locations() {
            return Err(PreferenceError::OutOfIndex { user, location });
        }
        Ok(dot(self.user_row(user), self.location_row(location)))
    }

    /// Score used downstream: the prediction clamped at zero.
    pub fn score(&self, user: usize, location: usize) -> Result<f64, PreferenceError> {
        Ok(self.predict(user, location)?.max(0.0))
    }

    pub fn user_position(&self, user_id: &str) -> Result<usize, PreferenceError> {
        self.users
            .iter()
            .position(|u| u == user_id)
            .ok_or_else(|| PreferenceError::UnknownUser(user_id.to_string()))
    }

    /// Best `n` locations for a user, descending by score with ties on
    /// ascending location index. With `visited`, cells with positive counts
    /// are skipped.
    pub fn top_candidates(
        &self,
        user: usize,
        n: usize,
        visited: Option<&RealizedTrips>,
    ) -> Result<Vec<(usize, f64)>, PreferenceError> {
        let mut scored = Vec::with_capacity(self.n_locations());
        for j in 0..self.n_locations() {
            if visited.is_some_and(|v| v.get(user, j) > 0) {
                continue;
            }
            scored.push((j, self.predict(user, j)?));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(n);
        Ok(scored)
    }

    pub fn reconstruction(&self) -> Vec<f64> {
        let m = self.n_locations();
        let mut out = vec![0.0; self.n_users() * m];
        for u in 0..self.n_users() {
            for j in 0..m {
                out[u * m + j] = dot(self.user_row(u), self.location_row(j));
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weighted squared error plus L2 penalty.
pub fn loss(problem: &WeightedTargets, user_factors: &[f64], location_factors: &[f64], k: usize, lambda: f64) -> f64 {
    let m = problem.n_locations;
    let mut total = 0.0;
    for u in 0..problem.n_users {
        let uf = &user_factors[u * k..(u + 1) * k];
        for j in 0..m {
            let w = problem.weights[u * m + j];
            if w == 0.0 {
                continue;
            }
            let r = problem.targets[u * m + j] - dot(uf, &location_factors[j * k..(j + 1) * k]);
            total += w * r * r;
        }
    }
    let reg: f64 = user_factors.iter().chain(location_factors).map(|x| x * x).sum();
    total + lambda * reg
}

/// Loss and its gradient with respect to both factor matrices.
pub fn loss_gradient(
    problem: &WeightedTargets,
    user_factors: &[f64],
    location_factors: &[f64],
    k: usize,
    lambda: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let m = problem.n_locations;
    let mut gu: Vec<f64> = user_factors.iter().map(|x| 2.0 * lambda * x).collect();
    let mut gl: Vec<f64> = location_factors.iter().map(|x| 2.0 * lambda * x).collect();
    let mut total = 0.0;
    for u in 0..problem.n_users {
        let uf = &user_factors[u * k..(u + 1) * k];
        for j in 0..m {
            let w = problem.weights[u * m + j];
            if w == 0.0 {
                continue;
            }
            let lf = &location_factors[j * k..(j + 1) * k];
            let r = problem.targets[u * m + j] - dot(uf, lf);
            total += w * r * r;
            let g = -2.0 * w * r;
            for d in 0..k {
                gu[u * k + d] += g * lf[d];
                gl[j * k + d] += g * uf[d];
            }
        }
    }
    let reg: f64 = user_factors.iter().chain(location_factors).map(|x| x * x).sum();
    (total + lambda * reg, gu, gl)
}

/// Fits the implicit-feedback model to realized trips.
pub fn fit(trips: &RealizedTrips, params: &FitParams, seed: u64) -> Result<PreferenceModel, PreferenceError> {
    let problem = WeightedTargets::implicit(trips, params.confidence_weight);
    let mut model = fit_weighted(&problem, params, seed)?;
    model.users = trips.users().to_vec();
    model.locations = trips.locations().to_vec();
    Ok(model)
}

/// Fits factors to an arbitrary weighted problem. User and location ids are
/// left as positional placeholders.
pub fn fit_weighted(problem: &WeightedTargets, params: &FitParams, seed: u64) -> Result<PreferenceModel, PreferenceError> {
    let (n, m, k) = (problem.n_users, problem.n_locations, params.k);
    if n == 0 || m == 0 {
        return Err(PreferenceError::Empty);
    }
    let max_k = n.min(m);
    if k < 1 || k > max_k {
        return Err(PreferenceError::InvalidRank { k, max: max_k });
    }
    if !(params.lambda >= 0.0 && params.lambda.is_finite()) {
        return Err(PreferenceError::InvalidHyperparams(format!("lambda = {}", params.lambda)));
    }
    if params.solver == Solver::GradientDescent && !(params.learning_rate > 0.0) {
        return Err(PreferenceError::InvalidHyperparams(format!(
            "learning_rate = {}",
            params.learning_rate
        )));
    }

    let mut rng = substream(seed, "preference.init");
    let mut uf: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-0.01..0.01)).collect();
    let mut lf: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-0.01..0.01)).collect();

    let mut history = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        match params.solver {
            Solver::Als => {
                als_half_step(problem, &lf, &mut uf, k, params.lambda, false);
                als_half_step(problem, &uf, &mut lf, k, params.lambda, true);
            }
            Solver::GradientDescent => {
                let (_, gu, gl) = loss_gradient(problem, &uf, &lf, k, params.lambda);
                for (x, g) in uf.iter_mut().zip(&gu) {
                    *x -= params.learning_rate * g;
                }
                for (x, g) in lf.iter_mut().zip(&gl) {
                    *x -= params.learning_rate * g;
                }
            }
        }
        let l = loss(problem, &uf, &lf, k, params.lambda);
        if !l.is_finite() {
            return Err(PreferenceError::Diverged { epoch, loss: l });
        }
        history.push(l);
    }

    Ok(PreferenceModel {
        k,
        seed,
        params: *params,
        users: (0..n).map(|u| u.to_string()).collect(),
        locations: (0..m).map(|j| j.to_string()).collect(),
        user_factors: uf,
        location_factors: lf,
        loss_history: history,
    })
}

/// Solves every row of `target` in closed form with `fixed` held constant.
/// `transpose` selects whether rows of `target` are locations.
fn als_half_step(problem: &WeightedTargets, fixed: &[f64], target: &mut [f64], k: usize, lambda: f64, transpose: bool) {
    let (rows, cols) = if transpose {
        (problem.n_locations, problem.n_users)
    } else {
        (problem.n_users, problem.n_locations)
    };
    let m = problem.n_locations;
    for r in 0..rows {
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DVector::<f64>::zeros(k);
        for c in 0..cols {
            let cell = if transpose { c * m + r } else { r * m + c };
            let w = problem.weights[cell];
            if w == 0.0 {
                continue;
            }
            let y = &fixed[c * k..(c + 1) * k];
            for i in 0..k {
                b[i] += w * problem.targets[cell] * y[i];
                for j in 0..k {
                    a[(i, j)] += w * y[i] * y[j];
                }
            }
        }
        // tiny ridge keeps the system solvable when lambda = 0
        let ridge = lambda + 1e-12 * (1.0 + a.trace() / k as f64);
        for i in 0..k {
            a[(i, i)] += ridge;
        }
        let x = match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => a.svd(true, true).solve(&b, 1e-14).unwrap_or_else(|_| DVector::zeros(k)),
        };
        target[r * k..(r + 1) * k].copy_from_slice(x.as_slice());
    }
}
