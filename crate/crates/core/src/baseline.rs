//! Reference solvers used as ground truth for the consensus solver: an
//! exhaustive lattice search over the simplex for small dimensions and a
//! projected-gradient method for larger ones.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::projection::{Projector, DEFAULT_MEMBERSHIP_TOL};

/// Largest dimension accepted by [`grid_search_simplex`].
pub const MAX_GRID_DIM: usize = 4;

pub const DEFAULT_FD_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ReferenceMethod {
    Grid { step: f64, points: usize },
    ProjectedGradient { step_size: f64, iters: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub weights: Vec<f64>,
    pub value: f64,
    #[serde(flatten)]
    pub method: ReferenceMethod,
}

/// All simplex lattice points with spacing `1/k`, in ascending lexicographic order.
pub fn simplex_lattice(dim: usize, k: usize) -> Vec<Vec<f64>> {
    fn fill(prefix: &mut Vec<usize>, remaining: usize, slots: usize, k: usize, out: &mut Vec<Vec<f64>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.iter().map(|&c| c as f64 / k as f64).collect());
            prefix.pop();
            return;
        }
        for c in 0..=remaining {
            prefix.push(c);
            fill(prefix, remaining - c, slots - 1, k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if dim > 0 {
        fill(&mut Vec::with_capacity(dim), k, dim, k, &mut out);
    }
    out
}

/// Minimizes `objective` over every simplex point whose coordinates are
/// multiples of `step`. Ties go to the lexicographically smallest weights.
pub fn grid_search_simplex(objective: &dyn Objective, dim: usize, step: f64) -> Result<ReferenceSolution> {
    if dim == 0 || dim > MAX_GRID_DIM {
        return Err(Error::config(format!(
            "grid search supports dimensions 1..={MAX_GRID_DIM}, got {dim}"
        )));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::config(format!("grid step must lie in (0, 1], got {step}")));
    }
    let inv = 1.0 / step;
    let k = inv.round();
    if (inv - k).abs() > 1e-9 {
        return Err(Error::config(format!("1/step = {inv} is not an integer")));
    }
    let points = simplex_lattice(dim, k as usize);
    let values: Vec<Result<f64>> = points.par_iter().map(|w| objective.eval(w)).collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        if !v.is_finite() {
            return Err(Error::NumericDomain(format!("objective is {v} at lattice point {:?}", points[i])));
        }
        // lattice is in lexicographic order, so strict improvement keeps the smallest tie
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    let (i, value) = best.expect("lattice is never empty");
    Ok(ReferenceSolution {
        weights: points[i].clone(),
        value,
        method: ReferenceMethod::Grid { step, points: points.len() },
    })
}

/// Central differences `(L(w + ε e_l) − L(w − ε e_l)) / 2ε`.
pub fn finite_diff_gradient(objective: &dyn Objective, w: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::config(format!("finite-difference eps must be positive, got {eps}")));
    }
    let mut probe = w.to_vec();
    let mut grad = Vec::with_capacity(w.len());
    for l in 0..w.len() {
        probe[l] = w[l] + eps;
        let plus = objective.eval(&probe)?;
        probe[l] = w[l] - eps;
        let minus = objective.eval(&probe)?;
        probe[l] = w[l];
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Iterates `w ← P(w − step_size · ∇L(w))` and returns the best iterate seen.
///
/// Uses the objective's analytic gradient when present, central differences otherwise.
pub fn projected_gradient(
    objective: &dyn Objective,
    projector: &Projector,
    w0: &[f64],
    step_size: f64,
    iters: usize,
) -> Result<ReferenceSolution> {
    if !projector.contains(w0, DEFAULT_MEMBERSHIP_TOL) {
        return Err(Error::config("projected gradient must start from a feasible point"));
    }
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::config(format!("step size must be positive, got {step_size}")));
    }
    let mut w = w0.to_vec();
    let mut best_w = w.clone();
    let mut best_value = objective.eval(&w)?;
    for _ in 0..iters {
        let grad = match objective.gradient(&w) {
            Some(g) => g?,
            None => finite_diff_gradient(objective, &w, DEFAULT_FD_EPS)?,
        };
        for (x, g) in w.iter_mut().zip(&grad) {
            *x -= step_size * g;
        }
        projector.project_in_place(&mut w)?;
        let value = objective.eval(&w)?;
        if value < best_value {
            best_value = value;
            best_w.clone_from(&w);
        }
    }
    Ok(ReferenceSolution {
        weights: best_w,
        value: best_value,
        method: ReferenceMethod::ProjectedGradient { step_size, iters },
    })
}
