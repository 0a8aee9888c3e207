//! Empirical checks of the solver's convergence theory.
//!
//! * [`check_params`] evaluates the contraction conditions `σ > 0`,
//!   `2λ > σ²`, `0 < h < (2λ − σ²)/λ²` and the decay rate
//!   `m = 2λ − λ²h − σ²`.
//! * [`decay_experiment`] averages pairwise and consensus distances over
//!   many independent runs and compares them with `e^{−nhm}` bounds.
//! * [`laplace_sweep`] shows the consensus point concentrating on the best
//!   particle as β grows.
//! * [`error_trace`] measures the center of mass against a reference solution.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::ReferenceSolution;
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::projection::Projector;
use crate::solver::{
    advance, consensus_distances, consensus_point, init_ensemble, noise_rng, CboParams, Ensemble, InitSpec, RunTrace,
    StepNoise,
};
use crate::vecops::{dist, format_vec};

/// Label printed when `2λ = σ²`.
pub const BOUNDARY_WARNING: &str = "Boundary: 2λ = σ²";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Satisfied,
    Boundary,
    Violated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    /// Decay rate `2λ − λ²h − σ²`.
    pub m: f64,
    pub cond_sigma: bool,
    pub cond_drift: bool,
    /// Only evaluated when `cond_drift` holds; `false` otherwise.
    pub cond_h: bool,
    /// Upper step-size limit `(2λ − σ²)/λ²`, present when `cond_drift` holds.
    pub h_bound: Option<f64>,
    pub verdict: Verdict,
}

impl ParamReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "verdict: {}\nm = {}\nsigma > 0: {}\n2*lambda > sigma^2: {}\n0 < h < (2*lambda - sigma^2)/lambda^2: {}{}\n",
            self.verdict,
            self.m,
            self.cond_sigma,
            self.cond_drift,
            self.cond_h,
            self.h_bound.map(|b| format!(" (bound {b})")).unwrap_or_default()
        );
        match self.verdict {
            Verdict::Boundary => {
                s.push_str(&format!(
                    "warning: {BOUNDARY_WARNING}; the contraction regime requires a strict inequality\n"
                ));
            }
            Verdict::Violated => s.push_str("warning: contraction conditions are violated\n"),
            Verdict::Satisfied => {}
        }
        s
    }
}

/// Evaluates the contraction conditions. Never fails; it only reports.
pub fn check_params(params: &CboParams) -> ParamReport {
    let (lambda, sigma, h) = (params.lambda, params.sigma, params.h);
    let gap = 2.0 * lambda - sigma * sigma;
    // (2λ − σ²) first keeps the boundary case exact
    let m = gap - lambda * lambda * h;
    let cond_sigma = sigma > 0.0;
    let cond_drift = gap > 0.0;
    let h_bound = cond_drift.then(|| gap / (lambda * lambda));
    let cond_h = h_bound.is_some_and(|b| h > 0.0 && h < b);
    let verdict = if cond_sigma && cond_drift && cond_h {
        Verdict::Satisfied
    } else if 2.0 * lambda == sigma * sigma {
        Verdict::Boundary
    } else {
        Verdict::Violated
    };
    ParamReport { m, cond_sigma, cond_drift, cond_h, h_bound, verdict }
}

/// Factor `1 − 2λh + λ²h² + σ²h` by which the expected pairwise second
/// moment shrinks per step under shared noise, before projection.
pub fn pairwise_recursion_factor(params: &CboParams) -> f64 {
    let (lambda, sigma, h) = (params.lambda, params.sigma, params.h);
    1.0 - 2.0 * lambda * h + lambda * lambda * h * h + sigma * sigma * h
}

/// Relative slack `1 + 5/√M` applied to statistical bound checks.
pub fn statistical_slack(runs: usize) -> f64 {
    1.0 + 5.0 / (runs as f64).sqrt()
}

/// SplitMix64 mix of a base seed and an index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub n: usize,
    /// Mean of `‖w_i − w_j‖²` over pairs and runs.
    pub mean_pairwise: f64,
    /// `e^{−nhm}` times the initial mean.
    pub bound: f64,
    /// `mean_pairwise ≤ bound · slack`.
    pub bound_satisfied: bool,
    /// `(1 − 2λh + λ²h² + σ²h)^n` times the initial mean.
    pub recursion_prediction: f64,
    /// Mean of `‖w_i − w̄‖²` over particles and runs.
    pub mean_consensus_sq: f64,
    /// `2((N−1)/N)² e^{−nhm} Var(w_in)`.
    pub consensus_bound: f64,
    /// Mean of the running sums `A_n` and `B_n`.
    pub mean_a: f64,
    pub mean_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub params: ParamReport,
    /// The `e^{−nhm}` bound is only claimed when the verdict is Satisfied.
    pub applicable: bool,
    pub runs: usize,
    pub horizon: usize,
    pub slack: f64,
    /// Empirical `E‖w_in‖² − ‖E w_in‖²` of the initial particles.
    pub initial_variance: f64,
    /// `√(2 Var) (N−1)/N / (1 − e^{−hm/2})`, the uniform bound on E[A_n] and E[B_n]; infinite when m ≤ 0.
    pub running_sum_bound: f64,
    pub rows: Vec<DecayRow>,
}

impl DecayReport {
    pub fn all_bounds_satisfied(&self) -> bool {
        self.rows.iter().all(|r| r.bound_satisfied)
    }

    pub fn csv_header() -> &'static str {
        "n,mean_pairwise_sq_dist,pairwise_bound,bound_satisfied,recursion_prediction,mean_consensus_sq_dist,consensus_bound_n_indexed,mean_A,mean_B,running_sum_bound"
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::csv_header())?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.mean_pairwise,
                r.bound,
                r.bound_satisfied,
                r.recursion_prediction,
                r.mean_consensus_sq,
                r.consensus_bound,
                r.mean_a,
                r.mean_b,
                self.running_sum_bound
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let last = self.rows.last();
        let mut s = format!(
            "decay experiment: {} runs, horizon {}, slack {}\n",
            self.runs, self.horizon, self.slack
        );
        if !self.applicable {
            s.push_str("note: parameters are outside the strict contraction regime; the e^(-nhm) bound is not claimed\n");
        }
        s.push_str(&format!(
            "pairwise bound satisfied at every n: {}\n",
            self.all_bounds_satisfied()
        ));
        if let Some(r) = last {
            s.push_str(&format!(
                "final mean pairwise sq dist: {} (bound {})\nfinal mean sq dist to consensus: {} (N-indexed bound {})\nfinal mean A_n: {}, mean B_n: {} (uniform bound {})\n",
                r.mean_pairwise, r.bound, r.mean_consensus_sq, r.consensus_bound, r.mean_a, r.mean_b, self.running_sum_bound
            ));
        }
        s
    }
}

struct RunSeries {
    pairwise: Vec<f64>,
    consensus_sq: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    /// Σ‖w‖² and Σw over the initial particles.
    init_sq: f64,
    init_sum: Vec<f64>,
}

fn single_decay_run(
    objective: &dyn Objective,
    projector: &Projector,
    params: &CboParams,
    init: &InitSpec,
    horizon: usize,
    seed: u64,
) -> Result<RunSeries> {
    let dim = projector.dim();
    let mean = init.mean.clone().unwrap_or_else(|| projector.anchor());
    let mut ensemble = init_ensemble(dim, params, &mean, init.std, projector, objective, seed)?;
    let init_sq = ensemble.positions().iter().map(|x| x * x).sum();
    let init_sum = ensemble.rows().fold(vec![0.0; dim], |mut acc, row| {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
        acc
    });
    let mut rng = noise_rng(seed);
    let mut series = RunSeries {
        pairwise: Vec::with_capacity(horizon + 1),
        consensus_sq: Vec::with_capacity(horizon + 1),
        a: Vec::with_capacity(horizon + 1),
        b: Vec::with_capacity(horizon + 1),
        init_sq,
        init_sum,
    };
    let (mut a, mut b) = (0.0, 0.0);
    for n in 0..=horizon {
        let consensus = consensus_point(&ensemble, params.beta).map_err(|e| e.at_iteration(n))?;
        let noise = StepNoise::draw(params.noise_mode, params.n_particles, dim, &mut rng);
        let dists = consensus_distances(&ensemble, &consensus, &noise);
        a += dists.mean_dist;
        b += dists.mean_noisy_dist;
        series.pairwise.push(ensemble.dispersion());
        series.consensus_sq.push(dists.mean_sq_dist);
        series.a.push(a);
        series.b.push(b);
        if n < horizon {
            ensemble = advance(&ensemble, &consensus, params, projector, objective, &noise)
                .map_err(|e| e.at_iteration(n))?;
        }
    }
    Ok(series)
}

/// Runs `runs` independent trajectories of `horizon` steps and aggregates
/// distance statistics per iteration.
///
/// Run `r` uses seed `derive_seed(seed, r)` for both its initial ensemble
/// and its noise, and runs are reduced in index order, so the report does
/// not depend on the number of worker threads.
pub fn decay_experiment(
    objective: &dyn Objective,
    projector: &Projector,
    params: &CboParams,
    init: &InitSpec,
    runs: usize,
    horizon: usize,
    seed: u64,
) -> Result<DecayReport> {
    params.validate()?;
    if runs == 0 {
        return Err(Error::config("decay experiment needs at least one run"));
    }
    let series: Vec<Result<RunSeries>> = (0..runs)
        .into_par_iter()
        .map(|r| single_decay_run(objective, projector, params, init, horizon, derive_seed(seed, r as u64)))
        .collect();
    let series: Vec<RunSeries> = series.into_iter().collect::<Result<_>>()?;

    let report = check_params(params);
    let m_runs = runs as f64;
    let n_particles = params.n_particles as f64;
    let dim = projector.dim();

    let total = m_runs * n_particles;
    let mut mean_sq = 0.0;
    let mut mean_vec = vec![0.0; dim];
    for s in &series {
        mean_sq += s.init_sq;
        for (m, x) in mean_vec.iter_mut().zip(&s.init_sum) {
            *m += x;
        }
    }
    mean_sq /= total;
    let mean_norm_sq: f64 = mean_vec.iter().map(|x| (x / total).powi(2)).sum();
    let initial_variance = (mean_sq - mean_norm_sq).max(0.0);

    let ratio = (n_particles - 1.0) / n_particles;
    let hm = params.h * report.m;
    let running_sum_bound = if report.m > 0.0 {
        (2.0 * initial_variance).sqrt() * ratio / (1.0 - (-hm / 2.0).exp())
    } else {
        f64::INFINITY
    };
    let slack = statistical_slack(runs);
    let rho = pairwise_recursion_factor(params);

    let mean_at = |n: usize, pick: fn(&RunSeries) -> &Vec<f64>| -> f64 {
        series.iter().map(|s| pick(s)[n]).sum::<f64>() / m_runs
    };
    let initial_pairwise = mean_at(0, |s| &s.pairwise);
    let rows = (0..=horizon)
        .map(|n| {
            let decay = (-(n as f64) * hm).exp();
            let mean_pairwise = mean_at(n, |s| &s.pairwise);
            let bound = decay * initial_pairwise;
            DecayRow {
                n,
                mean_pairwise,
                bound,
                bound_satisfied: mean_pairwise <= bound * slack,
                recursion_prediction: rho.powi(n as i32) * initial_pairwise,
                mean_consensus_sq: mean_at(n, |s| &s.consensus_sq),
                consensus_bound: 2.0 * ratio * ratio * decay * initial_variance,
                mean_a: mean_at(n, |s| &s.a),
                mean_b: mean_at(n, |s| &s.b),
            }
        })
        .collect();

    Ok(DecayReport {
        params: report,
        applicable: report.verdict == Verdict::Satisfied,
        runs,
        horizon,
        slack,
        initial_variance,
        running_sum_bound,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceRow {
    pub beta: f64,
    pub consensus: Vec<f64>,
    /// Distance from the consensus point to the ensemble's best particle.
    pub gap: f64,
}

/// Consensus point of a fixed ensemble for each β, with its distance to the best particle.
pub fn laplace_sweep(ensemble: &Ensemble, betas: &[f64]) -> Result<Vec<LaplaceRow>> {
    if betas.iter().any(|b| !(*b >= 0.0)) || betas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::config("betas must be nonnegative and ascending"));
    }
    let (best, _) = ensemble.best();
    let best_point = ensemble.row(best);
    betas
        .iter()
        .map(|&beta| {
            let consensus = consensus_point(ensemble, beta)?;
            let gap = dist(&consensus, best_point);
            Ok(LaplaceRow { beta, consensus, gap })
        })
        .collect()
}

pub fn write_laplace_csv<W: Write>(rows: &[LaplaceRow], dim: usize, mut out: W) -> Result<()> {
    let cols: Vec<String> = (0..dim).map(|l| format!("consensus_{l}")).collect();
    writeln!(out, "beta,gap,{}", cols.join(","))?;
    for r in rows {
        writeln!(out, "{},{},{}", r.beta, r.gap, format_vec(&r.consensus, ","))?;
    }
    Ok(())
}

/// L2 distance of the center of mass to the reference at every record; also
/// stored into each record's `err_ref`.
pub fn error_trace(trace: &mut RunTrace, reference: &ReferenceSolution) -> Result<Vec<f64>> {
    if reference.weights.len() != trace.dim {
        return Err(Error::config(format!(
            "reference has dimension {}, trace {}",
            reference.weights.len(),
            trace.dim
        )));
    }
    Ok(trace
        .records
        .iter_mut()
        .map(|r| {
            let e = dist(&r.center_of_mass, &reference.weights);
            r.err_ref = Some(e);
            e
        })
        .collect())
}

pub fn write_error_csv<W: Write>(trace: &RunTrace, mut out: W) -> Result<()> {
    writeln!(out, "iter,err")?;
    for r in &trace.records {
        if let Some(e) = r.err_ref {
            writeln!(out, "{},{}", r.iter, e)?;
        }
    }
    Ok(())
}
