//! Predictor-corrector consensus-based optimization.
//!
//! Each iteration computes the Boltzmann-weighted consensus point of the
//! ensemble, moves every particle toward it with multiplicative Gaussian
//! noise (the predictor), and projects the result back onto the feasible set
//! (the corrector):
//!
//! ```text
//! ŵ_i = w_i − λh (w_i − w̄) + σ√h (w_i − w̄) ⊙ η
//! w_i ← P_S[ŵ_i]
//! w̄   = Σ_l w_l e^{−βL(w_l)} / Σ_l e^{−βL(w_l)}
//! ```
//!
//! Noise for a step is drawn from a single seeded stream before any parallel
//! fan-out, so results do not depend on the number of worker threads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::projection::Projector;
use crate::vecops::{all_finite, dist, format_vec, mean_pairwise_sq_dist, row_mean};

/// Below this many coordinates per ensemble, row work runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 14;

/// Stream id of the per-step noise generator; stream 0 seeds initialization.
const NOISE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// One noise vector per step, shared by every particle.
    CommonPerStep,
    /// An independent noise vector per particle and step.
    IndependentPerParticle,
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseMode::CommonPerStep => "common",
            NoiseMode::IndependentPerParticle => "independent",
        })
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "common" => Ok(NoiseMode::CommonPerStep),
            "independent" => Ok(NoiseMode::IndependentPerParticle),
            other => Err(Error::config(format!("unknown noise mode '{other}' (common|independent)"))),
        }
    }
}

/// Algorithm hyperparameters.
///
/// Validity only covers the basic domain of each field. The contraction
/// regime `2λ > σ²`, `h < (2λ − σ²)/λ²` is reported by
/// [`crate::diagnostics::check_params`] and never enforced here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CboParams {
    /// Drift rate λ.
    pub lambda: f64,
    /// Noise intensity σ.
    pub sigma: f64,
    /// Inverse temperature β of the consensus weights.
    pub beta: f64,
    /// Step size h.
    pub h: f64,
    pub n_particles: usize,
    pub noise_mode: NoiseMode,
    pub seed: u64,
    pub max_iters: usize,
    pub residual_tol: f64,
}

impl Default for CboParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            sigma: 1.0,
            beta: 50.0,
            h: 0.01,
            n_particles: 100,
            noise_mode: NoiseMode::CommonPerStep,
            seed: 0,
            max_iters: 10_000,
            residual_tol: 1e-8,
        }
    }
}

impl CboParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::config(format!("{what} must be {v}")));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda > 0, got", self.lambda);
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma >= 0, got", self.sigma);
        }
        if !(self.beta > 0.0) || self.beta.is_nan() {
            return bad("beta > 0, got", self.beta);
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("h > 0, got", self.h);
        }
        if !(self.residual_tol >= 0.0) {
            return bad("residual_tol >= 0, got", self.residual_tol);
        }
        if self.n_particles < 2 {
            return Err(Error::config(format!(
                "n_particles must be at least 2, got {}",
                self.n_particles
            )));
        }
        Ok(())
    }
}

/// Particle positions (row-major `N × d`) with a coherent cache of objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    dim: usize,
    positions: Vec<f64>,
    values: Vec<f64>,
    iteration: usize,
}

impl Ensemble {
    /// Builds an ensemble from raw positions, evaluating the objective on every row.
    pub fn from_positions(dim: usize, positions: Vec<f64>, objective: &dyn Objective) -> Result<Self> {
        if dim == 0 || positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::config(format!(
                "{} coordinates do not form rows of dimension {dim}",
                positions.len()
            )));
        }
        if !all_finite(&positions) {
            return Err(Error::NumericDomain("ensemble positions must be finite".into()));
        }
        let values = evaluate_rows(objective, &positions, dim)?;
        Ok(Self { dim, positions, values, iteration: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_particles(&self) -> usize {
        self.values.len()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    /// Index and value of the lowest objective value; ties go to the lower index.
    pub fn best(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
    }

    pub fn center_of_mass(&self) -> Vec<f64> {
        row_mean(&self.positions, self.dim)
    }

    /// Mean of `‖w_i − w_j‖²` over all pairs.
    pub fn dispersion(&self) -> f64 {
        mean_pairwise_sq_dist(&self.positions, self.dim)
    }
}

fn evaluate_rows(objective: &dyn Objective, positions: &[f64], dim: usize) -> Result<Vec<f64>> {
    let eval = |row: &[f64]| -> Result<f64> {
        let v = objective.eval(row)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NumericDomain(format!(
                "objective {} returned {v}",
                objective.descriptor()
            )))
        }
    };
    let results: Vec<Result<f64>> = if positions.len() >= PAR_THRESHOLD {
        positions.par_chunks_exact(dim).map(eval).collect()
    } else {
        positions.chunks_exact(dim).map(eval).collect()
    };
    // first error in particle order, independent of scheduling
    results.into_iter().collect()
}

/// Standard-normal draws for one step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepNoise {
    /// A `d`-vector shared by all particles.
    Common(Vec<f64>),
    /// Row-major `N × d` draws, one row per particle.
    Independent(Vec<f64>),
}

impl StepNoise {
    pub fn draw<R: Rng + ?Sized>(mode: NoiseMode, n_particles: usize, dim: usize, rng: &mut R) -> Self {
        match mode {
            NoiseMode::CommonPerStep => StepNoise::Common(draw_normals(rng, dim)),
            NoiseMode::IndependentPerParticle => StepNoise::Independent(draw_normals(rng, n_particles * dim)),
        }
    }

    pub fn zeros(mode: NoiseMode, n_particles: usize, dim: usize) -> Self {
        match mode {
            NoiseMode::CommonPerStep => StepNoise::Common(vec![0.0; dim]),
            NoiseMode::IndependentPerParticle => StepNoise::Independent(vec![0.0; n_particles * dim]),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            StepNoise::Common(v) | StepNoise::Independent(v) => v,
        }
    }

    /// Noise vector applied to particle `i`.
    pub fn for_particle(&self, i: usize, dim: usize) -> &[f64] {
        match self {
            StepNoise::Common(v) => v,
            StepNoise::Independent(v) => &v[i * dim..(i + 1) * dim],
        }
    }

    fn check_shape(&self, n_particles: usize, dim: usize) -> Result<()> {
        let (len, expected) = match self {
            StepNoise::Common(v) => (v.len(), dim),
            StepNoise::Independent(v) => (v.len(), n_particles * dim),
        };
        if len != expected {
            return Err(Error::config(format!(
                "noise has {len} entries, expected {expected}"
            )));
        }
        Ok(())
    }
}

fn draw_normals<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// Seeded generator for the per-step noise of a run.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    rng
}

/// Draws `N` rows from `N(init_mean, init_std² I)` and projects each onto the feasible set.
pub fn init_ensemble(
    dim: usize,
    params: &CboParams,
    init_mean: &[f64],
    init_std: f64,
    projector: &Projector,
    objective: &dyn Objective,
    rng_seed: u64,
) -> Result<Ensemble> {
    params.validate()?;
    if dim == 0 {
        return Err(Error::config("dimension must be at least 1"));
    }
    if init_mean.len() != dim || projector.dim() != dim {
        return Err(Error::config(format!(
            "initial mean has dimension {}, projector {}, expected {dim}",
            init_mean.len(),
            projector.dim()
        )));
    }
    if !(init_std > 0.0 && init_std.is_finite()) {
        return Err(Error::config(format!("initial std must be positive, got {init_std}")));
    }
    if !all_finite(init_mean) {
        return Err(Error::NumericDomain("initial mean must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut positions = draw_normals(&mut rng, params.n_particles * dim);
    for row in positions.chunks_exact_mut(dim) {
        for (x, m) in row.iter_mut().zip(init_mean) {
            *x = m + init_std * *x;
        }
        projector.project_in_place(row)?;
    }
    Ensemble::from_positions(dim, positions, objective)
}

/// Boltzmann-weighted average `Σ w_l e^{−βL_l} / Σ e^{−βL_l}`.
///
/// Weights are shifted by the minimum objective value, so the best particle
/// always carries weight one and large β cannot underflow the denominator.
/// `β = 0` gives the arithmetic mean.
pub fn consensus_point(ensemble: &Ensemble, beta: f64) -> Result<Vec<f64>> {
    if !(beta >= 0.0) {
        return Err(Error::config(format!("beta must be nonnegative, got {beta}")));
    }
    let values = ensemble.values();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NumericDomain(format!("non-finite objective value {bad} in ensemble")));
    }
    let (best, min) = ensemble.best();
    let anchor = ensemble.row(best);
    // accumulate offsets from the best particle so coincident particles reproduce exactly
    let mut offset = vec![0.0; ensemble.dim()];
    let mut total = 0.0;
    for (row, &v) in ensemble.rows().zip(values) {
        let weight = if beta == 0.0 { 1.0 } else { (-beta * (v - min)).exp() };
        if weight == 0.0 {
            continue;
        }
        total += weight;
        for ((o, x), a) in offset.iter_mut().zip(row).zip(anchor) {
            *o += weight * (x - a);
        }
    }
    Ok(anchor.iter().zip(&offset).map(|(a, o)| a + o / total).collect())
}

/// Euler predictor: row `i` becomes `w_i − λh(w_i − w̄) + σ√h (w_i − w̄) ⊙ η_i`.
pub fn predictor_step(
    ensemble: &Ensemble,
    consensus: &[f64],
    params: &CboParams,
    noise: &StepNoise,
) -> Result<Vec<f64>> {
    let dim = ensemble.dim();
    if consensus.len() != dim {
        return Err(Error::config(format!(
            "consensus has dimension {}, ensemble {dim}",
            consensus.len()
        )));
    }
    noise.check_shape(ensemble.n_particles(), dim)?;
    let drift = params.lambda * params.h;
    let diffusion = params.sigma * params.h.sqrt();
    let mut raw = ensemble.positions().to_vec();
    let update = |(i, row): (usize, &mut [f64])| {
        let eta = noise.for_particle(i, dim);
        for ((x, c), e) in row.iter_mut().zip(consensus).zip(eta) {
            let dev = *x - c;
            *x = *x - drift * dev + diffusion * dev * e;
        }
    };
    if raw.len() >= PAR_THRESHOLD {
        raw.par_chunks_exact_mut(dim).enumerate().for_each(update);
    } else {
        raw.chunks_exact_mut(dim).enumerate().for_each(update);
    }
    Ok(raw)
}

/// Projects every row of `raw` onto the feasible set.
pub fn corrector_step(mut raw: Vec<f64>, projector: &Projector) -> Result<Vec<f64>> {
    let dim = projector.dim();
    if raw.len() % dim != 0 {
        return Err(Error::config(format!(
            "{} coordinates do not form rows of dimension {dim}",
            raw.len()
        )));
    }
    let results: Vec<Result<()>> = if raw.len() >= PAR_THRESHOLD {
        raw.par_chunks_exact_mut(dim).map(|row| projector.project_in_place(row)).collect()
    } else {
        raw.chunks_exact_mut(dim).map(|row| projector.project_in_place(row)).collect()
    };
    results.into_iter().collect::<Result<()>>()?;
    Ok(raw)
}

/// Observables of one iteration, measured on the state *before* the update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub consensus: Vec<f64>,
    /// Mean of `‖w_i − w_j‖²` over pairs.
    pub dispersion: f64,
    /// `max_i ‖w_i − w̄‖`.
    pub residual: f64,
    pub best_value: f64,
    pub best_index: usize,
    pub center_of_mass: Vec<f64>,
    /// Mean over particles of `‖w_i − w̄‖`.
    pub mean_consensus_dist: f64,
    /// Mean over particles of `‖w_i − w̄‖²`.
    pub mean_sq_consensus_dist: f64,
    /// Mean over particles of `‖(w_i − w̄) ⊙ η_i‖`.
    pub mean_noisy_dist: f64,
}

/// Per-particle distances to the consensus point, averaged over particles.
pub(crate) struct ConsensusDistances {
    /// `max_i ‖w_i − w̄‖`.
    pub residual: f64,
    pub mean_dist: f64,
    pub mean_sq_dist: f64,
    pub mean_noisy_dist: f64,
}

pub(crate) fn consensus_distances(ensemble: &Ensemble, consensus: &[f64], noise: &StepNoise) -> ConsensusDistances {
    let n = ensemble.n_particles() as f64;
    let dim = ensemble.dim();
    let mut residual: f64 = 0.0;
    let mut sum_dist = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_noisy = 0.0;
    for (i, row) in ensemble.rows().enumerate() {
        let eta = noise.for_particle(i, dim);
        let (mut sq, mut noisy) = (0.0, 0.0);
        for ((x, c), e) in row.iter().zip(consensus).zip(eta) {
            let dev = x - c;
            sq += dev * dev;
            noisy += (dev * e) * (dev * e);
        }
        let d = sq.sqrt();
        residual = residual.max(d);
        sum_dist += d;
        sum_sq += sq;
        sum_noisy += noisy.sqrt();
    }
    ConsensusDistances {
        residual,
        mean_dist: sum_dist / n,
        mean_sq_dist: sum_sq / n,
        mean_noisy_dist: sum_noisy / n,
    }
}

fn observe(ensemble: &Ensemble, consensus: Vec<f64>, noise: &StepNoise) -> StepRecord {
    let dists = consensus_distances(ensemble, &consensus, noise);
    let (best_index, best_value) = ensemble.best();
    StepRecord {
        iteration: ensemble.iteration(),
        consensus,
        dispersion: ensemble.dispersion(),
        residual: dists.residual,
        best_value,
        best_index,
        center_of_mass: ensemble.center_of_mass(),
        mean_consensus_dist: dists.mean_dist,
        mean_sq_consensus_dist: dists.mean_sq_dist,
        mean_noisy_dist: dists.mean_noisy_dist,
    }
}

pub(crate) fn advance(
    ensemble: &Ensemble,
    consensus: &[f64],
    params: &CboParams,
    projector: &Projector,
    objective: &dyn Objective,
    noise: &StepNoise,
) -> Result<Ensemble> {
    let raw = predictor_step(ensemble, consensus, params, noise)?;
    let positions = corrector_step(raw, projector)?;
    let values = evaluate_rows(objective, &positions, ensemble.dim())?;
    Ok(Ensemble {
        dim: ensemble.dim(),
        positions,
        values,
        iteration: ensemble.iteration() + 1,
    })
}

/// One full iteration: consensus, noise draw, predictor, corrector, objective refresh.
pub fn cbo_step<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    params: &CboParams,
    projector: &Projector,
    objective: &dyn Objective,
    rng: &mut R,
) -> Result<(Ensemble, StepRecord)> {
    let n = ensemble.iteration();
    let mut inner = || -> Result<(Ensemble, StepRecord)> {
        let consensus = consensus_point(ensemble, params.beta)?;
        let noise = StepNoise::draw(params.noise_mode, ensemble.n_particles(), ensemble.dim(), rng);
        let next = advance(ensemble, &consensus, params, projector, objective, &noise)?;
        Ok((next, observe(ensemble, consensus, &noise)))
    };
    inner().map_err(|e| e.at_iteration(n))
}

/// How the initial ensemble is sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    /// Gaussian mean; defaults to [`Projector::anchor`] (the barycenter for the simplex).
    pub mean: Option<Vec<f64>>,
    pub std: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self { mean: None, std: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub init: InitSpec,
    /// Keep every `stride`-th record; the final record is always kept.
    pub stride: usize,
    /// Reference point for the per-record L2 error of the center of mass.
    pub reference: Option<Vec<f64>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { init: InitSpec::default(), stride: 1, reference: None }
    }
}

/// One row of a run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub residual: f64,
    pub dispersion: f64,
    pub best_value: f64,
    pub consensus: Vec<f64>,
    pub center_of_mass: Vec<f64>,
    /// Running sum of the mean distance to consensus.
    pub a_sum: f64,
    /// Running sum of the mean noise-weighted distance to consensus.
    pub b_sum: f64,
    /// Mean squared distance to consensus at this iteration.
    pub consensus_sq_dist: f64,
    pub err_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub dim: usize,
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn csv_header(dim: usize) -> String {
        let mut cols = vec!["iter".to_string(), "residual".into(), "dispersion".into(), "best_L".into()];
        cols.extend((0..dim).map(|l| format!("consensus_{l}")));
        cols.extend((0..dim).map(|l| format!("com_{l}")));
        cols.extend(["A_n".to_string(), "B_n".into(), "err_ref".into()]);
        cols.join(",")
    }

    /// Writes the trace as CSV. `err_ref` is empty when no reference was set.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::csv_header(self.dim))?;
        for r in &self.records {
            let err = r.err_ref.map(|e| e.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.iter,
                r.residual,
                r.dispersion,
                r.best_value,
                format_vec(&r.consensus, ","),
                format_vec(&r.center_of_mass, ","),
                r.a_sum,
                r.b_sum,
                err
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    ResidualBelowTolerance,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub ensemble: Ensemble,
    pub trace: RunTrace,
    /// Final consensus point, projected onto the feasible set.
    pub result: Vec<f64>,
    /// Best particle seen across all iterations.
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub stop: StopReason,
    pub iterations: usize,
}

/// Samples the initial ensemble and iterates until the residual falls below
/// tolerance or `max_iters` steps have been taken.
pub fn run(
    objective: &dyn Objective,
    projector: &Projector,
    params: &CboParams,
    options: &RunOptions,
) -> Result<RunOutcome> {
    let dim = projector.dim();
    let mean = options.init.mean.clone().unwrap_or_else(|| projector.anchor());
    let ensemble = init_ensemble(dim, params, &mean, options.init.std, projector, objective, params.seed)
        .map_err(|e| match e {
            Error::Config(_) => e,
            // objective failures on the initial ensemble belong to iteration 0
            other => other.at_iteration(0),
        })?;
    let mut rng = noise_rng(params.seed);
    run_from(ensemble, objective, projector, params, options, &mut rng)
}

/// Iterates from a given ensemble with a caller-supplied noise stream.
pub fn run_from<R: Rng + ?Sized>(
    ensemble: Ensemble,
    objective: &dyn Objective,
    projector: &Projector,
    params: &CboParams,
    options: &RunOptions,
    rng: &mut R,
) -> Result<RunOutcome> {
    params.validate()?;
    let dim = ensemble.dim();
    if projector.dim() != dim {
        return Err(Error::config(format!(
            "projector dimension {} does not match ensemble dimension {dim}",
            projector.dim()
        )));
    }
    if ensemble.n_particles() != params.n_particles {
        return Err(Error::config(format!(
            "ensemble has {} particles, parameters say {}",
            ensemble.n_particles(),
            params.n_particles
        )));
    }
    if let Some(r) = &options.reference {
        if r.len() != dim {
            return Err(Error::config(format!("reference has dimension {}, expected {dim}", r.len())));
        }
    }
    let stride = options.stride.max(1);
    let start = ensemble.iteration();
    let mut ensemble = ensemble;
    let mut trace = RunTrace { dim, records: Vec::new() };
    let mut a_sum = 0.0;
    let mut b_sum = 0.0;
    let (i0, v0) = ensemble.best();
    let mut best_point = ensemble.row(i0).to_vec();
    let mut best_value = v0;

    loop {
        let n = ensemble.iteration();
        let consensus = consensus_point(&ensemble, params.beta).map_err(|e| e.at_iteration(n))?;
        let noise = StepNoise::draw(params.noise_mode, ensemble.n_particles(), dim, rng);
        let record = observe(&ensemble, consensus, &noise);
        a_sum += record.mean_consensus_dist;
        b_sum += record.mean_noisy_dist;
        if record.best_value < best_value {
            best_value = record.best_value;
            best_point = ensemble.row(record.best_index).to_vec();
        }

        let stop = if record.residual < params.residual_tol {
            Some(StopReason::ResidualBelowTolerance)
        } else if n - start >= params.max_iters {
            Some(StopReason::MaxIterations)
        } else {
            None
        };

        if stop.is_some() || (n - start) % stride == 0 {
            trace.records.push(TraceRecord {
                iter: n,
                residual: record.residual,
                dispersion: record.dispersion,
                best_value: record.best_value,
                err_ref: options.reference.as_ref().map(|r| dist(&record.center_of_mass, r)),
                consensus: record.consensus.clone(),
                center_of_mass: record.center_of_mass.clone(),
                a_sum,
                b_sum,
                consensus_sq_dist: record.mean_sq_consensus_dist,
            });
        }

        if let Some(stop) = stop {
            let result = projector.project(&record.consensus).map_err(|e| e.at_iteration(n))?;
            return Ok(RunOutcome {
                iterations: n - start,
                ensemble,
                trace,
                result,
                best_point,
                best_value,
                stop,
            });
        }

        ensemble = advance(&ensemble, &record.consensus, params, projector, objective, &noise)
            .map_err(|e| e.at_iteration(n))?;
    }
}
