//! Objective functions minimized by the solver.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::{all_finite, dot, format_vec};

/// Variance floor below which a portfolio is treated as riskless.
pub const DEFAULT_VAR_FLOOR: f64 = 1e-12;

/// A real-valued function on `R^d` to be minimized.
pub trait Objective: Send + Sync {
    fn eval(&self, w: &[f64]) -> Result<f64>;

    /// Identifier plus parameters, recorded in run metadata.
    fn descriptor(&self) -> String;

    /// Analytic gradient, when one is available.
    fn gradient(&self, _w: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn eval(&self, w: &[f64]) -> Result<f64> {
        (**self).eval(w)
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
    fn gradient(&self, w: &[f64]) -> Option<Result<Vec<f64>>> {
        (**self).gradient(w)
    }
}

impl<T: Objective + ?Sized> Objective for Box<T> {
    fn eval(&self, w: &[f64]) -> Result<f64> {
        (**self).eval(w)
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
    fn gradient(&self, w: &[f64]) -> Option<Result<Vec<f64>>> {
        (**self).gradient(w)
    }
}

/// Wraps a closure as an objective without a gradient.
pub struct FnObjective<F> {
    name: String,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, w: &[f64]) -> Result<f64> {
        Ok((self.f)(w))
    }
    fn descriptor(&self) -> String {
        self.name.clone()
    }
}

fn check_dim(expected: usize, w: &[f64]) -> Result<()> {
    if w.len() != expected {
        return Err(Error::config(format!(
            "objective expects dimension {expected}, got {}",
            w.len()
        )));
    }
    Ok(())
}

/// `L(w) = ‖w − center‖²`.
#[derive(Debug, Clone)]
pub struct Sphere {
    center: Vec<f64>,
}

pub fn sphere(center: Vec<f64>) -> Result<Sphere> {
    if center.is_empty() || !all_finite(&center) {
        return Err(Error::config("sphere center must be a nonempty finite vector"));
    }
    Ok(Sphere { center })
}

impl Sphere {
    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

impl Objective for Sphere {
    fn eval(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.center.len(), w)?;
        Ok(crate::vecops::sq_dist(w, &self.center))
    }

    fn descriptor(&self) -> String {
        format!("sphere(center={})", format_vec(&self.center, ";"))
    }

    fn gradient(&self, w: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(check_dim(self.center.len(), w).map(|_| {
            w.iter().zip(&self.center).map(|(x, c)| 2.0 * (x - c)).collect()
        }))
    }
}

/// Shifted and scaled Rastrigin function, global minimum 0 at `shift`.
#[derive(Debug, Clone)]
pub struct Rastrigin {
    shift: Vec<f64>,
    scale: f64,
}

pub fn rastrigin(shift: Vec<f64>, scale: f64) -> Result<Rastrigin> {
    if shift.is_empty() || !all_finite(&shift) {
        return Err(Error::config("rastrigin shift must be a nonempty finite vector"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::config(format!("rastrigin scale must be positive, got {scale}")));
    }
    Ok(Rastrigin { shift, scale })
}

impl Objective for Rastrigin {
    fn eval(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.shift.len(), w)?;
        Ok(w.iter()
            .zip(&self.shift)
            .map(|(x, s)| {
                let z = (x - s) / self.scale;
                z * z - 10.0 * (2.0 * PI * z).cos() + 10.0
            })
            .sum())
    }

    fn descriptor(&self) -> String {
        format!("rastrigin(shift={},scale={})", format_vec(&self.shift, ";"), self.scale)
    }

    fn gradient(&self, w: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(check_dim(self.shift.len(), w).map(|_| {
            w.iter()
                .zip(&self.shift)
                .map(|(x, s)| {
                    let z = (x - s) / self.scale;
                    (2.0 * z + 20.0 * PI * (2.0 * PI * z).sin()) / self.scale
                })
                .collect()
        }))
    }
}

/// Mean vector, covariance matrix and risk-free rate of a set of assets, all per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketStats {
    pub asset_names: Vec<String>,
    pub mu: Vec<f64>,
    /// Row-major covariance matrix.
    pub sigma: Vec<Vec<f64>>,
    pub rf: f64,
}

impl MarketStats {
    pub fn new(asset_names: Vec<String>, mu: Vec<f64>, sigma: Vec<Vec<f64>>, rf: f64) -> Result<Self> {
        let stats = Self { asset_names, mu, sigma, rf };
        stats.validate()?;
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Checks shapes, finiteness, symmetry to 1e-12 and positive semidefiniteness
    /// (smallest eigenvalue ≥ −1e-10).
    pub fn validate(&self) -> Result<()> {
        let d = self.mu.len();
        if d == 0 {
            return Err(Error::config("market has no assets"));
        }
        if self.asset_names.len() != d {
            return Err(Error::config(format!(
                "{} asset names for {d} assets",
                self.asset_names.len()
            )));
        }
        if self.sigma.len() != d || self.sigma.iter().any(|r| r.len() != d) {
            return Err(Error::config(format!("covariance matrix is not {d}×{d}")));
        }
        if !all_finite(&self.mu) || !self.rf.is_finite() || self.sigma.iter().any(|r| !all_finite(r)) {
            return Err(Error::NumericDomain("market statistics contain non-finite values".into()));
        }
        for i in 0..d {
            for j in 0..i {
                if (self.sigma[i][j] - self.sigma[j][i]).abs() > 1e-12 {
                    return Err(Error::config(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let min_eig = min_eigenvalue(&self.sigma);
        if min_eig < -1e-10 {
            return Err(Error::config(format!(
                "covariance is not positive semidefinite (smallest eigenvalue {min_eig:e})"
            )));
        }
        Ok(())
    }

    pub fn portfolio_return(&self, w: &[f64]) -> f64 {
        dot(w, &self.mu)
    }

    pub fn portfolio_variance(&self, w: &[f64]) -> f64 {
        self.sigma.iter().zip(w).map(|(row, wi)| wi * dot(row, w)).sum()
    }
}

pub(crate) fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    let d = m.len();
    let mat = DMatrix::from_fn(d, d, |i, j| m[i][j]);
    SymmetricEigen::new(mat).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Expected return, standard deviation and Sharpe ratio of a portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpeComponents {
    pub ret: f64,
    pub risk: f64,
    pub sharpe: f64,
}

pub fn sharpe_components(stats: &MarketStats, w: &[f64]) -> Result<SharpeComponents> {
    sharpe_components_with_floor(stats, w, DEFAULT_VAR_FLOOR)
}

pub fn sharpe_components_with_floor(stats: &MarketStats, w: &[f64], var_floor: f64) -> Result<SharpeComponents> {
    check_dim(stats.dim(), w)?;
    let ret = stats.portfolio_return(w);
    let variance = stats.portfolio_variance(w);
    if !(variance >= var_floor) {
        return Err(Error::DegeneratePortfolio { variance, floor: var_floor });
    }
    let risk = variance.sqrt();
    Ok(SharpeComponents { ret, risk, sharpe: (ret - stats.rf) / risk })
}

/// Negated Sharpe ratio `−(wᵀμ − r_f)/√(wᵀΣw)`; minimizing it maximizes the Sharpe ratio.
#[derive(Debug, Clone)]
pub struct NegSharpe {
    stats: MarketStats,
    var_floor: f64,
}

pub fn neg_sharpe(stats: MarketStats, var_floor: f64) -> Result<NegSharpe> {
    stats.validate()?;
    if !(var_floor > 0.0) {
        return Err(Error::config(format!("variance floor must be positive, got {var_floor}")));
    }
    Ok(NegSharpe { stats, var_floor })
}

impl NegSharpe {
    pub fn stats(&self) -> &MarketStats {
        &self.stats
    }
}

impl Objective for NegSharpe {
    fn eval(&self, w: &[f64]) -> Result<f64> {
        sharpe_components_with_floor(&self.stats, w, self.var_floor).map(|c| -c.sharpe)
    }

    fn descriptor(&self) -> String {
        format!(
            "neg_sharpe(assets={},rf={},var_floor={})",
            self.stats.asset_names.join(";"),
            self.stats.rf,
            self.var_floor
        )
    }

    fn gradient(&self, w: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(sharpe_components_with_floor(&self.stats, w, self.var_floor).map(|c| {
            let excess = c.ret - self.stats.rf;
            let risk3 = c.risk * c.risk * c.risk;
            self.stats
                .sigma
                .iter()
                .zip(&self.stats.mu)
                .map(|(row, mu_i)| -mu_i / c.risk + excess * dot(row, w) / risk3)
                .collect()
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(d: usize) -> Vec<String> {
        (1..=d).map(|i| format!("A{i}")).collect()
    }

    fn diag(values: &[f64]) -> Vec<Vec<f64>> {
        (0..values.len())
            .map(|i| (0..values.len()).map(|j| if i == j { values[i] } else { 0.0 }).collect())
            .collect()
    }

    fn example_market() -> MarketStats {
        MarketStats::new(
            names(3),
            vec![0.02, 0.01, 0.015],
            vec![
                vec![0.04, 0.006, 0.002],
                vec![0.006, 0.01, 0.001],
                vec![0.002, 0.001, 0.02],
            ],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn sphere_values() {
        let s = sphere(vec![0.0, 0.0]).unwrap();
        assert_eq!(s.eval(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(s.eval(&[3.0, 4.0]).unwrap(), 25.0);
        assert!(s.eval(&[1.0]).is_err());
    }

    #[test]
    fn rastrigin_values() {
        let r = rastrigin(vec![0.0], 1.0).unwrap();
        assert!((r.eval(&[0.5]).unwrap() - 20.25).abs() < 1e-12);
        let shifted = rastrigin(vec![0.3, -0.7], 2.0).unwrap();
        assert_eq!(shifted.eval(&[0.3, -0.7]).unwrap(), 0.0);
        assert!(rastrigin(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn sharpe_single_asset() {
        let stats = MarketStats::new(names(1), vec![0.1], vec![vec![0.04]], 0.0).unwrap();
        let l = neg_sharpe(stats, DEFAULT_VAR_FLOOR).unwrap();
        assert!((l.eval(&[1.0]).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn sharpe_equal_weight_pair() {
        let stats = MarketStats::new(names(2), vec![0.1, 0.1], diag(&[0.04, 0.04]), 0.0).unwrap();
        let c = sharpe_components(&stats, &[0.5, 0.5]).unwrap();
        assert!((c.ret - 0.1).abs() < 1e-15);
        assert!((c.risk - 0.141421356237).abs() < 1e-9);
        assert!((c.sharpe - 0.707106781187).abs() < 1e-9);
        let l = neg_sharpe(stats, DEFAULT_VAR_FLOOR).unwrap();
        assert!((l.eval(&[0.5, 0.5]).unwrap() + 0.70710678118654757).abs() < 1e-12);
    }

    #[test]
    fn zero_covariance_is_degenerate() {
        let stats = MarketStats::new(names(2), vec![0.1, 0.1], diag(&[0.0, 0.0]), 0.0).unwrap();
        let l = neg_sharpe(stats, DEFAULT_VAR_FLOOR).unwrap();
        assert!(matches!(l.eval(&[0.5, 0.5]), Err(Error::DegeneratePortfolio { .. })));
    }

    #[test]
    fn basis_vector_components() {
        let stats = example_market();
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            let c = sharpe_components(&stats, &e).unwrap();
            assert_eq!(c.ret, stats.mu[i]);
            assert_eq!(c.risk, stats.sigma[i][i].sqrt());
        }
    }

    #[test]
    fn rejects_invalid_covariance() {
        let asym = vec![vec![1.0, 0.5], vec![0.4, 1.0]];
        assert!(MarketStats::new(names(2), vec![0.0, 0.0], asym, 0.0).is_err());
        let indefinite = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(MarketStats::new(names(2), vec![0.0, 0.0], indefinite, 0.0).is_err());
        assert!(MarketStats::new(names(1), vec![0.0, 0.0], diag(&[1.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let stats = example_market();
        let objectives: Vec<Box<dyn Objective>> = vec![
            Box::new(sphere(vec![0.2, 0.5, -0.1]).unwrap()),
            Box::new(rastrigin(vec![0.1, 0.2, 0.3], 1.5).unwrap()),
            Box::new(neg_sharpe(stats, DEFAULT_VAR_FLOOR).unwrap()),
        ];
        let w = [0.3, 0.45, 0.25];
        let eps = 1e-6;
        for obj in &objectives {
            let g = obj.gradient(&w).unwrap().unwrap();
            for l in 0..3 {
                let mut plus = w;
                let mut minus = w;
                plus[l] += eps;
                minus[l] -= eps;
                let fd = (obj.eval(&plus).unwrap() - obj.eval(&minus).unwrap()) / (2.0 * eps);
                assert!((fd - g[l]).abs() <= 1e-6 * (1.0 + g[l].abs()), "{}", obj.descriptor());
            }
        }
    }

    proptest! {
        #[test]
        fn rastrigin_is_nonnegative(w in prop::collection::vec(-10.0f64..10.0, 1..8)) {
            let r = rastrigin(vec![0.5; w.len()], 1.3).unwrap();
            prop_assert!(r.eval(&w).unwrap() >= 0.0);
        }

        #[test]
        fn sharpe_identities(raw in prop::collection::vec(0.0f64..1.0, 3), c in 0.01f64..100.0) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let mut stats = example_market();
            stats.rf = 0.003;
            let comp = sharpe_components(&stats, &w).unwrap();
            prop_assert!((comp.sharpe * comp.risk + stats.rf - comp.ret).abs() <= 1e-12);
            let l = neg_sharpe(stats.clone(), DEFAULT_VAR_FLOOR).unwrap();
            prop_assert!((l.eval(&w).unwrap() + comp.sharpe).abs() <= 1e-14);

            stats.rf = 0.0;
            let scaled: Vec<f64> = w.iter().map(|x| c * x).collect();
            let a = sharpe_components(&stats, &w).unwrap().sharpe;
            let b = sharpe_components(&stats, &scaled).unwrap().sharpe;
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
