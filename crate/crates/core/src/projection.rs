//! Exact Euclidean projections onto closed convex sets.
//!
//! Every [`Projector`] describes a nonempty closed convex set and returns the
//! unique nearest point under the ℓ2 norm. Projections are pure and may be
//! called concurrently.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::vecops::{all_finite, norm};

/// Membership tolerance used by the solver's feasibility checks.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Projector {
    /// Probability simplex `{w : Σ w_i = 1, w_i ≥ 0}`.
    Simplex { dim: usize },
    /// Axis-aligned box `lo ≤ w ≤ hi`. Infinite bounds are allowed.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Closed Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
}

impl Projector {
    pub fn simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("simplex dimension must be at least 1"));
        }
        Ok(Projector::Simplex { dim })
    }

    pub fn bounds(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::config(format!(
                "box bounds have mismatched or zero length ({} vs {})",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() || l > h || *l == f64::INFINITY || *h == f64::NEG_INFINITY {
                return Err(Error::config(format!("box bound {i} is empty: [{l}, {h}]")));
            }
        }
        Ok(Projector::Box { lo, hi })
    }

    /// The whole space as a box with infinite bounds; projection is the identity.
    pub fn unbounded(dim: usize) -> Result<Self> {
        Self::bounds(vec![f64::NEG_INFINITY; dim], vec![f64::INFINITY; dim])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !all_finite(&center) {
            return Err(Error::config("ball center must be a nonempty finite vector"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::config(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Projector::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Projector::Simplex { dim } => *dim,
            Projector::Box { lo, .. } => lo.len(),
            Projector::Ball { center, .. } => center.len(),
        }
    }

    /// Short identifier of the set family.
    pub fn kind(&self) -> &'static str {
        match self {
            Projector::Simplex { .. } => "simplex",
            Projector::Box { .. } => "box",
            Projector::Ball { .. } => "ball",
        }
    }

    /// A canonical interior-ish point: simplex barycenter, box midpoint
    /// (zero along unbounded axes), ball center.
    pub fn anchor(&self) -> Vec<f64> {
        match self {
            Projector::Simplex { dim } => vec![1.0 / *dim as f64; *dim],
            Projector::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&l, &h)| match (l.is_finite(), h.is_finite()) {
                    (true, true) => 0.5 * (l + h),
                    (true, false) => l,
                    (false, true) => h,
                    (false, false) => 0.0,
                })
                .collect(),
            Projector::Ball { center, .. } => center.clone(),
        }
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = v.to_vec();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    pub fn project_in_place(&self, v: &mut [f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::config(format!(
                "vector of length {} passed to a {}-dimensional {} projector",
                v.len(),
                self.dim(),
                self.kind()
            )));
        }
        if !all_finite(v) {
            return Err(Error::NumericDomain("cannot project a non-finite vector".into()));
        }
        match self {
            Projector::Simplex { .. } => project_simplex(v),
            Projector::Box { lo, hi } => {
                for ((x, l), h) in v.iter_mut().zip(lo).zip(hi) {
                    *x = x.clamp(*l, *h);
                }
            }
            Projector::Ball { center, radius } => {
                let offset: Vec<f64> = v.iter().zip(center).map(|(x, c)| x - c).collect();
                let r = norm(&offset);
                if r > *radius {
                    let scale = radius / r;
                    for ((x, c), o) in v.iter_mut().zip(center).zip(&offset) {
                        *x = c + scale * o;
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether `v` satisfies the set's defining constraints within `tol`.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        if v.len() != self.dim() || !all_finite(v) {
            return false;
        }
        match self {
            Projector::Simplex { .. } => {
                let sum: f64 = v.iter().sum();
                (sum - 1.0).abs() <= tol && v.iter().all(|&x| x >= -tol)
            }
            Projector::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&x, (&l, &h))| x >= l - tol && x <= h + tol),
            Projector::Ball { center, radius } => {
                let r = crate::vecops::dist(v, center);
                r <= radius + tol
            }
        }
    }
}

/// Sort-and-threshold projection onto the probability simplex, O(d log d).
fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    // stable: equal entries keep index order
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

fn fmt_list(v: &[f64]) -> String {
    crate::vecops::format_vec(v, ";")
}

impl fmt::Display for Projector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Projector::Simplex { dim } => write!(f, "simplex:{dim}"),
            Projector::Box { lo, hi } => write!(f, "box:{},{}", fmt_list(lo), fmt_list(hi)),
            Projector::Ball { center, radius } => write!(f, "ball:{},{}", fmt_list(center), radius),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(';')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("invalid number '{t}' in projector spec")))
        })
        .collect()
}

impl FromStr for Projector {
    type Err = Error;

    /// Parses `simplex:d`, `box:lo1;..;lod,hi1;..;hid` or `ball:c1;..;cd,radius`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::config(format!("projector spec '{s}' lacks a ':'")))?;
        match kind.trim() {
            "simplex" => {
                let dim = rest
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::config(format!("invalid simplex dimension '{rest}'")))?;
                Projector::simplex(dim)
            }
            "box" => {
                let (lo, hi) = rest
                    .split_once(',')
                    .ok_or_else(|| Error::config("box spec must be 'box:lo,hi'"))?;
                Projector::bounds(parse_list(lo)?, parse_list(hi)?)
            }
            "ball" => {
                let (c, r) = rest
                    .split_once(',')
                    .ok_or_else(|| Error::config("ball spec must be 'ball:center,radius'"))?;
                let radius = r
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("invalid ball radius '{r}'")))?;
                Projector::ball(parse_list(c)?, radius)
            }
            other => Err(Error::config(format!("unknown projector kind '{other}'"))),
        }
    }
}
