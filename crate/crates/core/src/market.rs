//! Price ingestion, log returns, moment estimation, synthetic markets and
//! Monte Carlo sampling of the risk/return cloud.
//!
//! All quantities are per period (one row of the price table); nothing is
//! annualized.

use std::io::Write;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{sharpe_components, MarketStats};
use crate::vecops::format_vec;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Samples per independently seeded chunk in [`sample_frontier`].
const FRONTIER_CHUNK: usize = 4096;

/// Closing prices, one row per date and one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub dates: Vec<String>,
    pub prices: Vec<Vec<f64>>,
    pub asset_names: Vec<String>,
}

impl PriceSeries {
    pub fn n_assets(&self) -> usize {
        self.asset_names.len()
    }

    pub fn n_periods(&self) -> usize {
        self.prices.len()
    }

    /// Writes `date,NAME1,...,NAMEd` CSV with full-precision prices.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "date,{}", self.asset_names.join(","))?;
        for (date, row) in self.dates.iter().zip(&self.prices) {
            writeln!(out, "{date},{}", format_vec(row, ","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

/// Log returns `ln(S_{t+1}/S_t)`, one row fewer than the source prices.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsSeries {
    pub returns: Vec<Vec<f64>>,
    pub asset_names: Vec<String>,
}

/// Parses a `date,NAME1,...,NAMEd` price table.
///
/// Rows may appear in any order and are sorted by date. Row numbers in
/// errors are file line numbers, with the header on row 1.
pub fn parse_prices(text: &str) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::Ingestion { row: 1, message: e.to_string() })?,
        None => return Err(Error::Ingestion { row: 1, message: "empty file".into() }),
    };
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(Error::Ingestion {
            row: 1,
            message: "header must be 'date,NAME1,...,NAMEd'".into(),
        });
    }
    let asset_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let d = asset_names.len();

    let mut rows: Vec<(NaiveDate, usize, Vec<f64>)> = Vec::new();
    for (idx, record) in records.enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| Error::Ingestion { row, message: e.to_string() })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != d + 1 {
            return Err(Error::Ingestion {
                row,
                message: format!("expected {} fields, found {}", d + 1, record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT).map_err(|_| Error::Ingestion {
            row,
            message: format!("invalid ISO-8601 date '{}'", &record[0]),
        })?;
        let mut prices = Vec::with_capacity(d);
        for (field, name) in record.iter().skip(1).zip(&asset_names) {
            let p: f64 = field.parse().map_err(|_| Error::Ingestion {
                row,
                message: format!("unparsable price '{field}' for {name}"),
            })?;
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Ingestion {
                    row,
                    message: format!("price for {name} must be positive and finite, got {field}"),
                });
            }
            prices.push(p);
        }
        rows.push((date, row, prices));
    }

    rows.sort_by_key(|(date, _, _)| *date);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            let row = pair[0].1.max(pair[1].1);
            return Err(Error::Ingestion {
                row,
                message: format!("duplicate date {}", pair[1].0.format(DATE_FORMAT)),
            });
        }
    }
    if rows.len() < 2 {
        return Err(Error::Ingestion {
            row: rows.len() + 2,
            message: format!("need at least 2 price rows, found {}", rows.len()),
        });
    }
    let dates = rows.iter().map(|(date, _, _)| date.format(DATE_FORMAT).to_string()).collect();
    let prices = rows.into_iter().map(|(_, _, p)| p).collect();
    Ok(PriceSeries { dates, prices, asset_names })
}

/// Rescales each column so that its first entry equals `base`.
pub fn normalize_prices(series: &PriceSeries, base: f64) -> Result<PriceSeries> {
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::config(format!("normalization base must be positive, got {base}")));
    }
    let factors: Vec<f64> = series.prices[0].iter().map(|p| base / p).collect();
    let prices = series
        .prices
        .iter()
        .map(|row| row.iter().zip(&factors).map(|(p, f)| p * f).collect())
        .collect();
    Ok(PriceSeries { prices, ..series.clone() })
}

pub fn log_returns(series: &PriceSeries) -> ReturnsSeries {
    let returns = series
        .prices
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(next, prev)| (next / prev).ln()).collect())
        .collect();
    ReturnsSeries { returns, asset_names: series.asset_names.clone() }
}

/// Sample mean and unbiased sample covariance of the return rows.
///
/// With fewer than `d + 1` rows the covariance is rank deficient; that is
/// allowed here, and callers decide whether to warn.
pub fn estimate_stats(returns: &ReturnsSeries, rf: f64) -> Result<MarketStats> {
    let rows = &returns.returns;
    let d = returns.asset_names.len();
    if rows.len() < 2 {
        return Err(Error::Estimation(format!(
            "need at least 2 return rows, found {}",
            rows.len()
        )));
    }
    let t = rows.len() as f64;
    let mut mu = vec![0.0; d];
    for r in rows {
        for (m, x) in mu.iter_mut().zip(r) {
            *m += x;
        }
    }
    for m in &mut mu {
        *m /= t;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mu[i];
            for j in 0..d {
                cov[i][j] += di * (r[j] - mu[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            cov[i][j] /= t - 1.0;
        }
    }
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (cov[i][j] + cov[j][i]);
            cov[i][j] = avg;
            cov[j][i] = avg;
        }
    }
    MarketStats::new(returns.asset_names.clone(), mu, cov, rf)
}

/// Lower-triangular factor of a positive semidefinite matrix. Zero pivots
/// are allowed as long as the rest of their column vanishes too.
pub(crate) fn psd_cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = a.len();
    let scale = (0..d).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut l = vec![vec![0.0; d]; d];
    for j in 0..d {
        if a[j].len() != d {
            return Err(Error::config("covariance matrix is not square"));
        }
        let pivot = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if pivot < -tol {
            return Err(Error::config(format!(
                "covariance is not positive semidefinite (pivot {pivot:e} at {j})"
            )));
        }
        let diag = if pivot > tol { pivot.sqrt() } else { 0.0 };
        l[j][j] = diag;
        for i in j + 1..d {
            let rest = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if diag == 0.0 {
                if rest.abs() > tol.sqrt() * scale.sqrt() {
                    return Err(Error::config(format!(
                        "covariance is not positive semidefinite (column {j})"
                    )));
                }
            } else {
                l[i][j] = rest / diag;
            }
        }
    }
    Ok(l)
}

/// Geometric-Brownian-style prices: `S_0 = 100` and i.i.d. Gaussian log
/// increments with mean `mu_true` and covariance `sigma_true`. `periods` is
/// the number of price rows.
pub fn synthetic_market(
    seed: u64,
    dim: usize,
    periods: usize,
    mu_true: &[f64],
    sigma_true: &[Vec<f64>],
) -> Result<PriceSeries> {
    if dim == 0 || mu_true.len() != dim || sigma_true.len() != dim {
        return Err(Error::config(format!(
            "synthetic market needs a {dim}-vector mean and a {dim}×{dim} covariance"
        )));
    }
    if periods < 2 {
        return Err(Error::config("synthetic market needs at least 2 periods"));
    }
    let chol = psd_cholesky(sigma_true)?;
    let start = NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prices = Vec::with_capacity(periods);
    let mut current = vec![100.0; dim];
    prices.push(current.clone());
    let mut z = vec![0.0; dim];
    for _ in 1..periods {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..dim {
            let shock: f64 = (0..=i).map(|k| chol[i][k] * z[k]).sum();
            current[i] *= (mu_true[i] + shock).exp();
        }
        prices.push(current.clone());
    }
    let dates = (0..periods)
        .map(|t| {
            start
                .checked_add_days(Days::new(t as u64))
                .expect("date in range")
                .format(DATE_FORMAT)
                .to_string()
        })
        .collect();
    let asset_names = (1..=dim).map(|i| format!("S{i}")).collect();
    Ok(PriceSeries { dates, prices, asset_names })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierSample {
    pub weights: Vec<f64>,
    pub ret: f64,
    pub risk: f64,
    pub sharpe: f64,
}

/// Randomly sampled portfolios scored in risk/return space.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrontierCloud {
    pub dim: usize,
    pub samples: Vec<FrontierSample>,
}

impl FrontierCloud {
    pub fn csv_header(dim: usize) -> String {
        let mut cols = vec!["risk".to_string(), "ret".into(), "sharpe".into()];
        cols.extend((1..=dim).map(|i| format!("w{i}")));
        cols.join(",")
    }

    /// Writes `risk,ret,sharpe,w1,...,wd` CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::csv_header(self.dim))?;
        for s in &self.samples {
            writeln!(out, "{},{},{},{}", s.risk, s.ret, s.sharpe, format_vec(&s.weights, ","))?;
        }
        Ok(())
    }

    pub fn max_sharpe(&self) -> Option<&FrontierSample> {
        self.samples.iter().max_by(|a, b| a.sharpe.total_cmp(&b.sharpe))
    }
}

/// Uniform point on the simplex from normalized Exp(1) spacings.
pub fn uniform_simplex_point<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

/// Draws `m` portfolios uniformly on the simplex and scores each one.
///
/// Sampling is split into fixed-size chunks, each with its own stream of
/// the seeded generator, so the output does not depend on thread count.
pub fn sample_frontier(stats: &MarketStats, m: usize, seed: u64) -> Result<FrontierCloud> {
    let dim = stats.dim();
    let chunks = m.div_ceil(FRONTIER_CHUNK);
    let parts: Vec<Result<Vec<FrontierSample>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = FRONTIER_CHUNK.min(m - c * FRONTIER_CHUNK);
            (0..count)
                .map(|_| {
                    let weights = uniform_simplex_point(&mut rng, dim);
                    let c = sharpe_components(stats, &weights)?;
                    Ok(FrontierSample { weights, ret: c.ret, risk: c.risk, sharpe: c.sharpe })
                })
                .collect()
        })
        .collect();
    let mut samples = Vec::with_capacity(m);
    for part in parts {
        samples.extend(part?);
    }
    Ok(FrontierCloud { dim, samples })
}

/// Capital Market Line through `(0, rf)` and the tangency portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapitalMarketLine {
    pub intercept: f64,
    pub slope: f64,
}

impl CapitalMarketLine {
    pub fn at(&self, risk: f64) -> f64 {
        self.intercept + self.slope * risk
    }
}

pub fn cml(rf: f64, tangency_risk: f64, tangency_ret: f64) -> Result<CapitalMarketLine> {
    if !(tangency_risk > 0.0) {
        return Err(Error::DegeneratePortfolio { variance: tangency_risk * tangency_risk, floor: 0.0 });
    }
    Ok(CapitalMarketLine { intercept: rf, slope: (tangency_ret - rf) / tangency_risk })
}
