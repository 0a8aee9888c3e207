//! Small dense-vector helpers shared across modules.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

#[cfg(test)]
pub fn linf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Arithmetic mean of the rows of a row-major `rows × dim` buffer.
pub fn row_mean(data: &[f64], dim: usize) -> Vec<f64> {
    let rows = data.len() / dim;
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= rows as f64;
    }
    mean
}

/// Mean of `‖x_i − x_j‖²` over unordered pairs `i < j`, via the identity
/// `Σ_{i<j} ‖x_i − x_j‖² = N Σ_i ‖x_i − x̄‖²`.
pub fn mean_pairwise_sq_dist(data: &[f64], dim: usize) -> f64 {
    let rows = data.len() / dim;
    if rows < 2 {
        return 0.0;
    }
    // centered on the first row so coincident rows give exactly zero
    let first = &data[..dim];
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for ((m, x), f) in mean.iter_mut().zip(row).zip(first) {
            *m += x - f;
        }
    }
    for m in &mut mean {
        *m /= rows as f64;
    }
    let spread: f64 = data
        .chunks_exact(dim)
        .map(|row| row.iter().zip(first).zip(&mean).map(|((x, f), m)| (x - f - m).powi(2)).sum::<f64>())
        .sum();
    2.0 * spread / (rows as f64 - 1.0)
}

pub fn format_vec(v: &[f64], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_identity_matches_brute_force() {
        let data = [0.0, 1.0, 2.0, -1.0, 0.5, 0.5, 3.0, 3.0];
        let dim = 2;
        let rows: Vec<&[f64]> = data.chunks(dim).collect();
        let mut total = 0.0;
        let mut pairs = 0;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                total += sq_dist(rows[i], rows[j]);
                pairs += 1;
            }
        }
        let brute = total / pairs as f64;
        assert!((mean_pairwise_sq_dist(&data, dim) - brute).abs() < 1e-12);
    }
}
