//! Small deterministic statistics helpers.

use rayon::prelude::*;

/// Sample mean and standard error of the mean, summed in index order.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Running sums that merge deterministically when combined in a fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        let n = self.n as f64;
        let mean = self.mean();
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Paths are reduced in fixed chunks of this many, merged in chunk order, so
/// sums do not depend on the worker count.
pub const CHUNK: usize = 4096;

/// Moments of `f(0), …, f(count − 1)`.
pub fn chunked_moments(count: usize, f: impl Fn(usize) -> f64 + Sync) -> Moments {
    chunked_vec_moments(count, 1, |i| vec![f(i)])[0]
}

/// Moments of each coordinate of `f(i) ∈ ℝ^width`.
pub fn chunked_vec_moments(count: usize, width: usize, f: impl Fn(usize) -> Vec<f64> + Sync) -> Vec<Moments> {
    let parts: Vec<Vec<Moments>> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut m = vec![Moments::default(); width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                for (mj, x) in m.iter_mut().zip(f(i)) {
                    mj.push(x);
                }
            }
            m
        })
        .collect();
    let mut total = vec![Moments::default(); width];
    for p in &parts {
        total.iter_mut().zip(p).for_each(|(t, q)| t.merge(q));
    }
    total
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Least squares for `y ≈ c0 + c1 x1 + c2 x2` via the normal equations.
pub fn fit_two(x1: &[f64], x2: &[f64], y: &[f64]) -> [f64; 3] {
    let mut a = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    for ((u, v), w) in x1.iter().zip(x2).zip(y) {
        let row = [1.0, *u, *v];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            r[i] += row[i] * w;
        }
    }
    solve3(a, r)
}

fn solve3(mut a: [[f64; 3]; 3], mut r: [f64; 3]) -> [f64; 3] {
    for c in 0..3 {
        let p = (c..3)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        r.swap(c, p);
        for i in c + 1..3 {
            let f = a[i][c] / a[c][c];
            let pivot = a[c];
            for (v, p) in a[i][c..].iter_mut().zip(&pivot[c..]) {
                *v -= f * p;
            }
            r[i] -= f * r[c];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|j| a[i][j] * x[j]).sum();
        x[i] = (r[i] - s) / a[i][i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_recover_coefficients() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y) - 1.5).abs() < 1e-12);
        let x2 = [0.5, -1.0, 2.0, 0.0];
        let y: Vec<f64> = x.iter().zip(&x2).map(|(a, b)| 1.0 + 2.0 * a - 3.0 * b).collect();
        let c = fit_two(&x, &x2, &y);
        assert!((c[0] - 1.0).abs() < 1e-10 && (c[1] - 2.0).abs() < 1e-10 && (c[2] + 3.0).abs() < 1e-10);
    }

    #[test]
    fn moments_match_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 0.25];
        let mut m = Moments::default();
        xs.iter().for_each(|x| m.push(*x));
        let (mean, se) = mean_se(&xs);
        assert!((m.mean() - mean).abs() < 1e-14);
        assert!((m.se() - se).abs() < 1e-12);
    }
}
