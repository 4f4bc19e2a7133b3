//! Independent reference implementations shared by the integration and
//! acceptance tests. Nothing here calls into the library's numerics.

#![allow(dead_code)]

use rhpi::controller::Objective;
use rhpi::dynamics::{AccelDist, AccelModel, QuadState, Vec3};
use rhpi::Result;

/// Direct evaluation of the receptive-field blend for a model given as
/// plain arrays: centers, row-major metrics, affine coefficients (offset
/// first, slopes relative to the center) and local variances.
pub struct RefField {
    pub center: Vec<f64>,
    pub metric: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub variance: f64,
}

pub fn reference_predict(fields: &[RefField], x: &[f64]) -> (f64, f64) {
    let d = x.len();
    let mut kernels = Vec::new();
    for f in fields {
        let mut q = 0.0;
        for r in 0..d {
            for c in 0..d {
                q += (x[r] - f.center[r]) * f.metric[r * d + c] * (x[c] - f.center[c]);
            }
        }
        kernels.push(-0.5 * q);
    }
    // shift by the largest exponent so far-away queries do not underflow
    let top = kernels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = kernels.iter().map(|k| (k - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    let local: Vec<f64> = fields
        .iter()
        .map(|f| f.coefficients[0] + (0..d).map(|i| f.coefficients[i + 1] * (x[i] - f.center[i])).sum::<f64>())
        .collect();
    let mean: f64 = raw.iter().zip(&local).map(|(w, y)| w / total * y).sum();
    let var: f64 =
        raw.iter().zip(&local).zip(fields).map(|((w, y), f)| w / total * ((mean - y).powi(2) + f.variance)).sum();
    (mean, var)
}

/// Ordinary least squares for `y = a + b x` on scalar data.
pub fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Softmax over negated costs, written out longhand.
pub fn reference_weights(costs: &[f64], temperature: f64) -> Vec<f64> {
    let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = costs.iter().map(|c| (-(c - min) / temperature).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Acceleration model whose x acceleration is `±step` with equal
/// probability (the sign of the supplied normal draw); y and z are zero.
pub struct TwoPointModel {
    pub step: f64,
}

impl AccelModel for TwoPointModel {
    fn accel(&self, _: &Vec3, _: f64) -> Result<AccelDist> {
        Ok(AccelDist { mean: [0.0; 3], variance: [self.step * self.step, 0.0, 0.0] })
    }

    fn draw(&self, dist: &AccelDist, normals: &Vec3) -> Vec3 {
        let s = if normals[0] >= 0.0 { 1.0 } else { -1.0 };
        [dist.mean[0] + s * self.step, 0.0, 0.0]
    }
}

/// Indicator of the x position exceeding a threshold.
pub struct Beyond {
    pub threshold: f64,
}

impl Objective for Beyond {
    fn stage_cost(&self, s: &QuadState, _: bool) -> f64 {
        if s.position[0] > self.threshold {
            1.0
        } else {
            0.0
        }
    }

    fn is_crash(&self, _: &QuadState) -> bool {
        false
    }
}

/// Exact expected cost-to-go from rest for [`TwoPointModel`] and
/// [`Beyond`] with the threshold at half a lattice unit, by enumerating
/// all `2^steps` sign sequences in integer arithmetic (position in units
/// of `step·dt²`, velocity in units of `step·dt`), together with the
/// exact variance of a single sample.
pub fn two_point_expectation(steps: usize, dt: f64) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let total = 1u64 << steps;
    for pattern in 0..total {
        let (mut x, mut v) = (0i64, 0i64);
        let mut hits = 0u32;
        for i in 0..steps {
            let s = if pattern >> i & 1 == 1 { 1 } else { -1 };
            x += v;
            v += s;
            if x >= 1 {
                hits += 1;
            }
        }
        let cost = hits as f64 * dt;
        sum += cost;
        sum_sq += cost * cost;
    }
    let mean = sum / total as f64;
    (mean, sum_sq / total as f64 - mean * mean)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Spearman rank correlation (no tie correction; ties get their average
/// rank).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, _) = mean_std(&ra);
    let (mb, _) = mean_std(&rb);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
