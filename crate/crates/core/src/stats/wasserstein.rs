use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `∫ |F_a⁻¹(u) - F_b⁻¹(u)| du` between two empirical distributions.
///
/// Equal sizes reduce to the mean absolute difference of sorted samples.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("wasserstein distance of an empty sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(sorted_w1(&a, &b))
}

fn sorted_w1(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    }
    // merge the quantile breakpoints i/n and j/m
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i + 1) as f64 / n;
        let next_b = (j + 1) as f64 / m;
        let next = next_a.min(next_b);
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    total
}

/// Mean 1-D Wasserstein distance over `n_proj` random unit directions.
///
/// `a` and `b` are `[n, d]` point sets with the same `d`.
pub fn sliced_wasserstein<R: Rng + ?Sized>(
    a: &Tensor,
    b: &Tensor,
    n_proj: usize,
    rng: &mut R,
) -> Result<f64> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[1] {
        return Err(Error::Shape {
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    if a.is_empty() || b.is_empty() || n_proj == 0 {
        return Err(Error::invalid("sliced wasserstein needs points and projections"));
    }
    let d = a.shape()[1];
    let project = |x: &Tensor, dir: &[f64]| -> Vec<f64> {
        let mut p: Vec<f64> = (0..x.rows())
            .map(|i| x.row(i).iter().zip(dir).map(|(v, w)| v * w).sum())
            .collect();
        p.sort_by(f64::total_cmp);
        p
    };
    let mut total = 0.0;
    for _ in 0..n_proj {
        let mut dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        total += sorted_w1(&project(a, &dir), &project(b, &dir));
    }
    Ok(total / n_proj as f64)
}

/// [`sliced_wasserstein`] for 2-D point clouds.
pub fn sliced_wasserstein_2d<R: Rng + ?Sized>(
    a: &Tensor,
    b: &Tensor,
    n_proj: usize,
    rng: &mut R,
) -> Result<f64> {
    if a.shape().get(1) != Some(&2) {
        return Err(Error::Shape {
            expected: vec![a.rows(), 2],
            got: a.shape().to_vec(),
        });
    }
    sliced_wasserstein(a, b, n_proj, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};

    #[test]
    fn identical_and_point_masses() {
        let a = [0.3, -1.0, 2.0];
        assert_eq!(wasserstein_1d(&a, &a).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        // unequal sizes: {0} vs {0, 2} moves half the mass by 2
        assert!((wasserstein_1d(&[0.0], &[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mean_shifted_normals() {
        let mut rng = stream(1, domain::VERIFY, 0);
        let n = 100_000;
        let a: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..n).map(|_| 2.0 + rng.sample::<f64, _>(StandardNormal)).collect();
        let w = wasserstein_1d(&a, &b).unwrap();
        assert!((w - 2.0).abs() < 0.02, "{w}");
    }

    #[test]
    fn sliced_distance_of_shifted_cloud() {
        let mut rng = stream(2, domain::VERIFY, 0);
        let n = 20_000;
        let mut pa = Vec::with_capacity(2 * n);
        let mut pb = Vec::with_capacity(2 * n);
        for _ in 0..n {
            pa.push(rng.sample::<f64, _>(StandardNormal));
            pa.push(rng.sample::<f64, _>(StandardNormal));
            pb.push(rng.sample::<f64, _>(StandardNormal) + 1.0);
            pb.push(rng.sample::<f64, _>(StandardNormal));
        }
        let a = Tensor::new(pa, vec![n, 2]).unwrap();
        let b = Tensor::new(pb, vec![n, 2]).unwrap();
        assert_eq!(sliced_wasserstein_2d(&a, &a, 16, &mut rng).unwrap(), 0.0);
        // E|cos U| over uniform directions = 2/π
        let w = sliced_wasserstein_2d(&a, &b, 400, &mut rng).unwrap();
        assert!((w - 2.0 / std::f64::consts::PI).abs() < 0.05, "{w}");
    }
}
