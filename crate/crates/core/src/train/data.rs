//! Toy datasets. Point sets are standardized to zero mean and unit variance
//! per coordinate; images are scaled to `[-1, 1]`.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::idx::IdxImages;
use crate::error::{Error, Result};
use crate::rng::{domain, stream};
use crate::tensor::Tensor;

fn default_radius() -> f64 {
    4.0
}

fn default_ring_sigma() -> f64 {
    0.1
}

fn default_roll_noise() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Eight Gaussians evenly spaced on a circle.
    Ring8 {
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_ring_sigma")]
        sigma: f64,
    },
    SwissRoll {
        #[serde(default = "default_roll_noise")]
        noise: f64,
    },
    /// Uniform over the dark cells of a 4x4 board on `[-2, 2]²`.
    Checkerboard {},
    /// Procedural 8x8 binary shapes.
    #[serde(rename = "glyphs8x8")]
    Glyphs8x8 {},
    /// Fixed points, each drawn with equal probability. Not standardized.
    Points { points: Vec<Vec<f64>> },
    /// IDX unsigned-byte images.
    File { path: PathBuf },
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Ring8 { .. } => "ring8",
            DatasetSpec::SwissRoll { .. } => "swiss_roll",
            DatasetSpec::Checkerboard {} => "checkerboard",
            DatasetSpec::Glyphs8x8 {} => "glyphs8x8",
            DatasetSpec::Points { .. } => "points",
            DatasetSpec::File { .. } => "file",
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, DatasetSpec::Glyphs8x8 {} | DatasetSpec::File { .. })
    }
}

const GLYPHS: [[&str; 8]; 8] = [
    ["........", ".######.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".######.", "........"],
    ["........", "...##...", "...##...", ".######.", ".######.", "...##...", "...##...", "........"],
    ["........", ".#....#.", "..#..#..", "...##...", "...##...", "..#..#..", ".#....#.", "........"],
    ["........", "........", "........", ".######.", ".######.", "........", "........", "........"],
    ["........", "...##...", "...##...", "...##...", "...##...", "...##...", "...##...", "........"],
    ["........", "..####..", ".#....#.", ".#....#.", ".#....#.", ".#....#.", "..####..", "........"],
    ["........", "...#....", "..###...", ".#####..", "#######.", "........", "........", "........"],
    ["........", ".#......", "..#.....", "...#....", "....#...", ".....#..", "......#.", "........"],
];

#[derive(Debug, Clone)]
enum Source {
    Ring { radius: f64, sigma: f64 },
    SwissRoll { noise: f64, mean: [f64; 2], std: [f64; 2] },
    Checkerboard,
    Glyphs,
    Points(Vec<Vec<f64>>),
    Images(IdxImages),
}

/// A seeded sampler of `x_0` batches.
#[derive(Debug, Clone)]
pub struct Dataset {
    spec: DatasetSpec,
    source: Source,
    shape: Vec<usize>,
}

impl Dataset {
    pub fn new(spec: DatasetSpec) -> Result<Self> {
        let (source, shape) = match &spec {
            DatasetSpec::Ring8 { radius, sigma } => {
                if !(*radius > 0.0 && *sigma >= 0.0 && radius.is_finite() && sigma.is_finite()) {
                    return Err(Error::Config(format!("ring8 needs radius > 0 and sigma >= 0, got {radius}, {sigma}")));
                }
                (Source::Ring { radius: *radius, sigma: *sigma }, vec![2])
            }
            DatasetSpec::SwissRoll { noise } => {
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return Err(Error::Config(format!("swiss_roll noise must be >= 0, got {noise}")));
                }
                let (mean, std) = calibrate_roll(*noise);
                (Source::SwissRoll { noise: *noise, mean, std }, vec![2])
            }
            DatasetSpec::Checkerboard {} => (Source::Checkerboard, vec![2]),
            DatasetSpec::Glyphs8x8 {} => (Source::Glyphs, vec![8, 8]),
            DatasetSpec::Points { points } => {
                let d = points.first().map_or(0, Vec::len);
                if d == 0 || points.iter().any(|p| p.len() != d || p.iter().any(|v| !v.is_finite())) {
                    return Err(Error::Config("points must be non-empty finite rows of equal length".into()));
                }
                (Source::Points(points.clone()), vec![d])
            }
            DatasetSpec::File { path } => {
                let img = IdxImages::read(path)?;
                if img.dims.len() < 2 {
                    return Err(Error::Config(format!("{} holds no items", path.display())));
                }
                let shape = img.item_shape().to_vec();
                (Source::Images(img), shape)
            }
        };
        Ok(Self { spec, source, shape })
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    pub fn data_shape(&self) -> &[usize] {
        &self.shape
    }

    /// Ring mode centers in standardized coordinates, with the per-mode
    /// standard deviation.
    pub fn ring_modes(&self) -> Option<(Vec<[f64; 2]>, f64)> {
        let Source::Ring { radius, sigma } = self.source else {
            return None;
        };
        let s = ring_scale(radius, sigma);
        let centers = (0..8)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / 8.0;
                [radius * a.cos() / s, radius * a.sin() / s]
            })
            .collect();
        Some((centers, sigma / s))
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let w: usize = self.shape.iter().product();
        let mut data = Vec::with_capacity(n * w);
        for _ in 0..n {
            match &self.source {
                Source::Ring { radius, sigma } => {
                    let s = ring_scale(*radius, *sigma);
                    let a = 2.0 * PI * rng.random_range(0..8) as f64 / 8.0;
                    for c in [a.cos(), a.sin()] {
                        let z: f64 = StandardNormal.sample(rng);
                        data.push((radius * c + sigma * z) / s);
                    }
                }
                Source::SwissRoll { noise, mean, std } => {
                    let p = roll_point(*noise, rng);
                    data.extend((0..2).map(|k| (p[k] - mean[k]) / std[k]));
                }
                Source::Checkerboard => {
                    let [x, y] = checkerboard_point(rng);
                    let s = (4.0f64 / 3.0).sqrt();
                    data.extend([x / s, y / s]);
                }
                Source::Glyphs => data.extend(glyph(rng)),
                Source::Points(points) => data.extend(&points[rng.random_range(0..points.len())]),
                Source::Images(img) => {
                    let i = rng.random_range(0..img.count());
                    data.extend(img.item(i).iter().map(|&p| p as f64 / 127.5 - 1.0));
                }
            }
        }
        let mut shape = vec![n];
        shape.extend(&self.shape);
        Tensor::from_parts(data, shape)
    }
}

fn ring_scale(radius: f64, sigma: f64) -> f64 {
    (radius * radius / 2.0 + sigma * sigma).sqrt()
}

fn roll_point<R: Rng + ?Sized>(noise: f64, rng: &mut R) -> [f64; 2] {
    let t = rng.random_range(1.5 * PI..4.5 * PI);
    let zx: f64 = StandardNormal.sample(rng);
    let zy: f64 = StandardNormal.sample(rng);
    [t * t.cos() + noise * zx, t * t.sin() + noise * zy]
}

fn calibrate_roll(noise: f64) -> ([f64; 2], [f64; 2]) {
    let mut rng = stream(0, domain::DATA, u64::MAX);
    let n = 1 << 16;
    let pts: Vec<[f64; 2]> = (0..n).map(|_| roll_point(noise, &mut rng)).collect();
    let mut mean = [0.0; 2];
    let mut std = [0.0; 2];
    for k in 0..2 {
        mean[k] = pts.iter().map(|p| p[k]).sum::<f64>() / n as f64;
        std[k] = (pts.iter().map(|p| (p[k] - mean[k]).powi(2)).sum::<f64>() / n as f64).sqrt();
    }
    (mean, std)
}

/// Cell `(i, j)` with `i = ⌊x + 2⌋`, `j = ⌊y + 2⌋` is dark when `i + j` is even.
pub fn checkerboard_point<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
    let cell = rng.random_range(0..8);
    let i = cell / 2;
    let j = 2 * (cell % 2) + i % 2;
    [
        i as f64 + rng.random_range(0.0..1.0) - 2.0,
        j as f64 + rng.random_range(0.0..1.0) - 2.0,
    ]
}

fn glyph<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    let g = &GLYPHS[rng.random_range(0..GLYPHS.len())];
    let dx = rng.random_range(-1i32..=1);
    let dy = rng.random_range(-1i32..=1);
    let mut out = vec![-1.0; 64];
    for (r, row) in g.iter().enumerate() {
        for (c, ch) in row.bytes().enumerate() {
            let (rr, cc) = (r as i32 + dy, c as i32 + dx);
            if ch == b'#' && (0..8).contains(&rr) && (0..8).contains(&cc) {
                out[(rr * 8 + cc) as usize] = 1.0;
            }
        }
    }
    out
}
