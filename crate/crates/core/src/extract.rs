//! Palette extraction from raster pixels.
//!
//! Pixels are reduced to an exact color histogram (sorted, so the result does
//! not depend on pixel order), subsampled to at most [`MAX_SAMPLES`] pixels
//! when the histogram is large, and clustered with weighted k-means in
//! CIELAB. Each cluster is represented by its member color nearest the
//! centroid. Clusters closer than ΔE 10 are merged into the heavier one and
//! the survivors are ordered by pixel weight.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::color::{Color, LabColor};
use crate::document::{Palette, MAX_PALETTE_LEN, MIN_PALETTE_DELTA_E};

pub const MAX_SAMPLES: u64 = 10_000;
const KMEANS_SEED: u64 = 0x00c0_10e5;
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("pixel grid is empty")]
    EmptyImage,
    #[error("max_colors must be between 1 and {MAX_PALETTE_LEN}, got {0}")]
    InvalidMaxColors(usize),
    #[error("pixel buffer holds {got} pixels, expected {width}×{height}")]
    Shape { width: usize, height: usize, got: usize },
    #[error("decoding image {path}: {message}")]
    Decode { path: String, message: String },
}

/// A row-major grid of opaque pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelGrid {
    width: usize,
    height: usize,
    pixels: Vec<Color>,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize, pixels: Vec<Color>) -> Result<Self, ExtractError> {
        if pixels.len() != width * height {
            return Err(ExtractError::Shape {
                width,
                height,
                got: pixels.len(),
            });
        }
        Ok(PixelGrid { width, height, pixels })
    }

    /// Decodes a PNG or BMP file. Alpha is dropped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ExtractError> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| ExtractError::Decode {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| Color::new(p[0], p[1], p[2])).collect();
        PixelGrid::new(w as usize, h as usize, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Color] {
        &self.pixels
    }
}

struct Point {
    color: Color,
    lab: LabColor,
    weight: f64,
}

fn histogram(pixels: &[Color]) -> BTreeMap<Color, u64> {
    let mut hist = BTreeMap::new();
    for &p in pixels {
        *hist.entry(p).or_insert(0u64) += 1;
    }
    hist
}

/// Draws `MAX_SAMPLES` pixels with replacement from the sorted histogram.
fn subsample(hist: &BTreeMap<Color, u64>, total: u64, rng: &mut ChaCha8Rng) -> BTreeMap<Color, u64> {
    let cumulative: Vec<(u64, Color)> = hist
        .iter()
        .scan(0u64, |acc, (c, n)| {
            *acc += n;
            Some((*acc, *c))
        })
        .collect();
    let mut out = BTreeMap::new();
    for _ in 0..MAX_SAMPLES {
        let target = rng.random_range(0..total);
        let idx = cumulative.partition_point(|(cum, _)| *cum <= target);
        *out.entry(cumulative[idx].1).or_insert(0) += 1;
    }
    out
}

fn kmeans_plus_plus(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<LabColor> {
    let pick = |weights: &[f64], rng: &mut ChaCha8Rng| -> usize {
        let total: f64 = weights.iter().sum();
        let mut target = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                if target < *w {
                    return i;
                }
                target -= w;
            }
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    };

    let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let mut centers = vec![points[pick(&weights, rng)].lab];
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                let d = centers.iter().map(|c| p.lab.delta_e(*c)).fold(f64::INFINITY, f64::min);
                p.weight * d * d
            })
            .collect();
        if d2.iter().all(|d| *d == 0.0) {
            break;
        }
        centers.push(points[pick(&d2, rng)].lab);
    }
    centers
}

fn nearest(lab: LabColor, centers: &[LabColor]) -> usize {
    centers
        .iter()
        .enumerate()
        .map(|(i, c)| (i, lab.delta_e(*c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Returns `(representative color, weight)` per non-empty cluster.
fn weighted_kmeans(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<(Color, f64)> {
    let mut centers = kmeans_plus_plus(points, k, rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p.lab, &centers)).collect();

    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![(0.0, 0.0, 0.0, 0.0); centers.len()];
        for (p, &c) in points.iter().zip(&assignment) {
            let s = &mut sums[c];
            s.0 += p.weight * p.lab.l;
            s.1 += p.weight * p.lab.a;
            s.2 += p.weight * p.lab.b;
            s.3 += p.weight;
        }
        for (center, (l, a, b, w)) in centers.iter_mut().zip(sums) {
            if w > 0.0 {
                *center = LabColor::new(l / w, a / w, b / w);
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p.lab, &centers)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }

    (0..centers.len())
        .filter_map(|c| {
            let members = points.iter().zip(&assignment).filter(|(_, a)| **a == c);
            let mut weight = 0.0;
            let mut best: Option<(Color, f64)> = None;
            for (p, _) in members {
                weight += p.weight;
                let d = p.lab.delta_e(centers[c]);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((p.color, d));
                }
            }
            best.map(|(color, _)| (color, weight))
        })
        .collect()
}

/// Extracts up to `max_colors` colors, heaviest first, pairwise ΔE ≥ 10.
pub fn extract_palette(grid: &PixelGrid, max_colors: usize) -> Result<Palette, ExtractError> {
    if !(1..=MAX_PALETTE_LEN).contains(&max_colors) {
        return Err(ExtractError::InvalidMaxColors(max_colors));
    }
    if grid.pixels.is_empty() {
        return Err(ExtractError::EmptyImage);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(KMEANS_SEED);
    let mut hist = histogram(&grid.pixels);
    let total = grid.pixels.len() as u64;
    if total > MAX_SAMPLES && hist.len() as u64 > MAX_SAMPLES {
        hist = subsample(&hist, total, &mut rng);
    }
    let points: Vec<Point> = hist
        .into_iter()
        .map(|(color, n)| Point {
            color,
            lab: color.to_lab(),
            weight: n as f64,
        })
        .collect();

    let k = max_colors.min(points.len());
    let mut clusters = weighted_kmeans(&points, k, &mut rng);
    clusters.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut kept: Vec<(Color, LabColor, f64)> = Vec::new();
    for (color, weight) in clusters {
        let lab = color.to_lab();
        let close = kept
            .iter_mut()
            .map(|k| {
                let d = k.1.delta_e(lab);
                (k, d)
            })
            .filter(|(_, d)| *d < MIN_PALETTE_DELTA_E)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match close {
            Some((k, _)) => k.2 += weight,
            None => kept.push((color, lab, weight)),
        }
    }
    kept.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));

    Ok(Palette::from_colors(kept.into_iter().map(|(c, _, _)| c)).expect("1..=5 colors"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_of(runs: &[(Color, usize)]) -> PixelGrid {
        let pixels: Vec<Color> = runs.iter().flat_map(|(c, n)| std::iter::repeat_n(*c, *n)).collect();
        PixelGrid::new(pixels.len(), 1, pixels).unwrap()
    }

    #[test]
    fn uniform_image_gives_single_color() {
        let c = Color::new(12, 200, 99);
        let p = extract_palette(&grid_of(&[(c, 64)]), 5).unwrap();
        assert_eq!(p.colors().unwrap(), [c]);
    }

    #[test]
    fn close_colors_merge_into_heavier() {
        let a = Color::new(100, 100, 100);
        let b = Color::new(104, 104, 104);
        assert!(a.to_lab().delta_e(b.to_lab()) < 10.0);
        let p = extract_palette(&grid_of(&[(a, 10), (b, 30)]), 5).unwrap();
        assert_eq!(p.colors().unwrap(), [b]);
    }

    #[test]
    fn errors() {
        let empty = PixelGrid::new(0, 0, vec![]).unwrap();
        assert!(matches!(extract_palette(&empty, 5), Err(ExtractError::EmptyImage)));
        let one = grid_of(&[(Color::WHITE, 1)]);
        assert!(matches!(
            extract_palette(&one, 0),
            Err(ExtractError::InvalidMaxColors(0))
        ));
        assert!(matches!(
            extract_palette(&one, 6),
            Err(ExtractError::InvalidMaxColors(6))
        ));
        assert!(PixelGrid::new(2, 2, vec![Color::WHITE]).is_err());
    }

    #[test]
    fn max_colors_caps_the_palette() {
        let runs: Vec<(Color, usize)> = (0..8u32)
            .map(|i| {
                (
                    Color::new((i * 32) as u8, (255 - i * 30) as u8, ((i * 77) % 255) as u8),
                    5,
                )
            })
            .collect();
        let p = extract_palette(&grid_of(&runs), 3).unwrap();
        assert!(p.len() <= 3);
        assert!(p.is_diverse());
    }
}
