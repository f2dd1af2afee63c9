//! Image-independent binary term: relative keypoint location statistics
//! at coarse resolution.

use crate::{Error, Result};

/// Smoothing applied after histogramming displacements.
#[derive(Debug, Clone, Copy)]
pub struct PriorSmoothing {
    /// Gaussian sigma in coarse cells.
    pub sigma: f64,
    /// Additive floor applied before renormalization.
    pub floor: f64,
}

impl Default for PriorSmoothing {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            floor: 1e-6,
        }
    }
}

/// Normalized, smoothed histogram over coarse displacements `x_j - x_i`.
/// The table spans `(2H-1) x (2W-1)` displacement bins for an `HxW`
/// coarse grid; out-of-extent displacements clamp to the boundary bin.
#[derive(Debug, Clone)]
pub struct PriorTable {
    pub pair: (usize, usize),
    pub grid_height: usize,
    pub grid_width: usize,
    pub smoothing: PriorSmoothing,
    /// Row-major over `(dy + H - 1, dx + W - 1)`.
    pub values: Vec<f64>,
}

impl PriorTable {
    pub fn table_height(&self) -> usize {
        2 * self.grid_height - 1
    }

    pub fn table_width(&self) -> usize {
        2 * self.grid_width - 1
    }

    fn index(&self, dy: i64, dx: i64) -> usize {
        let th = self.table_height() as i64;
        let tw = self.table_width() as i64;
        let r = (dy + self.grid_height as i64 - 1).clamp(0, th - 1);
        let c = (dx + self.grid_width as i64 - 1).clamp(0, tw - 1);
        (r * tw + c) as usize
    }

    /// Score of placing keypoint j at `x_j` given keypoint i at `x_i`
    /// (coarse cells). Depends only on the displacement.
    pub fn score(&self, x_i: (usize, usize), x_j: (usize, usize)) -> f64 {
        let dy = x_j.0 as i64 - x_i.0 as i64;
        let dx = x_j.1 as i64 - x_i.1 as i64;
        self.score_disp(dy, dx)
    }

    pub fn score_disp(&self, dy: i64, dx: i64) -> f64 {
        self.values[self.index(dy, dx)]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn separable_gaussian_blur(values: &mut [f64], height: usize, width: usize, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for t in -radius..=radius {
        let v = (-(t * t) as f64 / (2.0 * sigma * sigma)).exp();
        taps.push(v);
        sum += v;
    }
    for t in &mut taps {
        *t /= sum;
    }
    let mut tmp = vec![0.0; values.len()];
    for r in 0..height {
        for c in 0..width {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let cc = c as i64 + k as i64 - radius;
                if cc >= 0 && (cc as usize) < width {
                    acc += t * values[r * width + cc as usize];
                }
            }
            tmp[r * width + c] = acc;
        }
    }
    for r in 0..height {
        for c in 0..width {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let rr = r as i64 + k as i64 - radius;
                if rr >= 0 && (rr as usize) < height {
                    acc += t * tmp[rr as usize * width + c];
                }
            }
            values[r * width + c] = acc;
        }
    }
}

/// Fits a displacement prior for `pair = (i, j)` from annotated poses
/// given as per-keypoint pixel locations (index = keypoint id). Poses
/// missing either endpoint are skipped; at least one usable pose is
/// required. `coarse_factor` is image pixels per coarse cell.
pub fn fit_prior(
    annotations: &[Vec<Option<(f64, f64)>>],
    pair: (usize, usize),
    grid_height: usize,
    grid_width: usize,
    coarse_factor: usize,
    smoothing: PriorSmoothing,
) -> Result<PriorTable> {
    let mut table = PriorTable {
        pair,
        grid_height,
        grid_width,
        smoothing,
        values: vec![0.0; (2 * grid_height - 1) * (2 * grid_width - 1)],
    };
    let mut used = 0usize;
    for pose in annotations {
        let (Some(a), Some(b)) = (
            pose.get(pair.0).copied().flatten(),
            pose.get(pair.1).copied().flatten(),
        ) else {
            continue;
        };
        // (x, y) pixels -> (row, col) coarse displacement.
        let dy = ((b.1 - a.1) / coarse_factor as f64).round() as i64;
        let dx = ((b.0 - a.0) / coarse_factor as f64).round() as i64;
        let idx = table.index(dy, dx);
        table.values[idx] += 1.0;
        used += 1;
    }
    if used == 0 {
        return Err(Error::NoEvidence(format!(
            "no annotation labels both keypoints {:?}",
            pair
        )));
    }
    let (th, tw) = (table.table_height(), table.table_width());
    separable_gaussian_blur(&mut table.values, th, tw, smoothing.sigma);
    for v in &mut table.values {
        *v += smoothing.floor;
    }
    let total: f64 = table.values.iter().sum();
    for v in &mut table.values {
        *v /= total;
    }
    Ok(table)
}

/// A flat prior over the displacement extent, used when no annotations
/// are available (pure-consensus configurations).
pub fn uniform_prior(pair: (usize, usize), grid_height: usize, grid_width: usize) -> PriorTable {
    let n = (2 * grid_height - 1) * (2 * grid_width - 1);
    PriorTable {
        pair,
        grid_height,
        grid_width,
        smoothing: PriorSmoothing {
            sigma: 0.0,
            floor: 0.0,
        },
        values: vec![1.0 / n as f64; n],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(points: &[(usize, (f64, f64))]) -> Vec<Option<(f64, f64)>> {
        let mut p = vec![None; 4];
        for &(i, loc) in points {
            p[i] = Some(loc);
        }
        p
    }

    #[test]
    fn single_annotation_mode_at_displacement() {
        // Keypoint 1 sits 2 coarse cells right of keypoint 0.
        let annos = vec![pose(&[(0, (12.0, 12.0)), (1, (36.0, 12.0))])];
        let table = fit_prior(&annos, (0, 1), 6, 6, 12, PriorSmoothing::default()).unwrap();
        let mode = table
            .values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(table.score_disp(0, 2), mode);
        assert!(table.score_disp(0, 2) > table.score_disp(0, -2));
    }

    #[test]
    fn two_annotations_bimodal_symmetric() {
        let annos = vec![
            pose(&[(0, (0.0, 0.0)), (1, (24.0, 0.0))]),
            pose(&[(0, (24.0, 0.0)), (1, (0.0, 0.0))]),
        ];
        let table = fit_prior(&annos, (0, 1), 6, 6, 12, PriorSmoothing::default()).unwrap();
        assert!((table.score_disp(0, 2) - table.score_disp(0, -2)).abs() < 1e-12);
        assert!(table.score_disp(0, 2) > table.score_disp(2, 0));
    }

    #[test]
    fn out_of_extent_displacement_clamps_to_boundary() {
        // Displacement of +20 cells on a 4-wide grid clamps to +3.
        let annos = vec![pose(&[(0, (0.0, 0.0)), (1, (240.0, 0.0))])];
        let table = fit_prior(
            &annos,
            (0, 1),
            4,
            4,
            12,
            PriorSmoothing {
                sigma: 0.0,
                floor: 1e-6,
            },
        )
        .unwrap();
        let mode = table
            .values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(table.score_disp(0, 3), mode);
        assert_eq!(table.score_disp(0, 99), mode); // lookup clamps too
    }

    #[test]
    fn empty_annotations_rejected() {
        let annos: Vec<Vec<Option<(f64, f64)>>> = vec![pose(&[(0, (0.0, 0.0))])];
        assert!(fit_prior(&annos, (0, 1), 4, 4, 12, PriorSmoothing::default()).is_err());
        assert!(fit_prior(&[], (0, 1), 4, 4, 12, PriorSmoothing::default()).is_err());
    }

    #[test]
    fn table_sums_to_one_and_is_strictly_positive() {
        let annos = vec![pose(&[(0, (0.0, 0.0)), (1, (12.0, 24.0))])];
        let table = fit_prior(&annos, (0, 1), 5, 5, 12, PriorSmoothing::default()).unwrap();
        let sum: f64 = table.values.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-6);
        assert!(table.min_value() > 0.0);
    }

    #[test]
    fn score_is_translation_invariant() {
        let annos = vec![
            pose(&[(0, (0.0, 0.0)), (1, (24.0, 12.0))]),
            pose(&[(0, (12.0, 12.0)), (1, (12.0, 36.0))]),
        ];
        let table = fit_prior(&annos, (0, 1), 8, 8, 12, PriorSmoothing::default()).unwrap();
        for shift in [(0, 0), (1, 2), (3, 1)] {
            let a = table.score((1 + shift.0, 1 + shift.1), (2 + shift.0, 3 + shift.1));
            let b = table.score((1, 1), (2, 3));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn uniform_prior_is_constant() {
        let table = uniform_prior((0, 1), 4, 4);
        let first = table.values[0];
        assert!(table.values.iter().all(|&v| v == first));
    }
}
