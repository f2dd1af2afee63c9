//! Vote aggregation: spreading per-cell softmax distributions through the
//! fixed kernel into keypoint heatmaps.

use crate::geometry::{VoteKernel, BACKGROUND_CLASS};
use crate::{Error, Result};

/// Per-keypoint grid of per-location softmax distributions over the
/// log-polar classes. One cell per `stride` image pixels.
#[derive(Debug, Clone)]
pub struct VoterField {
    pub keypoint_id: usize,
    pub height: usize,
    pub width: usize,
    pub stride: usize,
    pub num_classes: usize,
    /// Row-major, `height * width * num_classes`.
    pub values: Vec<f64>,
}

impl VoterField {
    pub fn new(
        keypoint_id: usize,
        height: usize,
        width: usize,
        stride: usize,
        num_classes: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != height * width * num_classes {
            return Err(Error::ShapeMismatch(format!(
                "voter field payload {} != {}x{}x{}",
                values.len(),
                height,
                width,
                num_classes
            )));
        }
        Ok(Self {
            keypoint_id,
            height,
            width,
            stride,
            num_classes,
            values,
        })
    }

    /// The distribution at cell (row, col).
    pub fn dist(&self, row: usize, col: usize) -> &[f64] {
        let base = (row * self.width + col) * self.num_classes;
        &self.values[base..base + self.num_classes]
    }

    pub fn dist_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let base = (row * self.width + col) * self.num_classes;
        &mut self.values[base..base + self.num_classes]
    }

    /// Checks every cell's distribution is non-negative and sums to 1.
    pub fn validate(&self) -> Result<()> {
        for row in 0..self.height {
            for col in 0..self.width {
                let d = self.dist(row, col);
                if d.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "negative probability at cell ({row},{col})"
                    )));
                }
                let s: f64 = d.iter().sum();
                if (s - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidArgument(format!(
                        "cell ({row},{col}) distribution sums to {s}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Aggregated keypoint location votes. Extends past the voter field by
/// the kernel half-width on every side; `origin` is the position of cell
/// (0,0) relative to field cell (0,0), i.e. `(-pad, -pad)`.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub keypoint_id: usize,
    pub height: usize,
    pub width: usize,
    pub origin: (i64, i64),
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(keypoint_id: usize, height: usize, width: usize, origin: (i64, i64)) -> Self {
        Self {
            keypoint_id,
            height,
            width,
            origin,
            values: vec![0.0; height * width],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn argmax(&self) -> (usize, usize) {
        let (mut best, mut idx) = (f64::NEG_INFINITY, 0);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best {
                best = v;
                idx = i;
            }
        }
        (idx / self.width, idx % self.width)
    }
}

fn check_classes(field: &VoterField, kernel: &VoteKernel) -> Result<()> {
    if field.num_classes != kernel.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "field has {} classes, kernel {}",
            field.num_classes,
            kernel.num_classes()
        )));
    }
    Ok(())
}

/// Spreads the single voter at `y` through the kernel. The result carries
/// mass `1 - background_prob(y)` centered on `y`.
pub fn single_vote(field: &VoterField, y: (usize, usize), kernel: &VoteKernel) -> Result<Heatmap> {
    check_classes(field, kernel)?;
    if y.0 >= field.height || y.1 >= field.width {
        return Err(Error::OutOfBounds(format!(
            "voter {:?} outside {}x{} field",
            y, field.height, field.width
        )));
    }
    let (pad_r, pad_c) = kernel.pad();
    let mut heat = Heatmap::zeros(
        field.keypoint_id,
        field.height + kernel.height() - 1,
        field.width + kernel.width() - 1,
        (-(pad_r as i64), -(pad_c as i64)),
    );
    let dist = field.dist(y.0, y.1);
    spread_cell(&mut heat, kernel, y, dist, pad_r, pad_c);
    Ok(heat)
}

fn spread_cell(
    heat: &mut Heatmap,
    kernel: &VoteKernel,
    y: (usize, usize),
    dist: &[f64],
    pad_r: usize,
    pad_c: usize,
) {
    let width = heat.width;
    for (c, &p) in dist.iter().enumerate() {
        if p == 0.0 || c == BACKGROUND_CLASS {
            continue;
        }
        let w = p * kernel.channel_weight(c);
        for &(dy, dx) in kernel.channel_support(c) {
            let r = (y.0 + pad_r) as i64 + dy;
            let q = (y.1 + pad_c) as i64 + dx;
            heat.values[r as usize * width + q as usize] += w;
        }
    }
}

/// Sums every voter's spread distribution into one heatmap, as a single
/// transposed-convolution pass. Accumulation is in double precision.
pub fn aggregate(field: &VoterField, kernel: &VoteKernel) -> Result<Heatmap> {
    check_classes(field, kernel)?;
    let (pad_r, pad_c) = kernel.pad();
    let mut heat = Heatmap::zeros(
        field.keypoint_id,
        field.height + kernel.height() - 1,
        field.width + kernel.width() - 1,
        (-(pad_r as i64), -(pad_c as i64)),
    );
    for row in 0..field.height {
        for col in 0..field.width {
            spread_cell(&mut heat, kernel, (row, col), field.dist(row, col), pad_r, pad_c);
        }
    }
    Ok(heat)
}

/// Brute-force oracle for `aggregate`: the literal triple loop over
/// voters, classes and kernel cells with dense weight lookups. Test use
/// only; quadratic in kernel area.
pub fn naive_aggregate(field: &VoterField, kernel: &VoteKernel) -> Result<Heatmap> {
    check_classes(field, kernel)?;
    let (pad_r, pad_c) = kernel.pad();
    let mut heat = Heatmap::zeros(
        field.keypoint_id,
        field.height + kernel.height() - 1,
        field.width + kernel.width() - 1,
        (-(pad_r as i64), -(pad_c as i64)),
    );
    for row in 0..field.height {
        for col in 0..field.width {
            let dist = field.dist(row, col);
            for c in 0..field.num_classes {
                if c == BACKGROUND_CLASS {
                    continue;
                }
                let p = dist[c];
                if p == 0.0 {
                    continue;
                }
                for kr in 0..kernel.height() {
                    for kc in 0..kernel.width() {
                        let w = kernel.weight_at(kr, kc, c);
                        if w != 0.0 {
                            heat.values[(row + kr) * heat.width + (col + kc)] += p * w;
                        }
                    }
                }
            }
        }
    }
    Ok(heat)
}

/// Multiplies the heatmap cell-wise with an isotropic Gaussian mask
/// peaking at `center` (heatmap cell coordinates), sigma in cells.
pub fn apply_person_mask(heatmap: &Heatmap, center: (f64, f64), sigma: f64) -> Result<Heatmap> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mask sigma must be positive, got {sigma}"
        )));
    }
    if center.0 < 0.0
        || center.1 < 0.0
        || center.0 >= heatmap.height as f64
        || center.1 >= heatmap.width as f64
    {
        return Err(Error::OutOfBounds(format!(
            "mask center {:?} outside {}x{} heatmap",
            center, heatmap.height, heatmap.width
        )));
    }
    let mut out = heatmap.clone();
    let inv = 1.0 / (2.0 * sigma * sigma);
    for row in 0..heatmap.height {
        for col in 0..heatmap.width {
            let dr = row as f64 - center.0;
            let dc = col as f64 - center.1;
            out.values[row * heatmap.width + col] *= (-(dr * dr + dc * dc) * inv).exp();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LogPolarGrid, CENTER_CLASS, RING_CLASS_BASE};
    use crate::testutil::random_field;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn small_setup() -> (LogPolarGrid, VoteKernel) {
        let grid = LogPolarGrid::new(2, 4, vec![1.0, 2.0, 3.0], 0.0).unwrap();
        let kernel = VoteKernel::build(&grid, 7, 7).unwrap();
        (grid, kernel)
    }

    fn one_hot_field(h: usize, w: usize, classes: usize, class: usize) -> VoterField {
        let mut values = vec![0.0; h * w * classes];
        for cell in 0..h * w {
            values[cell * classes + class] = 1.0;
        }
        VoterField::new(0, h, w, 4, classes, values).unwrap()
    }

    #[test]
    fn single_vote_center_class_lands_on_voter() {
        let (grid, kernel) = small_setup();
        let field = one_hot_field(5, 5, grid.num_classes(), CENTER_CLASS);
        let heat = single_vote(&field, (2, 3), &kernel).unwrap();
        let (pad, _) = kernel.pad();
        assert_eq!(heat.at(2 + pad, 3 + pad), 1.0);
        assert_eq!(heat.sum(), 1.0);
    }

    #[test]
    fn single_vote_background_is_zero() {
        let (grid, kernel) = small_setup();
        let field = one_hot_field(5, 5, grid.num_classes(), BACKGROUND_CLASS);
        let heat = single_vote(&field, (1, 1), &kernel).unwrap();
        assert_eq!(heat.sum(), 0.0);
    }

    #[test]
    fn single_vote_uniform_over_ring_spreads_over_annulus() {
        let grid = LogPolarGrid::default_grid();
        let kernel = VoteKernel::build(&grid, 65, 65).unwrap();
        let classes = grid.num_classes();
        let mut values = vec![0.0; classes];
        for s in 0..grid.angular_bins() {
            values[RING_CLASS_BASE + s] = 1.0 / grid.angular_bins() as f64;
        }
        let mut payload = vec![0.0; classes];
        payload.copy_from_slice(&values);
        let field = VoterField::new(0, 1, 1, 4, classes, payload).unwrap();
        let heat = single_vote(&field, (0, 0), &kernel).unwrap();
        assert!((heat.sum() - 1.0).abs() < 1e-12);
        let (pad_r, pad_c) = kernel.pad();
        for s in 0..grid.angular_bins() {
            let c = RING_CLASS_BASE + s;
            let expect = (1.0 / 12.0) * kernel.channel_weight(c);
            for &(dy, dx) in kernel.channel_support(c) {
                let v = heat.at((pad_r as i64 + dy) as usize, (pad_c as i64 + dx) as usize);
                assert!((v - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_vote_rejects_out_of_bounds() {
        let (grid, kernel) = small_setup();
        let field = one_hot_field(5, 5, grid.num_classes(), CENTER_CLASS);
        assert!(single_vote(&field, (5, 0), &kernel).is_err());
    }

    #[test]
    fn aggregate_all_background_is_zero() {
        let (grid, kernel) = small_setup();
        let field = one_hot_field(6, 4, grid.num_classes(), BACKGROUND_CLASS);
        let heat = aggregate(&field, &kernel).unwrap();
        assert_eq!(heat.sum(), 0.0);
    }

    #[test]
    fn aggregate_output_extent() {
        let grid = LogPolarGrid::default_grid();
        let kernel = VoteKernel::build(&grid, 65, 65).unwrap();
        // 504x504 image at stride 4 -> 126x126 field -> 190x190 heatmap.
        let field = one_hot_field(126, 126, grid.num_classes(), BACKGROUND_CLASS);
        let heat = aggregate(&field, &kernel).unwrap();
        assert_eq!((heat.height, heat.width), (126 + 64, 126 + 64));
    }

    #[test]
    fn aggregate_matches_naive_on_random_fields() {
        let (grid, kernel) = small_setup();
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let field = random_field(&mut rng, 8, 8, grid.num_classes());
            let fast = aggregate(&field, &kernel).unwrap();
            let slow = naive_aggregate(&field, &kernel).unwrap();
            for (a, b) in fast.values.iter().zip(&slow.values) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn aggregate_mass_conservation() {
        let (grid, kernel) = small_setup();
        let mut rng = StdRng::seed_from_u64(5);
        let field = random_field(&mut rng, 9, 7, grid.num_classes());
        let heat = aggregate(&field, &kernel).unwrap();
        let mut expected = 0.0;
        for row in 0..field.height {
            for col in 0..field.width {
                expected += 1.0 - field.dist(row, col)[BACKGROUND_CLASS];
            }
        }
        // Empty bins lose their share of the mass; none are empty here.
        assert!((heat.sum() - expected).abs() / expected < 1e-6);
    }

    #[test]
    fn aggregate_linearity() {
        let (grid, kernel) = small_setup();
        let mut rng = StdRng::seed_from_u64(7);
        let a = random_field(&mut rng, 6, 6, grid.num_classes());
        let b = random_field(&mut rng, 6, 6, grid.num_classes());
        let alpha = 0.3;
        let mixed_values: Vec<f64> = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
            .collect();
        let mixed = VoterField::new(0, 6, 6, 4, grid.num_classes(), mixed_values).unwrap();
        let ha = aggregate(&a, &kernel).unwrap();
        let hb = aggregate(&b, &kernel).unwrap();
        let hm = aggregate(&mixed, &kernel).unwrap();
        for i in 0..hm.values.len() {
            let lin = alpha * ha.values[i] + (1.0 - alpha) * hb.values[i];
            assert!((hm.values[i] - lin).abs() <= 1e-9);
        }
    }

    #[test]
    fn aggregate_translation_equivariance() {
        let (grid, kernel) = small_setup();
        let classes = grid.num_classes();
        let mut rng = StdRng::seed_from_u64(13);
        // Content confined to the top-left so a (2,1) shift stays inside.
        let mut base = one_hot_field(8, 8, classes, BACKGROUND_CLASS);
        let mut shifted = base.clone();
        for row in 0..3 {
            for col in 0..3 {
                let mut dist = vec![0.0; classes];
                let mut sum = 0.0;
                for d in dist.iter_mut() {
                    *d = rng.gen::<f64>();
                    sum += *d;
                }
                for d in dist.iter_mut() {
                    *d /= sum;
                }
                base.dist_mut(row, col).copy_from_slice(&dist);
                shifted.dist_mut(row + 2, col + 1).copy_from_slice(&dist);
            }
        }
        let hb = aggregate(&base, &kernel).unwrap();
        let hs = aggregate(&shifted, &kernel).unwrap();
        for row in 0..hb.height - 2 {
            for col in 0..hb.width - 1 {
                assert_eq!(hb.at(row, col), hs.at(row + 2, col + 1));
            }
        }
    }

    #[test]
    fn aggregate_rejects_class_mismatch() {
        let (_, kernel) = small_setup();
        let field = one_hot_field(4, 4, 50, CENTER_CLASS);
        assert!(aggregate(&field, &kernel).is_err());
    }

    #[test]
    fn mask_identity_when_flat() {
        let mut heat = Heatmap::zeros(0, 5, 5, (0, 0));
        heat.values[12] = 2.0;
        heat.values[3] = 1.0;
        // Huge sigma approximates the identity mask.
        let masked = apply_person_mask(&heat, (2.0, 2.0), 1e9).unwrap();
        for (a, b) in masked.values.iter().zip(&heat.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn mask_moves_argmax_to_masked_in_blob() {
        let mut heat = Heatmap::zeros(0, 9, 9, (0, 0));
        heat.values[1 * 9 + 1] = 1.0;
        heat.values[7 * 9 + 7] = 1.0;
        let masked = apply_person_mask(&heat, (7.0, 7.0), 2.0).unwrap();
        assert_eq!(masked.argmax(), (7, 7));
        let other = apply_person_mask(&heat, (1.0, 1.0), 2.0).unwrap();
        assert_eq!(other.argmax(), (1, 1));
    }

    #[test]
    fn mask_zero_heatmap_stays_zero() {
        let heat = Heatmap::zeros(0, 4, 4, (0, 0));
        let masked = apply_person_mask(&heat, (1.0, 1.0), 1.0).unwrap();
        assert_eq!(masked.sum(), 0.0);
    }

    #[test]
    fn mask_rejects_bad_sigma() {
        let heat = Heatmap::zeros(0, 4, 4, (0, 0));
        assert!(apply_person_mask(&heat, (1.0, 1.0), 0.0).is_err());
        assert!(apply_person_mask(&heat, (1.0, 1.0), -1.0).is_err());
    }
}
