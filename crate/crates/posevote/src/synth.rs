//! Synthetic voter-field generation: inverts the displacement binning so
//! that every cell emits a one-hot vote for the true bin, optionally
//! corrupted by noise and competing distractor poses.

use rand::Rng;

use crate::geometry::{LogPolarGrid, BACKGROUND_CLASS};
use crate::pipeline::{self, NUM_ANNOTATED, NUM_KEYPOINTS};
use crate::voting::VoterField;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct SynthNoise {
    /// Probability a non-background vote is replaced by a uniformly
    /// random class.
    pub label_noise: f64,
    /// Probability a cell votes background instead.
    pub background: f64,
}

impl SynthNoise {
    fn validate(&self) -> Result<()> {
        for (name, p) in [("label_noise", self.label_noise), ("background", self.background)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} {p} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// A synthetic scene: one true pose plus any number of distractors, all
/// given as full 30-keypoint pixel locations.
#[derive(Debug, Clone)]
pub struct Scene {
    pub poses: Vec<Vec<(f64, f64)>>,
}

impl Scene {
    pub fn single(pose: Vec<(f64, f64)>) -> Self {
        Self { poses: vec![pose] }
    }
}

fn check_scene(scene: &Scene, height_px: usize, width_px: usize) -> Result<()> {
    if scene.poses.is_empty() {
        return Err(Error::InvalidArgument("scene has no poses".into()));
    }
    for (pi, pose) in scene.poses.iter().enumerate() {
        if pose.len() != NUM_KEYPOINTS {
            return Err(Error::InvalidArgument(format!(
                "pose {pi} has {} keypoints, expected {NUM_KEYPOINTS}",
                pose.len()
            )));
        }
        for (ki, &(x, y)) in pose.iter().enumerate() {
            if !(0.0..width_px as f64).contains(&x) || !(0.0..height_px as f64).contains(&y) {
                return Err(Error::OutOfBounds(format!(
                    "pose {pi} keypoint {ki} at ({x}, {y}) outside {width_px}x{height_px}"
                )));
            }
        }
    }
    Ok(())
}

/// Generates the 30 voter fields of a scene. Each cell is assigned to
/// the pose owning the nearest keypoint and votes, per keypoint, for the
/// bin of its true displacement; noise then corrupts individual votes.
/// Deterministic for a fixed RNG state.
pub fn gen_synthetic<R: Rng>(
    scene: &Scene,
    height_px: usize,
    width_px: usize,
    stride: usize,
    grid: &LogPolarGrid,
    noise: SynthNoise,
    rng: &mut R,
) -> Result<Vec<VoterField>> {
    noise.validate()?;
    check_scene(scene, height_px, width_px)?;
    if stride == 0 || height_px % stride != 0 || width_px % stride != 0 {
        return Err(Error::InvalidArgument(format!(
            "image {width_px}x{height_px} not divisible by stride {stride}"
        )));
    }
    let (h, w) = (height_px / stride, width_px / stride);
    let classes = grid.num_classes();

    // Keypoint locations in cell coordinates (origin at cell centers).
    let to_cell = |p: (f64, f64)| (p.1 / stride as f64 - 0.5, p.0 / stride as f64 - 0.5);
    let cell_poses: Vec<Vec<(f64, f64)>> = scene
        .poses
        .iter()
        .map(|pose| pose.iter().map(|&p| to_cell(p)).collect())
        .collect();

    // Each cell belongs to the pose with the nearest keypoint.
    let mut owner = vec![0usize; h * w];
    if cell_poses.len() > 1 {
        for r in 0..h {
            for c in 0..w {
                let mut best = (f64::INFINITY, 0usize);
                for (pi, pose) in cell_poses.iter().enumerate() {
                    for &(ky, kx) in pose.iter() {
                        let d = (ky - r as f64).powi(2) + (kx - c as f64).powi(2);
                        if d < best.0 {
                            best = (d, pi);
                        }
                    }
                }
                owner[r * w + c] = best.1;
            }
        }
    }

    let mut fields = Vec::with_capacity(NUM_KEYPOINTS);
    for kp in 0..NUM_KEYPOINTS {
        let mut field = VoterField::new(kp, h, w, stride, classes, vec![0.0; h * w * classes])?;
        for r in 0..h {
            for c in 0..w {
                let (ky, kx) = cell_poses[owner[r * w + c]][kp];
                let dy = (ky - r as f64).round() as i64;
                let dx = (kx - c as f64).round() as i64;
                let mut class = grid.bin_of(dy, dx);
                if rng.gen::<f64>() < noise.background {
                    class = BACKGROUND_CLASS;
                } else if noise.label_noise > 0.0 && rng.gen::<f64>() < noise.label_noise {
                    class = rng.gen_range(0..classes);
                }
                field.dist_mut(r, c)[class] = 1.0;
            }
        }
        fields.push(field);
    }
    Ok(fields)
}

/// Upright person template centered on the pelvis, in units of the
/// person scale (x right, y down). Head segment length is 0.2 scale.
const TEMPLATE: [(f64, f64); NUM_ANNOTATED] = [
    (-0.15, 0.80), // r_ankle
    (-0.14, 0.40), // r_knee
    (-0.12, 0.00), // r_hip
    (0.12, 0.00),  // l_hip
    (0.14, 0.40),  // l_knee
    (0.15, 0.80),  // l_ankle
    (0.00, 0.00),  // pelvis
    (0.00, -0.45), // thorax
    (0.00, -0.55), // upper_neck
    (0.00, -0.75), // head_top
    (-0.30, 0.05), // r_wrist
    (-0.28, -0.20),// r_elbow
    (-0.20, -0.45),// r_shoulder
    (0.20, -0.45), // l_shoulder
    (0.28, -0.20), // l_elbow
    (0.30, 0.05),  // l_wrist
];

/// Randomly jittered template pose, augmented to the full 30 keypoints.
/// `center` is the pelvis pixel position; jitter is uniform within
/// ±0.03 scale per coordinate.
pub fn random_pose<R: Rng>(rng: &mut R, center: (f64, f64), scale: f64) -> Result<Vec<(f64, f64)>> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!("scale {scale} must be positive")));
    }
    let mut annotated = Vec::with_capacity(NUM_ANNOTATED);
    for &(tx, ty) in TEMPLATE.iter() {
        let jx = rng.gen_range(-0.03..=0.03);
        let jy = rng.gen_range(-0.03..=0.03);
        annotated.push(Some((
            center.0 + (tx + jx) * scale,
            center.1 + (ty + jy) * scale,
        )));
    }
    let full = pipeline::augment_keypoints(&annotated)?;
    Ok(full.into_iter().map(|p| p.unwrap()).collect())
}

/// Head segment endpoints of a generated pose (for PCKh evaluation).
pub fn head_segment(pose: &[(f64, f64)]) -> ((f64, f64), (f64, f64)) {
    (pose[pipeline::HEAD_TOP], pose[pipeline::UPPER_NECK])
}
