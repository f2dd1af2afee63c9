//! PCKh and PCP evaluation over matched prediction/annotation pairs.

use crate::pipeline::{
    HEAD_TOP, L_ANKLE, L_ELBOW, L_HIP, L_KNEE, L_SHOULDER, L_WRIST, NUM_ANNOTATED, PELVIS,
    R_ANKLE, R_ELBOW, R_HIP, R_KNEE, R_SHOULDER, R_WRIST, THORAX, UPPER_NECK,
};
use crate::{Error, Result};

/// One matched evaluation sample: predicted and ground-truth locations
/// for the 16 annotated keypoints (pixel (x, y)), plus the head segment
/// used to normalize PCKh.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub predictions: Vec<Option<(f64, f64)>>,
    pub annotations: Vec<Option<(f64, f64)>>,
    /// Head segment endpoints; samples without one are excluded from
    /// PCKh and counted.
    pub head_segment: Option<((f64, f64), (f64, f64))>,
}

impl EvalSample {
    pub fn head_length(&self) -> Option<f64> {
        let (a, b) = self.head_segment?;
        let len = dist(a, b);
        (len > 0.0).then_some(len)
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// The seven reported keypoint groups, left/right averaged.
pub const PCKH_GROUPS: [(&str, &[usize]); 7] = [
    ("head", &[HEAD_TOP, UPPER_NECK]),
    ("shoulder", &[R_SHOULDER, L_SHOULDER]),
    ("elbow", &[R_ELBOW, L_ELBOW]),
    ("wrist", &[R_WRIST, L_WRIST]),
    ("hip", &[R_HIP, L_HIP]),
    ("knee", &[R_KNEE, L_KNEE]),
    ("ankle", &[R_ANKLE, L_ANKLE]),
];

#[derive(Debug, Clone)]
pub struct PckhReport {
    pub alpha: f64,
    /// (correct, total) per keypoint.
    pub per_keypoint: Vec<(usize, usize)>,
    /// Rate per group in `PCKH_GROUPS` order; `None` if no keypoint of
    /// the group was annotated.
    pub group_rates: Vec<Option<f64>>,
    /// Mean over the groups with data.
    pub mean: f64,
    /// Samples skipped for lack of a usable head segment.
    pub excluded: usize,
}

impl PckhReport {
    pub fn keypoint_rate(&self, kp: usize) -> Option<f64> {
        let (correct, total) = self.per_keypoint[kp];
        (total > 0).then(|| correct as f64 / total as f64)
    }
}

fn check_samples(samples: &[EvalSample]) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if s.predictions.len() != NUM_ANNOTATED || s.annotations.len() != NUM_ANNOTATED {
            return Err(Error::InvalidArgument(format!(
                "sample {i}: expected {NUM_ANNOTATED} predictions and annotations"
            )));
        }
    }
    Ok(())
}

/// PCKh@alpha: a keypoint is correct when its error is no more than
/// alpha times the head segment length (boundary inclusive).
pub fn pckh(samples: &[EvalSample], alpha: f64) -> Result<PckhReport> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must be >= 0")));
    }
    check_samples(samples)?;
    let mut per_keypoint = vec![(0usize, 0usize); NUM_ANNOTATED];
    let mut excluded = 0;
    for sample in samples {
        let Some(head) = sample.head_length() else {
            excluded += 1;
            continue;
        };
        for kp in 0..NUM_ANNOTATED {
            let (Some(gt), Some(pred)) = (sample.annotations[kp], sample.predictions[kp]) else {
                continue;
            };
            per_keypoint[kp].1 += 1;
            if dist(pred, gt) <= alpha * head {
                per_keypoint[kp].0 += 1;
            }
        }
    }
    let group_rates: Vec<Option<f64>> = PCKH_GROUPS
        .iter()
        .map(|(_, kps)| {
            let (c, t) = kps
                .iter()
                .fold((0, 0), |(c, t), &kp| (c + per_keypoint[kp].0, t + per_keypoint[kp].1));
            (t > 0).then(|| c as f64 / t as f64)
        })
        .collect();
    let with_data: Vec<f64> = group_rates.iter().filter_map(|&r| r).collect();
    if with_data.is_empty() {
        return Err(Error::NoEvidence("no evaluable keypoints for PCKh".into()));
    }
    let mean = with_data.iter().sum::<f64>() / with_data.len() as f64;
    Ok(PckhReport {
        alpha,
        per_keypoint,
        group_rates,
        mean,
        excluded,
    })
}

/// PCKh at each threshold; rates are non-decreasing in alpha.
pub fn pckh_sweep(samples: &[EvalSample], alphas: &[f64]) -> Result<Vec<(f64, f64)>> {
    alphas
        .iter()
        .map(|&a| pckh(samples, a).map(|r| (a, r.mean)))
        .collect()
}

/// The six reported limb rows. Bilateral limbs list both sides.
pub const PCP_LIMBS: [(&str, &[(usize, usize)]); 6] = [
    ("torso", &[(THORAX, PELVIS)]),
    ("upper_leg", &[(R_HIP, R_KNEE), (L_HIP, L_KNEE)]),
    ("lower_leg", &[(R_KNEE, R_ANKLE), (L_KNEE, L_ANKLE)]),
    ("upper_arm", &[(R_SHOULDER, R_ELBOW), (L_SHOULDER, L_ELBOW)]),
    ("forearm", &[(R_ELBOW, R_WRIST), (L_ELBOW, L_WRIST)]),
    ("head", &[(HEAD_TOP, UPPER_NECK)]),
];

#[derive(Debug, Clone)]
pub struct PcpReport {
    /// (correct, total) per limb row in `PCP_LIMBS` order.
    pub per_limb: Vec<(usize, usize)>,
    pub limb_rates: Vec<Option<f64>>,
    pub mean: f64,
    /// Zero-length or unannotated limb instances skipped.
    pub excluded: usize,
}

/// PCP: a limb is correct when both endpoint errors are no more than
/// half the ground-truth limb length.
pub fn pcp(samples: &[EvalSample]) -> Result<PcpReport> {
    check_samples(samples)?;
    let mut per_limb = vec![(0usize, 0usize); PCP_LIMBS.len()];
    let mut excluded = 0;
    for sample in samples {
        for (row, (_, pairs)) in PCP_LIMBS.iter().enumerate() {
            for &(a, b) in pairs.iter() {
                let (Some(ga), Some(gb)) = (sample.annotations[a], sample.annotations[b]) else {
                    excluded += 1;
                    continue;
                };
                let (Some(pa), Some(pb)) = (sample.predictions[a], sample.predictions[b]) else {
                    excluded += 1;
                    continue;
                };
                let len = dist(ga, gb);
                if len <= 0.0 {
                    excluded += 1;
                    continue;
                }
                per_limb[row].1 += 1;
                if dist(pa, ga) <= 0.5 * len && dist(pb, gb) <= 0.5 * len {
                    per_limb[row].0 += 1;
                }
            }
        }
    }
    let limb_rates: Vec<Option<f64>> = per_limb
        .iter()
        .map(|&(c, t)| (t > 0).then(|| c as f64 / t as f64))
        .collect();
    let with_data: Vec<f64> = limb_rates.iter().filter_map(|&r| r).collect();
    if with_data.is_empty() {
        return Err(Error::NoEvidence("no evaluable limbs for PCP".into()));
    }
    let mean = with_data.iter().sum::<f64>() / with_data.len() as f64;
    Ok(PcpReport {
        per_limb,
        limb_rates,
        mean,
        excluded,
    })
}
