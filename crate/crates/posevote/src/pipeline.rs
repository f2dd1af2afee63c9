//! Skeleton definition, keypoint augmentation and the staged prediction
//! pipeline that ties voting, consensus and MAP inference together.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::consensus::{self, CoarseField, JointTable};
use crate::geometry::{LogPolarGrid, VoteKernel};
use crate::mrf::{self, EnergyModel};
use crate::prior::{uniform_prior, PriorTable};
use crate::voting::{self, Heatmap, VoterField};
use crate::{Error, Result};

pub const NUM_ANNOTATED: usize = 16;
pub const NUM_KEYPOINTS: usize = 30;

// Annotated keypoints, MPII order.
pub const R_ANKLE: usize = 0;
pub const R_KNEE: usize = 1;
pub const R_HIP: usize = 2;
pub const L_HIP: usize = 3;
pub const L_KNEE: usize = 4;
pub const L_ANKLE: usize = 5;
pub const PELVIS: usize = 6;
pub const THORAX: usize = 7;
pub const UPPER_NECK: usize = 8;
pub const HEAD_TOP: usize = 9;
pub const R_WRIST: usize = 10;
pub const R_ELBOW: usize = 11;
pub const R_SHOULDER: usize = 12;
pub const L_SHOULDER: usize = 13;
pub const L_ELBOW: usize = 14;
pub const L_WRIST: usize = 15;

// Synthetic mid-points.
pub const HEAD_MID: usize = 16;
pub const MID_BODY: usize = 17;
pub const R_UPPER_ARM_MID: usize = 18;
pub const R_FOREARM_MID: usize = 19;
pub const L_UPPER_ARM_MID: usize = 20;
pub const L_FOREARM_MID: usize = 21;
pub const R_PELVIS_HIP_MID: usize = 22;
pub const L_PELVIS_HIP_MID: usize = 23;
pub const R_THIGH_MID: usize = 24;
pub const R_SHIN_MID: usize = 25;
pub const L_THIGH_MID: usize = 26;
pub const L_SHIN_MID: usize = 27;

// Extrapolated hands.
pub const R_HAND: usize = 28;
pub const L_HAND: usize = 29;

pub const KEYPOINT_NAMES: [&str; NUM_KEYPOINTS] = [
    "r_ankle",
    "r_knee",
    "r_hip",
    "l_hip",
    "l_knee",
    "l_ankle",
    "pelvis",
    "thorax",
    "upper_neck",
    "head_top",
    "r_wrist",
    "r_elbow",
    "r_shoulder",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "head_mid",
    "mid_body",
    "r_upper_arm_mid",
    "r_forearm_mid",
    "l_upper_arm_mid",
    "l_forearm_mid",
    "r_pelvis_hip_mid",
    "l_pelvis_hip_mid",
    "r_thigh_mid",
    "r_shin_mid",
    "l_thigh_mid",
    "l_shin_mid",
    "r_hand",
    "l_hand",
];

pub fn keypoint_id(name: &str) -> Option<usize> {
    KEYPOINT_NAMES.iter().position(|&n| n == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeypointKind {
    Annotated,
    /// Mid-point of two parent keypoints.
    Midpoint(usize, usize),
    /// Extrapolation of the elbow-wrist vector by 30%.
    Hand { elbow: usize, wrist: usize },
}

#[derive(Debug, Clone)]
pub struct KeypointDef {
    pub id: usize,
    pub name: &'static str,
    pub kind: KeypointKind,
    /// Prediction stage (1-3) for annotated keypoints, 0 for synthetic.
    pub stage: usize,
}

/// An inference edge between two annotated keypoints. `midpoint` folds
/// that synthetic keypoint into the edge table; `hand` additionally
/// folds the extrapolated hand (elbow-wrist edges only).
#[derive(Debug, Clone)]
pub struct SkeletonEdge {
    pub a: usize,
    pub b: usize,
    pub midpoint: Option<usize>,
    pub hand: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Skeleton {
    pub keypoints: Vec<KeypointDef>,
    pub edges: Vec<SkeletonEdge>,
}

impl Skeleton {
    /// The 30-keypoint skeleton: 16 annotated joints, 12 mid-points and
    /// 2 extrapolated hands, connected by the limb tree.
    pub fn default_skeleton() -> Self {
        let stage_of = |id: usize| match id {
            HEAD_TOP | UPPER_NECK | THORAX | PELVIS => 1,
            R_SHOULDER | L_SHOULDER | R_HIP | L_HIP => 2,
            _ => 3,
        };
        let mut keypoints = Vec::with_capacity(NUM_KEYPOINTS);
        for id in 0..NUM_ANNOTATED {
            keypoints.push(KeypointDef {
                id,
                name: KEYPOINT_NAMES[id],
                kind: KeypointKind::Annotated,
                stage: stage_of(id),
            });
        }
        let midpoints = [
            (HEAD_MID, HEAD_TOP, UPPER_NECK),
            (MID_BODY, THORAX, PELVIS),
            (R_UPPER_ARM_MID, R_SHOULDER, R_ELBOW),
            (R_FOREARM_MID, R_ELBOW, R_WRIST),
            (L_UPPER_ARM_MID, L_SHOULDER, L_ELBOW),
            (L_FOREARM_MID, L_ELBOW, L_WRIST),
            (R_PELVIS_HIP_MID, PELVIS, R_HIP),
            (L_PELVIS_HIP_MID, PELVIS, L_HIP),
            (R_THIGH_MID, R_HIP, R_KNEE),
            (R_SHIN_MID, R_KNEE, R_ANKLE),
            (L_THIGH_MID, L_HIP, L_KNEE),
            (L_SHIN_MID, L_KNEE, L_ANKLE),
        ];
        for &(id, a, b) in &midpoints {
            keypoints.push(KeypointDef {
                id,
                name: KEYPOINT_NAMES[id],
                kind: KeypointKind::Midpoint(a, b),
                stage: 0,
            });
        }
        for &(id, elbow, wrist) in &[(R_HAND, R_ELBOW, R_WRIST), (L_HAND, L_ELBOW, L_WRIST)] {
            keypoints.push(KeypointDef {
                id,
                name: KEYPOINT_NAMES[id],
                kind: KeypointKind::Hand { elbow, wrist },
                stage: 0,
            });
        }
        let edge = |a, b, midpoint, hand| SkeletonEdge {
            a,
            b,
            midpoint,
            hand,
        };
        let edges = vec![
            edge(HEAD_TOP, UPPER_NECK, Some(HEAD_MID), None),
            edge(UPPER_NECK, THORAX, None, None),
            edge(THORAX, PELVIS, Some(MID_BODY), None),
            edge(THORAX, R_SHOULDER, None, None),
            edge(THORAX, L_SHOULDER, None, None),
            edge(R_SHOULDER, R_ELBOW, Some(R_UPPER_ARM_MID), None),
            edge(R_ELBOW, R_WRIST, Some(R_FOREARM_MID), Some(R_HAND)),
            edge(L_SHOULDER, L_ELBOW, Some(L_UPPER_ARM_MID), None),
            edge(L_ELBOW, L_WRIST, Some(L_FOREARM_MID), Some(L_HAND)),
            edge(PELVIS, R_HIP, Some(R_PELVIS_HIP_MID), None),
            edge(PELVIS, L_HIP, Some(L_PELVIS_HIP_MID), None),
            edge(R_HIP, R_KNEE, Some(R_THIGH_MID), None),
            edge(R_KNEE, R_ANKLE, Some(R_SHIN_MID), None),
            edge(L_HIP, L_KNEE, Some(L_THIGH_MID), None),
            edge(L_KNEE, L_ANKLE, Some(L_SHIN_MID), None),
        ];
        Self { keypoints, edges }
    }

    pub fn stage_keypoints(&self, stage: usize) -> Vec<usize> {
        self.keypoints
            .iter()
            .filter(|k| k.stage == stage)
            .map(|k| k.id)
            .collect()
    }

    /// Checks the declared structural invariants.
    pub fn validate(&self) -> Result<()> {
        let annotated = self
            .keypoints
            .iter()
            .filter(|k| k.kind == KeypointKind::Annotated)
            .count();
        let midpoints = self
            .keypoints
            .iter()
            .filter(|k| matches!(k.kind, KeypointKind::Midpoint(..)))
            .count();
        let hands = self
            .keypoints
            .iter()
            .filter(|k| matches!(k.kind, KeypointKind::Hand { .. }))
            .count();
        if (annotated, midpoints, hands) != (16, 12, 2) {
            return Err(Error::InvalidArgument(format!(
                "skeleton has {annotated} annotated / {midpoints} midpoint / {hands} hand keypoints"
            )));
        }
        // Edges must connect all annotated keypoints into one component.
        let mut reach = vec![false; NUM_ANNOTATED];
        let mut stack = vec![self.edges[0].a];
        reach[self.edges[0].a] = true;
        while let Some(i) = stack.pop() {
            for e in &self.edges {
                for &(u, v) in &[(e.a, e.b), (e.b, e.a)] {
                    if u == i && !reach[v] {
                        reach[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        if !reach.iter().all(|&r| r) {
            return Err(Error::InvalidArgument("skeleton edges disconnected".into()));
        }
        Ok(())
    }
}

/// Augments the 16 annotated locations (pixel (x, y)) with the 12
/// mid-points and the 2 extrapolated hands. A missing parent makes the
/// derived keypoint missing too.
pub fn augment_keypoints(annotated: &[Option<(f64, f64)>]) -> Result<Vec<Option<(f64, f64)>>> {
    if annotated.len() != NUM_ANNOTATED {
        return Err(Error::InvalidArgument(format!(
            "expected {NUM_ANNOTATED} annotated keypoints, got {}",
            annotated.len()
        )));
    }
    let skeleton = Skeleton::default_skeleton();
    let mut out = vec![None; NUM_KEYPOINTS];
    out[..NUM_ANNOTATED].copy_from_slice(annotated);
    for def in &skeleton.keypoints {
        match def.kind {
            KeypointKind::Annotated => {}
            KeypointKind::Midpoint(a, b) => {
                if let (Some(pa), Some(pb)) = (out[a], out[b]) {
                    out[def.id] = Some(((pa.0 + pb.0) / 2.0, (pa.1 + pb.1) / 2.0));
                }
            }
            KeypointKind::Hand { elbow, wrist } => {
                if let (Some(pe), Some(pw)) = (out[elbow], out[wrist]) {
                    out[def.id] = Some((
                        pw.0 + 0.3 * (pw.0 - pe.0),
                        pw.1 + 0.3 * (pw.1 - pe.1),
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// Final pose: pixel (x, y) per annotated keypoint and a confidence from
/// the normalized coarse evidence at the chosen cell.
#[derive(Debug, Clone)]
pub struct PoseEstimate {
    pub keypoints: Vec<(f64, f64)>,
    pub confidences: Vec<f64>,
    /// Chosen coarse cell per annotated keypoint.
    pub coarse_cells: Vec<usize>,
    pub stage_energies: Vec<f64>,
    pub stage_lower_bounds: Vec<f64>,
}

/// Rough person location used to mask the mid-body evidence.
#[derive(Debug, Clone, Copy)]
pub struct PersonHint {
    /// Pixel (x, y).
    pub center: (f64, f64),
    /// Person scale in pixels (mask sigma before the config factor).
    pub scale: f64,
}

/// Per-pair location priors; pairs without a fitted table fall back to a
/// flat prior.
#[derive(Debug, Clone, Default)]
pub struct PriorSet {
    pub tables: HashMap<(usize, usize), PriorTable>,
}

impl PriorSet {
    pub fn insert(&mut self, table: PriorTable) {
        self.tables.insert(table.pair, table);
    }

    fn get(&self, pair: (usize, usize), h: usize, w: usize) -> PriorTable {
        self.tables
            .get(&pair)
            .cloned()
            .unwrap_or_else(|| uniform_prior(pair, h, w))
    }
}

/// Everything the stage solver needs, prepared once per image.
pub struct PipelineContext<'a> {
    pub skeleton: &'a Skeleton,
    pub config: &'a RunConfig,
    pub coarse_fields: Vec<CoarseField>,
    pub coarse_heats: Vec<Heatmap>,
    pub coarse_kernel: VoteKernel,
    pub priors: &'a PriorSet,
    pub grid_height: usize,
    pub grid_width: usize,
}

impl<'a> PipelineContext<'a> {
    fn joint(&self, i: usize, j: usize) -> Result<JointTable> {
        consensus::joint_table(
            &self.coarse_fields[i],
            &self.coarse_fields[j],
            &self.coarse_kernel,
        )
    }

    fn cells(&self) -> usize {
        self.grid_height * self.grid_width
    }

    /// Top-k label space by coarse evidence; deterministic order.
    fn label_space(&self, kp: usize) -> Vec<usize> {
        let heat = &self.coarse_heats[kp];
        let mut cells: Vec<usize> = (0..heat.values.len())
            .filter(|&c| heat.values[c] > 0.0)
            .collect();
        cells.sort_by(|&a, &b| heat.values[b].total_cmp(&heat.values[a]).then(a.cmp(&b)));
        cells.truncate(self.config.prune_k);
        cells
    }

    /// -log cost of the mixed binary term at two coarse cells.
    fn pair_cost(
        &self,
        joint: &JointTable,
        prior: &PriorTable,
        a: usize,
        b: usize,
    ) -> f64 {
        let w = self.grid_width;
        let eps = self.config.epsilon;
        let lambda = self.config.lambda;
        let consensus = -(joint.at(a, b).max(eps)).ln();
        let location = -(prior.score((a / w, a % w), (b / w, b % w)).max(eps)).ln();
        lambda * consensus + (1.0 - lambda) * location
    }

    /// Full-grid unary cost vector of a (synthetic) keypoint, used for
    /// folded mid-point and hand terms.
    fn full_grid_unary(&self, kp: usize) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.cells()).collect();
        mrf::build_unary(&self.coarse_heats[kp], &all, self.config.epsilon)
    }

    /// Builds the cost table of a skeleton edge over the given label
    /// spaces, folding mid-point (and hand) terms where declared.
    fn edge_costs(
        &self,
        edge: &SkeletonEdge,
        labels_a: &[usize],
        labels_b: &[usize],
    ) -> Result<Vec<f64>> {
        let (h, w) = (self.grid_height, self.grid_width);
        let mut costs = match edge.midpoint {
            None => {
                let joint = self.joint(edge.a, edge.b)?;
                let prior = self.priors.get((edge.a, edge.b), h, w);
                mrf::build_binary(
                    &joint,
                    &prior,
                    self.config.lambda,
                    labels_a,
                    labels_b,
                    self.config.epsilon,
                )?
            }
            Some(mid) => {
                let phi_mid = self.full_grid_unary(mid)?;
                let joint_am = self.joint(edge.a, mid)?;
                let joint_mb = self.joint(mid, edge.b)?;
                let prior_am = self.priors.get((edge.a, mid), h, w);
                let prior_mb = self.priors.get((mid, edge.b), h, w);
                mrf::fold_midpoint(
                    (h, w),
                    labels_a,
                    labels_b,
                    &phi_mid,
                    &|a, m| self.pair_cost(&joint_am, &prior_am, a, m),
                    &|m, b| self.pair_cost(&joint_mb, &prior_mb, m, b),
                )?
            }
        };
        if let Some(hand) = edge.hand {
            // x_hand = x_wrist + 0.3 (x_wrist - x_elbow); edge.a is the
            // elbow and edge.b the wrist. The hand unary and the
            // wrist-hand binary fold into the same table.
            let phi_hand = self.full_grid_unary(hand)?;
            let joint_wh = self.joint(edge.b, hand)?;
            let prior_wh = self.priors.get((edge.b, hand), h, w);
            for (ia, &a) in labels_a.iter().enumerate() {
                let (ar, ac) = (a / w, a % w);
                for (ib, &b) in labels_b.iter().enumerate() {
                    let (br, bc) = (b / w, b % w);
                    let hr = (br as f64 + 0.3 * (br as f64 - ar as f64)).round();
                    let hc = (bc as f64 + 0.3 * (bc as f64 - ac as f64)).round();
                    let hr = (hr as i64).clamp(0, h as i64 - 1) as usize;
                    let hc = (hc as i64).clamp(0, w as i64 - 1) as usize;
                    let hcell = hr * w + hc;
                    costs[ia * labels_b.len() + ib] +=
                        phi_hand[hcell] + self.pair_cost(&joint_wh, &prior_wh, b, hcell);
                }
            }
        }
        Ok(costs)
    }

    /// One stage model: free keypoints get pruned label spaces, solved
    /// keypoints are clamped to their cell. Edges with both endpoints
    /// clamped are constants and skipped.
    pub fn build_stage_model(
        &self,
        stage: usize,
        free: &[usize],
        solved: &HashMap<usize, usize>,
    ) -> Result<EnergyModel> {
        let mut model = EnergyModel::default();
        let mut node_of = HashMap::new();
        for (&kp, &cell) in solved.iter().collect::<std::collections::BTreeMap<_, _>>() {
            let idx = model.add_node(kp, vec![cell], vec![0.0])?;
            node_of.insert(kp, idx);
        }
        for &kp in free {
            let labels = self.label_space(kp);
            if labels.is_empty() {
                return Err(Error::StageFailed {
                    stage,
                    reason: format!("no candidate cells for {}", KEYPOINT_NAMES[kp]),
                });
            }
            let unary = mrf::build_unary(&self.coarse_heats[kp], &labels, self.config.epsilon)
                .map_err(|e| Error::StageFailed {
                    stage,
                    reason: format!("{} unary: {e}", KEYPOINT_NAMES[kp]),
                })?;
            let idx = model.add_node(kp, labels, unary)?;
            node_of.insert(kp, idx);
        }
        for edge in &self.skeleton.edges {
            let (Some(&na), Some(&nb)) = (node_of.get(&edge.a), node_of.get(&edge.b)) else {
                continue;
            };
            if solved.contains_key(&edge.a) && solved.contains_key(&edge.b) {
                continue;
            }
            let costs = self.edge_costs(edge, &model.nodes[na].labels, &model.nodes[nb].labels)?;
            model.add_edge(na, nb, costs)?;
        }
        Ok(model)
    }

    /// Runs the staged (or single-stage) prediction over prepared coarse
    /// evidence. Returns the chosen coarse cell per annotated keypoint.
    pub fn sequential_predict(&self) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
        let stages: Vec<Vec<usize>> = if self.config.single_stage {
            vec![(0..NUM_ANNOTATED).collect()]
        } else {
            (1..=3).map(|s| self.skeleton.stage_keypoints(s)).collect()
        };
        let mut solved: HashMap<usize, usize> = HashMap::new();
        let mut energies = Vec::new();
        let mut bounds = Vec::new();
        for (si, free) in stages.iter().enumerate() {
            let stage = si + 1;
            let model = self.build_stage_model(stage, free, &solved)?;
            let labeling = mrf::trws_solve(&model, self.config.max_iters, self.config.tol)?;
            energies.push(labeling.energy);
            bounds.push(labeling.lower_bound.unwrap_or(f64::NEG_INFINITY));
            for (node, &label) in model.nodes.iter().zip(&labeling.labels) {
                solved.insert(node.id, node.labels[label]);
            }
        }
        let cells: Vec<usize> = (0..NUM_ANNOTATED).map(|kp| solved[&kp]).collect();
        Ok((cells, energies, bounds))
    }
}

fn check_fields(fields: &[VoterField], grid: &LogPolarGrid, config: &RunConfig) -> Result<()> {
    if fields.len() != NUM_KEYPOINTS {
        return Err(Error::InvalidArgument(format!(
            "expected {NUM_KEYPOINTS} voter fields, got {}",
            fields.len()
        )));
    }
    let (h, w) = (fields[0].height, fields[0].width);
    for (i, f) in fields.iter().enumerate() {
        if f.keypoint_id != i {
            return Err(Error::InvalidArgument(format!(
                "field {i} carries keypoint id {}",
                f.keypoint_id
            )));
        }
        if f.height != h || f.width != w || f.num_classes != grid.num_classes() {
            return Err(Error::ShapeMismatch(format!(
                "field {i} is {}x{}x{}, expected {}x{}x{}",
                f.height,
                f.width,
                f.num_classes,
                h,
                w,
                grid.num_classes()
            )));
        }
        if f.stride != config.stride {
            return Err(Error::ShapeMismatch(format!(
                "field {i} stride {} != config stride {}",
                f.stride, config.stride
            )));
        }
    }
    Ok(())
}

/// Full orchestration: aggregate fine evidence, project to the coarse
/// grid, mask the mid-body evidence around the person hint, run the
/// staged solve, and refine each keypoint to fine resolution inside its
/// chosen coarse cell. Deterministic for fixed inputs and config.
pub fn predict(
    fields: &[VoterField],
    priors: &PriorSet,
    person: Option<PersonHint>,
    config: &RunConfig,
    skeleton: &Skeleton,
) -> Result<PoseEstimate> {
    config.validate()?;
    skeleton.validate()?;
    let grid = config.grid()?;
    check_fields(fields, &grid, config)?;
    let pool = config.coarse_factor / config.stride;

    // Coarse evidence for all 30 keypoints.
    let truncated = grid.coarse(config.kept_rings)?;
    let coarse_grid = truncated.rescaled(pool as f64)?;
    let half = coarse_grid.outer_radius().ceil() as usize;
    let coarse_kernel = VoteKernel::build(&coarse_grid, 2 * half + 1, 2 * half + 1)?;
    let coarse_fields: Vec<CoarseField> = fields
        .par_iter()
        .map(|f| consensus::coarse_project(f, config.coarse_factor, config.kept_rings, &grid))
        .collect::<Result<_>>()?;
    let mut coarse_heats: Vec<Heatmap> = coarse_fields
        .par_iter()
        .map(|cf| consensus::coarse_heatmap(cf, &coarse_kernel))
        .collect::<Result<_>>()?;

    if let Some(hint) = person {
        // Pixel -> coarse cell coordinates; the mask peaks at the person
        // position on the mid-body evidence only.
        let factor = config.coarse_factor as f64;
        let center = (hint.center.1 / factor - 0.5, hint.center.0 / factor - 0.5);
        let sigma = (config.mask_sigma_factor * hint.scale / factor).max(1e-6);
        let center = (
            center.0.clamp(0.0, coarse_heats[MID_BODY].height as f64 - 1.0),
            center.1.clamp(0.0, coarse_heats[MID_BODY].width as f64 - 1.0),
        );
        coarse_heats[MID_BODY] = voting::apply_person_mask(&coarse_heats[MID_BODY], center, sigma)?;
    }

    let ctx = PipelineContext {
        skeleton,
        config,
        grid_height: coarse_fields[0].height,
        grid_width: coarse_fields[0].width,
        coarse_fields,
        coarse_heats,
        coarse_kernel,
        priors,
    };
    let (cells, stage_energies, stage_lower_bounds) = ctx.sequential_predict()?;

    // Fine heatmaps for the annotated keypoints, for sub-coarse
    // refinement inside the chosen cell.
    let kernel = VoteKernel::build(&grid, config.kernel_size, config.kernel_size)?;
    let fine_heats: Vec<Heatmap> = fields[..NUM_ANNOTATED]
        .par_iter()
        .map(|f| voting::aggregate(f, &kernel))
        .collect::<Result<_>>()?;

    let (pad_r, pad_c) = kernel.pad();
    let wc = ctx.grid_width;
    let mut keypoints = Vec::with_capacity(NUM_ANNOTATED);
    let mut confidences = Vec::with_capacity(NUM_ANNOTATED);
    for kp in 0..NUM_ANNOTATED {
        let cell = cells[kp];
        let (cr, cc) = (cell / wc, cell % wc);
        // Best fine cell inside the chosen coarse cell.
        let heat = &fine_heats[kp];
        let mut best = (f64::NEG_INFINITY, cr * pool, cc * pool);
        for fr in cr * pool..(cr + 1) * pool {
            for fc in cc * pool..(cc + 1) * pool {
                let v = heat.at(fr + pad_r, fc + pad_c);
                if v > best.0 {
                    best = (v, fr, fc);
                }
            }
        }
        keypoints.push((
            (best.2 as f64 + 0.5) * config.stride as f64,
            (best.1 as f64 + 0.5) * config.stride as f64,
        ));
        let total = ctx.coarse_heats[kp].sum();
        confidences.push(if total > 0.0 {
            ctx.coarse_heats[kp].values[cell] / total
        } else {
            0.0
        });
    }

    Ok(PoseEstimate {
        keypoints,
        confidences,
        coarse_cells: cells,
        stage_energies,
        stage_lower_bounds,
    })
}
