//! Pairwise energy over keypoint locations: unary/binary construction,
//! mid-point folding, TRW-S MAP inference and an exact brute-force
//! oracle.

use std::io::Write;

use crate::consensus::JointTable;
use crate::prior::PriorTable;
use crate::voting::Heatmap;
use crate::{Error, Result};

/// Floor applied to probabilities before every log.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// A node of the energy: a keypoint with a pruned set of candidate
/// coarse cells and their unary costs.
#[derive(Debug, Clone)]
pub struct Node {
    pub id: usize,
    /// Candidate coarse cells (flattened grid indices).
    pub labels: Vec<usize>,
    pub unary: Vec<f64>,
}

/// Binary cost table between two nodes, row-major `|labels_a| x |labels_b|`.
#[derive(Debug, Clone)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub costs: Vec<f64>,
}

impl Edge {
    pub fn cost(&self, la: usize, lb: usize, nb: usize) -> f64 {
        self.costs[la * nb + lb]
    }
}

#[derive(Debug, Clone, Default)]
pub struct EnergyModel {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl EnergyModel {
    pub fn add_node(&mut self, id: usize, labels: Vec<usize>, unary: Vec<f64>) -> Result<usize> {
        if labels.is_empty() || labels.len() != unary.len() {
            return Err(Error::InvalidArgument(format!(
                "node {id}: {} labels vs {} unary costs",
                labels.len(),
                unary.len()
            )));
        }
        if unary.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "node {id}: non-finite unary cost"
            )));
        }
        self.nodes.push(Node { id, labels, unary });
        Ok(self.nodes.len() - 1)
    }

    pub fn add_edge(&mut self, a: usize, b: usize, costs: Vec<f64>) -> Result<()> {
        if a >= self.nodes.len() || b >= self.nodes.len() || a == b {
            return Err(Error::InvalidArgument(format!("bad edge endpoints {a},{b}")));
        }
        let (na, nb) = (self.nodes[a].labels.len(), self.nodes[b].labels.len());
        if costs.len() != na * nb {
            return Err(Error::ShapeMismatch(format!(
                "edge ({a},{b}): table {} != {na}x{nb}",
                costs.len()
            )));
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "edge ({a},{b}): non-finite cost"
            )));
        }
        self.edges.push(Edge { a, b, costs });
        Ok(())
    }

    /// Total energy of a labeling (label indices, one per node).
    pub fn energy(&self, labels: &[usize]) -> f64 {
        let mut e = 0.0;
        for (i, node) in self.nodes.iter().enumerate() {
            e += node.unary[labels[i]];
        }
        for edge in &self.edges {
            let nb = self.nodes[edge.b].labels.len();
            e += edge.cost(labels[edge.a], labels[edge.b], nb);
        }
        e
    }

    /// Writes a plain-text dump (nodes, labels, tables) for offline
    /// inspection.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "nodes {}", self.nodes.len())?;
        for (i, node) in self.nodes.iter().enumerate() {
            writeln!(out, "node {i} id {} labels {}", node.id, node.labels.len())?;
            for (l, (&cell, &cost)) in node.labels.iter().zip(&node.unary).enumerate() {
                writeln!(out, "  {l} cell {cell} cost {cost}")?;
            }
        }
        writeln!(out, "edges {}", self.edges.len())?;
        for edge in &self.edges {
            let nb = self.nodes[edge.b].labels.len();
            writeln!(out, "edge {} {}", edge.a, edge.b)?;
            for la in 0..self.nodes[edge.a].labels.len() {
                let row: Vec<String> = (0..nb)
                    .map(|lb| format!("{}", edge.cost(la, lb, nb)))
                    .collect();
                writeln!(out, "  {}", row.join(" "))?;
            }
        }
        Ok(())
    }
}

/// MAP result. `energy >= lower_bound` always; on trees the two meet.
#[derive(Debug, Clone)]
pub struct Labeling {
    /// Label index per node, in model node order.
    pub labels: Vec<usize>,
    pub energy: f64,
    pub lower_bound: Option<f64>,
    pub converged: bool,
    /// Lower bound after each iteration.
    pub bound_history: Vec<f64>,
}

/// Restricts a heatmap to a label space (cells into the heatmap),
/// normalizes it to sum 1, floors at `epsilon` and negates the log.
pub fn build_unary(heatmap: &Heatmap, label_space: &[usize], epsilon: f64) -> Result<Vec<f64>> {
    let mut mass = 0.0;
    let mut probs = Vec::with_capacity(label_space.len());
    for &cell in label_space {
        let v = *heatmap
            .values
            .get(cell)
            .ok_or_else(|| Error::OutOfBounds(format!("label cell {cell} outside heatmap")))?;
        probs.push(v);
        mass += v;
    }
    if mass <= 0.0 {
        return Err(Error::NoEvidence(
            "heatmap carries no mass over the label space".into(),
        ));
    }
    Ok(probs
        .iter()
        .map(|p| -((p / mass).max(epsilon)).ln())
        .collect())
}

/// Mixes the consensus joint with the location prior:
/// `lambda * (-log joint) + (1 - lambda) * (-log prior)`, restricted to
/// the two label spaces (coarse cells).
pub fn build_binary(
    joint: &JointTable,
    prior: &PriorTable,
    lambda: f64,
    labels_i: &[usize],
    labels_j: &[usize],
    epsilon: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda {lambda} outside [0,1]"
        )));
    }
    if joint.height != prior.grid_height || joint.width != prior.grid_width {
        return Err(Error::ShapeMismatch(format!(
            "joint grid {}x{} vs prior grid {}x{}",
            joint.height, joint.width, prior.grid_height, prior.grid_width
        )));
    }
    let w = joint.width;
    let mut costs = Vec::with_capacity(labels_i.len() * labels_j.len());
    for &a in labels_i {
        for &b in labels_j {
            let consensus = -(joint.at(a, b).max(epsilon)).ln();
            let xi = (a / w, a % w);
            let xj = (b / w, b % w);
            let location = -(prior.score(xi, xj).max(epsilon)).ln();
            costs.push(lambda * consensus + (1.0 - lambda) * location);
        }
    }
    Ok(costs)
}

/// Rounds half away from zero, per coordinate.
fn round_half_away(x: f64) -> i64 {
    if x >= 0.0 {
        (x + 0.5).floor() as i64
    } else {
        (x - 0.5).ceil() as i64
    }
}

/// The discrete mid-point cell `round((a + b) / 2)`, clamped to the grid.
pub fn midpoint_cell(
    grid: (usize, usize),
    a: (usize, usize),
    b: (usize, usize),
) -> (usize, usize) {
    let r = round_half_away((a.0 + b.0) as f64 / 2.0).clamp(0, grid.0 as i64 - 1);
    let c = round_half_away((a.1 + b.1) as f64 / 2.0).clamp(0, grid.1 as i64 - 1);
    (r as usize, c as usize)
}

/// Eliminates the mid-point variable: builds the folded table
/// `phi(x_i, x_j) = phi_mid(f) + phi_i_mid(x_i, f) + phi_mid_j(f, x_j)`
/// with `f` the rounded mid-point cell. `phi_mid` spans the full coarse
/// grid; the binary terms are evaluated through the provided lookups on
/// arbitrary cell pairs.
pub fn fold_midpoint(
    grid: (usize, usize),
    labels_i: &[usize],
    labels_j: &[usize],
    phi_mid: &[f64],
    phi_i_mid: &dyn Fn(usize, usize) -> f64,
    phi_mid_j: &dyn Fn(usize, usize) -> f64,
) -> Result<Vec<f64>> {
    let (h, w) = grid;
    if phi_mid.len() != h * w {
        return Err(Error::ShapeMismatch(format!(
            "mid-point cost vector {} != grid {}x{}",
            phi_mid.len(),
            h,
            w
        )));
    }
    let mut costs = Vec::with_capacity(labels_i.len() * labels_j.len());
    for &a in labels_i {
        let xa = (a / w, a % w);
        for &b in labels_j {
            let xb = (b / w, b % w);
            let (mr, mc) = midpoint_cell(grid, xa, xb);
            let m = mr * w + mc;
            costs.push(phi_mid[m] + phi_i_mid(a, m) + phi_mid_j(m, b));
        }
    }
    Ok(costs)
}

/// Exact global minimum by exhaustive enumeration. Rejects instances
/// whose label-space product exceeds 10^7.
pub fn brute_force_map(model: &EnergyModel) -> Result<Labeling> {
    if model.nodes.is_empty() {
        return Err(Error::InvalidArgument("empty model".into()));
    }
    let sizes: Vec<usize> = model.nodes.iter().map(|n| n.labels.len()).collect();
    let mut total = 1f64;
    for &s in &sizes {
        total *= s as f64;
        if total > 1e7 {
            return Err(Error::TooLarge(format!(
                "label-space product exceeds 1e7"
            )));
        }
    }
    let mut current = vec![0usize; sizes.len()];
    let mut best = current.clone();
    let mut best_energy = model.energy(&current);
    loop {
        // odometer increment
        let mut k = 0;
        loop {
            if k == sizes.len() {
                let energy = best_energy;
                return Ok(Labeling {
                    labels: best,
                    energy,
                    lower_bound: Some(energy),
                    converged: true,
                    bound_history: Vec::new(),
                });
            }
            current[k] += 1;
            if current[k] < sizes[k] {
                break;
            }
            current[k] = 0;
            k += 1;
        }
        let e = model.energy(&current);
        if e < best_energy {
            best_energy = e;
            best = current.clone();
        }
    }
}

struct Adjacency {
    /// Per node: (edge index, neighbor node, node is edge.a).
    neighbors: Vec<Vec<(usize, usize, bool)>>,
    gamma: Vec<f64>,
}

fn adjacency(model: &EnergyModel) -> Adjacency {
    let n = model.nodes.len();
    let mut neighbors = vec![Vec::new(); n];
    for (e, edge) in model.edges.iter().enumerate() {
        neighbors[edge.a].push((e, edge.b, true));
        neighbors[edge.b].push((e, edge.a, false));
    }
    let gamma = (0..n)
        .map(|i| {
            let fwd = neighbors[i].iter().filter(|&&(_, j, _)| j > i).count();
            let bwd = neighbors[i].len() - fwd;
            1.0 / fwd.max(bwd).max(1) as f64
        })
        .collect();
    Adjacency { neighbors, gamma }
}

/// Message storage: per edge, one message in each direction, kept
/// min-normalized.
struct Messages {
    /// `to_b[e]`: message a -> b of edge e, indexed by b's label.
    to_b: Vec<Vec<f64>>,
    /// `to_a[e]`: message b -> a of edge e, indexed by a's label.
    to_a: Vec<Vec<f64>>,
}

impl Messages {
    fn new(model: &EnergyModel) -> Self {
        let to_b = model
            .edges
            .iter()
            .map(|e| vec![0.0; model.nodes[e.b].labels.len()])
            .collect();
        let to_a = model
            .edges
            .iter()
            .map(|e| vec![0.0; model.nodes[e.a].labels.len()])
            .collect();
        Self { to_b, to_a }
    }

    /// Message arriving at node `i` over edge `e` (i is `a` if `is_a`).
    fn incoming(&self, e: usize, is_a: bool) -> &[f64] {
        if is_a {
            &self.to_a[e]
        } else {
            &self.to_b[e]
        }
    }
}

fn reparameterized_unary(
    model: &EnergyModel,
    adj: &Adjacency,
    msgs: &Messages,
    i: usize,
) -> Vec<f64> {
    let mut d = model.nodes[i].unary.clone();
    for &(e, _, is_a) in &adj.neighbors[i] {
        for (x, m) in msgs.incoming(e, is_a).iter().enumerate() {
            d[x] += m;
        }
    }
    d
}

/// One message update: m_{i->j}(x_j) = min_{x_i} [ gamma_i * d_i(x_i)
/// - m_{j->i}(x_i) + theta_ij(x_i, x_j) ], then min-normalized. Returns
/// the subtracted normalization constant.
fn update_message(
    model: &EnergyModel,
    msgs: &mut Messages,
    e: usize,
    i_is_a: bool,
    d_i: &[f64],
    gamma: f64,
) -> f64 {
    let edge = &model.edges[e];
    let nb = model.nodes[edge.b].labels.len();
    let na = model.nodes[edge.a].labels.len();
    if i_is_a {
        let reverse = msgs.to_a[e].clone();
        let out = &mut msgs.to_b[e];
        for xj in 0..nb {
            let mut best = f64::INFINITY;
            for xi in 0..na {
                let v = gamma * d_i[xi] - reverse[xi] + edge.cost(xi, xj, nb);
                if v < best {
                    best = v;
                }
            }
            out[xj] = best;
        }
        let min = out.iter().cloned().fold(f64::INFINITY, f64::min);
        for v in out.iter_mut() {
            *v -= min;
        }
        min
    } else {
        let reverse = msgs.to_b[e].clone();
        let out = &mut msgs.to_a[e];
        for xi in 0..na {
            let mut best = f64::INFINITY;
            for xj in 0..nb {
                let v = gamma * d_i[xj] - reverse[xj] + edge.cost(xi, xj, nb);
                if v < best {
                    best = v;
                }
            }
            out[xi] = best;
        }
        let min = out.iter().cloned().fold(f64::INFINITY, f64::min);
        for v in out.iter_mut() {
            *v -= min;
        }
        min
    }
}

/// Greedy decode in node order: earlier nodes fixed through edge costs,
/// later nodes summarized by their current messages.
fn decode(model: &EnergyModel, adj: &Adjacency, msgs: &Messages) -> Vec<usize> {
    let n = model.nodes.len();
    let mut labels = vec![0usize; n];
    for i in 0..n {
        let mut d = model.nodes[i].unary.clone();
        for &(e, j, is_a) in &adj.neighbors[i] {
            if j > i {
                for (x, m) in msgs.incoming(e, is_a).iter().enumerate() {
                    d[x] += m;
                }
            } else {
                let edge = &model.edges[e];
                let nb = model.nodes[edge.b].labels.len();
                for (x, dv) in d.iter_mut().enumerate() {
                    *dv += if is_a {
                        edge.cost(x, labels[j], nb)
                    } else {
                        edge.cost(labels[j], x, nb)
                    };
                }
            }
        }
        let mut best = 0;
        for x in 1..d.len() {
            if d[x] < d[best] {
                best = x;
            }
        }
        labels[i] = best;
    }
    labels
}

/// Sequential tree-reweighted message passing. Forward/backward passes
/// in node-id order with averaging weights `1/max(n+, n-)`. Returns the
/// best labeling seen; exact on trees.
pub fn trws_solve(model: &EnergyModel, max_iters: usize, tol: f64) -> Result<Labeling> {
    if model.nodes.is_empty() {
        return Err(Error::InvalidArgument("empty model".into()));
    }
    let n = model.nodes.len();
    let adj = adjacency(model);
    let mut msgs = Messages::new(model);

    let mut best_labels = decode(model, &adj, &msgs);
    let mut best_energy = model.energy(&best_labels);
    let mut bound_history: Vec<f64> = Vec::new();
    let mut converged = false;

    for _ in 0..max_iters {
        // forward pass
        for i in 0..n {
            let d = reparameterized_unary(model, &adj, &msgs, i);
            for &(e, j, is_a) in &adj.neighbors[i] {
                if j > i {
                    update_message(model, &mut msgs, e, is_a, &d, adj.gamma[i]);
                }
            }
        }
        // backward pass, accumulating the lower bound: each node's
        // reparameterized unary is normalized to min 0 (the constant
        // goes into the bound) before its share is sent backward, and
        // every backward message's normalization constant is collected
        let mut bound = 0.0;
        for i in (0..n).rev() {
            let mut d = reparameterized_unary(model, &adj, &msgs, i);
            let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
            bound += min;
            for v in d.iter_mut() {
                *v -= min;
            }
            for &(e, j, is_a) in &adj.neighbors[i] {
                if j < i {
                    bound += update_message(model, &mut msgs, e, is_a, &d, adj.gamma[i]);
                }
            }
        }
        let labels = decode(model, &adj, &msgs);
        let energy = model.energy(&labels);
        if energy < best_energy {
            best_energy = energy;
            best_labels = labels;
        }
        if let Some(&prev) = bound_history.last() {
            if (bound - prev).abs() < tol {
                bound_history.push(bound);
                converged = true;
                break;
            }
        }
        bound_history.push(bound);
    }

    Ok(Labeling {
        labels: best_labels,
        energy: best_energy,
        lower_bound: bound_history.last().copied(),
        converged,
        bound_history,
    })
}
