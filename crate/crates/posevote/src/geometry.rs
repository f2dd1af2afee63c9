//! Log-polar partition of relative displacements and the fixed
//! vote-spreading kernel derived from it.

use std::f64::consts::TAU;

use crate::{Error, Result};

/// Class index of the central disc.
pub const CENTER_CLASS: usize = 0;
/// Class index carrying no spatial evidence.
pub const BACKGROUND_CLASS: usize = 1;
/// First ring/sector class. Class `2 + ring * angular_bins + sector`.
pub const RING_CLASS_BASE: usize = 2;

/// Log-polar partition of displacement space into a center disc, a set of
/// ring/sector bins, and a background class for everything beyond the
/// outer ring.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPolarGrid {
    num_rings: usize,
    angular_bins: usize,
    ring_boundaries: Vec<f64>,
    angular_offset: f64,
}

impl LogPolarGrid {
    /// `ring_boundaries` are radii in output-grid cells, strictly
    /// increasing, with length `num_rings + 1`. `ring_boundaries[0]` is
    /// the center disc radius.
    pub fn new(
        num_rings: usize,
        angular_bins: usize,
        ring_boundaries: Vec<f64>,
        angular_offset: f64,
    ) -> Result<Self> {
        if num_rings == 0 || angular_bins == 0 {
            return Err(Error::InvalidGrid(
                "need at least one ring and one angular bin".into(),
            ));
        }
        if ring_boundaries.len() != num_rings + 1 {
            return Err(Error::InvalidGrid(format!(
                "expected {} ring boundaries, got {}",
                num_rings + 1,
                ring_boundaries.len()
            )));
        }
        if ring_boundaries[0] <= 0.0 {
            return Err(Error::InvalidGrid("center radius must be positive".into()));
        }
        if ring_boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(
                "ring boundaries must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            num_rings,
            angular_bins,
            ring_boundaries,
            angular_offset,
        })
    }

    /// The default 50-class grid: 4 rings of 12 sectors with log-spaced
    /// boundaries out to radius 32 (half-width of the 65x65 kernel).
    pub fn default_grid() -> Self {
        Self::new(4, 12, vec![2.0, 5.0, 11.0, 21.0, 32.0], 0.0).unwrap()
    }

    pub fn num_rings(&self) -> usize {
        self.num_rings
    }

    pub fn angular_bins(&self) -> usize {
        self.angular_bins
    }

    pub fn ring_boundaries(&self) -> &[f64] {
        &self.ring_boundaries
    }

    pub fn angular_offset(&self) -> f64 {
        self.angular_offset
    }

    pub fn num_classes(&self) -> usize {
        2 + self.num_rings * self.angular_bins
    }

    pub fn outer_radius(&self) -> f64 {
        self.ring_boundaries[self.num_rings]
    }

    /// Maps an integer displacement (dy, dx) in grid cells to its class.
    /// Total: every displacement gets exactly one class. Radii exactly on
    /// a boundary belong to the outer ring; angles exactly on a sector
    /// boundary belong to the counter-clockwise sector.
    pub fn bin_of(&self, dy: i64, dx: i64) -> usize {
        let r = ((dy * dy + dx * dx) as f64).sqrt();
        if r < self.ring_boundaries[0] {
            return CENTER_CLASS;
        }
        if r >= self.outer_radius() {
            return BACKGROUND_CLASS;
        }
        let mut ring = 0;
        while ring + 1 < self.num_rings && r >= self.ring_boundaries[ring + 1] {
            ring += 1;
        }
        let theta = (dy as f64).atan2(dx as f64);
        let width = TAU / self.angular_bins as f64;
        let t = (theta - self.angular_offset).rem_euclid(TAU);
        let sector = ((t / width) as usize).min(self.angular_bins - 1);
        RING_CLASS_BASE + ring * self.angular_bins + sector
    }

    /// Truncates the partition to the first `keep_rings` rings; classes
    /// beyond the kept outer boundary become background.
    pub fn coarse(&self, keep_rings: usize) -> Result<Self> {
        if keep_rings == 0 {
            return Err(Error::InvalidGrid("keep_rings must be positive".into()));
        }
        if keep_rings > self.num_rings {
            return Err(Error::InvalidGrid(format!(
                "keep_rings {} exceeds num_rings {}",
                keep_rings, self.num_rings
            )));
        }
        Self::new(
            keep_rings,
            self.angular_bins,
            self.ring_boundaries[..=keep_rings].to_vec(),
            self.angular_offset,
        )
    }

    /// Rescales the radii by `1/divisor`, rounding each boundary to the
    /// nearest cell. Used to rebuild the kernel at coarse resolution.
    pub fn rescaled(&self, divisor: f64) -> Result<Self> {
        if !(divisor > 0.0) {
            return Err(Error::InvalidGrid("divisor must be positive".into()));
        }
        let boundaries: Vec<f64> = self
            .ring_boundaries
            .iter()
            .map(|b| (b / divisor).round())
            .collect();
        Self::new(
            self.num_rings,
            self.angular_bins,
            boundaries,
            self.angular_offset,
        )
        .map_err(|_| {
            Error::InvalidGrid(format!(
                "rescaling by {divisor} collapses ring boundaries"
            ))
        })
    }

    /// Maps a class of this grid to the corresponding class of a
    /// truncated grid with `keep_rings` rings (ring classes beyond the
    /// kept boundary fold into background).
    pub fn truncate_class(&self, class: usize, keep_rings: usize) -> usize {
        if class < RING_CLASS_BASE {
            return class;
        }
        let ring = (class - RING_CLASS_BASE) / self.angular_bins;
        if ring < keep_rings {
            class
        } else {
            BACKGROUND_CLASS
        }
    }
}

/// Fixed vote-spreading kernel. Channel `c` is nonzero exactly on the
/// cells of bin `c`, each weighted `1/|bin c|`; the background channel is
/// identically zero.
#[derive(Debug, Clone)]
pub struct VoteKernel {
    height: usize,
    width: usize,
    num_classes: usize,
    /// Per-channel list of (dy, dx) offsets from the kernel center.
    support: Vec<Vec<(i64, i64)>>,
    /// Per-channel weight, `1/|bin|` (0 for background and empty bins).
    channel_weight: Vec<f64>,
}

impl VoteKernel {
    /// Builds the kernel for `grid` with odd dimensions `height x width`.
    /// The kernel half-width must contain the outer ring.
    pub fn build(grid: &LogPolarGrid, height: usize, width: usize) -> Result<Self> {
        if height % 2 == 0 || width % 2 == 0 {
            return Err(Error::InvalidKernel(format!(
                "kernel dimensions must be odd, got {height}x{width}"
            )));
        }
        let half = (height.min(width) as i64 - 1) / 2;
        if (half as f64) < grid.outer_radius() {
            return Err(Error::InvalidKernel(format!(
                "half-width {} cannot contain outer ring radius {}",
                half,
                grid.outer_radius()
            )));
        }
        let num_classes = grid.num_classes();
        let mut support = vec![Vec::new(); num_classes];
        let hy = (height as i64 - 1) / 2;
        let hx = (width as i64 - 1) / 2;
        for dy in -hy..=hy {
            for dx in -hx..=hx {
                let class = grid.bin_of(dy, dx);
                if class != BACKGROUND_CLASS {
                    support[class].push((dy, dx));
                }
            }
        }
        let channel_weight = support
            .iter()
            .map(|cells| {
                if cells.is_empty() {
                    0.0
                } else {
                    1.0 / cells.len() as f64
                }
            })
            .collect();
        Ok(Self {
            height,
            width,
            num_classes,
            support,
            channel_weight,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Half-width in cells; heatmaps grow by this much on every side.
    pub fn pad(&self) -> (usize, usize) {
        ((self.height - 1) / 2, (self.width - 1) / 2)
    }

    /// Offsets (from the kernel center) of the cells of channel `c`.
    pub fn channel_support(&self, c: usize) -> &[(i64, i64)] {
        &self.support[c]
    }

    /// The uniform weight of channel `c`, `1/|bin c|`.
    pub fn channel_weight(&self, c: usize) -> f64 {
        self.channel_weight[c]
    }

    /// Dense lookup by kernel indices (row, col in [0, H_k) x [0, W_k)).
    pub fn weight_at(&self, row: usize, col: usize, c: usize) -> f64 {
        let dy = row as i64 - (self.height as i64 - 1) / 2;
        let dx = col as i64 - (self.width as i64 - 1) / 2;
        if self.support[c].contains(&(dy, dx)) {
            self.channel_weight[c]
        } else {
            0.0
        }
    }
}
