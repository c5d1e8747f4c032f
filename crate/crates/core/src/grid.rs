//! Uniform grids over intervals and boxes.
//!
//! Every supremum in this crate is computed by exhaustive search over a
//! lattice, so grids are the basic currency: `linspace` for scalar ranges
//! (variance targets, contract sensitivities) and [`ControlGrid`] for the
//! control box U.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed interval `[lo, hi]`; `lo == hi` denotes a singleton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::config(format!(
                "invalid interval [{lo}, {hi}]"
            )));
        }
        Ok(Interval { lo, hi })
    }

    /// Membership test with an absolute tolerance on each side.
    pub fn contains(&self, v: f64, slack: f64) -> bool {
        v >= self.lo - slack && v <= self.hi + slack
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive (`n >= 1`).
///
/// Endpoints are exact; interior points are `lo + i*(hi-lo)/(n-1)`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        lo + i as f64 * step
                    }
                })
                .collect()
        }
    }
}

/// Rectangular lattice over the control box: per-axis sorted sample points.
///
/// Iteration (and therefore every argmax tie-break in the crate) is in
/// lexicographic order: the first axis varies slowest, the last fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    axes: Vec<Vec<f64>>,
}

impl ControlGrid {
    /// Uniform lattice with `counts[k]` points on the `k`-th box interval.
    pub fn uniform(control_box: &[Interval], counts: &[usize]) -> Result<Self> {
        if control_box.is_empty() {
            return Err(Error::EmptyGrid("control box has no axes"));
        }
        if control_box.len() != counts.len() {
            return Err(Error::config(format!(
                "control box has {} axes but {} grid counts were given",
                control_box.len(),
                counts.len()
            )));
        }
        let axes: Vec<Vec<f64>> = control_box
            .iter()
            .zip(counts)
            .map(|(iv, &n)| {
                let n = if iv.span() == 0.0 { 1 } else { n.max(1) };
                linspace(iv.lo, iv.hi, n)
            })
            .collect();
        if axes.iter().any(Vec::is_empty) {
            return Err(Error::EmptyGrid("a control axis has zero points"));
        }
        Ok(ControlGrid { axes })
    }

    /// Lattice from explicit per-axis points (sorted ascending per axis).
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(Vec::is_empty) {
            return Err(Error::EmptyGrid("control grid axis empty"));
        }
        for axis in &axes {
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(
                    "grid axis contains a non-finite value".to_string(),
                ));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::config(
                    "grid axis values must be strictly increasing".to_string(),
                ));
            }
        }
        Ok(ControlGrid { axes })
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Total number of lattice points (product of axis counts).
    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lattice point for a flat index in lexicographic order.
    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (slot, axis) in out.iter_mut().zip(&self.axes).rev() {
            *slot = axis[index % axis.len()];
            index /= axis.len();
        }
        out
    }

    /// Visits every lattice point in lexicographic order without
    /// allocating per point; `f(flat_index, point)`.
    pub fn for_each_point(&self, mut f: impl FnMut(usize, &[f64])) {
        let dim = self.dim();
        let mut idx = vec![0usize; dim];
        let mut point: Vec<f64> = self.axes.iter().map(|a| a[0]).collect();
        let total = self.len();
        for flat in 0..total {
            f(flat, &point);
            // odometer increment, last axis fastest
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < self.axes[k].len() {
                    point[k] = self.axes[k][idx[k]];
                    break;
                }
                idx[k] = 0;
                point[k] = self.axes[k][0];
            }
        }
    }

    /// Largest spacing between adjacent points on any axis.
    pub fn max_spacing(&self) -> f64 {
        self.axes
            .iter()
            .flat_map(|a| a.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }
}
