use serde::{Deserialize, Serialize};

use super::ProblemKind;
use crate::tables;

/// Tensor-product grid; axis 0 is time, points are enumerated row-major
/// (time slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<Vec<f64>>,
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl Grid {
    pub fn from_axes(axes: &[(f64, f64, usize)]) -> Self {
        Grid { axes: axes.iter().map(|&(lo, hi, n)| linspace(lo, hi, n)).collect() }
    }

    /// Evaluation/observation grid of the published settings.
    pub fn table1(kind: ProblemKind) -> Self {
        Grid::from_axes(tables::grid_row(kind).axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Coordinates of flat point `index`.
    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            out[k] = axis[index % axis.len()];
            index /= axis.len();
        }
        out
    }

    /// All points, flattened row-major into one buffer of `len * dim` values.
    pub fn flat_points(&self) -> Vec<f64> {
        (0..self.len()).flat_map(|i| self.point(i)).collect()
    }

    /// Keeps `n` evenly spread nodes per axis (endpoints included).
    pub fn subgrid(&self, n: usize) -> Self {
        Grid {
            axes: self
                .axes
                .iter()
                .map(|axis| {
                    if n >= axis.len() {
                        return axis.clone();
                    }
                    if n == 1 {
                        return vec![axis[0]];
                    }
                    let last = (axis.len() - 1) as f64;
                    (0..n).map(|j| axis[(j as f64 * last / (n - 1) as f64).round() as usize]).collect()
                })
                .collect(),
        }
    }
}

/// How observation points are drawn from the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationSampling {
    /// Uniformly without replacement among all grid points.
    Uniform,
    /// Distinct time slices, one uniformly chosen spatial node per slice.
    OnePerTimeSlice,
}

impl ObservationSampling {
    pub fn default_for(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Transport1d => ObservationSampling::OnePerTimeSlice,
            _ => ObservationSampling::Uniform,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_grids_have_published_sizes() {
        assert_eq!(Grid::table1(ProblemKind::Transport1d).shape(), vec![17, 100]);
        assert_eq!(Grid::table1(ProblemKind::Heat2d).len(), 1_000_000);
        let lv = Grid::table1(ProblemKind::LotkaVolterra);
        assert_eq!(lv.len(), 20_000);
        assert!((lv.axes[0][0] - 0.005).abs() < 1e-15);
        assert_eq!(*lv.axes[0].last().unwrap(), 100.0);
    }

    #[test]
    fn point_enumeration_is_row_major() {
        let g = Grid::from_axes(&[(0.0, 1.0, 3), (10.0, 11.0, 2)]);
        assert_eq!(g.point(0), vec![0.0, 10.0]);
        assert_eq!(g.point(1), vec![0.0, 11.0]);
        assert_eq!(g.point(2), vec![0.5, 10.0]);
        assert_eq!(g.flat_points().len(), 12);
    }

    #[test]
    fn subgrid_keeps_endpoints() {
        let g = Grid::table1(ProblemKind::Wave2d).subgrid(20);
        assert_eq!(g.shape(), vec![20, 20, 20]);
        assert_eq!(g.axes[1][0], 0.0);
        assert_eq!(*g.axes[1].last().unwrap(), 1.0);
    }
}
