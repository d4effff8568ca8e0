use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::problems::{ProblemKind, ProblemSpec};

/// Where collocation points come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Collocation {
    /// Continuous uniform sampling of the domain.
    #[default]
    Uniform,
    /// Uniform sampling among the nodes of a tensor grid given as per-axis
    /// `(lo, hi, points)`, time axis first.
    Grid { axes: Vec<(f64, f64, usize)> },
}

/// Interior, initial and boundary collocation points, each stored row-major
/// with full `(t, x[, y])` coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batches {
    pub input_dim: usize,
    pub interior: Vec<f64>,
    pub initial: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl Batches {
    pub fn interior_points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.interior.chunks_exact(self.input_dim)
    }

    pub fn initial_points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.initial.chunks_exact(self.input_dim)
    }

    pub fn boundary_points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.boundary.chunks_exact(self.input_dim)
    }
}

/// Boundary faces carrying a condition: `(spatial axis, edge value, face measure)`.
pub(crate) fn boundary_faces(spec: &ProblemSpec) -> Vec<(usize, f64, f64)> {
    match spec.kind {
        ProblemKind::LotkaVolterra => vec![],
        ProblemKind::Transport1d => vec![(0, spec.domain.space[0].0, 1.0)],
        ProblemKind::Heat2d | ProblemKind::Wave2d => {
            let sp = &spec.domain.space;
            let mut faces = Vec::new();
            for axis in 0..sp.len() {
                let measure: f64 =
                    sp.iter().enumerate().filter(|&(k, _)| k != axis).map(|(_, &(lo, hi))| hi - lo).product();
                faces.push((axis, sp[axis].0, measure));
                faces.push((axis, sp[axis].1, measure));
            }
            faces
        }
    }
}

fn node(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if n <= 1 {
        lo
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

/// Draws one set of minibatches. Lotka-Volterra gets the single initial
/// point `t = 0` and no boundary batch.
pub fn sample_batches<R: Rng>(
    spec: &ProblemSpec,
    collocation: &Collocation,
    sizes: (usize, usize, usize),
    rng: &mut R,
) -> Batches {
    let (m_int, m_ic, m_bc) = sizes;
    let d = spec.input_dim;
    let t_end = spec.domain.t_end;
    let space = &spec.domain.space;
    let faces = boundary_faces(spec);
    let face_pick =
        (!faces.is_empty()).then(|| WeightedIndex::new(faces.iter().map(|f| f.2)).expect("positive face measures"));

    let mut b = Batches { input_dim: d, ..Default::default() };
    match collocation {
        Collocation::Uniform => {
            // (0, T]: reflect [0, 1) so that t = 0 is excluded.
            let time = |rng: &mut R| t_end * (1.0 - rng.gen::<f64>());
            let spatial = |rng: &mut R, out: &mut Vec<f64>| {
                for &(lo, hi) in space {
                    out.push(lo + (hi - lo) * rng.gen::<f64>());
                }
            };
            for _ in 0..m_int {
                b.interior.push(time(rng));
                spatial(rng, &mut b.interior);
            }
            if space.is_empty() {
                b.initial.push(0.0);
            } else {
                for _ in 0..m_ic {
                    b.initial.push(0.0);
                    spatial(rng, &mut b.initial);
                }
            }
            if let Some(pick) = &face_pick {
                for _ in 0..m_bc {
                    let (axis, edge, _) = faces[pick.sample(rng)];
                    b.boundary.push(time(rng));
                    let start = b.boundary.len();
                    spatial(rng, &mut b.boundary);
                    b.boundary[start + axis] = edge;
                }
            }
        }
        Collocation::Grid { axes } => {
            assert_eq!(axes.len(), d, "collocation grid dimension");
            let (t_lo, t_hi, n_t) = axes[0];
            let time = |rng: &mut R| {
                let i = if n_t > 1 { rng.gen_range(1..n_t) } else { 0 };
                node(t_lo, t_hi, n_t, i)
            };
            let spatial = |rng: &mut R, out: &mut Vec<f64>| {
                for &(lo, hi, n) in &axes[1..] {
                    out.push(node(lo, hi, n, rng.gen_range(0..n)));
                }
            };
            for _ in 0..m_int {
                b.interior.push(time(rng));
                spatial(rng, &mut b.interior);
            }
            if space.is_empty() {
                b.initial.push(t_lo);
            } else {
                for _ in 0..m_ic {
                    b.initial.push(t_lo);
                    spatial(rng, &mut b.initial);
                }
            }
            if let Some(pick) = &face_pick {
                for _ in 0..m_bc {
                    let (axis, edge, _) = faces[pick.sample(rng)];
                    b.boundary.push(time(rng));
                    let start = b.boundary.len();
                    spatial(rng, &mut b.boundary);
                    b.boundary[start + axis] = edge;
                }
            }
        }
    }
    b
}
