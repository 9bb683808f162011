//! Laguerre-cell assignment for semi-discrete transport maps.
//!
//! Given a dual potential `v` over target atoms `y_1..y_J`, a source point
//! `x` belongs to the cell of the atom minimizing `c(x, y_j) - v_j`. With
//! `v = 0` this is plain nearest-neighbor (Voronoi) assignment. Cells are
//! represented implicitly through the assignment function; rendering a cell
//! geometry is done by classifying a dense lattice of query points.

use thiserror::Error;

use crate::measures::{CostSpec, MeasureError};
use crate::semidual::DualPotential;
use crate::Real;

#[derive(Debug, Error)]
pub enum LaguerreError {
    #[error("no query points given")]
    EmptyInput,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Cell indices of a batch of query points plus the per-cell histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellAssignment {
    pub indices: Vec<usize>,
    pub counts: Vec<usize>,
}

/// Index of the cell containing `x`: the smallest `j` minimizing
/// `c(x, y_j) - v_j` (ties go to the smallest index).
pub fn assign_cell<T: Real>(
    x: &[T],
    v: &DualPotential<T>,
    support: &[Vec<T>],
    cost: &CostSpec<T>,
) -> Result<usize, LaguerreError> {
    let mut best = T::infinity();
    let mut best_j = 0usize;
    for (j, y) in support.iter().enumerate() {
        let slack = cost.cost(x, y)? - v.values()[j];
        if slack < best {
            best = slack;
            best_j = j;
        }
    }
    Ok(best_j)
}

/// Classifies every sample and tallies per-cell counts.
pub fn cell_histogram<T: Real>(
    samples: &[Vec<T>],
    v: &DualPotential<T>,
    support: &[Vec<T>],
    cost: &CostSpec<T>,
) -> Result<CellAssignment, LaguerreError> {
    if samples.is_empty() {
        return Err(LaguerreError::EmptyInput);
    }
    let mut indices = Vec::with_capacity(samples.len());
    let mut counts = vec![0usize; support.len()];
    for x in samples {
        let j = assign_cell(x, v, support, cost)?;
        indices.push(j);
        counts[j] += 1;
    }
    Ok(CellAssignment { indices, counts })
}

/// Cell-center lattice of `resolution^d` query points covering `[0, 1]^d`,
/// suitable for rendering cell geometry. First axis varies slowest.
pub fn render_grid<T: Real>(resolution: usize, dim: usize) -> Vec<Vec<T>> {
    let total = resolution.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut p = vec![T::zero(); dim];
        for k in (0..dim).rev() {
            let i = idx % resolution;
            idx /= resolution;
            p[k] = (T::of_usize(i) + T::of(0.5)) / T::of_usize(resolution);
        }
        out.push(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{draw, SampleSource, SourceKind};

    fn support() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 1.0]]
    }

    #[test]
    fn zero_potential_is_nearest_neighbor() {
        let sup = support();
        let v = DualPotential::zero(3);
        let mut src = SampleSource::<f64>::new(SourceKind::UniformHypercube(2), 13);
        for x in draw(&mut src, 1000).unwrap() {
            let got = assign_cell(&x, &v, &sup, &CostSpec::Euclidean).unwrap();
            // independent brute-force nearest neighbor
            let mut best = f64::INFINITY;
            let mut want = 0;
            for (j, y) in sup.iter().enumerate() {
                let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                if d < best {
                    best = d;
                    want = j;
                }
            }
            assert_eq!(got, want);
        }
    }

    #[test]
    fn assignment_is_shift_invariant() {
        let sup = support();
        let v = DualPotential::new(vec![0.2, -0.1, 0.05]);
        let mut src = SampleSource::<f64>::new(SourceKind::UniformHypercube(2), 17);
        let pts = draw(&mut src, 300).unwrap();
        for &t in &[-3.0, 0.7, 42.0] {
            let vs = v.shifted(t);
            for x in &pts {
                let a = assign_cell(x, &v, &sup, &CostSpec::Euclidean).unwrap();
                let b = assign_cell(x, &vs, &sup, &CostSpec::Euclidean).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn weighted_cell_hand_example() {
        let sup = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let v = DualPotential::new(vec![0.5, 0.0]);
        // slacks at x = (0.6, 0): (0.6 - 0.5, 0.4 - 0.0) = (0.1, 0.4)
        let j = assign_cell(&[0.6, 0.0], &v, &sup, &CostSpec::Euclidean).unwrap();
        assert_eq!(j, 0);
    }

    #[test]
    fn histogram_counts_partition_points() {
        let sup = support();
        let v = DualPotential::zero(3);
        let samples = vec![vec![0.0, 0.0]; 5];
        let h = cell_histogram(&samples, &v, &sup, &CostSpec::Euclidean).unwrap();
        assert_eq!(h.counts, vec![5, 0, 0]);
        assert_eq!(h.indices, vec![0; 5]);

        // one sample in each cell interior
        let samples = vec![vec![0.01, 0.01], vec![0.99, 0.01], vec![0.5, 0.95]];
        let h = cell_histogram(&samples, &v, &sup, &CostSpec::Euclidean).unwrap();
        assert_eq!(h.counts, vec![1, 1, 1]);
        let total: usize = h.counts.iter().sum();
        assert_eq!(total, h.indices.len());

        assert!(matches!(
            cell_histogram::<f64>(&[], &v, &sup, &CostSpec::Euclidean),
            Err(LaguerreError::EmptyInput)
        ));
    }

    #[test]
    fn render_grid_covers_unit_box() {
        let pts = render_grid::<f64>(4, 2);
        assert_eq!(pts.len(), 16);
        assert_eq!(pts[0], vec![0.125, 0.125]);
        assert_eq!(pts[15], vec![0.875, 0.875]);
        for p in &pts {
            assert!(p.iter().all(|&c| (0.0..=1.0).contains(&c)));
        }
    }
}
