//! Dense LU solves with an explicit pivot floor.

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::error::{Error, Result};

/// Smallest admissible |pivot| before a system is declared singular.
pub const PIVOT_FLOOR: f64 = 1e-13;

/// A factorized square system that can be reused across right-hand sides.
#[derive(Debug, Clone)]
pub struct Factorized {
    lu: LU<f64, Dyn, Dyn>,
}

impl Factorized {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let lu = matrix.lu();
        let min_pivot = lu
            .u()
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |acc, p| acc.min(p.abs()));
        if !(min_pivot >= PIVOT_FLOOR) {
            return Err(Error::SingularSystem { pivot: min_pivot });
        }
        Ok(Self { lu })
    }

    pub fn dim(&self) -> usize {
        self.lu.u().nrows()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b = DVector::from_column_slice(rhs);
        let x = self
            .lu
            .solve(&b)
            .ok_or(Error::SingularSystem { pivot: 0.0 })?;
        Ok(x.iter().copied().collect())
    }

    /// Solves for every column of `rhs` at once.
    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu
            .solve(rhs)
            .ok_or(Error::SingularSystem { pivot: 0.0 })
    }
}
