use nalgebra::DMatrix;

use super::LiftedError;
use crate::geom::{minkowski_sum, SupportPolytope};

/// `x⁺ = Ax + Bu + w` under `u = Kx + v`, with state, input and auxiliary
/// input sets and the increment set `ΔV = V ⊕ (−V)`.
#[derive(Debug, Clone)]
pub struct PlantModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    k: DMatrix<f64>,
    x_set: SupportPolytope,
    u_set: SupportPolytope,
    v_set: SupportPolytope,
    dv_set: SupportPolytope,
}

impl PlantModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        k: DMatrix<f64>,
        x_set: SupportPolytope,
        u_set: SupportPolytope,
        v_set: SupportPolytope,
    ) -> Result<Self, LiftedError> {
        let dv = minkowski_sum(&v_set, &v_set.negated()?)?;
        Self::with_increments(a, b, k, x_set, u_set, v_set, dv)
    }

    /// As [`new`](Self::new) with an explicit `ΔV`.
    pub fn with_increments(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        k: DMatrix<f64>,
        x_set: SupportPolytope,
        u_set: SupportPolytope,
        v_set: SupportPolytope,
        dv_set: SupportPolytope,
    ) -> Result<Self, LiftedError> {
        let n = a.nrows();
        let m = b.ncols();
        if a.ncols() != n || b.nrows() != n || k.shape() != (m, n) {
            return Err(LiftedError::invalid(format!(
                "shapes A {:?}, B {:?}, K {:?} are inconsistent",
                a.shape(),
                b.shape(),
                k.shape()
            )));
        }
        if x_set.dims() != n || u_set.dims() != m || v_set.dims() != m || dv_set.dims() != m {
            return Err(LiftedError::invalid("constraint set dimensions do not match the plant"));
        }
        for (name, set) in [("X", &x_set), ("U", &u_set), ("V", &v_set), ("dV", &dv_set)] {
            if set.is_empty()? {
                return Err(LiftedError::invalid(format!("{name} is empty")));
            }
        }
        let rho = spectral_radius(&(&a + &b * &k));
        if !(rho < 1.0) {
            return Err(LiftedError::NotSchur(rho));
        }
        Ok(Self { a, b, k, x_set, u_set, v_set, dv_set })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn a_cl(&self) -> DMatrix<f64> {
        &self.a + &self.b * &self.k
    }

    pub fn x_set(&self) -> &SupportPolytope {
        &self.x_set
    }

    pub fn u_set(&self) -> &SupportPolytope {
        &self.u_set
    }

    pub fn v_set(&self) -> &SupportPolytope {
        &self.v_set
    }

    pub fn dv_set(&self) -> &SupportPolytope {
        &self.dv_set
    }
}

pub(crate) fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}
