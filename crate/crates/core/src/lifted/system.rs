use std::sync::Arc;

use nalgebra::DMatrix;

use super::{LiftedError, PlantModel};
use crate::geom::{DirectionSet, HalfspaceSystem};
use crate::wrapper::DisturbanceWrapper;

/// `ξ⁺ = Ãξ + B̃δv + D̃w` with
/// `Ã = [[A_cl, B, 0], [0, I, 0], [0, 0, 0]]`, `B̃ = [B; I; 0]`, `D̃ = [I; 0; I]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSystem {
    pub at: DMatrix<f64>,
    pub bt: DMatrix<f64>,
    pub dt: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
}

impl LiftedSystem {
    pub fn lift(plant: &PlantModel) -> Self {
        let (n, m) = (plant.n(), plant.m());
        let d = 2 * n + m;
        let mut at = DMatrix::zeros(d, d);
        at.view_mut((0, 0), (n, n)).copy_from(&plant.a_cl());
        at.view_mut((0, n), (n, m)).copy_from(plant.b());
        at.view_mut((n, n), (m, m)).fill_with_identity();
        let mut bt = DMatrix::zeros(d, m);
        bt.view_mut((0, 0), (n, m)).copy_from(plant.b());
        bt.view_mut((n, 0), (m, m)).fill_with_identity();
        let mut dt = DMatrix::zeros(d, n);
        dt.view_mut((0, 0), (n, n)).fill_with_identity();
        dt.view_mut((n + m, 0), (n, n)).fill_with_identity();
        Self { at, bt, dt, n, m }
    }

    pub fn dims(&self) -> usize {
        2 * self.n + self.m
    }

    pub fn x_coords(&self) -> Vec<usize> {
        (0..self.n).collect()
    }

    pub fn xv_coords(&self) -> Vec<usize> {
        (0..self.n + self.m).collect()
    }

    pub fn w_coords(&self) -> Vec<usize> {
        (self.n + self.m..self.dims()).collect()
    }

    /// For each state-space seed `e`, the chain `τ_k = (A_clᵀ)^k e`,
    /// `k = 0..=depth`, lifted twice: as `(τ_k, 0, 0)` and as
    /// `(τ_k, −Bᵀτ_k, 0)`, each normalized.
    ///
    /// Along `(τ, −Bᵀτ, 0)` the increment term of `F` cancels and
    /// `h_F(Z) ≤ h_Z(A_clᵀτ, 0, 0) + h_W(τ)`, while `(τ, 0, 0)` is bounded by
    /// its partner plus `h_V(Bᵀτ)`. A set holding whole chains therefore
    /// reproduces the disturbance series along `e` up to the chain tail.
    pub fn state_chains(&self, a_cl: &DMatrix<f64>, b: &DMatrix<f64>, seeds: &[Vec<f64>], depth: usize) -> Vec<Vec<f64>> {
        let (n, m) = (self.n, self.m);
        let act = a_cl.transpose();
        let bt = b.transpose();
        let mut out = Vec::new();
        for seed in seeds {
            let mut tau = nalgebra::DVector::from_column_slice(seed);
            for _ in 0..=depth {
                let norm = tau.norm();
                if norm < 1e-12 {
                    break;
                }
                tau /= norm;
                let btau = &bt * &tau;
                let mut plain = vec![0.0; self.dims()];
                plain[..n].copy_from_slice(tau.as_slice());
                let mut paired = plain.clone();
                for j in 0..m {
                    paired[n + j] = -btau[j];
                }
                out.push(plain);
                out.push(paired);
                tau = &act * &tau;
            }
        }
        out
    }

    /// Signed state axes.
    pub fn state_axis_seeds(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; self.n];
                e[i] = sign;
                out.push(e);
            }
        }
        out
    }
}

/// Static outer form of `{(x, v, w) : w ∈ W(x, Kx + v)}` intersected with
/// `X × V`: the state and auxiliary constraints on their blocks and the
/// wrapper envelope on the `w` block.
#[derive(Debug, Clone)]
pub struct GraphSet {
    halfspaces: HalfspaceSystem,
    n_state_rows: usize,
}

impl GraphSet {
    pub fn new(plant: &PlantModel, wrapper: &DisturbanceWrapper) -> Result<Self, LiftedError> {
        let (n, m) = (plant.n(), plant.m());
        if wrapper.directions().dims() != n || wrapper.n_state() != n || wrapper.n_aux() != m {
            return Err(LiftedError::invalid("wrapper dimensions do not match the plant"));
        }
        let d = 2 * n + m;
        let mut hs = HalfspaceSystem::new(d);
        let mut push_block = |offset: usize, dirs: &DirectionSet, h: &[f64]| {
            for (s, v) in dirs.iter().zip(h) {
                let mut row = vec![0.0; d];
                row[offset..offset + s.len()].copy_from_slice(s);
                hs.push(&row, *v);
            }
        };
        push_block(0, plant.x_set().directions(), plant.x_set().values());
        push_block(n, plant.v_set().directions(), plant.v_set().values());
        push_block(n + m, wrapper.directions(), wrapper.envelope());
        Ok(Self { halfspaces: hs, n_state_rows: plant.x_set().len() })
    }

    pub fn halfspaces(&self) -> &HalfspaceSystem {
        &self.halfspaces
    }

    /// Indices of the rows that come from the state constraints.
    pub fn state_rows(&self) -> std::ops::Range<usize> {
        0..self.n_state_rows
    }

    pub fn contains_point(&self, xi: &[f64], tol: f64) -> bool {
        self.halfspaces.contains_point(xi, tol)
    }

    /// Axes, every graph normal, `extra`, then `n_random` seeded directions,
    /// with duplicates dropped. Carrying the graph normals keeps each
    /// iterate's halfspace form inside `G`.
    pub fn lifted_directions(
        &self,
        extra: &[Vec<f64>],
        n_random: usize,
        seed: u64,
    ) -> Result<Arc<DirectionSet>, LiftedError> {
        let d = self.halfspaces.dims();
        let mut vectors: Vec<Vec<f64>> = (0..self.halfspaces.len()).map(|j| self.halfspaces.normal(j).to_vec()).collect();
        vectors.extend(extra.iter().cloned());
        let random = DirectionSet::generate(d, 2 * d + n_random, seed)?;
        vectors.extend(random.iter().skip(2 * d).map(|s| s.to_vec()));
        Ok(DirectionSet::from_vectors(d, &vectors)?)
    }
}
