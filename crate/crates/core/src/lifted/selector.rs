use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus};

use super::{FixedPointResult, LiftedError};
use crate::geom::SupportPolytope;
use crate::lp::{LinearProgram, LpError};

const SLICE_TOL: f64 = 1e-9;
const ZERO_ROW: f64 = 1e-14;

/// Feedback `κ(x)`: the minimum-norm `v` in the slice
/// `T(x) = {v : ∃w, (x, v, w) ∈ Z*}`.
#[derive(Debug, Clone)]
pub struct SelectorPolicy {
    z_star: SupportPolytope,
    proj_x: SupportPolytope,
    n: usize,
    m: usize,
}

/// Slice of `Z*` at fixed `x` over `y = (v, w)`, split into rows that still
/// involve `y` and the constant rows.
struct Slice {
    dims: usize,
    normals: Vec<f64>,
    offsets: Vec<f64>,
    const_violation: f64,
}

impl Slice {
    fn lp(&self, relax: f64) -> LinearProgram {
        LinearProgram::new(self.dims, self.normals.clone(), self.offsets.iter().map(|b| b + relax).collect())
    }

    fn rows(&self) -> usize {
        self.offsets.len()
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.normals[j * self.dims..(j + 1) * self.dims]
    }
}

impl SelectorPolicy {
    pub fn new(result: &FixedPointResult, n: usize, m: usize) -> Result<Self, LiftedError> {
        if result.z_star.dims() != 2 * n + m || result.proj_x.dims() != n {
            return Err(LiftedError::invalid("fixed point does not match (n, m)"));
        }
        Ok(Self { z_star: result.z_star.clone(), proj_x: result.proj_x.clone(), n, m })
    }

    pub fn proj_x(&self) -> &SupportPolytope {
        &self.proj_x
    }

    pub fn z_star(&self) -> &SupportPolytope {
        &self.z_star
    }

    fn slice(&self, x: &[f64]) -> Slice {
        let dims = self.m + self.n;
        let mut normals = Vec::new();
        let mut offsets = Vec::new();
        let mut const_violation: f64 = 0.0;
        for (s, h) in self.z_star.directions().iter().zip(self.z_star.values()) {
            let b = h - s[..self.n].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let a = &s[self.n..];
            if a.iter().map(|v| v * v).sum::<f64>().sqrt() < ZERO_ROW {
                const_violation = const_violation.max(-b);
            } else {
                normals.extend_from_slice(a);
                offsets.push(b);
            }
        }
        Slice { dims, normals, offsets, const_violation }
    }

    /// Exact membership in `Proj_x(Z*)`: the slice at `x`, with every row
    /// relaxed by `tol`, is non-empty. The stored `proj_x` is an outer
    /// description on finitely many directions and can be larger.
    pub fn in_tube(&self, x: &[f64], tol: f64) -> Result<bool, LiftedError> {
        if x.len() != self.n {
            return Err(LiftedError::invalid("state has the wrong dimension"));
        }
        let slice = self.slice(x);
        if slice.const_violation > tol {
            return Ok(false);
        }
        Ok(slice.lp(tol).is_feasible().map_err(lp_err)?)
    }

    /// Smallest uniform relaxation of the slice rows at `x` that makes the
    /// slice non-empty; zero inside the tube.
    pub fn tube_violation(&self, x: &[f64]) -> Result<f64, LiftedError> {
        if x.len() != self.n {
            return Err(LiftedError::invalid("state has the wrong dimension"));
        }
        let slice = self.slice(x);
        if slice.const_violation <= 0.0 && slice.lp(0.0).is_feasible().map_err(lp_err)? {
            return Ok(0.0);
        }
        min_violation(&slice)
    }

    /// Whether some `w` completes `(x, v, w)` into `Z*`, within 1e-9.
    pub fn in_slice(&self, x: &[f64], v: &[f64]) -> Result<bool, LiftedError> {
        let slice = self.slice(x);
        if slice.const_violation > SLICE_TOL {
            return Ok(false);
        }
        let (m, n) = (self.m, self.n);
        let mut normals = Vec::new();
        let mut offsets = Vec::new();
        for j in 0..slice.rows() {
            let row = slice.row(j);
            let b = slice.offsets[j] + SLICE_TOL - row[..m].iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            let a = &row[m..];
            if a.iter().map(|t| t * t).sum::<f64>().sqrt() < ZERO_ROW {
                if b < 0.0 {
                    return Ok(false);
                }
            } else {
                normals.extend_from_slice(a);
                offsets.push(b);
            }
        }
        Ok(LinearProgram::new(n, normals, offsets).is_feasible().map_err(lp_err)?)
    }

    /// `κ(x)`.
    pub fn select(&self, x: &[f64]) -> Result<Vec<f64>, LiftedError> {
        if x.len() != self.n {
            return Err(LiftedError::invalid("state has the wrong dimension"));
        }
        let outside = self
            .proj_x
            .directions()
            .iter()
            .zip(self.proj_x.values())
            .map(|(s, h)| s.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - h)
            .fold(f64::NEG_INFINITY, f64::max);
        if outside > SLICE_TOL {
            return Err(LiftedError::OutOfTube { violation: outside });
        }
        let slice = self.slice(x);
        if slice.const_violation > SLICE_TOL || !slice.lp(SLICE_TOL).is_feasible().map_err(lp_err)? {
            return Err(LiftedError::OutOfTube { violation: min_violation(&slice)? });
        }
        let v_qp = self.min_norm(&slice)?;
        if self.in_slice(x, &v_qp)? {
            return Ok(v_qp);
        }
        // Pull the QP answer toward a deep interior point until it verifies.
        let centre = chebyshev_centre(&slice)?;
        let v_c = &centre[..self.m];
        let blend = |t: f64| -> Vec<f64> { v_qp.iter().zip(v_c).map(|(a, b)| (1.0 - t) * a + t * b).collect() };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if self.in_slice(x, &blend(mid))? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let v = blend(hi);
        if !self.in_slice(x, &v)? {
            return Err(LiftedError::SelectorInfeasible { min_violation: min_violation(&slice)? });
        }
        Ok(v)
    }

    fn min_norm(&self, slice: &Slice) -> Result<Vec<f64>, LiftedError> {
        let dims = slice.dims;
        let rows = slice.rows();
        let mut p_diag = vec![0.0; dims];
        p_diag[..self.m].fill(1.0);
        let p = CscMatrix::new(
            dims,
            dims,
            (0..=dims).map(|c| c.min(self.m)).collect(),
            (0..self.m).collect(),
            p_diag[..self.m].to_vec(),
        );
        let mut colptr = vec![0usize];
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        for c in 0..dims {
            for r in 0..rows {
                let v = slice.normals[r * dims + c];
                if v != 0.0 {
                    rowval.push(r);
                    nzval.push(v);
                }
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(rows, dims, colptr, rowval, nzval);
        let q = vec![0.0; dims];
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_gap_abs(1e-11)
            .tol_gap_rel(1e-11)
            .tol_feas(1e-11)
            .max_iter(400)
            .build()
            .map_err(|e| LiftedError::Qp(format!("{e:?}")))?;
        let cones = [NonnegativeConeT(rows)];
        let mut solver = DefaultSolver::new(&p, &q, &a, &slice.offsets, &cones, settings)
            .map_err(|e| LiftedError::Qp(e.to_string()))?;
        solver.solve();
        match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(solver.solution.x[..self.m].to_vec()),
            other => Err(LiftedError::Qp(format!("{other:?}"))),
        }
    }
}

fn lp_err(e: LpError) -> LiftedError {
    LiftedError::Geom(e.into())
}

/// Smallest uniform relaxation `t ≥ 0` of the slice rows that makes it
/// feasible.
fn min_violation(slice: &Slice) -> Result<f64, LiftedError> {
    let d = slice.dims + 1;
    let mut normals = Vec::new();
    let mut offsets = Vec::new();
    for j in 0..slice.rows() {
        normals.extend_from_slice(slice.row(j));
        normals.push(-1.0);
        offsets.push(slice.offsets[j]);
    }
    let mut cap = vec![0.0; d];
    cap[d - 1] = -1.0;
    normals.extend_from_slice(&cap);
    offsets.push(0.0);
    cap[d - 1] = 1.0;
    normals.extend_from_slice(&cap);
    offsets.push(1e9);
    let mut obj = vec![0.0; d];
    obj[d - 1] = -1.0;
    let sol = LinearProgram::new(d, normals, offsets).maximize(&obj).map_err(lp_err)?;
    Ok((-sol.value).max(slice.const_violation))
}

/// Centre of the largest ball inside the slice (radius capped at 1).
fn chebyshev_centre(slice: &Slice) -> Result<Vec<f64>, LiftedError> {
    let d = slice.dims + 1;
    let mut normals = Vec::new();
    let mut offsets = Vec::new();
    for j in 0..slice.rows() {
        let row = slice.row(j);
        normals.extend_from_slice(row);
        normals.push(row.iter().map(|v| v * v).sum::<f64>().sqrt());
        offsets.push(slice.offsets[j]);
    }
    let mut cap = vec![0.0; d];
    cap[d - 1] = 1.0;
    normals.extend_from_slice(&cap);
    offsets.push(1.0);
    cap[d - 1] = -1.0;
    normals.extend_from_slice(&cap);
    offsets.push(0.0);
    let mut obj = vec![0.0; d];
    obj[d - 1] = 1.0;
    let sol = LinearProgram::new(d, normals, offsets).maximize(&obj).map_err(lp_err)?;
    Ok(sol.point[..slice.dims].to_vec())
}
