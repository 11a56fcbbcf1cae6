//! Small dense linear programs of the form `max cᵀy  s.t.  G y ≤ h`, `y` free.
//!
//! Every set operation in this crate reduces to this shape with a handful of
//! variables (the ambient dimension, at most a few dozen) and a few hundred
//! rows. The solver runs a revised primal simplex on the dual problem
//!
//! ```text
//! min hᵀλ  s.t.  Gᵀλ = c,  λ ≥ 0
//! ```
//!
//! whose basis is only `dims × dims`. The basis is refactored from scratch at
//! every pivot, so no update error accumulates. When `G` contains both signed
//! unit vectors for every axis, a feasible starting basis is known and phase 1
//! is skipped.
//!
//! The returned value is the dual objective of a feasible `λ`, so by weak
//! duality it is never below the true optimum (outer-sound up to rounding).

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const PHASE1_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LpError {
    /// `G y ≤ h` has no solution.
    #[error("linear program is infeasible")]
    Infeasible,
    /// The objective is unbounded above over `G y ≤ h`.
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("singular simplex basis")]
    Singular,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Optimal objective value.
    pub value: f64,
    /// An optimal point `y`.
    pub point: Vec<f64>,
}

/// The constraint system `G y ≤ h` of a family of linear programs sharing
/// constraints but not objectives.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    dims: usize,
    /// Row-major `rows × dims`.
    normals: Vec<f64>,
    offsets: Vec<f64>,
    /// Row index of `+e_i` and `-e_i` for every axis, when all are present.
    crash: Option<Vec<(usize, usize)>>,
}

impl LinearProgram {
    /// Builds the system from row-major normals. Panics if the lengths disagree.
    pub fn new(dims: usize, normals: Vec<f64>, offsets: Vec<f64>) -> Self {
        assert!(dims > 0, "linear program needs at least one variable");
        assert_eq!(normals.len(), dims * offsets.len(), "normals/offsets shape mismatch");
        let crash = find_axis_rows(dims, &normals);
        Self { dims, normals, offsets, crash }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn rows(&self) -> usize {
        self.offsets.len()
    }

    pub fn normal(&self, row: usize) -> &[f64] {
        &self.normals[row * self.dims..(row + 1) * self.dims]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Solves `max objectiveᵀ y` over the system.
    pub fn maximize(&self, objective: &[f64]) -> Result<LpSolution, LpError> {
        assert_eq!(objective.len(), self.dims, "objective dimension mismatch");
        Simplex::new(self, objective).run()
    }

    /// Largest violation `max_j (G_j y − h_j)` at `y` (negative when strictly inside).
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        (0..self.rows())
            .map(|j| dot(self.normal(j), y) - self.offsets[j])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether the system admits any solution.
    pub fn is_feasible(&self) -> Result<bool, LpError> {
        let mut objective = vec![0.0; self.dims];
        objective[0] = 1.0;
        match self.maximize(&objective) {
            Ok(_) | Err(LpError::Unbounded) => Ok(true),
            Err(LpError::Infeasible) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

fn find_axis_rows(dims: usize, normals: &[f64]) -> Option<Vec<(usize, usize)>> {
    let mut plus = vec![None; dims];
    let mut minus = vec![None; dims];
    for (row, n) in normals.chunks_exact(dims).enumerate() {
        let mut axis = None;
        let mut clean = true;
        for (i, &v) in n.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            if axis.is_none() && (v == 1.0 || v == -1.0) {
                axis = Some((i, v > 0.0));
            } else {
                clean = false;
                break;
            }
        }
        if let (true, Some((i, positive))) = (clean, axis) {
            let slot = if positive { &mut plus[i] } else { &mut minus[i] };
            slot.get_or_insert(row);
        }
    }
    plus.into_iter()
        .zip(minus)
        .map(|(p, m)| Some((p?, m?)))
        .collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// LU factorization with partial pivoting of a small dense square matrix.
struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    fn factor(n: usize, mut a: Vec<f64>) -> Result<Self, LpError> {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|r| (r, a[r * n + k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best < 1e-14 {
                return Err(LpError::Singular);
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for r in k + 1..n {
                let f = a[r * n + k] / pivot;
                a[r * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        a[r * n + c] -= f * a[k * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    /// Solves `M x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s / self.lu[r * n + r];
        }
        x
    }

    /// Solves `Mᵀ x = b`.
    fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        for r in 0..n {
            let mut s = z[r];
            for c in 0..r {
                s -= self.lu[c * n + r] * z[c];
            }
            z[r] = s / self.lu[r * n + r];
        }
        for r in (0..n).rev() {
            let mut s = z[r];
            for c in r + 1..n {
                s -= self.lu[c * n + r] * z[c];
            }
            z[r] = s;
        }
        let mut x = vec![0.0; n];
        for (r, &p) in self.perm.iter().enumerate() {
            x[p] = z[r];
        }
        x
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    One,
    Two,
}

/// Primal simplex on the dual standard form. Columns `0..rows` are the dual
/// multipliers, columns `rows..rows+dims` are phase-1 artificials.
struct Simplex<'a> {
    lp: &'a LinearProgram,
    rhs: &'a [f64],
    signs: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram, rhs: &'a [f64]) -> Self {
        let signs = rhs.iter().map(|&c| if c < 0.0 { -1.0 } else { 1.0 }).collect();
        Self {
            lp,
            rhs,
            signs,
            basis: Vec::new(),
            in_basis: vec![false; lp.rows() + lp.dims()],
        }
    }

    fn column(&self, j: usize) -> Vec<f64> {
        let d = self.lp.dims;
        if j < self.lp.rows() {
            self.lp.normal(j).to_vec()
        } else {
            let mut e = vec![0.0; d];
            e[j - self.lp.rows()] = self.signs[j - self.lp.rows()];
            e
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.lp.rows()
    }

    fn cost(&self, j: usize, phase: Phase) -> f64 {
        match (phase, self.is_artificial(j)) {
            (Phase::One, true) => 1.0,
            (Phase::One, false) => 0.0,
            (Phase::Two, true) => 0.0,
            (Phase::Two, false) => self.lp.offsets[j],
        }
    }

    fn set_basis(&mut self, basis: Vec<usize>) {
        self.in_basis.iter_mut().for_each(|b| *b = false);
        for &j in &basis {
            self.in_basis[j] = true;
        }
        self.basis = basis;
    }

    fn factor(&self) -> Result<DenseLu, LpError> {
        let d = self.lp.dims;
        let mut m = vec![0.0; d * d];
        for (k, &j) in self.basis.iter().enumerate() {
            for (r, v) in self.column(j).into_iter().enumerate() {
                m[r * d + k] = v;
            }
        }
        DenseLu::factor(d, m)
    }

    fn run(mut self) -> Result<LpSolution, LpError> {
        let d = self.lp.dims;
        let rows = self.lp.rows();
        if let Some(axes) = &self.lp.crash {
            let basis = axes
                .iter()
                .zip(self.rhs)
                .map(|(&(p, m), &c)| if c >= 0.0 { p } else { m })
                .collect();
            self.set_basis(basis);
        } else {
            self.set_basis((rows..rows + d).collect());
            self.iterate(Phase::One)?;
            let lu = self.factor()?;
            let xb = lu.solve(self.rhs);
            let infeasibility: f64 = self
                .basis
                .iter()
                .zip(&xb)
                .filter(|(&j, _)| self.is_artificial(j))
                .map(|(_, &x)| x.max(0.0))
                .sum();
            let scale = 1.0 + self.rhs.iter().map(|c| c.abs()).sum::<f64>();
            if infeasibility > PHASE1_TOL * scale {
                // Gᵀλ = c has no non-negative solution: c leaves the cone of
                // the normals, so the primal is unbounded along some ray.
                return Err(LpError::Unbounded);
            }
            self.drive_out_artificials()?;
        }
        self.iterate(Phase::Two)?;

        let lu = self.factor()?;
        let xb = lu.solve(self.rhs);
        let cb: Vec<f64> = self.basis.iter().map(|&j| self.cost(j, Phase::Two)).collect();
        let point = lu.solve_transpose(&cb);
        let value = self
            .basis
            .iter()
            .zip(&xb)
            .filter(|(&j, _)| !self.is_artificial(j))
            .map(|(&j, &x)| self.lp.offsets[j] * x.max(0.0))
            .sum();
        Ok(LpSolution { value, point })
    }

    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let rows = self.lp.rows();
        for k in 0..self.lp.dims {
            if !self.is_artificial(self.basis[k]) {
                continue;
            }
            let lu = self.factor()?;
            let mut e = vec![0.0; self.lp.dims];
            e[k] = 1.0;
            let rho = lu.solve_transpose(&e);
            let best = (0..rows)
                .filter(|&j| !self.in_basis[j])
                .map(|j| (j, dot(&rho, self.lp.normal(j)).abs()))
                .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                    Some(a) if a.1 >= x.1 => Some(a),
                    _ => Some(x),
                });
            if let Some((j, mag)) = best {
                if mag > 1e-9 {
                    let mut basis = self.basis.clone();
                    basis[k] = j;
                    self.set_basis(basis);
                }
            }
        }
        Ok(())
    }

    fn iterate(&mut self, phase: Phase) -> Result<(), LpError> {
        let rows = self.lp.rows();
        let d = self.lp.dims;
        let limit = 50 * (rows + d) + 100;
        let mut degenerate_streak = 0usize;
        for _ in 0..limit {
            let lu = self.factor()?;
            let xb = lu.solve(self.rhs);
            let cb: Vec<f64> = self.basis.iter().map(|&j| self.cost(j, phase)).collect();
            let pi = lu.solve_transpose(&cb);

            let bland = degenerate_streak > 2 * d;
            let mut entering = None;
            let mut best = -COST_TOL;
            for j in 0..rows {
                if self.in_basis[j] {
                    continue;
                }
                let reduced = self.cost(j, phase) - dot(&pi, self.lp.normal(j));
                if reduced < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = reduced;
                }
            }
            let Some(j) = entering else {
                return Ok(());
            };

            let dir = lu.solve(&self.column(j));
            let mut leave: Option<(usize, f64, f64)> = None;
            for (k, (&bj, &dk)) in self.basis.iter().zip(&dir).enumerate() {
                let ratio = if phase == Phase::Two && self.is_artificial(bj) {
                    if dk.abs() > PIVOT_TOL {
                        0.0
                    } else {
                        continue;
                    }
                } else if dk > PIVOT_TOL {
                    xb[k].max(0.0) / dk
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((lk, lr, ld)) => {
                        if ratio < lr - 1e-12 {
                            true
                        } else if ratio <= lr + 1e-12 {
                            if bland {
                                bj < self.basis[lk]
                            } else {
                                dk.abs() > ld
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((k, ratio, dk.abs()));
                }
            }
            let Some((k, ratio, _)) = leave else {
                return match phase {
                    // Dual unbounded below: the primal is empty.
                    Phase::Two => Err(LpError::Infeasible),
                    Phase::One => Err(LpError::Singular),
                };
            };
            if ratio <= 1e-14 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            let mut basis = self.basis.clone();
            basis[k] = j;
            self.set_basis(basis);
        }
        Err(LpError::IterationLimit)
    }
}
