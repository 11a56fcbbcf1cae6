//! Brute-force helpers shared by the integration tests. Independent of the
//! LP path used by the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Vertices of `{y : n_j·y ≤ c_j}` by enumerating all `dims`-subsets of rows.
pub fn vertices(dims: usize, normals: &[Vec<f64>], offsets: &[f64]) -> Vec<Vec<f64>> {
    let rows = normals.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..dims).collect();
    loop {
        let a = DMatrix::from_fn(dims, dims, |r, c| normals[idx[r]][c]);
        let b = DVector::from_fn(dims, |r, _| offsets[idx[r]]);
        if let Some(x) = a.clone().lu().solve(&b) {
            if (&a * &x - &b).amax() < 1e-9 {
                let feasible = normals
                    .iter()
                    .zip(offsets)
                    .all(|(n, c)| n.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= c + 1e-9);
                if feasible {
                    out.push(x.iter().copied().collect());
                }
            }
        }
        // next combination
        let mut k = dims;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if idx[k] < rows - dims + k {
                idx[k] += 1;
                for j in k + 1..dims {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn support_of_points(points: &[Vec<f64>], s: &[f64]) -> f64 {
    points
        .iter()
        .map(|p| p.iter().zip(s).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn box_vertices(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let d = lo.len();
    (0..1usize << d)
        .map(|mask| (0..d).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect())
        .collect()
}
