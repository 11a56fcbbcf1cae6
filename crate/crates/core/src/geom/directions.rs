use std::sync::Arc;

use super::GeomError;

const UNIT_TOL: f64 = 1e-12;

/// SplitMix64, the generator behind the pseudo-random support directions.
///
/// Fixed here (rather than taken from `rand`) so that a `(dims, n_f, seed)`
/// triple names the same direction set on every platform and release.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[0, 1)` with 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller (cosine branch only).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// A fixed, finite list of unit vectors on which every set is represented.
///
/// Always contains `+e_i` and `-e_i` for each axis, in that order, as its
/// first `2·dims` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    dims: usize,
    seed: Option<u64>,
    /// Row-major `len × dims`.
    dirs: Vec<f64>,
}

impl DirectionSet {
    /// The `n_f`-direction set for `(dims, seed)`: signed axes first, then
    /// normalized Gaussian draws from [`SplitMix64`].
    pub fn generate(dims: usize, n_f: usize, seed: u64) -> Result<Arc<Self>, GeomError> {
        if dims == 0 {
            return Err(GeomError::invalid("direction set needs dims >= 1"));
        }
        if n_f < 2 * dims {
            return Err(GeomError::invalid(format!(
                "n_f = {n_f} is below 2·dims = {}",
                2 * dims
            )));
        }
        if dims == 1 && n_f > 2 {
            return Err(GeomError::invalid("a 1-dim direction set holds only +1 and -1"));
        }
        let mut dirs = axis_block(dims);
        let mut rng = SplitMix64::new(seed);
        let mut count = 2 * dims;
        let mut attempts = 0usize;
        while count < n_f {
            attempts += 1;
            if attempts > 1000 * n_f {
                return Err(GeomError::invalid("could not draw enough distinct directions"));
            }
            let v: Vec<f64> = (0..dims).map(|_| rng.next_gaussian()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-6 {
                continue;
            }
            let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
            let duplicate = dirs
                .chunks_exact(dims)
                .any(|d| d.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() > 1.0 - 1e-12);
            if duplicate {
                continue;
            }
            dirs.extend(v);
            count += 1;
        }
        Ok(Arc::new(Self { dims, seed: Some(seed), dirs }))
    }

    /// Only the `2·dims` signed axis vectors.
    pub fn axes(dims: usize) -> Arc<Self> {
        Self::generate(dims, 2 * dims, 0).expect("axis set is always valid")
    }

    /// A set from explicit vectors. Each is normalized; the signed axes are
    /// prepended when missing.
    pub fn from_vectors(dims: usize, vectors: &[Vec<f64>]) -> Result<Arc<Self>, GeomError> {
        if dims == 0 {
            return Err(GeomError::invalid("direction set needs dims >= 1"));
        }
        let mut out = Self { dims, seed: None, dirs: axis_block(dims) };
        for v in vectors {
            if v.len() != dims {
                return Err(GeomError::invalid(format!(
                    "direction of length {} in a {dims}-dim set",
                    v.len()
                )));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || norm < 1e-12 {
                return Err(GeomError::invalid("zero or non-finite direction"));
            }
            let u: Vec<f64> = v.iter().map(|x| x / norm).collect();
            if out.find(&u).is_none() {
                out.dirs.extend(u);
            }
        }
        Ok(Arc::new(out))
    }

    /// Rebuilds a serialized set, checking the unit-norm and axis invariants.
    pub(crate) fn from_parts(
        dims: usize,
        seed: Option<u64>,
        vectors: &[Vec<f64>],
    ) -> Result<Arc<Self>, GeomError> {
        if dims == 0 || vectors.len() < 2 * dims {
            return Err(GeomError::invalid("direction set too small"));
        }
        let mut dirs = Vec::with_capacity(vectors.len() * dims);
        for v in vectors {
            if v.len() != dims {
                return Err(GeomError::invalid("direction length mismatch"));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(GeomError::invalid(format!("direction norm {norm} is not 1")));
            }
            dirs.extend(v);
        }
        if dirs[..2 * dims * dims] != axis_block(dims)[..] {
            return Err(GeomError::invalid("direction set must start with the signed axes"));
        }
        Ok(Arc::new(Self { dims, seed, dirs }))
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dirs.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn dir(&self, i: usize) -> &[f64] {
        &self.dirs[i * self.dims..(i + 1) * self.dims]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.dirs.chunks_exact(self.dims)
    }

    /// Row-major matrix of all directions.
    pub fn as_rows(&self) -> &[f64] {
        &self.dirs
    }

    /// Index of the stored direction equal to `s` (within 1e-12), if any.
    pub fn find(&self, s: &[f64]) -> Option<usize> {
        if s.len() != self.dims {
            return None;
        }
        self.iter()
            .position(|d| d.iter().zip(s).all(|(a, b)| (a - b).abs() <= UNIT_TOL))
    }

    /// Index of `+e_axis` (`positive`) or `-e_axis`.
    pub fn axis_index(&self, axis: usize, positive: bool) -> usize {
        2 * axis + usize::from(!positive)
    }

    /// Whether two handles name the same list of directions.
    pub fn same_as(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || **self == **other
    }
}

fn axis_block(dims: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * dims * dims);
    for i in 0..dims {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; dims];
            e[i] = sign;
            out.extend(e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_only_sets() {
        let d = DirectionSet::generate(2, 4, 0).unwrap();
        let got: Vec<Vec<f64>> = d.iter().map(|v| v.to_vec()).collect();
        assert_eq!(got, vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]);

        let d = DirectionSet::generate(3, 6, 0).unwrap();
        assert_eq!(d.len(), 6);
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            assert_eq!(d.dir(d.axis_index(i, true)), &e[..]);
            e[i] = -1.0;
            assert_eq!(d.dir(d.axis_index(i, false)), &e[..]);
        }
    }

    #[test]
    fn generation_is_deterministic_and_unit() {
        let a = DirectionSet::generate(2, 8, 7).unwrap();
        let b = DirectionSet::generate(2, 8, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        for d in a.iter() {
            let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let c = DirectionSet::generate(2, 8, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_directions_is_rejected() {
        assert!(matches!(DirectionSet::generate(3, 5, 0), Err(GeomError::InvalidArgument(_))));
        assert!(matches!(DirectionSet::generate(1, 3, 0), Err(GeomError::InvalidArgument(_))));
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs of SplitMix64 seeded with 0.
        let mut g = SplitMix64::new(0);
        assert_eq!(g.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(g.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn custom_vectors_get_axes_prepended() {
        let d = DirectionSet::from_vectors(2, &[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(d.len(), 5);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(d.find(&[h, h]).is_some());
    }
}
