use serde::{Deserialize, Serialize};

use super::WrapperError;

/// Axis-aligned box in `(x, v)` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RegionBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, WrapperError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(WrapperError::invalid("region bounds have different lengths"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
            return Err(WrapperError::invalid("region needs finite lo <= hi on every axis"));
        }
        Ok(Self { lo, hi })
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= a - tol && *v <= b + tol)
    }

    pub fn contains_box(&self, lo: &[f64], hi: &[f64], tol: f64) -> bool {
        self.contains(lo, tol) && self.contains(hi, tol)
    }
}

/// Uniform grid of cell-centre anchors covering a [`RegionBox`].
///
/// `eps` is the achieved covering radius, the half-diagonal of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorGrid {
    region: RegionBox,
    counts: Vec<usize>,
    eps: f64,
    alpha_anc: f64,
    alpha_uniform: f64,
}

impl AnchorGrid {
    /// Refines axes one cell at a time, widest cell first, until the covering
    /// radius is at most `eps`.
    pub fn build(region: RegionBox, eps: f64, alpha_epoch: f64, max_anchors: usize) -> Result<Self, WrapperError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(WrapperError::invalid(format!("eps = {eps} must be positive")));
        }
        if !(alpha_epoch > 0.0 && alpha_epoch < 1.0) {
            return Err(WrapperError::invalid(format!("alpha_epoch = {alpha_epoch} outside (0, 1)")));
        }
        let d = region.dims();
        let mut counts = vec![1usize; d];
        let radius = |counts: &[usize]| {
            (0..d).map(|i| (region.width(i) / (2.0 * counts[i] as f64)).powi(2)).sum::<f64>().sqrt()
        };
        while radius(&counts) > eps {
            let axis = (0..d)
                .max_by(|&i, &j| {
                    let wi = region.width(i) / counts[i] as f64;
                    let wj = region.width(j) / counts[j] as f64;
                    wi.total_cmp(&wj).then(j.cmp(&i))
                })
                .expect("region has at least one axis");
            counts[axis] += 1;
            let total = counts.iter().try_fold(1usize, |acc, c| acc.checked_mul(*c));
            match total {
                Some(t) if t <= max_anchors => {}
                _ => return Err(WrapperError::GridTooFine { eps, max_anchors }),
            }
        }
        let eps = radius(&counts);
        let total: usize = counts.iter().product();
        let alpha_anc = alpha_epoch / total as f64;
        Ok(Self { region, counts, eps, alpha_anc, alpha_uniform: total as f64 * alpha_anc })
    }

    pub fn region(&self) -> &RegionBox {
        &self.region
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn alpha_anc(&self) -> f64 {
        self.alpha_anc
    }

    pub fn alpha_uniform(&self) -> f64 {
        self.alpha_uniform
    }

    pub fn dims(&self) -> usize {
        self.counts.len()
    }

    fn cell_width(&self, axis: usize) -> f64 {
        self.region.width(axis) / self.counts[axis] as f64
    }

    fn centre(&self, axis: usize, k: usize) -> f64 {
        self.region.lo[axis] + (k as f64 + 0.5) * self.cell_width(axis)
    }

    /// Per-axis cell indices of anchor `i`; the last axis varies fastest.
    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims()];
        for axis in (0..self.dims()).rev() {
            idx[axis] = i % self.counts[axis];
            i /= self.counts[axis];
        }
        idx
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (k, c)| acc * c + k)
    }

    pub fn anchor(&self, i: usize) -> Vec<f64> {
        self.multi_index(i).iter().enumerate().map(|(axis, &k)| self.centre(axis, k)).collect()
    }

    pub fn anchors(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.anchor(i)).collect()
    }

    fn axis_cell(&self, axis: usize, v: f64) -> usize {
        let w = self.cell_width(axis);
        if w <= 0.0 {
            return 0;
        }
        let k = ((v - self.region.lo[axis]) / w).floor();
        (k.max(0.0) as usize).min(self.counts[axis] - 1)
    }

    /// Anchor of the cell containing `z` (points on shared faces go to the
    /// lower-index cell after clamping), or `None` outside the region.
    pub fn nearest(&self, z: &[f64]) -> Option<usize> {
        if z.len() != self.dims() || !self.region.contains(z, 1e-12) {
            return None;
        }
        let idx: Vec<usize> = z.iter().enumerate().map(|(a, v)| self.axis_cell(a, *v)).collect();
        Some(self.flat_index(&idx))
    }

    /// Every cell meeting the box `[lo, hi]`, with the largest distance from
    /// its anchor to a point of the cell ∩ box.
    pub fn cells_meeting(&self, lo: &[f64], hi: &[f64]) -> Vec<(usize, f64)> {
        let d = self.dims();
        let ranges: Vec<(usize, usize)> =
            (0..d).map(|a| (self.axis_cell(a, lo[a]), self.axis_cell(a, hi[a]))).collect();
        let mut out = Vec::new();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            let mut d2 = 0.0;
            for (a, &k) in idx.iter().enumerate() {
                let c = self.centre(a, k);
                let w = self.cell_width(a);
                let cl = (c - 0.5 * w).max(lo[a]);
                let ch = (c + 0.5 * w).min(hi[a]);
                let far = (cl - c).abs().max((ch - c).abs()).min(0.5 * w);
                d2 += far * far;
            }
            out.push((self.flat_index(&idx), d2.sqrt()));
            let mut a = d;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                if idx[a] < ranges[a].1 {
                    idx[a] += 1;
                    break;
                }
                idx[a] = ranges[a].0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> RegionBox {
        RegionBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn covering_radius_and_budget() {
        let g = AnchorGrid::build(unit_square(), 0.3, 0.05, 10_000).unwrap();
        assert!(g.eps() <= 0.3);
        assert_eq!(g.counts(), &[5, 5]);
        assert!((g.alpha_uniform() - 0.05).abs() < 1e-17);
        assert_eq!(g.alpha_uniform(), g.len() as f64 * g.alpha_anc());
    }

    #[test]
    fn single_anchor_when_eps_is_large() {
        let g = AnchorGrid::build(unit_square(), 2.0, 0.05, 10).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.anchor(0), vec![0.0, 0.0]);
        assert!((g.eps() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_too_fine() {
        assert!(matches!(
            AnchorGrid::build(unit_square(), 0.01, 0.05, 100),
            Err(WrapperError::GridTooFine { .. })
        ));
    }

    #[test]
    fn every_point_is_within_eps_of_its_anchor() {
        let g = AnchorGrid::build(unit_square(), 0.2, 0.05, 10_000).unwrap();
        for i in 0..=40 {
            for j in 0..=40 {
                let z = [-1.0 + 0.05 * i as f64, -1.0 + 0.05 * j as f64];
                let a = g.anchor(g.nearest(&z).unwrap());
                let d = ((z[0] - a[0]).powi(2) + (z[1] - a[1]).powi(2)).sqrt();
                assert!(d <= g.eps() + 1e-12);
            }
        }
        assert!(g.nearest(&[1.5, 0.0]).is_none());
    }

    #[test]
    fn cells_meeting_a_point_and_the_region() {
        let g = AnchorGrid::build(unit_square(), 0.3, 0.05, 10_000).unwrap();
        let a = g.anchor(5);
        let hits = g.cells_meeting(&a, &a);
        assert_eq!(hits, vec![(5, 0.0)]);
        let all = g.cells_meeting(&g.region().lo.clone(), &g.region().hi.clone());
        assert_eq!(all.len(), g.len());
        assert!(all.iter().all(|(_, d)| (d - g.eps()).abs() < 1e-15));
    }

    #[test]
    fn degenerate_axis_gets_one_cell() {
        let r = RegionBox::new(vec![-1.0, 0.0], vec![1.0, 0.0]).unwrap();
        let g = AnchorGrid::build(r, 0.1, 0.05, 100).unwrap();
        assert_eq!(g.counts(), &[10, 1]);
    }
}
