//! Projected product series, their partial sums and the CUSUM processes
//! built from them.
//!
//! Covariance matrices are never formed. For a projection pair `(v, w)` the
//! bilinear form of the partial-sum matrix is `v' Σ̂_k w = Σ_{i≤k} (v'Y_i)(w'Y_i)`,
//! so each observation contributes one scalar product and the work is
//! `O(N·d)` per sample.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MODULE: &str = "sumproc";

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Cumulative sums with a leading zero: `out[0] = 0`, `out[k] = Σ_{i<k} x[i]`.
pub fn cumulative(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let iter = values.into_iter();
    let mut out = Vec::with_capacity(iter.size_hint().0 + 1);
    out.push(0.0);
    let mut acc = CompensatedSum::default();
    for x in iter {
        acc.add(x);
        out.push(acc.value());
    }
    out
}

/// A pair of weight vectors `(v, w)` with their ℓ1 norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPair {
    v: Vec<f64>,
    w: Vec<f64>,
    l1_v: f64,
    l1_w: f64,
}

impl ProjectionPair {
    pub fn new(v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        check_weights("v", &v)?;
        check_weights("w", &w)?;
        if v.len() != w.len() {
            return Err(Error::shape(
                MODULE,
                format!("v has length {} but w has length {}", v.len(), w.len()),
            ));
        }
        let l1_v = l1(&v);
        let l1_w = l1(&w);
        Ok(Self { v, w, l1_v, l1_w })
    }

    /// The quadratic-form pair `v = w`.
    pub fn quadratic(w: Vec<f64>) -> Result<Self> {
        Self::new(w.clone(), w)
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn l1_v(&self) -> f64 {
        self.l1_v
    }

    pub fn l1_w(&self) -> f64 {
        self.l1_w
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    /// Pair rescaled as `(c·v, w)`.
    pub fn scaled_v(&self, c: f64) -> Result<Self> {
        Self::new(self.v.iter().map(|x| c * x).collect(), self.w.clone())
    }

    /// Short SHA-256 digest of both vectors, for provenance records.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for x in self.v.iter().chain(&self.w) {
            hasher.update(x.to_le_bytes());
        }
        let full = hasher.finalize();
        hex::encode(&full[..8])
    }
}

fn l1(x: &[f64]) -> f64 {
    let mut acc = CompensatedSum::default();
    x.iter().for_each(|v| acc.add(v.abs()));
    acc.value()
}

fn check_weights(name: &str, x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::shape(MODULE, format!("weight vector {name} is empty")));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::domain(MODULE, format!("weight vector {name}[{i}] is not finite")));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::domain(MODULE, format!("weight vector {name} is all zero")));
    }
    Ok(())
}

/// One sample reduced to its scalar product series and partial sums.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSample {
    projections: Option<(Vec<f64>, Vec<f64>)>,
    p: Vec<f64>,
    s: Vec<f64>,
}

impl ProjectedSample {
    /// Wraps an already computed product series `p_i = (v'Y_i)(w'Y_i)`.
    pub fn from_products(p: Vec<f64>) -> Self {
        let s = cumulative(p.iter().copied());
        Self {
            projections: None,
            p,
            s,
        }
    }

    /// `v'Y_i`, when the sample was built by [`project`].
    pub fn x(&self) -> Option<&[f64]> {
        self.projections.as_ref().map(|(x, _)| x.as_slice())
    }

    /// `w'Y_i`, when the sample was built by [`project`].
    pub fn y(&self) -> Option<&[f64]> {
        self.projections.as_ref().map(|(_, y)| y.as_slice())
    }

    pub fn products(&self) -> &[f64] {
        &self.p
    }

    /// Partial sums `S_0 = 0, S_k = Σ_{i≤k} p_i`; length `N + 1`.
    pub fn partial_sums(&self) -> &[f64] {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Restriction to observations `range` (0-based, half-open).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let projections = self
            .projections
            .as_ref()
            .map(|(x, y)| (x[range.clone()].to_vec(), y[range.clone()].to_vec()));
        let p = self.p[range].to_vec();
        let s = cumulative(p.iter().copied());
        Self { projections, p, s }
    }
}

/// Projects every row of `sample` (rows = time) onto `pair`.
pub fn project(sample: ArrayView2<'_, f64>, pair: &ProjectionPair) -> Result<ProjectedSample> {
    let (n, d) = sample.dim();
    if d != pair.dim() {
        return Err(Error::shape(
            MODULE,
            format!("sample has {d} columns but the projection has length {}", pair.dim()),
        ));
    }
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for row in sample.rows() {
        let (mut a, mut b) = (0.0, 0.0);
        for ((&obs, &vv), &ww) in row.iter().zip(pair.v()).zip(pair.w()) {
            a += vv * obs;
            b += ww * obs;
        }
        x.push(a);
        y.push(b);
    }
    let p: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let s = cumulative(p.iter().copied());
    Ok(ProjectedSample {
        projections: Some((x, y)),
        p,
        s,
    })
}

/// Population counterpart `v' Cov(Y_i) w` of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetBilinear {
    Constant(f64),
    Sequence(Vec<f64>),
}

impl TargetBilinear {
    /// Cumulative target sums `Σ_{i≤k} target_i`, `k = 0..=n`.
    fn cumulative(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            TargetBilinear::Constant(c) => Ok((0..=n).map(|k| k as f64 * c).collect()),
            TargetBilinear::Sequence(seq) if seq.len() == n => Ok(cumulative(seq.iter().copied())),
            TargetBilinear::Sequence(seq) => Err(Error::shape(
                MODULE,
                format!("target has length {} but the sample has {n} observations", seq.len()),
            )),
        }
    }

    /// Adds `c` to every target value.
    pub fn shifted(&self, c: f64) -> Self {
        match self {
            TargetBilinear::Constant(v) => TargetBilinear::Constant(v + c),
            TargetBilinear::Sequence(s) => TargetBilinear::Sequence(s.iter().map(|v| v + c).collect()),
        }
    }
}

/// Centered partial-sum process `𝒟(k/N) = N^{-1/2} (S_k − Σ_{i≤k} target_i)`.
pub fn d_process(ps: &ProjectedSample, target: &TargetBilinear) -> Result<Vec<f64>> {
    centered(ps, target, (ps.len() as f64).sqrt())
}

/// Like [`d_process`] but with an explicit scaling denominator.
pub(crate) fn centered(ps: &ProjectedSample, target: &TargetBilinear, denom: f64) -> Result<Vec<f64>> {
    let n = ps.len();
    let t = target.cumulative(n)?;
    Ok(ps.partial_sums().iter().zip(&t).map(|(s, c)| (s - c) / denom).collect())
}

/// Bridge process `Δ(k/N) = N^{-1/2} (S_k − (k/N) S_N)`.
///
/// Depends on the partial sums only; `Δ(0)` and `Δ(1)` are exactly zero.
pub fn bridge_process(ps: &ProjectedSample) -> Result<Vec<f64>> {
    let n = ps.len();
    if n == 0 {
        return Err(Error::shape(MODULE, "bridge of an empty sample"));
    }
    Ok(bridge(ps.partial_sums(), (n as f64).sqrt()))
}

pub(crate) fn bridge(s: &[f64], denom: f64) -> Vec<f64> {
    let n = s.len() - 1;
    let total = s[n];
    let nf = n as f64;
    let mut out: Vec<f64> = s
        .iter()
        .enumerate()
        .map(|(k, sk)| (sk - (k as f64 / nf) * total) / denom)
        .collect();
    out[0] = 0.0;
    out[n] = 0.0;
    out
}

/// Result of a separable grid maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMax {
    pub value: f64,
    pub argmax: Vec<usize>,
}

/// First index of the largest value of `sign · f`.
fn signed_argmax(f: &[f64], sign: f64) -> (usize, f64) {
    let mut best = (0, sign * f[0]);
    for (k, &v) in f.iter().enumerate().skip(1) {
        if sign * v > best.1 {
            best = (k, sign * v);
        }
    }
    best
}

/// `max_{k ∈ ×_j {0..N_j}} |Σ_j f_j(k_j)|` in `O(Σ_j N_j)`.
///
/// A coordinate-wise additive function is maximized by maximizing each
/// coordinate, and `|x| = max(x, -x)`, so the grid maximum is
/// `max(Σ_j max f_j, Σ_j max(−f_j))`. The argmax uses the winning branch
/// (positive on ties) and the smallest index within each sample.
pub fn pooled_d_grid_max(processes: &[&[f64]]) -> Result<GridMax> {
    if processes.is_empty() {
        return Err(Error::shape(MODULE, "grid maximum over zero processes"));
    }
    if let Some(j) = processes.iter().position(|f| f.is_empty()) {
        return Err(Error::shape(MODULE, format!("process {j} is empty")));
    }
    let branch = |sign: f64| {
        let picks: Vec<(usize, f64)> = processes.iter().map(|f| signed_argmax(f, sign)).collect();
        let total: f64 = picks.iter().map(|p| p.1).sum();
        (total, picks.into_iter().map(|p| p.0).collect::<Vec<_>>())
    };
    let (pos, pos_arg) = branch(1.0);
    let (neg, neg_arg) = branch(-1.0);
    Ok(if pos >= neg {
        GridMax {
            value: pos,
            argmax: pos_arg,
        }
    } else {
        GridMax {
            value: neg,
            argmax: neg_arg,
        }
    })
}

/// `max_k (f(k)/scale)²` with its first argmax.
pub fn per_sample_max_sq(process: &[f64], scale: f64) -> Result<(f64, usize)> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateLrv {
            sample: 0,
            reason: format!("standardizing scale {scale} is not positive"),
        });
    }
    if process.is_empty() {
        return Err(Error::shape(MODULE, "empty process"));
    }
    let mut best = (0.0f64, 0usize);
    for (k, &v) in process.iter().enumerate() {
        let z = v / scale;
        let sq = z * z;
        if sq > best.0 {
            best = (sq, k);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn ps_105() -> ProjectedSample {
        ProjectedSample::from_products(vec![1.0, 4.0])
    }

    #[test]
    fn projection_of_zero_matrix_is_zero() {
        let pair = ProjectionPair::new(vec![1.0, -2.0], vec![0.5, 3.0]).unwrap();
        let ps = project(ndarray::Array2::zeros((4, 2)).view(), &pair).unwrap();
        assert!(ps.products().iter().all(|&p| p == 0.0));
        assert!(ps.partial_sums().iter().all(|&s| s == 0.0));
        assert!(ps.x().unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn projection_hand_examples() {
        let pair = ProjectionPair::quadratic(vec![1.0]).unwrap();
        let ps = project(array![[1.0], [2.0]].view(), &pair).unwrap();
        assert_eq!(ps.products(), &[1.0, 4.0]);
        assert_eq!(ps.partial_sums(), &[0.0, 1.0, 5.0]);

        let pair = ProjectionPair::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let ps = project(array![[1.0, 2.0], [3.0, 4.0]].view(), &pair).unwrap();
        assert_eq!(ps.x().unwrap(), &[1.0, 3.0]);
        assert_eq!(ps.y().unwrap(), &[2.0, 4.0]);
        assert_eq!(ps.products(), &[2.0, 12.0]);
        assert_eq!(ps.partial_sums(), &[0.0, 2.0, 14.0]);
    }

    #[test]
    fn projection_dimension_mismatch() {
        let pair = ProjectionPair::quadratic(vec![1.0, 1.0, 1.0]).unwrap();
        let err = project(array![[1.0, 2.0]].view(), &pair).unwrap_err();
        assert_eq!(err.code(), "sumproc::shape");
    }

    #[test]
    fn projection_pair_validation() {
        assert!(ProjectionPair::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(ProjectionPair::new(vec![1.0], vec![1.0, 1.0]).is_err());
        assert!(ProjectionPair::new(vec![f64::NAN], vec![1.0]).is_err());
        let p = ProjectionPair::new(vec![0.5, -1.5], vec![2.0, 0.25]).unwrap();
        assert_eq!(p.l1_v(), 2.0);
        assert_eq!(p.l1_w(), 2.25);
    }

    #[test]
    fn d_process_hand_examples() {
        let zero = ProjectedSample::from_products(vec![0.0; 3]);
        assert!(d_process(&zero, &TargetBilinear::Constant(0.0)).unwrap().iter().all(|&v| v == 0.0));

        let d = d_process(&ps_105(), &TargetBilinear::Constant(0.0)).unwrap();
        assert_eq!(d, vec![0.0, 1.0 / SQRT2, 5.0 / SQRT2]);

        let d = d_process(&ps_105(), &TargetBilinear::Constant(2.5)).unwrap();
        assert_eq!(d, vec![0.0, -1.5 / SQRT2, 0.0]);

        let d = d_process(&ps_105(), &TargetBilinear::Sequence(vec![1.0, 1.0])).unwrap();
        assert_eq!(d, vec![0.0, 0.0, 3.0 / SQRT2]);

        let err = d_process(&ps_105(), &TargetBilinear::Sequence(vec![1.0])).unwrap_err();
        assert_eq!(err.code(), "sumproc::shape");
    }

    #[test]
    fn bridge_hand_example() {
        let b = bridge_process(&ps_105()).unwrap();
        assert_eq!(b, vec![0.0, (1.0 - 2.5) / SQRT2, 0.0]);
        assert!((b[1] + 1.06066).abs() < 1e-5);
        assert!(bridge_process(&ProjectedSample::from_products(vec![])).is_err());
    }

    #[test]
    fn grid_max_examples() {
        let z = [0.0, 0.0, 0.0];
        let g = pooled_d_grid_max(&[&z, &z]).unwrap();
        assert_eq!(g, GridMax { value: 0.0, argmax: vec![0, 0] });

        let f1 = [0.0, 1.0, -2.0];
        let f2 = [0.0, -3.0, 2.0];
        let g = pooled_d_grid_max(&[&f1, &f2]).unwrap();
        assert_eq!(g, GridMax { value: 5.0, argmax: vec![2, 1] });
    }

    #[test]
    fn per_sample_max_sq_examples() {
        assert_eq!(per_sample_max_sq(&[0.0, 0.0], 1.0).unwrap(), (0.0, 0));
        let (v, k) = per_sample_max_sq(&[0.0, -1.5 / SQRT2, 0.0], 1.0).unwrap();
        assert!((v - 1.125).abs() < 1e-15);
        assert_eq!(k, 1);
        assert_eq!(per_sample_max_sq(&[1.0], 0.0).unwrap_err().code(), "lrv::degenerate");
        assert!(per_sample_max_sq(&[1.0], -1.0).is_err());
    }

    fn brute_force(processes: &[Vec<f64>]) -> f64 {
        let mut idx = vec![0usize; processes.len()];
        let mut best = f64::NEG_INFINITY;
        loop {
            let s: f64 = processes.iter().zip(&idx).map(|(f, &k)| f[k]).sum();
            best = best.max(s.abs());
            let mut j = 0;
            loop {
                if j == processes.len() {
                    return best;
                }
                idx[j] += 1;
                if idx[j] < processes[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }

    fn processes() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(
            prop::collection::vec(-10.0f64..10.0, 1..20).prop_map(|mut f| {
                f.insert(0, 0.0);
                f
            }),
            1..=3,
        )
    }

    proptest! {
        #[test]
        fn grid_max_equals_brute_force(fs in processes()) {
            let refs: Vec<&[f64]> = fs.iter().map(|f| f.as_slice()).collect();
            let g = pooled_d_grid_max(&refs).unwrap();
            prop_assert_eq!(g.value, brute_force(&fs));
            let at: f64 = fs.iter().zip(&g.argmax).map(|(f, &k)| f[k]).sum();
            prop_assert_eq!(at.abs(), g.value);
        }

        #[test]
        fn grid_argmax_is_scale_invariant(fs in processes(), c in 0.01f64..100.0) {
            let refs: Vec<&[f64]> = fs.iter().map(|f| f.as_slice()).collect();
            let scaled: Vec<Vec<f64>> = fs.iter().map(|f| f.iter().map(|v| c * v).collect()).collect();
            let srefs: Vec<&[f64]> = scaled.iter().map(|f| f.as_slice()).collect();
            let a = pooled_d_grid_max(&refs).unwrap();
            let b = pooled_d_grid_max(&srefs).unwrap();
            // exact ties in the rescaled values can legitimately flip
            if (a.value - b.value / c).abs() <= 1e-9 * a.value.max(1.0) {
                let at: f64 = fs.iter().zip(&b.argmax).map(|(f, &k)| f[k]).sum();
                prop_assert!((at.abs() - a.value).abs() <= 1e-9 * a.value.max(1.0));
            }
        }

        #[test]
        fn bridge_endpoints_are_exactly_zero(p in prop::collection::vec(-1e6f64..1e6, 1..200)) {
            let b = bridge_process(&ProjectedSample::from_products(p)).unwrap();
            prop_assert_eq!(b[0].to_bits(), 0.0f64.to_bits());
            prop_assert_eq!(b[b.len() - 1].to_bits(), 0.0f64.to_bits());
        }

        #[test]
        fn partial_sums_telescope(p in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let ps = ProjectedSample::from_products(p.clone());
            let s = ps.partial_sums();
            prop_assert_eq!(s[0], 0.0);
            for k in 1..s.len() {
                prop_assert!((s[k] - s[k - 1] - p[k - 1]).abs() <= 1e-9 * s[k].abs().max(1.0));
            }
        }

        #[test]
        fn projection_is_linear_in_v(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..40),
            c in -4.0f64..4.0,
        ) {
            prop_assume!(c.abs() > 1e-3);
            let n = rows.len();
            let m = ndarray::Array2::from_shape_vec((n, 3), rows.concat()).unwrap();
            let pair = ProjectionPair::new(vec![0.3, -0.2, 0.5], vec![0.1, 0.4, 0.5]).unwrap();
            let a = project(m.view(), &pair).unwrap();
            let b = project(m.view(), &pair.scaled_v(c).unwrap()).unwrap();
            for (sa, sb) in a.partial_sums().iter().zip(b.partial_sums()) {
                prop_assert!((c * sa - sb).abs() <= 1e-12 * (1.0 + sb.abs()) * n as f64);
            }
        }
    }
}
