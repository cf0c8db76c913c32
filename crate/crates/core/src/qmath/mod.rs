//! Dense complex linear algebra on explicitly factored Hilbert spaces.
//!
//! Every operator here lives on a space whose tensor-factor structure is
//! carried alongside it as a [`FactorShape`]; nothing is flattened implicitly.
//! Factor permutations use the "destination" convention: `perm[i]` is the
//! output slot taken by input factor `i`.

mod kraus;
mod matrix;
mod operation;
pub mod random;

pub use kraus::{apply_kraus, KrausMap};
pub use matrix::{kron, kron_all, ComplexMatrix, C64, ONE, ZERO};
pub use operation::{Operation, Step};

use serde::{Deserialize, Serialize};

use crate::error::{LqtError, Result};

/// Default tolerance for operator equality (max-abs entry difference).
pub const OP_TOL: f64 = 1e-9;
/// Default tolerance for eigenvalue positivity.
pub const EIG_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub op: f64,
    pub eig: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { op: OP_TOL, eig: EIG_TOL }
    }
}

/// Ordered per-factor dimensions of a tensor-product space.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactorShape {
    dims: Vec<usize>,
}

impl FactorShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(LqtError::ShapeMismatch(format!("factor {pos} has dimension 0")));
        }
        Ok(FactorShape { dims })
    }

    /// The shape with no factors (dimension 1).
    pub fn scalar() -> Self {
        FactorShape { dims: Vec::new() }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Shape after moving factor `i` to slot `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.len())?;
        let mut out = vec![0; self.len()];
        for (i, &p) in perm.iter().enumerate() {
            out[p] = self.dims[i];
        }
        Ok(FactorShape { dims: out })
    }

    pub fn concat(&self, other: &FactorShape) -> FactorShape {
        FactorShape { dims: self.dims.iter().chain(&other.dims).copied().collect() }
    }

    pub fn slice(&self, start: usize, end: usize) -> FactorShape {
        FactorShape { dims: self.dims[start..end].to_vec() }
    }

    /// Row-major strides (last factor fastest).
    pub(crate) fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.len()];
        for i in (0..self.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.dims[i + 1];
        }
        strides
    }
}

impl From<&[usize]> for FactorShape {
    fn from(dims: &[usize]) -> Self {
        FactorShape::new(dims.to_vec()).expect("zero dimension in factor shape")
    }
}

pub fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(LqtError::InvalidPermutation(format!("length {} for {} factors", perm.len(), n)));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(LqtError::InvalidPermutation(format!("{perm:?} is not a bijection on 0..{n}")));
        }
        seen[p] = true;
    }
    Ok(())
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// `first ∘ second` in the destination convention: apply `first`, then `second`.
pub fn then_permutation(first: &[usize], second: &[usize]) -> Vec<usize> {
    first.iter().map(|&p| second[p]).collect()
}

/// For every flat index of `shape`, the flat index it is sent to by the factor permutation.
pub(crate) fn permutation_index_map(perm: &[usize], shape: &FactorShape) -> Vec<usize> {
    let out_shape = shape.permuted(perm).expect("permutation checked by caller");
    let in_strides = shape.strides();
    let out_strides = out_shape.strides();
    // stride in the output of each input factor
    let moved: Vec<usize> = perm.iter().map(|&p| out_strides[p]).collect();
    let d = shape.dim();
    let mut map = vec![0; d];
    for (flat, slot) in map.iter_mut().enumerate() {
        let mut target = 0;
        for f in 0..shape.len() {
            let digit = (flat / in_strides[f]) % shape.dims[f];
            target += digit * moved[f];
        }
        *slot = target;
    }
    map
}

/// Unitary that moves tensor factor `i` to slot `perm[i]`.
pub fn permutation_operator(perm: &[usize], shape: &FactorShape) -> Result<ComplexMatrix> {
    check_permutation(perm, shape.len())?;
    let d = shape.dim();
    let map = permutation_index_map(perm, shape);
    let mut p = ComplexMatrix::zeros(d, d);
    for (i, &j) in map.iter().enumerate() {
        p.set(j, i, ONE);
    }
    Ok(p)
}

/// `P X P†` for the factor permutation `perm`, computed by index relabelling.
pub fn permute_operator(x: &ComplexMatrix, perm: &[usize], shape: &FactorShape) -> Result<ComplexMatrix> {
    check_permutation(perm, shape.len())?;
    let d = shape.dim();
    if x.rows() != d || x.cols() != d {
        return Err(LqtError::ShapeMismatch(format!("operator is {}x{}, shape has dim {d}", x.rows(), x.cols())));
    }
    let map = permutation_index_map(perm, shape);
    let mut out = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            out.set(map[i], map[j], x.get(i, j));
        }
    }
    Ok(out)
}

/// Reduced operator on the factors in `keep`, which stay in their original relative order.
pub fn partial_trace(rho: &ComplexMatrix, shape: &FactorShape, keep: &[usize]) -> Result<ComplexMatrix> {
    let d = shape.dim();
    if rho.rows() != d || rho.cols() != d {
        return Err(LqtError::ShapeMismatch(format!("operator is {}x{}, shape has dim {d}", rho.rows(), rho.cols())));
    }
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&k| k >= shape.len()) {
        return Err(LqtError::IndexOutOfRange { index: bad, len: shape.len() });
    }
    let traced: Vec<usize> = (0..shape.len()).filter(|f| !kept.contains(f)).collect();
    let strides = shape.strides();
    let kept_shape = FactorShape { dims: kept.iter().map(|&k| shape.dims[k]).collect() };
    let traced_shape = FactorShape { dims: traced.iter().map(|&k| shape.dims[k]).collect() };
    let kd = kept_shape.dim();
    let td = traced_shape.dim();

    // flat offset in the full space contributed by each kept / traced multi-index
    let offsets = |factors: &[usize], sub: &FactorShape| -> Vec<usize> {
        let sub_strides = sub.strides();
        (0..sub.dim())
            .map(|flat| {
                factors
                    .iter()
                    .enumerate()
                    .map(|(pos, &f)| ((flat / sub_strides[pos]) % sub.dims[pos]) * strides[f])
                    .sum()
            })
            .collect()
    };
    let kept_off = offsets(&kept, &kept_shape);
    let traced_off = offsets(&traced, &traced_shape);

    let mut out = ComplexMatrix::zeros(kd, kd);
    for a in 0..kd {
        for b in 0..kd {
            let mut acc = ZERO;
            for &t in traced_off.iter().take(td) {
                acc += rho.get(kept_off[a] + t, kept_off[b] + t);
            }
            out.set(a, b, acc);
        }
    }
    Ok(out)
}

/// Outcome of a validity predicate together with the worst violation found.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Validity {
    pub valid: bool,
    pub max_violation: f64,
}

/// Hermitian, positive semidefinite, trace in [0, 1].
pub fn is_density(m: &ComplexMatrix, tol: Tolerance) -> Validity {
    if !m.is_square() || !m.is_finite() {
        return Validity { valid: false, max_violation: f64::INFINITY };
    }
    let herm = m.hermiticity_violation();
    let min_eig = m.eigenvalues_hermitian().first().copied().unwrap_or(0.0);
    let tr = m.trace();
    let trace_violation = tr.im.abs().max(-tr.re).max(tr.re - 1.0).max(0.0);
    let eig_violation = (-min_eig).max(0.0);
    let valid = herm <= tol.op && eig_violation <= tol.eig && trace_violation <= tol.op;
    Validity { valid, max_violation: herm.max(eig_violation).max(trace_violation) }
}

/// 0 ≤ m ≤ 𝟙.
pub fn is_effect(m: &ComplexMatrix, tol: Tolerance) -> Validity {
    if !m.is_square() || !m.is_finite() {
        return Validity { valid: false, max_violation: f64::INFINITY };
    }
    let herm = m.hermiticity_violation();
    let eigs = m.eigenvalues_hermitian();
    let lo = eigs.first().map_or(0.0, |&v| (-v).max(0.0));
    let hi = eigs.last().map_or(0.0, |&v| (v - 1.0).max(0.0));
    let valid = herm <= tol.op && lo.max(hi) <= tol.eig;
    Validity { valid, max_violation: herm.max(lo).max(hi) }
}

/// Self-adjoint idempotent effect.
pub fn is_pvm_element(m: &ComplexMatrix, tol: Tolerance) -> Validity {
    let eff = is_effect(m, tol);
    if eff.max_violation.is_infinite() {
        return eff;
    }
    let idem = (m * m).max_abs_diff(m);
    let worst = eff.max_violation.max(idem);
    Validity { valid: eff.valid && idem <= tol.op, max_violation: worst }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(d: usize, i: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(d, 1, |r, _| if r == i { ONE } else { ZERO })
    }

    #[test]
    fn identity_permutation_is_identity() {
        let shape = FactorShape::from(&[2usize, 3, 2][..]);
        assert_eq!(permutation_operator(&[0, 1, 2], &shape).unwrap(), ComplexMatrix::identity(12));
    }

    #[test]
    fn swap_two_three_matches_index_formula() {
        // oracle: |i⟩⊗|j⟩ (index i·3+j) goes to |j⟩⊗|i⟩ (index j·2+i)
        let shape = FactorShape::from(&[2usize, 3][..]);
        let p = permutation_operator(&[1, 0], &shape).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let v = basis(6, i * 3 + j);
                let out = &p * &v;
                assert_eq!(out, basis(6, j * 2 + i), "basis ({i},{j})");
            }
        }
    }

    #[test]
    fn permutation_composition_matches_product() {
        // brute force over products of transpositions on (2,2,2)
        let shape = FactorShape::from(&[2usize, 2, 2][..]);
        let transpositions = [vec![1, 0, 2], vec![0, 2, 1], vec![2, 1, 0]];
        let mut perms = vec![vec![0, 1, 2]];
        for a in &transpositions {
            perms.push(a.clone());
            for b in &transpositions {
                perms.push(then_permutation(a, b));
            }
        }
        for s in &perms {
            for t in &perms {
                let ps = permutation_operator(s, &shape).unwrap();
                let pt = permutation_operator(t, &shape).unwrap();
                let composed = permutation_operator(&then_permutation(t, s), &shape).unwrap();
                assert!((&ps * &pt).approx_eq(&composed, 0.0));
            }
        }
    }

    #[test]
    fn permutation_length_mismatch() {
        let shape = FactorShape::from(&[2usize, 2][..]);
        assert!(matches!(permutation_operator(&[0], &shape), Err(LqtError::InvalidPermutation(_))));
        assert!(matches!(permutation_operator(&[0, 0], &shape), Err(LqtError::InvalidPermutation(_))));
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let s = 1.0 / 2f64.sqrt();
        let phi = [C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)];
        let rho = ComplexMatrix::projector(&phi);
        let shape = FactorShape::from(&[2usize, 2][..]);
        let reduced = partial_trace(&rho, &shape, &[0]).unwrap();
        assert!(reduced.approx_eq(&ComplexMatrix::identity(2).scale_real(0.5), 1e-15));
    }

    #[test]
    fn partial_trace_keep_all_and_product() {
        let a = ComplexMatrix::diag(&[0.25, 0.75]);
        let b = ComplexMatrix::diag(&[0.1, 0.2, 0.3]);
        let shape = FactorShape::from(&[2usize, 3][..]);
        let ab = kron(&a, &b);
        assert_eq!(partial_trace(&ab, &shape, &[0, 1]).unwrap(), ab);
        let red = partial_trace(&ab, &shape, &[0]).unwrap();
        assert!(red.approx_eq(&a.scale_real(0.6), 1e-15));
        assert!(matches!(partial_trace(&ab, &shape, &[2]), Err(LqtError::IndexOutOfRange { .. })));
    }

    #[test]
    fn partial_trace_keeps_relative_order() {
        let a = ComplexMatrix::diag(&[1.0, 0.0]);
        let b = ComplexMatrix::diag(&[0.5, 0.5]);
        let c = ComplexMatrix::diag(&[0.0, 0.0, 1.0]);
        let shape = FactorShape::from(&[2usize, 2, 3][..]);
        let abc = kron(&kron(&a, &b), &c);
        let red = partial_trace(&abc, &shape, &[2, 0]).unwrap();
        assert!(red.approx_eq(&kron(&a, &c), 1e-15));
    }

    #[test]
    fn validity_predicates() {
        let tol = Tolerance::default();
        let mixed = ComplexMatrix::identity(3).scale_real(1.0 / 3.0);
        let v = is_density(&mixed, tol);
        assert!(v.valid);
        assert!((mixed.trace().re - 1.0).abs() < 1e-15);
        let bad = ComplexMatrix::diag(&[1.5, -0.5]);
        let v = is_density(&bad, tol);
        assert!(!v.valid && (v.max_violation - 0.5).abs() < 1e-12);
        let p0 = ComplexMatrix::diag(&[1.0, 0.0]);
        assert!(is_pvm_element(&p0, tol).valid);
        assert!(!is_pvm_element(&ComplexMatrix::diag(&[0.5, 0.0]), tol).valid);
        assert!(is_effect(&ComplexMatrix::diag(&[0.5, 0.0]), tol).valid);
    }
}
