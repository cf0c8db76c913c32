//! Seeded random sampling of states, unitaries and quantum operations.

use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::{ComplexMatrix, C64};
use super::{FactorShape, KrausMap};

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// `rows × cols` matrix with orthonormal columns (`rows ≥ cols`), Haar distributed.
pub fn isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let g = ginibre(rows, cols, rng).to_nalgebra();
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = ComplexMatrix::from_nalgebra(&q);
    for c in 0..cols {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..rows {
            let v = out.get(row, c) * phase;
            out.set(row, c, v);
        }
    }
    out
}

pub fn unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    isometry(dim, dim, rng)
}

pub fn pure_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<C64> {
    let g = ginibre(dim, 1, rng);
    let norm = g.entries().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    g.entries().iter().map(|z| z / norm).collect()
}

/// Full-rank density matrix W W† / Tr(W W†).
pub fn density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let w = ginibre(dim, dim, rng);
    let ww = &w * &w.adjoint();
    let tr = ww.trace().re;
    ww.scale_real(1.0 / tr)
}

/// Random CPTNI map between shapes via a truncated Haar isometry with an
/// environment as large as the input. With `shrink` the map is scaled by a
/// random factor in (0, 1].
pub fn cptni_between<R: Rng + ?Sized>(
    input: &FactorShape,
    output: &FactorShape,
    shrink: bool,
    rng: &mut R,
) -> KrausMap {
    let (din, dout) = (input.dim(), output.dim());
    let denv = din.max(1);
    let v = isometry(dout * denv, din, rng);
    let scale = if shrink { 1.0 - rng.random::<f64>() } else { 1.0 };
    let amp = scale.sqrt();
    let ops = (0..denv).map(|e| ComplexMatrix::from_fn(dout, din, |a, b| v.get(a * denv + e, b) * amp)).collect();
    KrausMap::with_tolerance(input.clone(), output.clone(), ops, 1e-9).expect("isometry truncation is CPTNI")
}

pub fn cptni<R: Rng + ?Sized>(shape: &FactorShape, shrink: bool, rng: &mut R) -> KrausMap {
    cptni_between(shape, shape, shrink, rng)
}

/// Random `outcomes`-element POVM: `S^{-1/2} A_k S^{-1/2}` for random
/// positive `A_k` with sum `S`.
pub fn povm<R: Rng + ?Sized>(dim: usize, outcomes: usize, rng: &mut R) -> Vec<ComplexMatrix> {
    let parts: Vec<ComplexMatrix> = (0..outcomes)
        .map(|_| {
            let g = ginibre(dim, dim, rng);
            &g * &g.adjoint()
        })
        .collect();
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for a in &parts {
        sum = &sum + a;
    }
    let mut inv_sqrt = ComplexMatrix::zeros(dim, dim);
    for (val, vec) in sum.eigh() {
        let p = ComplexMatrix::projector(&vec).scale_real(1.0 / val.sqrt());
        inv_sqrt = &inv_sqrt + &p;
    }
    parts.iter().map(|a| (&(&inv_sqrt * a) * &inv_sqrt).hermitian_part()).collect()
}

/// Random Hermitian matrix with entries of order one.
pub fn hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    ginibre(dim, dim, rng).hermitian_part()
}
