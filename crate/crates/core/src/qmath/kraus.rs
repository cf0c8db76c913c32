use super::matrix::{kron, ComplexMatrix, C64, ONE, ZERO};
use super::{FactorShape, OP_TOL};
use crate::error::{LqtError, Result};

/// Completely positive, trace non-increasing map in Kraus form.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausMap {
    input_shape: FactorShape,
    output_shape: FactorShape,
    kraus_ops: Vec<ComplexMatrix>,
}

impl KrausMap {
    /// Validates dimensions and the CPTNI condition Σ K†K ≤ 𝟙 (within `OP_TOL`).
    pub fn new(input_shape: FactorShape, output_shape: FactorShape, kraus_ops: Vec<ComplexMatrix>) -> Result<Self> {
        Self::with_tolerance(input_shape, output_shape, kraus_ops, OP_TOL)
    }

    pub fn with_tolerance(
        input_shape: FactorShape,
        output_shape: FactorShape,
        kraus_ops: Vec<ComplexMatrix>,
        tol: f64,
    ) -> Result<Self> {
        let map = Self::new_unchecked(input_shape, output_shape, kraus_ops)?;
        let excess = map.trace_excess();
        if excess > tol {
            return Err(LqtError::NotCptni(excess));
        }
        Ok(map)
    }

    /// Checks dimensions only.
    pub(crate) fn new_unchecked(
        input_shape: FactorShape,
        output_shape: FactorShape,
        kraus_ops: Vec<ComplexMatrix>,
    ) -> Result<Self> {
        let (din, dout) = (input_shape.dim(), output_shape.dim());
        for (i, k) in kraus_ops.iter().enumerate() {
            if k.rows() != dout || k.cols() != din {
                return Err(LqtError::ShapeMismatch(format!(
                    "Kraus operator {i} is {}x{}, expected {dout}x{din}",
                    k.rows(),
                    k.cols()
                )));
            }
            if !k.is_finite() {
                return Err(LqtError::NonFinite);
            }
        }
        Ok(KrausMap { input_shape, output_shape, kraus_ops })
    }

    pub fn identity(shape: FactorShape) -> Self {
        let d = shape.dim();
        KrausMap { input_shape: shape.clone(), output_shape: shape, kraus_ops: vec![ComplexMatrix::identity(d)] }
    }

    pub fn unitary(u: ComplexMatrix, shape: FactorShape) -> Result<Self> {
        Self::new(shape.clone(), shape, vec![u])
    }

    /// Trace functional on every factor of `shape`: Kraus operators ⟨i|.
    pub fn trace_out(shape: FactorShape) -> Self {
        let d = shape.dim();
        let ops = (0..d).map(|i| ComplexMatrix::from_fn(1, d, |_, c| if c == i { ONE } else { ZERO })).collect();
        KrausMap { input_shape: shape, output_shape: FactorShape::scalar(), kraus_ops: ops }
    }

    /// Preparation of `state` from the trivial system.
    pub fn prepare(state: &ComplexMatrix, shape: FactorShape) -> Result<Self> {
        let d = shape.dim();
        if state.rows() != d || state.cols() != d {
            return Err(LqtError::ShapeMismatch(format!(
                "state is {}x{}, shape has dim {d}",
                state.rows(),
                state.cols()
            )));
        }
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || state.get(i, j) == ZERO));
        let mut ops = Vec::new();
        if diagonal {
            for i in 0..d {
                let p = state.get(i, i).re;
                if p > 0.0 {
                    let amp = C64::new(p.sqrt(), 0.0);
                    ops.push(ComplexMatrix::from_fn(d, 1, |r, _| if r == i { amp } else { ZERO }));
                }
            }
        } else {
            for (val, vec) in state.eigh() {
                if val > 0.0 {
                    let s = val.sqrt();
                    ops.push(ComplexMatrix::from_fn(d, 1, |r, _| vec[r] * s));
                }
            }
        }
        Self::with_tolerance(FactorShape::scalar(), shape, ops, 1e-8)
    }

    /// Effect Tr(· Π) written as Kraus operators ⟨v|·√λ.
    pub fn effect(pi: &ComplexMatrix, shape: FactorShape) -> Result<Self> {
        let d = shape.dim();
        let mut ops = Vec::new();
        for (val, vec) in pi.eigh() {
            if val > 0.0 {
                let s = val.sqrt();
                ops.push(ComplexMatrix::from_fn(1, d, |_, c| vec[c].conj() * s));
            }
        }
        Self::with_tolerance(shape, FactorShape::scalar(), ops, 1e-8)
    }

    pub fn input_shape(&self) -> &FactorShape {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &FactorShape {
        &self.output_shape
    }

    pub fn kraus_ops(&self) -> &[ComplexMatrix] {
        &self.kraus_ops
    }

    /// Σ K†K.
    pub fn kraus_sum(&self) -> ComplexMatrix {
        let d = self.input_shape.dim();
        self.kraus_ops.iter().fold(ComplexMatrix::zeros(d, d), |acc, k| &acc + &(&k.adjoint() * k))
    }

    /// Largest eigenvalue of Σ K†K minus one, clipped at zero.
    pub fn trace_excess(&self) -> f64 {
        let top = self.kraus_sum().eigenvalues_hermitian().last().copied().unwrap_or(0.0);
        (top - 1.0).max(0.0)
    }

    pub fn is_channel(&self, tol: f64) -> bool {
        self.kraus_sum().approx_eq(&ComplexMatrix::identity(self.input_shape.dim()), tol)
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        let d = self.input_shape.dim();
        if rho.rows() != d || rho.cols() != d {
            return Err(LqtError::ShapeMismatch(format!(
                "input operator is {}x{}, map expects dim {d}",
                rho.rows(),
                rho.cols()
            )));
        }
        let dout = self.output_shape.dim();
        let mut out = ComplexMatrix::zeros(dout, dout);
        for k in &self.kraus_ops {
            out = &out + &(&(k * rho) * &k.adjoint());
        }
        Ok(out)
    }

    /// `after ∘ self`.
    pub fn then(&self, after: &KrausMap) -> Result<KrausMap> {
        if self.output_shape.dim() != after.input_shape.dim() {
            return Err(LqtError::ShapeMismatch("sequential composition of incompatible maps".into()));
        }
        let ops = after.kraus_ops.iter().flat_map(|b| self.kraus_ops.iter().map(move |a| b * a)).collect();
        Ok(KrausMap { input_shape: self.input_shape.clone(), output_shape: after.output_shape.clone(), kraus_ops: ops })
    }

    /// `self ⊗ other` with shapes concatenated.
    pub fn tensor(&self, other: &KrausMap) -> KrausMap {
        let ops = self.kraus_ops.iter().flat_map(|a| other.kraus_ops.iter().map(move |b| kron(a, b))).collect();
        KrausMap {
            input_shape: self.input_shape.concat(&other.input_shape),
            output_shape: self.output_shape.concat(&other.output_shape),
            kraus_ops: ops,
        }
    }

    /// Choi matrix Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|), input factor first.
    pub fn choi(&self) -> ComplexMatrix {
        let din = self.input_shape.dim();
        let dout = self.output_shape.dim();
        let mut choi = ComplexMatrix::zeros(din * dout, din * dout);
        for i in 0..din {
            for j in 0..din {
                let block = self.apply(&ComplexMatrix::unit(din, i, j)).expect("dimension checked");
                for a in 0..dout {
                    for b in 0..dout {
                        choi.set(i * dout + a, j * dout + b, block.get(a, b));
                    }
                }
            }
        }
        choi
    }
}

/// Σ K ρ K† for a validated map.
pub fn apply_kraus(map: &KrausMap, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    map.apply(rho)
}
