use std::sync::Arc;

use super::matrix::{kron, ComplexMatrix, C64, ZERO};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    check_permutation, permutation_index_map, permutation_operator, random, then_permutation, FactorShape, KrausMap,
};
use crate::error::{LqtError, Result};

/// One stage of an [`Operation`].
#[derive(Clone, Debug)]
pub enum Step {
    /// Factor `i` moves to slot `perm[i]`.
    Permute(Vec<usize>),
    /// Kraus map on the contiguous factors starting at `at`; its output
    /// factors replace them in place (possibly none, for a trace, or several
    /// from none, for a preparation).
    Local { at: usize, map: Arc<KrausMap> },
}

/// A quantum operation on a factored space, kept as a circuit of factor
/// permutations and local Kraus maps so that large composites are never
/// materialized as dense Kraus lists.
#[derive(Clone, Debug)]
pub struct Operation {
    input: FactorShape,
    output: FactorShape,
    steps: Vec<Step>,
}

impl Operation {
    pub fn identity(shape: FactorShape) -> Self {
        Operation { input: shape.clone(), output: shape, steps: Vec::new() }
    }

    pub fn from_kraus(map: KrausMap) -> Self {
        let mut op = Operation::identity(map.input_shape().clone());
        op.output = map.output_shape().clone();
        op.steps.push(Step::Local { at: 0, map: Arc::new(map) });
        op
    }

    pub fn input_shape(&self) -> &FactorShape {
        &self.input
    }

    pub fn output_shape(&self) -> &FactorShape {
        &self.output
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn permute(&mut self, perm: Vec<usize>) -> Result<&mut Self> {
        check_permutation(&perm, self.output.len())?;
        self.output = self.output.permuted(&perm)?;
        // Adjacent permutations are fused into one relabelling pass.
        let perm = match self.steps.last() {
            Some(Step::Permute(prev)) => {
                let fused = then_permutation(prev, &perm);
                self.steps.pop();
                fused
            }
            _ => perm,
        };
        if perm.iter().enumerate().any(|(i, &p)| i != p) {
            self.steps.push(Step::Permute(perm));
        }
        Ok(self)
    }

    pub fn local(&mut self, at: usize, map: Arc<KrausMap>) -> Result<&mut Self> {
        let arity = map.input_shape().len();
        if at + arity > self.output.len() {
            return Err(LqtError::IndexOutOfRange { index: at + arity, len: self.output.len() });
        }
        if self.output.dims()[at..at + arity] != *map.input_shape().dims() {
            return Err(LqtError::ShapeMismatch(format!(
                "local map expects {:?}, factors {}..{} are {:?}",
                map.input_shape().dims(),
                at,
                at + arity,
                &self.output.dims()[at..at + arity]
            )));
        }
        let mut dims = self.output.dims()[..at].to_vec();
        dims.extend_from_slice(map.output_shape().dims());
        dims.extend_from_slice(&self.output.dims()[at + arity..]);
        self.output = FactorShape::new(dims)?;
        self.steps.push(Step::Local { at, map });
        Ok(self)
    }

    /// `self` followed by `after`.
    pub fn then(&self, after: &Operation) -> Result<Operation> {
        if self.output != after.input {
            return Err(LqtError::ShapeMismatch(format!(
                "cannot follow output {:?} with input {:?}",
                self.output.dims(),
                after.input.dims()
            )));
        }
        let mut steps = self.steps.clone();
        steps.extend(after.steps.iter().cloned());
        Ok(Operation { input: self.input.clone(), output: after.output.clone(), steps })
    }

    /// This operation acting on the middle block of `before ⊗ · ⊗ after`.
    pub fn embed(&self, before: &FactorShape, after: &FactorShape) -> Operation {
        let offset = before.len();
        let mut current = self.input.len();
        let mut steps = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            match step {
                Step::Permute(perm) => {
                    let mut full: Vec<usize> = (0..offset).collect();
                    full.extend(perm.iter().map(|p| p + offset));
                    full.extend((offset + current..offset + current + after.len()).collect::<Vec<_>>());
                    steps.push(Step::Permute(full));
                }
                Step::Local { at, map } => {
                    current = current - map.input_shape().len() + map.output_shape().len();
                    steps.push(Step::Local { at: at + offset, map: map.clone() });
                }
            }
        }
        Operation {
            input: before.concat(&self.input).concat(after),
            output: before.concat(&self.output).concat(after),
            steps,
        }
    }

    /// `a ⊗ b` on concatenated shapes.
    pub fn tensor(a: &Operation, b: &Operation) -> Operation {
        let first = a.embed(&FactorShape::scalar(), &b.input);
        let second = b.embed(&a.output, &FactorShape::scalar());
        first.then(&second).expect("shapes line up by construction")
    }

    /// Applies the operation to an arbitrary (not necessarily positive) operator.
    pub fn apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        let d = self.input.dim();
        if x.rows() != d || x.cols() != d {
            return Err(LqtError::ShapeMismatch(format!(
                "operator is {}x{}, operation expects dim {d}",
                x.rows(),
                x.cols()
            )));
        }
        let mut shape = self.input.clone();
        let mut cur = x.clone();
        for step in &self.steps {
            match step {
                Step::Permute(perm) => {
                    let map = permutation_index_map(perm, &shape);
                    let n = shape.dim();
                    let mut out = ComplexMatrix::zeros(n, n);
                    for i in 0..n {
                        for j in 0..n {
                            out.set(map[i], map[j], cur.get(i, j));
                        }
                    }
                    shape = shape.permuted(perm)?;
                    cur = out;
                }
                Step::Local { at, map } => {
                    let (next, new_shape) = apply_local(&cur, &shape, *at, map);
                    cur = next;
                    shape = new_shape;
                }
            }
        }
        Ok(cur)
    }

    /// Largest entry-wise difference between the two maps' outputs over a probe
    /// set: every matrix unit for input dimension up to [`FULL_PROBE_DIM`],
    /// otherwise `RANDOM_PROBES` seeded Ginibre matrices.
    pub fn deviation(&self, other: &Operation, seed: u64) -> Result<f64> {
        if self.input.dim() != other.input.dim() || self.output.dim() != other.output.dim() {
            return Err(LqtError::ShapeMismatch(format!(
                "comparing maps {}→{} and {}→{}",
                self.input.dim(),
                self.output.dim(),
                other.input.dim(),
                other.output.dim()
            )));
        }
        let mut worst = 0.0f64;
        for probe in probes(self.input.dim(), seed) {
            let d = self.apply(&probe)?.max_abs_diff(&other.apply(&probe)?);
            if !d.is_finite() {
                return Err(LqtError::NonFinite);
            }
            worst = worst.max(d);
        }
        Ok(worst)
    }

    /// Choi matrix Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|).
    pub fn choi(&self) -> ComplexMatrix {
        let din = self.input.dim();
        let dout = self.output.dim();
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

    /// Dense Kraus form. Compressed through the Choi matrix when the
    /// multiplied-out list would exceed the minimal rank bound.
    pub fn to_kraus(&self) -> KrausMap {
        let din = self.input.dim();
        let dout = self.output.dim();
        let mut ops = vec![ComplexMatrix::identity(din)];
        let mut shape = self.input.clone();
        for step in &self.steps {
            let full: Vec<ComplexMatrix> = match step {
                Step::Permute(perm) => {
                    let p = permutation_operator(perm, &shape).expect("checked on push");
                    shape = shape.permuted(perm).expect("checked on push");
                    vec![p]
                }
                Step::Local { at, map } => {
                    let arity = map.input_shape().len();
                    let left = ComplexMatrix::identity(shape.dims()[..*at].iter().product());
                    let right = ComplexMatrix::identity(shape.dims()[at + arity..].iter().product());
                    let mut dims = shape.dims()[..*at].to_vec();
                    dims.extend_from_slice(map.output_shape().dims());
                    dims.extend_from_slice(&shape.dims()[at + arity..]);
                    shape = FactorShape::new(dims).expect("checked on push");
                    map.kraus_ops().iter().map(|k| kron(&kron(&left, k), &right)).collect()
                }
            };
            ops = full.iter().flat_map(|f| ops.iter().map(move |o| f * o)).collect();
            if ops.len() > din * dout {
                return self.kraus_from_choi();
            }
        }
        KrausMap::new_unchecked(self.input.clone(), self.output.clone(), ops).expect("dimensions tracked")
    }

    fn kraus_from_choi(&self) -> KrausMap {
        let din = self.input.dim();
        let dout = self.output.dim();
        let choi = self.choi();
        let mut ops = Vec::new();
        for (val, vec) in choi.eigh() {
            if val > 1e-14 {
                let s = val.sqrt();
                ops.push(ComplexMatrix::from_fn(dout, din, |a, i| vec[i * dout + a] * s));
            }
        }
        KrausMap::new_unchecked(self.input.clone(), self.output.clone(), ops).expect("dimensions tracked")
    }
}

/// Largest input dimension compared on a complete basis of matrix units.
pub const FULL_PROBE_DIM: usize = 16;
const RANDOM_PROBES: usize = 4;

fn probes(dim: usize, seed: u64) -> Vec<ComplexMatrix> {
    if dim <= FULL_PROBE_DIM {
        return (0..dim).flat_map(|i| (0..dim).map(move |j| ComplexMatrix::unit(dim, i, j))).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..RANDOM_PROBES).map(|_| random::ginibre(dim, dim, &mut rng)).collect()
}

/// (𝟙 ⊗ K ⊗ 𝟙) X (𝟙 ⊗ K ⊗ 𝟙)† summed over Kraus operators.
fn apply_local(x: &ComplexMatrix, shape: &FactorShape, at: usize, map: &KrausMap) -> (ComplexMatrix, FactorShape) {
    let arity = map.input_shape().len();
    let l: usize = shape.dims()[..at].iter().product();
    let r: usize = shape.dims()[at + arity..].iter().product();
    let a_in = map.input_shape().dim();
    let a_out = map.output_shape().dim();
    let d_in = l * a_in * r;
    let d_out = l * a_out * r;
    let mut y = ComplexMatrix::zeros(d_out, d_out);
    let mut z = ComplexMatrix::zeros(d_out, d_in);
    for k in map.kraus_ops() {
        // z = (𝟙⊗K⊗𝟙) x
        z.entries_mut().fill(ZERO);
        for li in 0..l {
            for ao in 0..a_out {
                for ai in 0..a_in {
                    let kv = k.get(ao, ai);
                    if kv == ZERO {
                        continue;
                    }
                    for ri in 0..r {
                        let zrow = (li * a_out + ao) * r + ri;
                        let xrow = (li * a_in + ai) * r + ri;
                        let zr = &mut z.entries_mut()[zrow * d_in..(zrow + 1) * d_in];
                        let xr = &x.entries()[xrow * d_in..(xrow + 1) * d_in];
                        for (zv, xv) in zr.iter_mut().zip(xr) {
                            *zv += kv * xv;
                        }
                    }
                }
            }
        }
        // y += z (𝟙⊗K†⊗𝟙)
        for row in 0..d_out {
            let zr = &z.entries()[row * d_in..(row + 1) * d_in];
            let yr = &mut y.entries_mut()[row * d_out..(row + 1) * d_out];
            for li in 0..l {
                for bo in 0..a_out {
                    for bi in 0..a_in {
                        let kv: C64 = k.get(bo, bi).conj();
                        if kv == ZERO {
                            continue;
                        }
                        for ri in 0..r {
                            yr[(li * a_out + bo) * r + ri] += zr[(li * a_in + bi) * r + ri] * kv;
                        }
                    }
                }
            }
        }
    }
    let mut dims = shape.dims()[..at].to_vec();
    dims.extend_from_slice(map.output_shape().dims());
    dims.extend_from_slice(&shape.dims()[at + arity..]);
    (y, FactorShape::new(dims).expect("nonzero dims"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::permute_operator;

    #[test]
    fn local_step_matches_dense_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = FactorShape::from(&[2usize, 3, 2][..]);
        let mid =
            random::cptni_between(&FactorShape::from(&[3usize][..]), &FactorShape::from(&[2usize][..]), true, &mut rng);
        let mut op = Operation::identity(shape.clone());
        op.local(1, Arc::new(mid.clone())).unwrap();
        let dense = KrausMap::identity(FactorShape::from(&[2usize][..]))
            .tensor(&mid)
            .tensor(&KrausMap::identity(FactorShape::from(&[2usize][..])));
        let x = random::ginibre(12, 12, &mut rng);
        assert!(op.apply(&x).unwrap().approx_eq(&dense.apply(&x).unwrap(), 1e-12));
        assert_eq!(op.output_shape().dims(), &[2, 2, 2]);
    }

    #[test]
    fn permute_step_matches_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let shape = FactorShape::from(&[2usize, 3, 2][..]);
        let perm = vec![2, 0, 1];
        let mut op = Operation::identity(shape.clone());
        op.permute(perm.clone()).unwrap();
        let x = random::ginibre(12, 12, &mut rng);
        assert_eq!(op.apply(&x).unwrap(), permute_operator(&x, &perm, &shape).unwrap());
    }

    #[test]
    fn to_kraus_agrees_with_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = FactorShape::from(&[2usize][..]);
        let a = Operation::from_kraus(random::cptni(&q, true, &mut rng));
        let b = Operation::from_kraus(random::cptni(&q, false, &mut rng));
        let mut ab = Operation::tensor(&a, &b);
        ab.permute(vec![1, 0]).unwrap();
        let dense = ab.to_kraus();
        let x = random::ginibre(4, 4, &mut rng);
        assert!(ab.apply(&x).unwrap().approx_eq(&dense.apply(&x).unwrap(), 1e-12));
        assert!(ab.choi().approx_eq(&dense.choi(), 1e-12));
    }

    #[test]
    fn adjacent_permutations_fuse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let shape = FactorShape::from(&[2usize, 3, 2][..]);
        let mut op = Operation::identity(shape.clone());
        op.permute(vec![2, 0, 1]).unwrap().permute(vec![1, 2, 0]).unwrap();
        assert!(op.steps().is_empty());
        op.permute(vec![1, 0, 2]).unwrap().permute(vec![0, 2, 1]).unwrap();
        assert_eq!(op.steps().len(), 1);
        let x = random::ginibre(12, 12, &mut rng);
        let twice = permute_operator(
            &permute_operator(&x, &[1, 0, 2], &shape).unwrap(),
            &[0, 2, 1],
            &FactorShape::from(&[3usize, 2, 2][..]),
        )
        .unwrap();
        assert_eq!(op.apply(&x).unwrap(), twice);
    }

    #[test]
    fn deviation_detects_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for dim in [2usize, 32] {
            let shape = FactorShape::from(&[dim][..]);
            let a = Operation::from_kraus(random::cptni(&shape, false, &mut rng));
            let b = Operation::from_kraus(random::cptni(&shape, false, &mut rng));
            assert!(a.deviation(&a.clone(), 1).unwrap() < 1e-12);
            assert!(a.deviation(&b, 1).unwrap() > 1e-3);
        }
        let c = Operation::identity(FactorShape::from(&[3usize][..]));
        assert!(c.deviation(&Operation::identity(FactorShape::from(&[2usize][..])), 0).is_err());
    }

    #[test]
    fn embed_with_inner_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut inner = Operation::identity(FactorShape::from(&[2usize, 3][..]));
        inner.permute(vec![1, 0]).unwrap();
        let outer = inner.embed(&FactorShape::from(&[2usize][..]), &FactorShape::from(&[2usize][..]));
        let x = random::ginibre(24, 24, &mut rng);
        let expect = permute_operator(&x, &[0, 2, 1, 3], &FactorShape::from(&[2usize, 2, 3, 2][..])).unwrap();
        assert_eq!(outer.apply(&x).unwrap(), expect);
    }
}
