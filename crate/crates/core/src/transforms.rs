//! Transformations of latent systems: an operational part `T` together with a
//! noisy permutation `S` that says how every cross latent factor shared with
//! an arbitrary ancilla is carried along.
//!
//! Noisy permutation wire convention: the `k` fresh wires sit in front of the
//! `n` input wires; wire `i` moves to slot `perm[i]`; slots `0..k′` are traced
//! and the remaining `m` slots are the outputs, in order.

use std::sync::Arc;

use crate::error::{LqtError, Result};
use crate::qmath::{check_permutation, ComplexMatrix, FactorShape, KrausMap, Operation};
use crate::strings::{concat, Char, LabelledString, PairKey, Tag};
use crate::theory::{
    canonical_wires_of, compose_systems, layout_permutation, qmap, Labelling, LatentConfig, SystemString, Wire,
};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NoisyPermutation {
    k: usize,
    k_prime: usize,
    perm: Vec<usize>,
}

/// Where a wire of a noisy permutation ends up.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fate {
    Traced,
    Output(usize),
}

impl NoisyPermutation {
    pub fn new(k: usize, k_prime: usize, perm: Vec<usize>) -> Result<Self> {
        check_permutation(&perm, perm.len())?;
        if k > perm.len() || k_prime > perm.len() {
            return Err(LqtError::ArityMismatch(format!("k={k}, k′={k_prime} with {} wires", perm.len())));
        }
        if let Some(wire) = (0..k).find(|&i| perm[i] < k_prime) {
            return Err(LqtError::ReducedFormViolation { wire });
        }
        Ok(NoisyPermutation { k, k_prime, perm })
    }

    pub fn identity(n: usize) -> Self {
        NoisyPermutation { k: 0, k_prime: 0, perm: (0..n).collect() }
    }

    /// Trace the single input wire and replace it by a fresh one.
    pub fn reset() -> Self {
        NoisyPermutation { k: 1, k_prime: 1, perm: vec![1, 0] }
    }

    /// `m` fresh wires from nothing.
    pub fn prepare_all(m: usize) -> Self {
        NoisyPermutation { k: m, k_prime: 0, perm: (0..m).collect() }
    }

    /// Trace all `n` input wires.
    pub fn discard_all(n: usize) -> Self {
        NoisyPermutation { k: 0, k_prime: n, perm: (0..n).collect() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn k_prime(&self) -> usize {
        self.k_prime
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn n_inputs(&self) -> usize {
        self.perm.len() - self.k
    }

    pub fn n_outputs(&self) -> usize {
        self.perm.len() - self.k_prime
    }

    fn fate(&self, wire: usize) -> Fate {
        let p = self.perm[wire];
        if p < self.k_prime {
            Fate::Traced
        } else {
            Fate::Output(p - self.k_prime)
        }
    }

    /// Input `i` → output slot, if kept.
    pub fn input_destination(&self, i: usize) -> Option<usize> {
        match self.fate(self.k + i) {
            Fate::Traced => None,
            Fate::Output(o) => Some(o),
        }
    }

    /// Output slots fed by fresh wires.
    pub fn fresh_destinations(&self) -> Vec<usize> {
        (0..self.k).filter_map(|i| if let Fate::Output(o) = self.fate(i) { Some(o) } else { None }).collect()
    }

    /// Canonical noisy permutation from where each input goes (`None` =
    /// traced) among `m` outputs; outputs no input reaches are fresh.
    pub fn from_destinations(inputs: &[Option<usize>], m: usize) -> Result<Self> {
        let mut seen = vec![false; m];
        for &o in inputs.iter().flatten() {
            if o >= m || std::mem::replace(&mut seen[o], true) {
                return Err(LqtError::InvalidPermutation(format!("destinations {inputs:?} among {m} outputs")));
            }
        }
        Ok(Self::from_fates(inputs, m))
    }

    /// Fresh wires ordered by destination, traced inputs filling the traced
    /// slots in input order. Destinations must be distinct and in range.
    fn from_fates(inputs: &[Option<usize>], m: usize) -> Self {
        let mut fed = vec![false; m];
        for o in inputs.iter().flatten() {
            fed[*o] = true;
        }
        let fresh: Vec<usize> = (0..m).filter(|&o| !fed[o]).collect();
        let k = fresh.len();
        let k_prime = inputs.iter().filter(|d| d.is_none()).count();
        let mut perm: Vec<usize> = fresh.iter().map(|o| k_prime + o).collect();
        let mut next_traced = 0;
        for d in inputs {
            match d {
                Some(o) => perm.push(k_prime + o),
                None => {
                    perm.push(next_traced);
                    next_traced += 1;
                }
            }
        }
        NoisyPermutation { k, k_prime, perm }
    }

    fn input_fates(&self) -> Vec<Option<usize>> {
        (0..self.n_inputs()).map(|i| self.input_destination(i)).collect()
    }

    /// Canonical reduced form; two noisy permutations act identically iff
    /// their canonical forms are equal.
    pub fn canonical(&self) -> Self {
        Self::from_fates(&self.input_fates(), self.n_outputs())
    }

    /// `self` followed by `after`. A fresh wire that is later traced
    /// contributes `Tr ξ = 1` and disappears.
    pub fn then(&self, after: &NoisyPermutation) -> Result<Self> {
        if self.n_outputs() != after.n_inputs() {
            return Err(LqtError::ArityMismatch(format!(
                "{} outputs followed by {} inputs",
                self.n_outputs(),
                after.n_inputs()
            )));
        }
        let fates: Vec<Option<usize>> =
            self.input_fates().into_iter().map(|d| d.and_then(|o| after.input_destination(o))).collect();
        Ok(Self::from_fates(&fates, after.n_outputs()))
    }

    /// Independent action on concatenated wire lists.
    pub fn tensor(&self, other: &NoisyPermutation) -> Self {
        let m1 = self.n_outputs();
        let mut fates = self.input_fates();
        fates.extend(other.input_fates().into_iter().map(|d| d.map(|o| o + m1)));
        Self::from_fates(&fates, m1 + other.n_outputs())
    }

    /// Every traced input is routed to a fresh wire's destination instead
    /// (pairing them in order); used to build deliberately broken rules.
    pub fn without_resets(&self) -> Self {
        let mut fates = self.input_fates();
        let mut fresh = self.fresh_destinations().into_iter();
        for d in fates.iter_mut().filter(|d| d.is_none()) {
            match fresh.next() {
                Some(o) => *d = Some(o),
                None => break,
            }
        }
        Self::from_fates(&fates, self.n_outputs())
    }
}

/// State placed on fresh latent wires.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreshState {
    /// The theory's latent state ξ for the pair.
    Latent,
    /// Maximally mixed, regardless of ξ (a deliberately wrong rule).
    MaximallyMixed,
}

/// Operation of a noisy permutation on the latent factors `L_{j×N} → L_{j×M}`
/// shared with one character `j`.
pub fn noisy_perm_operation(
    np: &NoisyPermutation,
    context: Char,
    input: &LabelledString,
    output: &LabelledString,
    labelling: &Labelling,
    cfg: &LatentConfig,
    fresh: FreshState,
) -> Result<Operation> {
    if np.n_inputs() != input.len() || np.n_outputs() != output.len() {
        return Err(LqtError::ArityMismatch(format!(
            "noisy permutation {}→{} on strings of length {}→{}",
            np.n_inputs(),
            np.n_outputs(),
            input.len(),
            output.len()
        )));
    }
    let wire = |c: Char| Wire::Latent(PairKey::new(context, c));
    let in_wires: Vec<Wire> = input.chars().iter().map(|&c| wire(c)).collect();
    let mut op = Operation::identity(labelling.shape(&in_wires, cfg)?);
    if np.k > 0 {
        let dests: Vec<Char> = (0..np.k).map(|i| output.chars()[np.perm[i] - np.k_prime]).collect();
        let fresh_wires: Vec<Wire> = dests.iter().map(|&c| wire(c)).collect();
        let shape = labelling.shape(&fresh_wires, cfg)?;
        let states = dests
            .iter()
            .map(|&c| match fresh {
                FreshState::Latent => labelling.wire_state(context, c, cfg),
                FreshState::MaximallyMixed => {
                    let d = labelling.wire_dim(wire(c), cfg)?;
                    Ok(Arc::new(ComplexMatrix::identity(d).scale_real(1.0 / d as f64)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let xi = crate::qmath::kron_all(states.iter().map(|s| s.as_ref()));
        op.local(0, Arc::new(KrausMap::prepare(&xi, shape)?))?;
    }
    op.permute(np.perm.clone())?;
    if np.k_prime > 0 {
        let traced = FactorShape::new(op.output_shape().dims()[..np.k_prime].to_vec())?;
        op.local(0, Arc::new(KrausMap::trace_out(traced)))?;
    }
    Ok(op)
}

/// Applies a noisy permutation to an operator on `L_{j×N}`, where `j` is the
/// single character of `context`.
pub fn apply_noisy_perm(
    np: &NoisyPermutation,
    rho: &ComplexMatrix,
    context: &SystemString,
    input: &SystemString,
    output: &SystemString,
    cfg: &LatentConfig,
) -> Result<ComplexMatrix> {
    if context.len() != 1 {
        return Err(LqtError::ArityMismatch(format!("context must be a single label, got {context}")));
    }
    let (ct, nt, mt) = (Tag(0), Tag(1), Tag(2));
    let labelling = Labelling::new().with(ct, context).with(nt, input).with(mt, output);
    let j = context.chars(ct).chars()[0];
    noisy_perm_operation(np, j, &input.chars(nt), &output.chars(mt), &labelling, cfg, FreshState::Latent)?.apply(rho)
}

/// Incremental circuit over a labelled wire layout.
struct Circuit<'a> {
    labelling: &'a Labelling,
    cfg: &'a LatentConfig,
    layout: Vec<Wire>,
    op: Operation,
}

impl<'a> Circuit<'a> {
    fn new(layout: Vec<Wire>, labelling: &'a Labelling, cfg: &'a LatentConfig) -> Result<Self> {
        let op = Operation::identity(labelling.shape(&layout, cfg)?);
        Ok(Circuit { labelling, cfg, layout, op })
    }

    fn permute_to(&mut self, target: Vec<Wire>) -> Result<()> {
        let perm = layout_permutation(&self.layout, &target)?;
        self.op.permute(perm)?;
        self.layout = target;
        Ok(())
    }

    /// Brings `inputs` to the front, applies `block` there, and records `outputs` in their place.
    fn apply(&mut self, inputs: &[Wire], block: &Operation, outputs: &[Wire]) -> Result<()> {
        let rest: Vec<Wire> = self.layout.iter().filter(|w| !inputs.contains(w)).copied().collect();
        let mut front = inputs.to_vec();
        front.extend(&rest);
        self.permute_to(front)?;
        let rest_shape = self.labelling.shape(&rest, self.cfg)?;
        self.op = self.op.then(&block.embed(&FactorShape::scalar(), &rest_shape))?;
        self.layout = outputs.iter().chain(&rest).copied().collect();
        Ok(())
    }
}

fn row(context: Char, s: &LabelledString) -> Vec<Wire> {
    s.chars().iter().map(|&c| Wire::Latent(PairKey::new(context, c))).collect()
}

#[derive(Clone, Debug)]
pub struct LatentTransformation {
    input: SystemString,
    output: SystemString,
    op_part: Operation,
    latent_part: NoisyPermutation,
}

impl LatentTransformation {
    /// `op_part` must act between the canonical factorizations of
    /// `qmap(input)` and `qmap(output)`; every input wire the noisy
    /// permutation keeps must land on an output of the same label.
    pub fn new(
        input: SystemString,
        output: SystemString,
        op_part: Operation,
        latent_part: NoisyPermutation,
        cfg: &LatentConfig,
    ) -> Result<Self> {
        let (qi, qo) = (qmap(&input, cfg)?, qmap(&output, cfg)?);
        if op_part.input_shape() != &qi.shape() || op_part.output_shape() != &qo.shape() {
            return Err(LqtError::ShapeMismatch(format!(
                "operational part {:?}→{:?}, systems need {:?}→{:?}",
                op_part.input_shape().dims(),
                op_part.output_shape().dims(),
                qi.shape().dims(),
                qo.shape().dims()
            )));
        }
        if latent_part.n_inputs() != input.len() || latent_part.n_outputs() != output.len() {
            return Err(LqtError::ArityMismatch(format!(
                "latent part {}→{} for {input} → {output}",
                latent_part.n_inputs(),
                latent_part.n_outputs()
            )));
        }
        for i in 0..input.len() {
            if let Some(o) = latent_part.input_destination(i) {
                if input.label(i) != output.label(o) {
                    return Err(LqtError::ArityMismatch(format!(
                        "latent wire of `{}` routed to an output of `{}`",
                        input.label(i).name(),
                        output.label(o).name()
                    )));
                }
            }
        }
        Ok(LatentTransformation { input, output, op_part, latent_part: latent_part.canonical() })
    }

    /// From Kraus operators on the flat spaces `qmap(input) → qmap(output)`.
    pub fn from_kraus(
        input: SystemString,
        output: SystemString,
        kraus_ops: Vec<ComplexMatrix>,
        latent_part: NoisyPermutation,
        cfg: &LatentConfig,
    ) -> Result<Self> {
        let map = KrausMap::new(qmap(&input, cfg)?.shape(), qmap(&output, cfg)?.shape(), kraus_ops)?;
        Self::new(input, output, Operation::from_kraus(map), latent_part, cfg)
    }

    pub fn identity(system: &SystemString, cfg: &LatentConfig) -> Result<Self> {
        let op = Operation::identity(qmap(system, cfg)?.shape());
        Self::new(system.clone(), system.clone(), op, NoisyPermutation::identity(system.len()), cfg)
    }

    /// `(T̂, Ẑ^{(i)})` on an elementary system: `reset` picks `Ẑ^{(1)}`
    /// (trace and re-prepare ξ) over `Ẑ^{(0)}` (identity).
    pub fn elementary(system: &SystemString, t_hat: KrausMap, reset: bool, cfg: &LatentConfig) -> Result<Self> {
        if system.len() != 1 {
            return Err(LqtError::ArityMismatch(format!("elementary transformation on {system}")));
        }
        let latent = if reset { NoisyPermutation::reset() } else { NoisyPermutation::identity(1) };
        Self::from_kraus(system.clone(), system.clone(), t_hat.kraus_ops().to_vec(), latent, cfg)
    }

    /// Preparation of `rho` (an operator on `qmap(system)`); all latent wires are fresh.
    pub fn state(system: &SystemString, rho: &ComplexMatrix, cfg: &LatentConfig) -> Result<Self> {
        let map = KrausMap::prepare(rho, qmap(system, cfg)?.shape())?;
        Self::new(
            SystemString::trivial(),
            system.clone(),
            Operation::from_kraus(map),
            NoisyPermutation::prepare_all(system.len()),
            cfg,
        )
    }

    /// The effect `Tr(· Π)`; all latent wires are traced.
    pub fn effect(system: &SystemString, pi: &ComplexMatrix, cfg: &LatentConfig) -> Result<Self> {
        let map = KrausMap::effect(pi, qmap(system, cfg)?.shape())?;
        Self::new(
            system.clone(),
            SystemString::trivial(),
            Operation::from_kraus(map),
            NoisyPermutation::discard_all(system.len()),
            cfg,
        )
    }

    pub fn input(&self) -> &SystemString {
        &self.input
    }

    pub fn output(&self) -> &SystemString {
        &self.output
    }

    pub fn op_part(&self) -> &Operation {
        &self.op_part
    }

    pub fn latent_part(&self) -> &NoisyPermutation {
        &self.latent_part
    }

    /// Generator equality: same systems, same reduced latent part, and
    /// operational parts agreeing within `tol` on the probe set.
    pub fn approx_eq(&self, other: &LatentTransformation, tol: f64) -> Result<bool> {
        Ok(self.input == other.input
            && self.output == other.output
            && self.latent_part == other.latent_part
            && self.op_part.deviation(&other.op_part, 0)? < tol)
    }
}

/// The quantum operation `𝒢 ⊠ I_E` on `qmap(input ⊠ E) → qmap(output ⊠ E)`.
pub fn realize(t: &LatentTransformation, ancilla: &SystemString, cfg: &LatentConfig) -> Result<Operation> {
    realize_with(t, ancilla, cfg, FreshState::Latent)
}

fn realize_with(
    t: &LatentTransformation,
    ancilla: &SystemString,
    cfg: &LatentConfig,
    fresh: FreshState,
) -> Result<Operation> {
    if ancilla.is_trivial() {
        return Ok(t.op_part.clone());
    }
    let (nt, et, mt) = (Tag(0), Tag(1), Tag(2));
    let labelling = Labelling::new().with(nt, &t.input).with(et, ancilla).with(mt, &t.output);
    let (n, e, m) = (t.input.chars(nt), ancilla.chars(et), t.output.chars(mt));
    let mut c = Circuit::new(canonical_wires_of(&concat(&n, &e)), &labelling, cfg)?;
    c.apply(&canonical_wires_of(&n), &t.op_part, &canonical_wires_of(&m))?;
    for &j in e.chars() {
        let s = noisy_perm_operation(&t.latent_part, j, &n, &m, &labelling, cfg, fresh)?;
        c.apply(&row(j, &n), &s, &row(j, &m))?;
    }
    c.permute_to(canonical_wires_of(&concat(&m, &e)))?;
    Ok(c.op)
}

/// `g ∘ f`.
pub fn seq_compose(g: &LatentTransformation, f: &LatentTransformation) -> Result<LatentTransformation> {
    if f.output != g.input {
        return Err(LqtError::SystemMismatch { expected: g.input.to_string(), got: f.output.to_string() });
    }
    Ok(LatentTransformation {
        input: f.input.clone(),
        output: g.output.clone(),
        op_part: f.op_part.then(&g.op_part)?,
        latent_part: f.latent_part.then(&g.latent_part)?,
    })
}

/// Deliberate corruptions of the parallel-composition rule, used as
/// negative controls for the axiom checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParMutation {
    /// Cross latent factors are passed through instead of being reset.
    OmitReset,
    /// Only the left factor's resets act on the cross latent factors.
    OneSided,
    /// Fresh cross latent factors are prepared maximally mixed instead of in ξ.
    WrongFreshState,
}

/// `a ⊠ b`.
pub fn par_compose(
    a: &LatentTransformation,
    b: &LatentTransformation,
    cfg: &LatentConfig,
) -> Result<LatentTransformation> {
    par_compose_with(a, b, cfg, None)
}

/// `a ⊠ b`, optionally with a corrupted cross-latent rule.
pub fn par_compose_with(
    a: &LatentTransformation,
    b: &LatentTransformation,
    cfg: &LatentConfig,
    mutation: Option<ParMutation>,
) -> Result<LatentTransformation> {
    let (n1t, n2t, m1t, m2t) = (Tag(0), Tag(1), Tag(2), Tag(3));
    let labelling = Labelling::new().with(n1t, &a.input).with(n2t, &b.input).with(m1t, &a.output).with(m2t, &b.output);
    let (n1, n2, m1, m2) = (a.input.chars(n1t), b.input.chars(n2t), a.output.chars(m1t), b.output.chars(m2t));

    let (rows_np, cols_np, fresh) = match mutation {
        None => (a.latent_part.clone(), b.latent_part.clone(), FreshState::Latent),
        Some(ParMutation::OmitReset) => {
            (a.latent_part.without_resets(), b.latent_part.without_resets(), FreshState::Latent)
        }
        Some(ParMutation::OneSided) => (a.latent_part.clone(), b.latent_part.without_resets(), FreshState::Latent),
        Some(ParMutation::WrongFreshState) => {
            (a.latent_part.clone(), b.latent_part.clone(), FreshState::MaximallyMixed)
        }
    };

    let mut c = Circuit::new(canonical_wires_of(&concat(&n1, &n2)), &labelling, cfg)?;
    c.apply(&canonical_wires_of(&n1), &a.op_part, &canonical_wires_of(&m1))?;
    c.apply(&canonical_wires_of(&n2), &b.op_part, &canonical_wires_of(&m2))?;
    // Star product on the grid L_{N2×N1}: rows through S_a, then columns through S_b.
    for &j in n2.chars() {
        let s = noisy_perm_operation(&rows_np, j, &n1, &m1, &labelling, cfg, fresh)?;
        c.apply(&row(j, &n1), &s, &row(j, &m1))?;
    }
    for &i in m1.chars() {
        let s = noisy_perm_operation(&cols_np, i, &n2, &m2, &labelling, cfg, fresh)?;
        c.apply(&row(i, &n2), &s, &row(i, &m2))?;
    }
    c.permute_to(canonical_wires_of(&concat(&m1, &m2)))?;

    Ok(LatentTransformation {
        input: compose_systems(&a.input, &b.input),
        output: compose_systems(&a.output, &b.output),
        op_part: c.op,
        latent_part: a.latent_part.tensor(&b.latent_part),
    })
}

/// `Q_{N1} Q_{N2} → Q_{N2} Q_{N1}`: a pure permutation of factors.
pub fn swap_transformation(n1: &SystemString, n2: &SystemString, cfg: &LatentConfig) -> Result<LatentTransformation> {
    let (at, bt) = (Tag(0), Tag(1));
    let labelling = Labelling::new().with(at, n1).with(bt, n2);
    let (a, b) = (n1.chars(at), n2.chars(bt));
    let mut c = Circuit::new(canonical_wires_of(&concat(&a, &b)), &labelling, cfg)?;
    c.permute_to(canonical_wires_of(&concat(&b, &a)))?;
    let (l1, l2) = (n1.len(), n2.len());
    let perm: Vec<usize> = (0..l1).map(|i| l2 + i).chain(0..l2).collect();
    LatentTransformation::new(
        compose_systems(n1, n2),
        compose_systems(n2, n1),
        c.op,
        NoisyPermutation::new(0, 0, perm)?,
        cfg,
    )
}
