//! States, effects and measurements on latent systems, and how they compose.

use crate::error::{LqtError, Result};
use crate::qmath::{
    is_effect, is_pvm_element, kron, kron_all, partial_trace, permute_operator, ComplexMatrix, Tolerance,
};
use crate::strings::{Char, LabelledString, PairKey, Tag};
use crate::theory::{
    canonical_wires_of, compose_systems, layout_permutation, qmap, Labelling, LatentConfig, SystemString, Wire,
};

#[derive(Clone, Debug, PartialEq)]
pub struct LqtState {
    system: SystemString,
    op: ComplexMatrix,
}

impl LqtState {
    /// Positive operator of trace at most one on `qmap(system)`.
    pub fn new(system: SystemString, op: ComplexMatrix, cfg: &LatentConfig) -> Result<Self> {
        check_dim(&system, &op, cfg)?;
        // PSD with trace ≤ 1 already implies op ≤ 𝟙.
        let tr = op.trace().re;
        if !is_effect(&op, Tolerance::default()).valid || tr > 1.0 + 1e-9 {
            return Err(LqtError::InvalidOperator(format!("not a (sub-normalized) state: trace {tr:.6}")));
        }
        Ok(LqtState { system, op })
    }

    /// For operators valid by construction (e.g. convex mixtures of states).
    pub(crate) fn unchecked(system: SystemString, op: ComplexMatrix) -> Self {
        LqtState { system, op }
    }

    pub fn system(&self) -> &SystemString {
        &self.system
    }

    pub fn op(&self) -> &ComplexMatrix {
        &self.op
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LqtEffect {
    system: SystemString,
    op: ComplexMatrix,
}

impl LqtEffect {
    /// Operator with `0 ≤ op ≤ 𝟙` on `qmap(system)`.
    pub fn new(system: SystemString, op: ComplexMatrix, cfg: &LatentConfig) -> Result<Self> {
        check_dim(&system, &op, cfg)?;
        let v = is_effect(&op, Tolerance::default());
        if !v.valid {
            return Err(LqtError::InvalidOperator(format!("not an effect (violation {:.2e})", v.max_violation)));
        }
        Ok(LqtEffect { system, op })
    }

    pub fn unit(system: SystemString, cfg: &LatentConfig) -> Result<Self> {
        let d = qmap(&system, cfg)?.total_dim;
        Ok(LqtEffect { system, op: ComplexMatrix::identity(d) })
    }

    pub fn system(&self) -> &SystemString {
        &self.system
    }

    pub fn op(&self) -> &ComplexMatrix {
        &self.op
    }
}

fn check_dim(system: &SystemString, op: &ComplexMatrix, cfg: &LatentConfig) -> Result<()> {
    let d = qmap(system, cfg)?.total_dim;
    if op.rows() != d || op.cols() != d {
        return Err(LqtError::ShapeMismatch(format!(
            "operator is {}x{}, system {system} has dim {d}",
            op.rows(),
            op.cols()
        )));
    }
    Ok(())
}

/// Ordered outcomes summing to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    system: SystemString,
    outcomes: Vec<LqtEffect>,
    pvm: bool,
}

impl Povm {
    pub fn new(outcomes: Vec<LqtEffect>) -> Result<Self> {
        let first = outcomes.first().ok_or_else(|| LqtError::InvalidOperator("POVM with no outcomes".into()))?;
        let system = first.system.clone();
        let d = first.op.rows();
        let mut sum = ComplexMatrix::zeros(d, d);
        for e in &outcomes {
            if e.system != system {
                return Err(LqtError::SystemMismatch { expected: system.to_string(), got: e.system.to_string() });
            }
            sum = &sum + &e.op;
        }
        let dev = sum.max_abs_diff(&ComplexMatrix::identity(d));
        if dev > 1e-9 {
            return Err(LqtError::InvalidOperator(format!("POVM elements sum to 𝟙 only within {dev:.2e}")));
        }
        let pvm = detect_pvm(&outcomes);
        Ok(Povm { system, outcomes, pvm })
    }

    pub fn system(&self) -> &SystemString {
        &self.system
    }

    pub fn outcomes(&self) -> &[LqtEffect] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn is_pvm(&self) -> bool {
        self.pvm
    }
}

fn detect_pvm(outcomes: &[LqtEffect]) -> bool {
    let tol = Tolerance::default();
    outcomes.iter().all(|e| is_pvm_element(&e.op, tol).valid)
        && outcomes
            .iter()
            .enumerate()
            .all(|(i, a)| outcomes[i + 1..].iter().all(|b| a.op.matmul_unchecked(&b.op).max_abs() < tol.op))
}

/// Character strings of each part, tagged by part index, and the composite's layout.
struct Assembly {
    labelling: Labelling,
    strings: Vec<LabelledString>,
    system: SystemString,
}

impl Assembly {
    fn new(systems: &[&SystemString]) -> Self {
        let mut labelling = Labelling::new();
        let mut strings = Vec::new();
        let mut system = SystemString::trivial();
        for (t, s) in systems.iter().enumerate() {
            let tag = Tag(t as u32);
            labelling = labelling.with(tag, s);
            strings.push(s.chars(tag));
            system = compose_systems(&system, s);
        }
        Assembly { labelling, strings, system }
    }

    fn cross_pairs(&self) -> Vec<(Char, Char)> {
        let mut out = Vec::new();
        for (b, sb) in self.strings.iter().enumerate() {
            for sa in &self.strings[..b] {
                for &cb in sb.chars() {
                    for &ca in sa.chars() {
                        out.push((cb, ca));
                    }
                }
            }
        }
        out
    }

    /// Canonical layout of the composite, and the grouped layout `parts ⊗ cross`
    /// (parts each canonical, cross pairs in [`Self::cross_pairs`] order).
    fn layouts(&self) -> (Vec<Wire>, Vec<Wire>) {
        let mut grouped: Vec<Wire> = self.strings.iter().flat_map(canonical_wires_of).collect();
        grouped.extend(self.cross_pairs().into_iter().map(|(a, b)| Wire::Latent(PairKey::new(a, b))));
        let all: Vec<Char> = self.strings.iter().flat_map(|s| s.chars().iter().copied()).collect();
        (canonical_wires_of(&LabelledString::from_chars(all)), grouped)
    }

    /// Reorders an operator in the grouped layout to canonical order.
    fn canonicalize(&self, product: &ComplexMatrix, cfg: &LatentConfig) -> Result<ComplexMatrix> {
        let (to, from) = self.layouts();
        let perm = layout_permutation(&from, &to)?;
        let shape = self.labelling.shape(&from, cfg)?;
        permute_operator(product, &perm, &shape)
    }
}

/// Parallel composition of states: fresh latent states on every cross pair,
/// existing latent sectors kept.
pub fn compose_states(parts: &[LqtState], cfg: &LatentConfig) -> Result<LqtState> {
    let first = parts.first().ok_or_else(|| LqtError::ArityMismatch("no states to compose".into()))?;
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    let systems: Vec<SystemString> = parts.iter().map(|p| p.system.clone()).collect();
    let (system, op) = attach_cross_latents(&kron_all(parts.iter().map(|p| &p.op)), &systems, cfg)?;
    Ok(LqtState { system, op })
}

/// A (possibly correlated) operator on `⊗ᵢ qmap(partᵢ)`, completed with
/// ξ on every latent factor between different parts.
pub fn embed_joint_state(rho: &ComplexMatrix, parts: &[SystemString], cfg: &LatentConfig) -> Result<LqtState> {
    let (system, op) = attach_cross_latents(rho, parts, cfg)?;
    LqtState::new(system, op, cfg)
}

fn attach_cross_latents(
    rho: &ComplexMatrix,
    parts: &[SystemString],
    cfg: &LatentConfig,
) -> Result<(SystemString, ComplexMatrix)> {
    let asm = Assembly::new(&parts.iter().collect::<Vec<_>>());
    let d: usize = parts.iter().map(|s| qmap(s, cfg).map(|q| q.total_dim)).product::<Result<usize>>()?;
    if rho.rows() != d || rho.cols() != d {
        return Err(LqtError::ShapeMismatch(format!(
            "joint operator is {}x{}, parts need dim {d}",
            rho.rows(),
            rho.cols()
        )));
    }
    let xi =
        asm.cross_pairs().into_iter().map(|(a, b)| asm.labelling.wire_state(a, b, cfg)).collect::<Result<Vec<_>>>()?;
    let product = kron(rho, &kron_all(xi.iter().map(|m| m.as_ref())));
    let op = asm.canonicalize(&product, cfg)?;
    Ok((asm.system, op))
}

/// Splits a state on `part₁ ⊠ … ⊠ partₙ` into `⊗ᵢ qmap(partᵢ)` by tracing
/// out every latent factor shared between different parts. Also returns the
/// factor permutation that grouped the traced factors last.
pub fn strip_cross_latents(
    sigma: &LqtState,
    parts: &[SystemString],
    cfg: &LatentConfig,
) -> Result<(ComplexMatrix, Vec<usize>)> {
    let asm = Assembly::new(&parts.iter().collect::<Vec<_>>());
    if asm.system != sigma.system {
        return Err(LqtError::SystemMismatch { expected: sigma.system.to_string(), got: asm.system.to_string() });
    }
    let (canonical, grouped) = asm.layouts();
    let perm = layout_permutation(&canonical, &grouped)?;
    let shape = asm.labelling.shape(&canonical, cfg)?;
    let regrouped = permute_operator(&sigma.op, &perm, &shape)?;
    let kept = grouped.len() - asm.cross_pairs().len();
    let keep: Vec<usize> = (0..kept).collect();
    let reduced = partial_trace(&regrouped, &asm.labelling.shape(&grouped, cfg)?, &keep)?;
    Ok((reduced, perm))
}

/// Parallel composition of effects: identity on every cross pair.
pub fn compose_effects(parts: &[LqtEffect], cfg: &LatentConfig) -> Result<LqtEffect> {
    let first = parts.first().ok_or_else(|| LqtError::ArityMismatch("no effects to compose".into()))?;
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    let asm = Assembly::new(&parts.iter().map(|p| &p.system).collect::<Vec<_>>());
    let cross: Vec<Wire> = asm.cross_pairs().into_iter().map(|(a, b)| Wire::Latent(PairKey::new(a, b))).collect();
    let cross_dim = asm.labelling.shape(&cross, cfg)?.dim();
    let product = kron(&kron_all(parts.iter().map(|p| &p.op)), &ComplexMatrix::identity(cross_dim));
    let op = asm.canonicalize(&product, cfg)?;
    Ok(LqtEffect { system: asm.system, op })
}

/// Born rule `Tr(ρ Π)`.
pub fn pair(e: &LqtEffect, s: &LqtState) -> Result<f64> {
    if e.system != s.system {
        return Err(LqtError::SystemMismatch { expected: e.system.to_string(), got: s.system.to_string() });
    }
    Ok(s.op.trace_product(&e.op).re)
}

/// Outcome-wise composition; outcomes in lexicographic order, first part most significant.
pub fn compose_povms(parts: &[Povm], cfg: &LatentConfig) -> Result<Povm> {
    let first = parts.first().ok_or_else(|| LqtError::ArityMismatch("no POVMs to compose".into()))?;
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    let mut outcomes = Vec::new();
    let mut index = vec![0usize; parts.len()];
    loop {
        let effects: Vec<LqtEffect> = index.iter().zip(parts).map(|(&i, p)| p.outcomes[i].clone()).collect();
        outcomes.push(compose_effects(&effects, cfg)?);
        let mut k = parts.len();
        loop {
            if k == 0 {
                let pvm = parts.iter().all(|p| p.pvm);
                let system = outcomes[0].system.clone();
                return Ok(Povm { system, outcomes, pvm });
            }
            k -= 1;
            index[k] += 1;
            if index[k] < parts[k].outcomes.len() {
                break;
            }
            index[k] = 0;
        }
    }
}
