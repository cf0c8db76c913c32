//! Bell-like scenarios: correlation tables in a latent theory and in plain
//! quantum theory, the maps between the two, and the local-tomography demo.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LqtError, Result};
use crate::qmath::{kron, kron_all, partial_trace, permute_operator, random, ComplexMatrix, C64, ONE, ZERO};
use crate::states_effects::{
    compose_effects, compose_states, embed_joint_state, pair, strip_cross_latents, LqtEffect, LqtState, Povm,
};
use crate::strings::{Char, LabelledString, PairKey, Tag};
use crate::theory::{
    canonical_wires_of, compose_systems, embed_qt_state, layout_permutation, qmap, Labelling, LatentConfig,
    SystemString, Wire,
};
use crate::verify::CheckReport;

/// Tsirelson's bound.
pub const TSIRELSON: f64 = 2.0 * SQRT_2;

#[derive(Clone, Debug)]
pub struct Party {
    pub system: SystemString,
    pub settings: Vec<Povm>,
}

#[derive(Clone, Debug)]
pub enum SharedState {
    Joint(LqtState),
    /// Convex mixture `Σ_w w · (Σ_{w,1} ⊠ … ⊠ Σ_{w,m})`; every term uses the
    /// same component systems.
    Products(Vec<(f64, Vec<LqtState>)>),
}

#[derive(Clone, Debug)]
pub struct Scenario {
    parties: Vec<Party>,
    shared: SharedState,
    sigma: LqtState,
}

impl Scenario {
    pub fn new(parties: Vec<Party>, shared: SharedState, cfg: &LatentConfig) -> Result<Self> {
        if parties.is_empty() {
            return Err(LqtError::Scenario("a scenario needs at least one party".into()));
        }
        for (i, p) in parties.iter().enumerate() {
            if p.settings.is_empty() {
                return Err(LqtError::Scenario(format!("party {i} has no settings")));
            }
            if let Some(bad) = p.settings.iter().find(|m| m.system() != &p.system) {
                return Err(LqtError::Scenario(format!(
                    "party {i} on {} has a measurement on {}",
                    p.system,
                    bad.system()
                )));
            }
        }
        let sigma = match &shared {
            SharedState::Joint(s) => s.clone(),
            SharedState::Products(terms) => mixture_of_products(terms, cfg)?,
        };
        let whole = parties.iter().fold(SystemString::trivial(), |acc, p| compose_systems(&acc, &p.system));
        if &whole != sigma.system() {
            return Err(LqtError::Scenario(format!(
                "parties compose to {whole}, shared state lives on {}",
                sigma.system()
            )));
        }
        Ok(Scenario { parties, shared, sigma })
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn shared(&self) -> &SharedState {
        &self.shared
    }

    /// The shared state as one operator on the composite.
    pub fn sigma(&self) -> &LqtState {
        &self.sigma
    }

    fn systems(&self) -> Vec<SystemString> {
        self.parties.iter().map(|p| p.system.clone()).collect()
    }

    fn settings_counts(&self) -> Vec<usize> {
        self.parties.iter().map(|p| p.settings.len()).collect()
    }

    fn outcome_counts(&self, settings: &[usize]) -> Vec<usize> {
        self.parties.iter().zip(settings).map(|(p, &x)| p.settings[x].len()).collect()
    }

    fn local_effects(&self) -> Vec<Vec<Vec<ComplexMatrix>>> {
        self.parties
            .iter()
            .map(|p| p.settings.iter().map(|m| m.outcomes().iter().map(|e| e.op().clone()).collect()).collect())
            .collect()
    }
}

fn mixture_of_products(terms: &[(f64, Vec<LqtState>)], cfg: &LatentConfig) -> Result<LqtState> {
    let first = terms.first().ok_or_else(|| LqtError::Scenario("empty mixture".into()))?;
    let mut total = 0.0;
    let mut op: Option<ComplexMatrix> = None;
    for (w, parts) in terms {
        if *w < 0.0 || !w.is_finite() {
            return Err(LqtError::Scenario(format!("mixture weight {w}")));
        }
        let same = parts.len() == first.1.len() && parts.iter().zip(&first.1).all(|(a, b)| a.system() == b.system());
        if !same {
            return Err(LqtError::Scenario("mixture terms use different component systems".into()));
        }
        total += w;
        let term = compose_states(parts, cfg)?.op().scale_real(*w);
        op = Some(match op {
            None => term,
            Some(acc) => &acc + &term,
        });
    }
    if total > 1.0 + 1e-9 {
        return Err(LqtError::Scenario(format!("mixture weights sum to {total}")));
    }
    let system = first.1.iter().fold(SystemString::trivial(), |acc, s| compose_systems(&acc, s.system()));
    // Each term is a valid state and the weights are sub-normalized.
    Ok(LqtState::unchecked(system, op.expect("nonempty")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub settings: Vec<usize>,
    pub outcomes: Vec<usize>,
    pub probability: f64,
}

/// `P(a₁…aₙ | x₁…xₙ)`, rows in lexicographic (settings, outcomes) order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<TableRow>,
}

impl CorrelationTable {
    pub fn get(&self, settings: &[usize], outcomes: &[usize]) -> Option<f64> {
        self.rows.iter().find(|r| r.settings == settings && r.outcomes == outcomes).map(|r| r.probability)
    }

    pub fn max_abs_diff(&self, other: &CorrelationTable) -> Result<f64> {
        if self.rows.len() != other.rows.len() {
            return Err(LqtError::ShapeMismatch(format!(
                "tables with {} and {} rows",
                self.rows.len(),
                other.rows.len()
            )));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.rows.iter().zip(&other.rows) {
            if a.settings != b.settings || a.outcomes != b.outcomes {
                return Err(LqtError::ShapeMismatch("tables index different events".into()));
            }
            worst = worst.max((a.probability - b.probability).abs());
        }
        Ok(worst)
    }

    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.settings.len());
        let mut out = String::new();
        let header: Vec<String> =
            (0..n).map(|i| format!("x{i}")).chain((0..n).map(|i| format!("a{i}"))).chain(["p".to_string()]).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r
                .settings
                .iter()
                .chain(&r.outcomes)
                .map(|v| v.to_string())
                .chain([format!("{:.15e}", r.probability)])
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Every tuple `t` with `t[i] < counts[i]`, last index fastest.
fn tuples(counts: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &c in counts {
        out = out.into_iter().flat_map(|t| (0..c).map(move |v| [t.clone(), vec![v]].concat())).collect();
    }
    out
}

fn tabulate(
    settings_counts: &[usize],
    outcome_counts: impl Fn(&[usize]) -> Vec<usize>,
    mut prob: impl FnMut(&[usize], &[usize]) -> Result<f64>,
) -> Result<CorrelationTable> {
    let mut rows = Vec::new();
    for x in tuples(settings_counts) {
        for a in tuples(&outcome_counts(&x)) {
            let probability = prob(&x, &a)?;
            rows.push(TableRow { settings: x.clone(), outcomes: a, probability });
        }
    }
    Ok(CorrelationTable { rows })
}

/// `⟨⟨a₁| ⊠ … ⊠ ⟨⟨aₙ| Σ⟩⟩` for every settings/outcomes tuple.
pub fn correlations_lqt(s: &Scenario, cfg: &LatentConfig) -> Result<CorrelationTable> {
    tabulate(
        &s.settings_counts(),
        |x| s.outcome_counts(x),
        |x, a| {
            let effects: Vec<LqtEffect> = s
                .parties
                .iter()
                .zip(x.iter().zip(a))
                .map(|(p, (&xi, &ai))| p.settings[xi].outcomes()[ai].clone())
                .collect();
            pair(&compose_effects(&effects, cfg)?, &s.sigma)
        },
    )
}

/// Plain quantum statistics `Tr(ρ · Π¹ ⊗ … ⊗ Πⁿ)`, with `effects[party][setting][outcome]`.
pub fn correlations_qt(rho: &ComplexMatrix, effects: &[Vec<Vec<ComplexMatrix>>]) -> Result<CorrelationTable> {
    let settings: Vec<usize> = effects.iter().map(|p| p.len()).collect();
    let d: usize = effects.iter().map(|p| p.first().and_then(|m| m.first()).map_or(1, |e| e.rows())).product();
    if rho.rows() != d || rho.cols() != d {
        return Err(LqtError::ShapeMismatch(format!(
            "state is {}x{}, local effects give dim {d}",
            rho.rows(),
            rho.cols()
        )));
    }
    tabulate(
        &settings,
        |x| effects.iter().zip(x).map(|(p, &xi)| p[xi].len()).collect(),
        |x, a| {
            let pi = kron_all(effects.iter().zip(x.iter().zip(a)).map(|(p, (&xi, &ai))| &p[xi][ai]));
            Ok(rho.trace_product(&pi).re)
        },
    )
}

/// The state on `⊗ᵢ qmap(partyᵢ)` reproducing every local statistic:
/// cross-party latent factors are traced out, each party keeps its own.
/// Also returns the factor permutation used to group the traced factors.
pub fn to_qt_state(s: &Scenario, cfg: &LatentConfig) -> Result<(ComplexMatrix, Vec<usize>)> {
    strip_cross_latents(&s.sigma, &s.systems(), cfg)
}

/// Latent-theory table against the plain quantum table of [`to_qt_state`].
pub fn check_bell_equivalence(s: &Scenario, cfg: &LatentConfig, tol: f64) -> Result<CheckReport> {
    let lqt = correlations_lqt(s, cfg)?;
    let (rho, _) = to_qt_state(s, cfg)?;
    let qt = correlations_qt(&rho, &s.local_effects())?;
    Ok(report("bell_equivalence", lqt.rows.len(), lqt.max_abs_diff(&qt)?, tol))
}

/// The converse direction: a plain quantum scenario and its ξ-embedded
/// latent counterpart give identical tables.
pub fn check_qt_embedding(
    rho: &ComplexMatrix,
    parties: Vec<Party>,
    cfg: &LatentConfig,
    tol: f64,
) -> Result<CheckReport> {
    let systems: Vec<SystemString> = parties.iter().map(|p| p.system.clone()).collect();
    let sigma = embed_joint_state(rho, &systems, cfg)?;
    let s = Scenario::new(parties, SharedState::Joint(sigma), cfg)?;
    let lqt = correlations_lqt(&s, cfg)?;
    let qt = correlations_qt(rho, &s.local_effects())?;
    Ok(report("qt_embedding", lqt.rows.len(), lqt.max_abs_diff(&qt)?, tol))
}

fn report(name: &str, trials: usize, dev: f64, tol: f64) -> CheckReport {
    CheckReport {
        check_name: name.to_string(),
        trials,
        max_deviation: dev,
        tolerance: tol,
        pass: dev < tol,
        seed: 0,
        witness: None,
    }
}

/// Builds the plain quantum state with the same preparation/measurement
/// connectivity as a product-form scenario whose preparation partition may
/// differ from the parties' partition: latent factors inside a component
/// that straddle two parties are traced, those joining two components inside
/// one party become independent ξ preparations owned by that party.
pub fn structure_preserving_qt_state(
    components: &[LqtState],
    parties: &[SystemString],
    cfg: &LatentConfig,
) -> Result<ComplexMatrix> {
    let mut labelling = Labelling::new();
    let mut all: Vec<Char> = Vec::new();
    for (k, c) in components.iter().enumerate() {
        let tag = Tag(k as u32);
        labelling = labelling.with(tag, c.system());
        all.extend(c.system().chars(tag).chars());
    }
    let total: usize = parties.iter().map(|p| p.len()).sum();
    if total != all.len() {
        return Err(LqtError::Scenario(format!("parties cover {total} labels, components {}", all.len())));
    }
    let mut owner: BTreeMap<Char, usize> = BTreeMap::new();
    let mut party_chars: Vec<Vec<Char>> = Vec::new();
    let mut next = all.iter();
    for (i, p) in parties.iter().enumerate() {
        let chars: Vec<Char> = next.by_ref().take(p.len()).copied().collect();
        for (j, c) in chars.iter().enumerate() {
            if labelling.label(*c)? != p.label(j) {
                return Err(LqtError::Scenario(format!("party {i} label {j} does not match the components")));
            }
            owner.insert(*c, i);
        }
        party_chars.push(chars);
    }

    let mut from: Vec<Wire> = Vec::new();
    let mut factors: Vec<ComplexMatrix> = Vec::new();
    for (k, c) in components.iter().enumerate() {
        let wires = canonical_wires_of(&c.system().chars(Tag(k as u32)));
        let keep: Vec<usize> = (0..wires.len())
            .filter(|&w| match wires[w] {
                Wire::Latent(PairKey(a, b)) => owner[&a] == owner[&b],
                Wire::Operational(_) => true,
            })
            .collect();
        let shape = labelling.shape(&wires, cfg)?;
        factors.push(partial_trace(c.op(), &shape, &keep)?);
        from.extend(keep.iter().map(|&w| wires[w]));
    }
    for (i, a) in all.iter().enumerate() {
        for b in &all[..i] {
            if a.tag != b.tag && owner[a] == owner[b] {
                factors.push(labelling.wire_state(*a, *b, cfg)?.as_ref().clone());
                from.push(Wire::Latent(PairKey::new(*a, *b)));
            }
        }
    }
    let to: Vec<Wire> =
        party_chars.iter().flat_map(|cs| canonical_wires_of(&LabelledString::from_chars(cs.clone()))).collect();
    let perm = layout_permutation(&from, &to)?;
    permute_operator(&kron_all(factors.iter()), &perm, &labelling.shape(&from, cfg)?)
}

/// For product-form (or mixed product-form) scenarios: the latent table
/// equals the table of the structure-preserving quantum state, and the
/// latent table of a mixture is the mixture of the tables.
pub fn check_scenario_structure(s: &Scenario, cfg: &LatentConfig, tol: f64) -> Result<CheckReport> {
    let SharedState::Products(terms) = &s.shared else {
        return Err(LqtError::Scenario("structure check needs a product-form preparation".into()));
    };
    let systems = s.systems();
    let effects = s.local_effects();
    let lqt = correlations_lqt(s, cfg)?;
    let mut rho: Option<ComplexMatrix> = None;
    let mut mixed_tables = vec![0.0; lqt.rows.len()];
    for (w, parts) in terms {
        let term_rho = structure_preserving_qt_state(parts, &systems, cfg)?.scale_real(*w);
        rho = Some(match rho {
            None => term_rho,
            Some(acc) => &acc + &term_rho,
        });
        let single = Scenario::new(s.parties.clone(), SharedState::Products(vec![(1.0, parts.clone())]), cfg)?;
        for (acc, r) in mixed_tables.iter_mut().zip(correlations_lqt(&single, cfg)?.rows) {
            *acc += w * r.probability;
        }
    }
    let qt = correlations_qt(&rho.expect("nonempty mixture"), &effects)?;
    let linearity = lqt.rows.iter().zip(&mixed_tables).map(|(r, m)| (r.probability - m).abs()).fold(0.0, f64::max);
    Ok(report("scenario_structure", lqt.rows.len(), lqt.max_abs_diff(&qt)?.max(linearity), tol))
}

/// Dimension of the real span of product effects against the dimension of
/// all Hermitian operators on the composite; equal iff local tomography holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanReport {
    pub span: usize,
    pub ambient: usize,
}

impl SpanReport {
    pub fn deficit(&self) -> usize {
        self.ambient - self.span
    }
}

/// `d²` rank-one projectors spanning the Hermitian operators in dimension `d`:
/// `|i⟩⟨i|`, and `|i⟩+|j⟩`, `|i⟩+i|j⟩` (normalized) for `i < j`.
pub fn effect_basis(d: usize) -> Vec<ComplexMatrix> {
    let mut out: Vec<ComplexMatrix> = (0..d).map(|i| ComplexMatrix::unit(d, i, i)).collect();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            for phase in [ONE, C64::new(0.0, 1.0)] {
                let mut v = vec![ZERO; d];
                v[i] = C64::new(h, 0.0);
                v[j] = phase * h;
                out.push(ComplexMatrix::projector(&v));
            }
        }
    }
    out
}

fn product_effects(system: &SystemString, cfg: &LatentConfig) -> Result<Vec<LqtEffect>> {
    let locals: Vec<(SystemString, Vec<ComplexMatrix>)> =
        system.labels().iter().map(|l| Ok((cfg.system(&[l.name()])?, effect_basis(l.dim())))).collect::<Result<_>>()?;
    let counts: Vec<usize> = locals.iter().map(|(_, b)| b.len()).collect();
    tuples(&counts)
        .into_iter()
        .map(|t| {
            let parts = t
                .iter()
                .zip(&locals)
                .map(|(&i, (s, b))| LqtEffect::new(s.clone(), b[i].clone(), cfg))
                .collect::<Result<Vec<_>>>()?;
            compose_effects(&parts, cfg)
        })
        .collect()
}

/// Rank of the Gram matrix of products of local effect-basis elements.
pub fn tomography_span(system: &SystemString, cfg: &LatentConfig) -> Result<SpanReport> {
    if system.len() < 2 {
        return Err(LqtError::Scenario(format!("local tomography needs a composite, got {system}")));
    }
    let effects = product_effects(system, cfg)?;
    let n = effects.len();
    let mut gram = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let g = C64::new(effects[i].op().trace_product(effects[j].op()).re, 0.0);
            gram.set(i, j, g);
            gram.set(j, i, g);
        }
    }
    let eig = gram.eigenvalues_hermitian();
    let top = eig.iter().cloned().fold(0.0, f64::max);
    let span = eig.iter().filter(|&&v| v > 1e-8 * top).count();
    let d = qmap(system, cfg)?.total_dim;
    Ok(SpanReport { span, ambient: d * d })
}

/// Two states no product measurement can tell apart but a joint one can.
#[derive(Clone, Debug)]
pub struct Witness {
    pub system: SystemString,
    pub state1: LqtState,
    pub state2: LqtState,
    /// Largest difference over all products of local effect-basis elements.
    pub product_stat_deviation: f64,
    pub trace_distance: f64,
    pub distinguishing_povm: Povm,
    pub success_prob: f64,
}

/// `ξ ⊗ ρ` against `ξ′ ⊗ ρ` on two elementary systems sharing a latent
/// factor of dimension ≥ 2, where `ξ′` is the projector on the least likely
/// eigenvector of `ξ` (orthogonal to `ξ` when `ξ` is pure). `None` when every
/// latent factor is one-dimensional.
pub fn tomography_violation_witness(cfg: &LatentConfig) -> Result<Option<Witness>> {
    let names: Vec<String> = cfg.labels().map(|l| l.name().to_string()).collect();
    let found = names
        .iter()
        .enumerate()
        .flat_map(|(i, a)| names[i..].iter().map(move |b| (a.clone(), b.clone())))
        .find(|(a, b)| cfg.latent_dim(a, b).map(|d| d >= 2).unwrap_or(false));
    let Some((a, b)) = found else { return Ok(None) };
    let system = cfg.system(&[&a, &b])?;
    let xi = cfg.latent_state(&a, &b)?;
    let eig = xi.eigh();
    let xi_perp = ComplexMatrix::projector(&eig[0].1);
    let ops_dim = system.labels().iter().map(|l| l.dim()).product();
    let rho = ComplexMatrix::unit(ops_dim, 0, 0);
    // One latent factor, first in canonical order.
    let state1 = LqtState::new(system.clone(), kron(&xi, &rho), cfg)?;
    let state2 = LqtState::new(system.clone(), kron(&xi_perp, &rho), cfg)?;

    let mut product_stat_deviation = 0.0f64;
    for e in product_effects(&system, cfg)? {
        product_stat_deviation = product_stat_deviation.max((pair(&e, &state1)? - pair(&e, &state2)?).abs());
    }
    let diff = xi.as_ref() - &xi_perp;
    let mut helstrom = ComplexMatrix::zeros(xi.rows(), xi.rows());
    let mut trace_norm = 0.0;
    for (val, vec) in diff.eigh() {
        trace_norm += val.abs();
        if val > 0.0 {
            helstrom = &helstrom + &ComplexMatrix::projector(&vec);
        }
    }
    let p0 = kron(&helstrom, &ComplexMatrix::identity(ops_dim));
    let p1 = &ComplexMatrix::identity(p0.rows()) - &p0;
    let povm = Povm::new(vec![LqtEffect::new(system.clone(), p0, cfg)?, LqtEffect::new(system.clone(), p1, cfg)?])?;
    let success_prob = 0.5 * (pair(&povm.outcomes()[0], &state1)? + pair(&povm.outcomes()[1], &state2)?);
    Ok(Some(Witness {
        system,
        state1,
        state2,
        product_stat_deviation,
        trace_distance: 0.5 * trace_norm,
        distinguishing_povm: povm,
        success_prob,
    }))
}

/// `{(𝟙 ± n·σ)/2}` on an elementary qubit system.
pub fn qubit_projective(system: &SystemString, n: [f64; 3], cfg: &LatentConfig) -> Result<Povm> {
    if system.len() != 1 || system.label(0).dim() != 2 {
        return Err(LqtError::Scenario(format!("projective qubit measurement on {system}")));
    }
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let (x, y, z) = (n[0] / norm, n[1] / norm, n[2] / norm);
    let half = |s: f64| {
        ComplexMatrix::from_fn(2, 2, |r, c| {
            let v = match (r, c) {
                (0, 0) => C64::new(1.0 + s * z, 0.0),
                (1, 1) => C64::new(1.0 - s * z, 0.0),
                (0, 1) => C64::new(s * x, -s * y),
                _ => C64::new(s * x, s * y),
            };
            v * 0.5
        })
    };
    Povm::new(vec![LqtEffect::new(system.clone(), half(1.0), cfg)?, LqtEffect::new(system.clone(), half(-1.0), cfg)?])
}

/// Measurement of `cos θ Z + sin θ X`.
pub fn angle_povm(system: &SystemString, theta: f64, cfg: &LatentConfig) -> Result<Povm> {
    qubit_projective(system, [theta.sin(), 0.0, theta.cos()], cfg)
}

pub fn phi_plus() -> ComplexMatrix {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    ComplexMatrix::projector(&[h, ZERO, ZERO, h])
}

pub fn psi_minus() -> ComplexMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::projector(&[ZERO, C64::new(h, 0.0), C64::new(-h, 0.0), ZERO])
}

fn first_qubit(cfg: &LatentConfig) -> Result<SystemString> {
    let q = cfg
        .labels()
        .find(|l| l.dim() == 2)
        .ok_or_else(|| LqtError::Scenario("no two-dimensional label in the configuration".into()))?;
    cfg.system(&[q.name()])
}

/// Two qubits sharing `ξ ⊗ |Φ⁺⟩⟨Φ⁺|`, Alice at angles 0, π/2 and Bob at ±π/4.
pub fn chsh_scenario(cfg: &LatentConfig) -> Result<Scenario> {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    let q = first_qubit(cfg)?;
    let qq = compose_systems(&q, &q);
    let sigma = LqtState::new(qq.clone(), embed_qt_state(&phi_plus(), &qq, cfg)?, cfg)?;
    let alice = Party { system: q.clone(), settings: vec![angle_povm(&q, 0.0, cfg)?, angle_povm(&q, FRAC_PI_2, cfg)?] };
    let bob =
        Party { system: q.clone(), settings: vec![angle_povm(&q, FRAC_PI_4, cfg)?, angle_povm(&q, -FRAC_PI_4, cfg)?] };
    Scenario::new(vec![alice, bob], SharedState::Joint(sigma), cfg)
}

/// `E₀₀ + E₀₁ + E₁₀ − E₁₁` for a two-party, two-setting, two-outcome table.
pub fn chsh_value(table: &CorrelationTable) -> Result<f64> {
    let mut e = [[0.0; 2]; 2];
    for r in &table.rows {
        if r.settings.len() != 2 || r.settings.iter().chain(&r.outcomes).any(|&v| v > 1) {
            return Err(LqtError::Scenario("CHSH needs two parties with binary settings and outcomes".into()));
        }
        let sign = if (r.outcomes[0] + r.outcomes[1]) % 2 == 0 { 1.0 } else { -1.0 };
        e[r.settings[0]][r.settings[1]] += sign * r.probability;
    }
    Ok(e[0][0] + e[0][1] + e[1][0] - e[1][1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub samples: usize,
    pub max_chsh: f64,
    pub bound: f64,
    pub within_bound: bool,
    pub note: String,
}

/// CHSH values for random projective settings on `ξ ⊗ |Ψ⁻⟩⟨Ψ⁻|`.
pub fn chsh_sampling(cfg: &LatentConfig, samples: usize, seed: u64) -> Result<SamplingReport> {
    let q = first_qubit(cfg)?;
    let qq = compose_systems(&q, &q);
    let sigma = LqtState::new(qq.clone(), embed_qt_state(&psi_minus(), &qq, cfg)?, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_chsh = f64::NEG_INFINITY;
    for _ in 0..samples {
        let mut povm = || -> Result<Povm> {
            let v = random::pure_state(3, &mut rng);
            qubit_projective(&q, [v[0].re, v[1].re, v[2].re], cfg)
        };
        let alice = Party { system: q.clone(), settings: vec![povm()?, povm()?] };
        let bob = Party { system: q.clone(), settings: vec![povm()?, povm()?] };
        let s = Scenario::new(vec![alice, bob], SharedState::Joint(sigma.clone()), cfg)?;
        max_chsh = max_chsh.max(chsh_value(&correlations_lqt(&s, cfg)?)?.abs());
    }
    Ok(SamplingReport {
        samples,
        max_chsh,
        bound: TSIRELSON,
        within_bound: max_chsh <= TSIRELSON + 1e-6,
        note: "sampling evidence over random settings, not a proof".into(),
    })
}

/// Random scenario with `n` parties, two settings each and 2–3 outcomes per
/// setting, sharing a random full-rank state. Parties are elementary systems
/// of a random label, except that with two parties the first may hold two.
pub fn random_scenario<R: Rng>(cfg: &LatentConfig, n: usize, rng: &mut R) -> Result<Scenario> {
    let names: Vec<String> = cfg.labels().filter(|l| l.dim() <= 3).map(|l| l.name().to_string()).collect();
    if names.is_empty() {
        return Err(LqtError::Scenario("no label of dimension ≤ 3".into()));
    }
    let mut parties = Vec::new();
    for i in 0..n {
        let size = if n == 2 && i == 0 && rng.random_bool(0.5) { 2 } else { 1 };
        let labels: Vec<&str> = (0..size).map(|_| names[rng.random_range(0..names.len())].as_str()).collect();
        let system = cfg.system(&labels)?;
        let d = qmap(&system, cfg)?.total_dim;
        let settings = (0..2)
            .map(|_| {
                let k = rng.random_range(2..=3);
                let effects = random::povm(d, k, rng)
                    .into_iter()
                    .map(|e| LqtEffect::new(system.clone(), e, cfg))
                    .collect::<Result<Vec<_>>>()?;
                Povm::new(effects)
            })
            .collect::<Result<Vec<_>>>()?;
        parties.push(Party { system, settings });
    }
    let whole = parties.iter().fold(SystemString::trivial(), |acc, p| compose_systems(&acc, &p.system));
    let sigma = LqtState::new(whole.clone(), random::density(qmap(&whole, cfg)?.total_dim, rng), cfg)?;
    Scenario::new(parties, SharedState::Joint(sigma), cfg)
}

/// Wires a scenario: party 0's single new setting mixes its settings 0 and 1
/// with weight `p`; party 1's outcomes of each setting are coarse-grained by
/// merging the last two. The classically post-processed latent table must
/// equal the plain quantum table of the wired scenario.
pub fn check_wirings(s: &Scenario, cfg: &LatentConfig, p: f64, tol: f64) -> Result<CheckReport> {
    if s.parties.len() < 2 || s.parties[0].settings.len() < 2 {
        return Err(LqtError::Scenario("wiring check needs two parties and two settings for the first".into()));
    }
    let lqt = correlations_lqt(s, cfg)?;
    let merge = |k: usize, a: usize| if k > 2 && a == k - 1 { a - 1 } else { a };
    let merged_len = |k: usize| if k > 2 { k - 1 } else { k };

    let mut parties = s.parties.clone();
    let (m0, m1) = (&s.parties[0].settings[0], &s.parties[0].settings[1]);
    if m0.len() != m1.len() {
        return Err(LqtError::Scenario("mixed settings need equal outcome counts".into()));
    }
    let mixed: Vec<LqtEffect> = m0
        .outcomes()
        .iter()
        .zip(m1.outcomes())
        .map(|(a, b)| LqtEffect::new(a.system().clone(), &a.op().scale_real(p) + &b.op().scale_real(1.0 - p), cfg))
        .collect::<Result<_>>()?;
    parties[0].settings = vec![Povm::new(mixed)?];
    parties[1].settings = s.parties[1]
        .settings
        .iter()
        .map(|m| {
            let k = m.len();
            let mut ops =
                vec![ComplexMatrix::zeros(m.outcomes()[0].op().rows(), m.outcomes()[0].op().rows()); merged_len(k)];
            for (a, e) in m.outcomes().iter().enumerate() {
                ops[merge(k, a)] = &ops[merge(k, a)] + e.op();
            }
            Povm::new(ops.into_iter().map(|o| LqtEffect::new(m.system().clone(), o, cfg)).collect::<Result<_>>()?)
        })
        .collect::<Result<_>>()?;
    let wired = Scenario::new(parties, s.shared.clone(), cfg)?;

    // Post-process the original table.
    let wired_rows = tabulate(
        &wired.settings_counts(),
        |x| wired.outcome_counts(x),
        |x, a| {
            let mut total = 0.0;
            for r in &lqt.rows {
                let weight = match r.settings[0] {
                    0 => p,
                    1 => 1.0 - p,
                    _ => 0.0,
                };
                let k1 = s.parties[1].settings[r.settings[1]].len();
                let matches = r.settings[1..] == x[1..]
                    && r.outcomes[0] == a[0]
                    && merge(k1, r.outcomes[1]) == a[1]
                    && r.outcomes[2..] == a[2..];
                if matches {
                    total += weight * r.probability;
                }
            }
            Ok(total)
        },
    )?;
    let (rho, _) = to_qt_state(&wired, cfg)?;
    let qt = correlations_qt(&rho, &wired.local_effects())?;
    Ok(report("wirings", wired_rows.rows.len(), wired_rows.max_abs_diff(&qt)?, tol))
}

// ---- scenario documents ----

/// Operator literal: a matrix or a named state.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorDoc {
    Named(String),
    Matrix(ComplexMatrix),
}

impl OperatorDoc {
    pub fn resolve(&self, dim: usize) -> Result<ComplexMatrix> {
        let m = match self {
            OperatorDoc::Matrix(m) => m.clone(),
            OperatorDoc::Named(n) => match n.as_str() {
                "phi_plus" => phi_plus(),
                "psi_minus" => psi_minus(),
                "maximally_mixed" => ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
                "zero" => ComplexMatrix::unit(dim, 0, 0),
                "identity" => ComplexMatrix::identity(dim),
                other => return Err(LqtError::Scenario(format!("unknown state `{other}`"))),
            },
        };
        if m.rows() != dim || m.cols() != dim {
            return Err(LqtError::Scenario(format!("state is {}x{}, expected dim {dim}", m.rows(), m.cols())));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PovmDoc {
    /// `"Z"`, `"X"` or `"Y"`.
    Named(String),
    Angle {
        angle: f64,
    },
    Effects {
        effects: Vec<ComplexMatrix>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyDoc {
    pub system: Vec<String>,
    pub settings: Vec<PovmDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDoc {
    pub system: Vec<String>,
    pub state: OperatorDoc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDoc {
    pub weight: f64,
    pub product: Vec<ComponentDoc>,
}

/// Shared state: `"embed_qt:<name>"` or `{"embed_qt": op}` (the operator on
/// the parties' operational spaces, with ξ on every latent factor), a full
/// matrix, a ⊠-product of components, or a mixture of such products.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SharedDoc {
    Shorthand(String),
    EmbedQt { embed_qt: OperatorDoc },
    Matrix { matrix: ComplexMatrix },
    Product { product: Vec<ComponentDoc> },
    Mixture { mixture: Vec<TermDoc> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default)]
    pub name: Option<String>,
    pub parties: Vec<PartyDoc>,
    pub state: SharedDoc,
}

impl ScenarioDoc {
    pub fn build(&self, cfg: &LatentConfig) -> Result<Scenario> {
        let sys = |names: &[String]| -> Result<SystemString> {
            cfg.system(&names.iter().map(String::as_str).collect::<Vec<_>>())
        };
        let mut parties = Vec::new();
        for p in &self.parties {
            let system = sys(&p.system)?;
            let d = qmap(&system, cfg)?.total_dim;
            let settings = p
                .settings
                .iter()
                .map(|m| match m {
                    PovmDoc::Named(n) => match n.as_str() {
                        "Z" => qubit_projective(&system, [0.0, 0.0, 1.0], cfg),
                        "X" => qubit_projective(&system, [1.0, 0.0, 0.0], cfg),
                        "Y" => qubit_projective(&system, [0.0, 1.0, 0.0], cfg),
                        other => Err(LqtError::Scenario(format!("unknown measurement `{other}`"))),
                    },
                    PovmDoc::Angle { angle } => angle_povm(&system, *angle, cfg),
                    PovmDoc::Effects { effects } => {
                        if effects.iter().any(|e| e.rows() != d) {
                            return Err(LqtError::Scenario(format!("effects on {system} must be {d}x{d}")));
                        }
                        Povm::new(
                            effects
                                .iter()
                                .map(|e| LqtEffect::new(system.clone(), e.clone(), cfg))
                                .collect::<Result<_>>()?,
                        )
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            parties.push(Party { system, settings });
        }
        let whole = parties.iter().fold(SystemString::trivial(), |acc, p| compose_systems(&acc, &p.system));
        let components = |product: &[ComponentDoc]| -> Result<Vec<LqtState>> {
            product
                .iter()
                .map(|c| {
                    let s = sys(&c.system)?;
                    let d = qmap(&s, cfg)?.total_dim;
                    LqtState::new(s, c.state.resolve(d)?, cfg)
                })
                .collect()
        };
        let embed = |op: &OperatorDoc| -> Result<SharedState> {
            let systems: Vec<SystemString> = parties.iter().map(|p| p.system.clone()).collect();
            let d: usize = systems.iter().map(|s| qmap(s, cfg).map(|q| q.total_dim)).product::<Result<usize>>()?;
            Ok(SharedState::Joint(embed_joint_state(&op.resolve(d)?, &systems, cfg)?))
        };
        let shared = match &self.state {
            SharedDoc::Shorthand(s) => {
                let name = s
                    .strip_prefix("embed_qt:")
                    .ok_or_else(|| LqtError::Scenario(format!("unknown state shorthand `{s}`")))?;
                embed(&OperatorDoc::Named(name.to_string()))?
            }
            SharedDoc::EmbedQt { embed_qt } => embed(embed_qt)?,
            SharedDoc::Matrix { matrix } => SharedState::Joint(LqtState::new(whole.clone(), matrix.clone(), cfg)?),
            SharedDoc::Product { product } => SharedState::Products(vec![(1.0, components(product)?)]),
            SharedDoc::Mixture { mixture } => SharedState::Products(
                mixture.iter().map(|t| Ok((t.weight, components(&t.product)?))).collect::<Result<_>>()?,
            ),
        };
        Scenario::new(parties, shared, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::ElementaryLabel;

    fn cfg(latent: usize) -> LatentConfig {
        LatentConfig::simplest(&[ElementaryLabel::new("Q", 2).unwrap()], latent).unwrap()
    }

    #[test]
    fn chsh_reaches_tsirelson() {
        let c = cfg(2);
        let s = chsh_scenario(&c).unwrap();
        let table = correlations_lqt(&s, &c).unwrap();
        assert_eq!(table.rows.len(), 16);
        assert!((chsh_value(&table).unwrap() - TSIRELSON).abs() < 1e-12);
        // Independent oracle: the plain two-qubit computation on |Φ⁺⟩.
        let qt = correlations_qt(&phi_plus(), &s.local_effects()).unwrap();
        assert!(table.max_abs_diff(&qt).unwrap() < 1e-12);
        assert!(check_bell_equivalence(&s, &c, 1e-9).unwrap().pass);
    }

    #[test]
    fn product_state_table_factorizes() {
        let c = cfg(2);
        let q = c.system(&["Q"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ra = LqtState::new(q.clone(), random::density(2, &mut rng), &c).unwrap();
        let rb = LqtState::new(q.clone(), random::density(2, &mut rng), &c).unwrap();
        let pa = Party { system: q.clone(), settings: vec![qubit_projective(&q, [0.3, 0.1, 0.9], &c).unwrap()] };
        let pb = Party { system: q.clone(), settings: vec![qubit_projective(&q, [0.0, 1.0, 0.2], &c).unwrap()] };
        let s = Scenario::new(
            vec![pa.clone(), pb.clone()],
            SharedState::Products(vec![(1.0, vec![ra.clone(), rb.clone()])]),
            &c,
        )
        .unwrap();
        let t = correlations_lqt(&s, &c).unwrap();
        let ta = correlations_lqt(&Scenario::new(vec![pa], SharedState::Joint(ra), &c).unwrap(), &c).unwrap();
        let tb = correlations_lqt(&Scenario::new(vec![pb], SharedState::Joint(rb), &c).unwrap(), &c).unwrap();
        for r in &t.rows {
            let expect = ta.get(&r.settings[..1], &r.outcomes[..1]).unwrap()
                * tb.get(&r.settings[1..], &r.outcomes[1..]).unwrap();
            assert!((r.probability - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn to_qt_state_round_trip_and_trace() {
        let c = cfg(2);
        let s = chsh_scenario(&c).unwrap();
        let (rho, _) = to_qt_state(&s, &c).unwrap();
        assert!(rho.approx_eq(&phi_plus(), 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = random_scenario(&c, 3, &mut rng).unwrap();
        let (rho, _) = to_qt_state(&r, &c).unwrap();
        assert!((rho.trace().re - r.sigma().op().trace().re).abs() < 1e-12);
    }

    #[test]
    fn random_scenarios_match_qt() {
        let c = cfg(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 3, 2, 3] {
            let s = random_scenario(&c, n, &mut rng).unwrap();
            let r = check_bell_equivalence(&s, &c, 1e-9).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn qt_embedding_matches() {
        let c = cfg(2);
        let q = c.system(&["Q"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random::density(8, &mut rng);
        let parties: Vec<Party> = (0..3)
            .map(|_| Party { system: q.clone(), settings: vec![angle_povm(&q, rng.random::<f64>(), &c).unwrap()] })
            .collect();
        assert!(check_qt_embedding(&rho, parties, &c, 1e-9).unwrap().pass);
    }

    #[test]
    fn crossed_partition_structure() {
        // Prepared as (Q₁Q₂)(Q₃Q₄), measured as (Q₁)(Q₂Q₃Q₄)… kept to three
        // measured parties of at most two qubits: (Q₁)(Q₂Q₃)(Q₄).
        let c = cfg(2);
        let q = c.system(&["Q"]).unwrap();
        let qq = c.system(&["Q", "Q"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let comp = |rng: &mut ChaCha8Rng| LqtState::new(qq.clone(), random::density(8, rng), &c).unwrap();
        let povm = |s: &SystemString, rng: &mut ChaCha8Rng| {
            let d = qmap(s, &c).unwrap().total_dim;
            Povm::new(random::povm(d, 2, rng).into_iter().map(|e| LqtEffect::new(s.clone(), e, &c).unwrap()).collect())
                .unwrap()
        };
        let parties = vec![
            Party { system: q.clone(), settings: vec![povm(&q, &mut rng), povm(&q, &mut rng)] },
            Party { system: qq.clone(), settings: vec![povm(&qq, &mut rng)] },
            Party { system: q.clone(), settings: vec![povm(&q, &mut rng)] },
        ];
        let term1 = vec![comp(&mut rng), comp(&mut rng)];
        let term2 = vec![comp(&mut rng), comp(&mut rng)];
        let pure = Scenario::new(parties.clone(), SharedState::Products(vec![(1.0, term1.clone())]), &c).unwrap();
        let r = check_scenario_structure(&pure, &c, 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
        let mixed = Scenario::new(parties, SharedState::Products(vec![(0.3, term1), (0.7, term2)]), &c).unwrap();
        let r = check_scenario_structure(&mixed, &c, 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn aligned_partition_reduces_to_equivalence() {
        let c = cfg(2);
        let q = c.system(&["Q"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let st = |rng: &mut ChaCha8Rng| LqtState::new(q.clone(), random::density(2, rng), &c).unwrap();
        let parties = vec![
            Party { system: q.clone(), settings: vec![angle_povm(&q, 0.4, &c).unwrap()] },
            Party { system: q.clone(), settings: vec![angle_povm(&q, 1.1, &c).unwrap()] },
        ];
        let s =
            Scenario::new(parties, SharedState::Products(vec![(1.0, vec![st(&mut rng), st(&mut rng)])]), &c).unwrap();
        assert!(check_scenario_structure(&s, &c, 1e-9).unwrap().pass);
        assert!(check_bell_equivalence(&s, &c, 1e-9).unwrap().pass);
    }

    #[test]
    fn span_examples() {
        let q2 = cfg(2);
        let q1 = cfg(1);
        let two = q2.system(&["Q", "Q"]).unwrap();
        assert_eq!(tomography_span(&two, &q2).unwrap(), SpanReport { span: 16, ambient: 64 });
        assert_eq!(tomography_span(&two, &q1).unwrap(), SpanReport { span: 16, ambient: 16 });
        let three = q2.system(&["Q", "Q", "Q"]).unwrap();
        assert_eq!(tomography_span(&three, &q2).unwrap().deficit(), 4032);
        assert_eq!(tomography_span(&three, &q1).unwrap().deficit(), 0);
        assert!(tomography_span(&q2.system(&["Q"]).unwrap(), &q2).is_err());
    }

    #[test]
    fn witness_examples() {
        let w = tomography_violation_witness(&cfg(2)).unwrap().unwrap();
        assert_eq!(w.product_stat_deviation, 0.0);
        assert!((w.success_prob - 1.0).abs() < 1e-12);
        assert!((w.trace_distance - 1.0).abs() < 1e-12);
        assert!(w.distinguishing_povm.is_pvm());
        assert!(tomography_violation_witness(&cfg(1)).unwrap().is_none());
        let mixed = LatentConfig::new(
            &[ElementaryLabel::new("Q", 2).unwrap()],
            Some(2),
            &crate::theory::LatentStateSpec::Matrix(ComplexMatrix::diag(&[0.8, 0.2])),
        )
        .unwrap();
        let w = tomography_violation_witness(&mixed).unwrap().unwrap();
        assert!(w.product_stat_deviation < 1e-15);
        assert!((w.success_prob - 0.9).abs() < 1e-12);
    }

    #[test]
    fn sampling_stays_below_tsirelson() {
        let r = chsh_sampling(&cfg(2), 200, 7).unwrap();
        assert!(r.within_bound && r.max_chsh > 2.0);
    }

    #[test]
    fn wirings_stay_quantum() {
        let c = cfg(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in [2, 3] {
            let s = random_scenario(&c, n, &mut rng).unwrap();
            // Mixing needs equal outcome counts for party 0's two settings.
            if s.parties()[0].settings[0].len() != s.parties()[0].settings[1].len() {
                continue;
            }
            let r = check_wirings(&s, &c, 0.35, 1e-9).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn scenario_documents() {
        let c = cfg(2);
        let doc: ScenarioDoc = serde_json::from_str(
            r#"{"parties": [{"system": ["Q"], "settings": [{"angle": 0.0}, {"angle": 1.5707963267948966}]},
                            {"system": ["Q"], "settings": [{"angle": 0.7853981633974483}, {"angle": -0.7853981633974483}]}],
                "state": "embed_qt:phi_plus"}"#,
        )
        .unwrap();
        let s = doc.build(&c).unwrap();
        assert!((chsh_value(&correlations_lqt(&s, &c).unwrap()).unwrap() - TSIRELSON).abs() < 1e-12);
        let bad: std::result::Result<ScenarioDoc, _> =
            serde_json::from_str(r#"{"parties": [], "state": "zero", "extra": 1}"#);
        assert!(bad.is_err());
        let unknown: ScenarioDoc =
            serde_json::from_str(r#"{"parties": [{"system": ["Q"], "settings": ["W"]}], "state": "embed_qt:zero"}"#)
                .unwrap();
        assert!(unknown.build(&c).is_err());
        let mismatch: ScenarioDoc = serde_json::from_str(r#"{"parties": [{"system": ["Q"], "settings": ["Z"]}], "state": {"product": [{"system": ["Q", "Q"], "state": "zero"}]}}"#).unwrap();
        assert!(mismatch.build(&c).is_err());
    }
}
