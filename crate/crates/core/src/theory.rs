//! Theory parameters, latent systems as label strings, and the map that
//! assigns each system its concrete factored Hilbert space.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LqtError, Result};
use crate::qmath::{is_density, kron, kron_all, ComplexMatrix, FactorShape, Tolerance, C64};
use crate::strings::{odot, Char, LabelledString, PairKey, Tag};

/// Name reserved for the trivial system.
pub const TRIVIAL: &str = "I";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ElementaryLabel {
    name: String,
    dim: usize,
}

impl ElementaryLabel {
    pub fn new(name: impl Into<String>, dim: usize) -> Result<Self> {
        let name = name.into();
        if (name == TRIVIAL) != (dim == 1) {
            return Err(LqtError::Config(format!(
                "label `{name}` has dimension {dim}; only the trivial label `{TRIVIAL}` has dimension 1"
            )));
        }
        if dim == 0 {
            return Err(LqtError::Config(format!("label `{name}` has dimension 0")));
        }
        Ok(ElementaryLabel { name, dim })
    }

    pub fn trivial() -> Self {
        ElementaryLabel { name: TRIVIAL.to_string(), dim: 1 }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_trivial(&self) -> bool {
        self.name == TRIVIAL
    }
}

/// Unordered pair of label names, used to key latent factors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelPair(String, String);

impl LabelPair {
    pub fn new(a: &str, b: &str) -> Self {
        if a <= b {
            LabelPair(a.to_string(), b.to_string())
        } else {
            LabelPair(b.to_string(), a.to_string())
        }
    }

    fn involves_trivial(&self) -> bool {
        self.0 == TRIVIAL || self.1 == TRIVIAL
    }
}

/// How a latent state is specified in configuration documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LatentStateSpec {
    /// `"pure_basis0"`, `"pure_basis1"`, … or `"maximally_mixed"`.
    Preset(String),
    Matrix(ComplexMatrix),
}

impl LatentStateSpec {
    pub fn pure_basis0() -> Self {
        LatentStateSpec::Preset("pure_basis0".into())
    }

    pub fn resolve(&self, dim: usize) -> Result<ComplexMatrix> {
        let state = match self {
            LatentStateSpec::Preset(name) if name == "maximally_mixed" => {
                ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64)
            }
            LatentStateSpec::Preset(name) => {
                let index: usize = name
                    .strip_prefix("pure_basis")
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| LqtError::Config(format!("unknown latent state preset `{name}`")))?;
                if index >= dim {
                    return Err(LqtError::Config(format!("preset `{name}` needs dimension > {index}, got {dim}")));
                }
                ComplexMatrix::unit(dim, index, index)
            }
            LatentStateSpec::Matrix(m) => m.clone(),
        };
        if state.rows() != dim || state.cols() != dim {
            return Err(LqtError::Config(format!(
                "latent state is {}x{}, latent factor has dim {dim}",
                state.rows(),
                state.cols()
            )));
        }
        let validity = is_density(&state, Tolerance::default());
        if !validity.valid || (state.trace().re - 1.0).abs() > 1e-9 {
            return Err(LqtError::Config(format!(
                "latent state must be a normalized density operator (violation {:.2e})",
                validity.max_violation.max((state.trace().re - 1.0).abs())
            )));
        }
        Ok(state)
    }
}

#[derive(Clone, Debug)]
struct LatentFactor {
    dim: usize,
    state: Arc<ComplexMatrix>,
}

/// The (λ, ξ) parameters: a latent dimension and a normalized latent state
/// for every unordered pair of elementary labels.
#[derive(Clone, Debug)]
pub struct LatentConfig {
    labels: BTreeMap<String, ElementaryLabel>,
    default: Option<LatentFactor>,
    overrides: BTreeMap<LabelPair, LatentFactor>,
}

impl LatentConfig {
    /// Every pair gets `default_dim` and `default_state`, unless overridden.
    pub fn new(
        labels: &[ElementaryLabel],
        default_dim: Option<usize>,
        default_state: &LatentStateSpec,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for label in labels {
            if label.is_trivial() {
                continue;
            }
            if let Some(prev) = map.insert(label.name.clone(), label.clone()) {
                if prev.dim != label.dim {
                    return Err(LqtError::Config(format!(
                        "label `{}` declared with dimensions {} and {}",
                        label.name, prev.dim, label.dim
                    )));
                }
            }
        }
        let default = match default_dim {
            Some(0) => return Err(LqtError::Config("latent dimension must be at least 1".into())),
            Some(d) => Some(LatentFactor { dim: d, state: Arc::new(default_state.resolve(d)?) }),
            None => None,
        };
        Ok(LatentConfig { labels: map, default, overrides: BTreeMap::new() })
    }

    /// Standard quantum theory: every latent factor is one-dimensional.
    pub fn standard_qt(labels: &[ElementaryLabel]) -> Result<Self> {
        Self::new(labels, Some(1), &LatentStateSpec::pure_basis0())
    }

    /// One latent factor of dimension `dim` for every pair, in the pure state |0⟩.
    pub fn simplest(labels: &[ElementaryLabel], dim: usize) -> Result<Self> {
        Self::new(labels, Some(dim), &LatentStateSpec::pure_basis0())
    }

    pub fn with_pair(mut self, a: &str, b: &str, dim: usize, state: &LatentStateSpec) -> Result<Self> {
        for name in [a, b] {
            if name != TRIVIAL && !self.labels.contains_key(name) {
                return Err(LqtError::UnknownLabel(name.to_string()));
            }
        }
        let key = LabelPair::new(a, b);
        if key.involves_trivial() && dim != 1 {
            return Err(LqtError::Config(format!("pairs with `{TRIVIAL}` must have latent dimension 1")));
        }
        if dim == 0 {
            return Err(LqtError::Config("latent dimension must be at least 1".into()));
        }
        let state = Arc::new(state.resolve(dim)?);
        self.overrides.insert(key, LatentFactor { dim, state });
        Ok(self)
    }

    pub fn label(&self, name: &str) -> Result<ElementaryLabel> {
        if name == TRIVIAL {
            return Ok(ElementaryLabel::trivial());
        }
        self.labels.get(name).cloned().ok_or_else(|| LqtError::UnknownLabel(name.to_string()))
    }

    pub fn labels(&self) -> impl Iterator<Item = &ElementaryLabel> {
        self.labels.values()
    }

    /// Builds a canonical system from label names.
    pub fn system(&self, names: &[&str]) -> Result<SystemString> {
        let labels = names.iter().map(|n| self.label(n)).collect::<Result<Vec<_>>>()?;
        Ok(canonicalize(labels))
    }

    fn factor(&self, a: &str, b: &str) -> Result<LatentFactor> {
        let key = LabelPair::new(a, b);
        if key.involves_trivial() {
            return Ok(LatentFactor { dim: 1, state: Arc::new(ComplexMatrix::identity(1)) });
        }
        for name in [a, b] {
            if !self.labels.contains_key(name) {
                return Err(LqtError::UnknownLabel(name.to_string()));
            }
        }
        self.overrides
            .get(&key)
            .or(self.default.as_ref())
            .cloned()
            .ok_or_else(|| LqtError::MissingPair(key.0.clone(), key.1.clone()))
    }

    pub fn latent_dim(&self, a: &str, b: &str) -> Result<usize> {
        Ok(self.factor(a, b)?.dim)
    }

    pub fn latent_state(&self, a: &str, b: &str) -> Result<Arc<ComplexMatrix>> {
        Ok(self.factor(a, b)?.state)
    }

    /// True when every latent state in use is pure.
    pub fn all_states_pure(&self) -> bool {
        self.default.iter().chain(self.overrides.values()).all(|f| {
            let purity = f.state.trace_product(&f.state).re;
            (purity - 1.0).abs() < 1e-9
        })
    }

    /// True when every latent factor is one-dimensional.
    pub fn is_standard_qt(&self) -> bool {
        self.default.as_ref().is_none_or(|f| f.dim == 1) && self.overrides.values().all(|f| f.dim == 1)
    }
}

/// A latent system: a canonical string of non-trivial elementary labels.
/// The empty string is the trivial system.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct SystemString {
    labels: Vec<ElementaryLabel>,
}

impl SystemString {
    pub fn trivial() -> Self {
        SystemString::default()
    }

    pub fn labels(&self) -> &[ElementaryLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_trivial(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> &ElementaryLabel {
        &self.labels[i]
    }

    /// Contiguous substring `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> SystemString {
        SystemString { labels: self.labels[start..end].to_vec() }
    }

    pub fn names(&self) -> Vec<&str> {
        self.labels.iter().map(|l| l.name()).collect()
    }

    /// Labelled-string view of this system with every character tagged `tag`.
    pub fn chars(&self, tag: Tag) -> LabelledString {
        LabelledString::new(self.len(), tag)
    }
}

impl fmt::Display for SystemString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.labels.is_empty() {
            return write!(f, "{TRIVIAL}");
        }
        let names: Vec<&str> = self.names();
        write!(f, "{}", names.join("·"))
    }
}

/// Drops trivial labels; an all-trivial string becomes the trivial system.
pub fn canonicalize(labels: Vec<ElementaryLabel>) -> SystemString {
    SystemString { labels: labels.into_iter().filter(|l| !l.is_trivial()).collect() }
}

/// `a ⊠ b`: canonical concatenation.
pub fn compose_systems(a: &SystemString, b: &SystemString) -> SystemString {
    SystemString { labels: a.labels.iter().chain(&b.labels).cloned().collect() }
}

/// One tensor factor of a concrete space, identified by the characters it belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Wire {
    Latent(PairKey),
    Operational(Char),
}

/// Concrete space of a system: latent factors in ⊙ order, then one operational factor per label.
#[derive(Clone, Debug, PartialEq)]
pub struct QSpace {
    /// Latent factors as 0-based `(i, j)` label positions with `j < i`, in ⊙ order.
    pub latent_pairs: Vec<(usize, usize)>,
    pub latent_shape: FactorShape,
    pub operational_shape: FactorShape,
    pub total_dim: usize,
}

impl QSpace {
    /// Latent factors followed by operational factors.
    pub fn shape(&self) -> FactorShape {
        self.latent_shape.concat(&self.operational_shape)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_shape.dim()
    }

    pub fn operational_dim(&self) -> usize {
        self.operational_shape.dim()
    }
}

/// The concrete space `L_{N⊙N} ⊗ O_N` of a system.
pub fn qmap(s: &SystemString, cfg: &LatentConfig) -> Result<QSpace> {
    let chars = s.chars(Tag(0));
    let pairs: Vec<(usize, usize)> = odot(&chars).pairs().iter().map(|(a, b)| (a.pos - 1, b.pos - 1)).collect();
    let latent_dims =
        pairs.iter().map(|&(i, j)| cfg.latent_dim(s.label(i).name(), s.label(j).name())).collect::<Result<Vec<_>>>()?;
    for l in s.labels() {
        let registered = cfg.label(l.name())?;
        if registered.dim() != l.dim() {
            return Err(LqtError::Config(format!(
                "label `{}` has dimension {} in the configuration",
                l.name(),
                registered.dim()
            )));
        }
    }
    let latent_shape = FactorShape::new(latent_dims)?;
    let operational_shape = FactorShape::new(s.labels().iter().map(|l| l.dim()).collect())?;
    let total_dim = latent_shape.dim() * operational_shape.dim();
    Ok(QSpace { latent_pairs: pairs, latent_shape, operational_shape, total_dim })
}

/// Canonical wire layout of `s` when its characters carry `tag`.
pub fn canonical_wires(s: &SystemString, tag: Tag) -> Vec<Wire> {
    canonical_wires_of(&s.chars(tag))
}

/// Canonical wire layout of a labelled string: ⊙ pairs, then characters.
pub fn canonical_wires_of(chars: &LabelledString) -> Vec<Wire> {
    odot(chars).keys().map(Wire::Latent).chain(chars.chars().iter().map(|&c| Wire::Operational(c))).collect()
}

/// Permutation (destination convention) taking layout `from` to layout `to`.
pub fn layout_permutation(from: &[Wire], to: &[Wire]) -> Result<Vec<usize>> {
    if from.len() != to.len() {
        return Err(LqtError::InvalidPermutation(format!("layouts of {} and {} wires", from.len(), to.len())));
    }
    let slots: BTreeMap<Wire, usize> = to.iter().enumerate().map(|(i, &w)| (w, i)).collect();
    let perm = from
        .iter()
        .map(|w| {
            slots
                .get(w)
                .copied()
                .ok_or_else(|| LqtError::InvalidPermutation(format!("wire {w:?} missing from target layout")))
        })
        .collect::<Result<Vec<_>>>()?;
    crate::qmath::check_permutation(&perm, from.len())?;
    Ok(perm)
}

/// Resolves tagged characters back to the labels of the systems they came from.
#[derive(Clone, Debug, Default)]
pub struct Labelling {
    systems: BTreeMap<Tag, SystemString>,
}

impl Labelling {
    pub fn new() -> Self {
        Labelling::default()
    }

    pub fn with(mut self, tag: Tag, system: &SystemString) -> Self {
        self.systems.insert(tag, system.clone());
        self
    }

    pub fn label(&self, c: Char) -> Result<&ElementaryLabel> {
        self.systems
            .get(&c.tag)
            .and_then(|s| s.labels().get(c.pos.wrapping_sub(1)))
            .ok_or_else(|| LqtError::UnknownLabel(format!("{c:?}")))
    }

    /// Dimension of one wire: a latent factor or an operational factor.
    pub fn wire_dim(&self, wire: Wire, cfg: &LatentConfig) -> Result<usize> {
        match wire {
            Wire::Latent(PairKey(a, b)) => cfg.latent_dim(self.label(a)?.name(), self.label(b)?.name()),
            Wire::Operational(c) => Ok(self.label(c)?.dim()),
        }
    }

    /// Latent state of a latent wire.
    pub fn wire_state(&self, a: Char, b: Char, cfg: &LatentConfig) -> Result<Arc<ComplexMatrix>> {
        cfg.latent_state(self.label(a)?.name(), self.label(b)?.name())
    }

    pub fn shape(&self, wires: &[Wire], cfg: &LatentConfig) -> Result<FactorShape> {
        FactorShape::new(wires.iter().map(|&w| self.wire_dim(w, cfg)).collect::<Result<Vec<_>>>()?)
    }
}

/// `ξ_{N⊙N} ⊗ ρ`: the latent states of every pair tensored with an operational state.
pub fn embed_qt_state(rho: &ComplexMatrix, s: &SystemString, cfg: &LatentConfig) -> Result<ComplexMatrix> {
    let space = qmap(s, cfg)?;
    let d = space.operational_dim();
    if rho.rows() != d || rho.cols() != d {
        return Err(LqtError::ShapeMismatch(format!(
            "operational state is {}x{}, expected dim {d}",
            rho.rows(),
            rho.cols()
        )));
    }
    let latent = space
        .latent_pairs
        .iter()
        .map(|&(i, j)| cfg.latent_state(s.label(i).name(), s.label(j).name()))
        .collect::<Result<Vec<_>>>()?;
    let xi = kron_all(latent.iter().map(|m| m.as_ref()));
    Ok(kron(&xi, rho))
}

/// Convenience: a normalized pure state from amplitudes.
pub fn pure(amplitudes: &[C64]) -> ComplexMatrix {
    ComplexMatrix::projector(amplitudes)
}
