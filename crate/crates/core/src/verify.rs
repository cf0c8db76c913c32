//! Randomized axiom checks. Every law is tested as an equality of realized
//! quantum operations, once per ancilla in the pool, never just on the
//! local operational parts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::qmath::{kron, permutation_operator, random, FactorShape, Operation, OP_TOL};
use crate::theory::{compose_systems, embed_qt_state, qmap, LatentConfig, SystemString};
use crate::transforms::{
    par_compose_with, realize, seq_compose, swap_transformation, LatentTransformation, NoisyPermutation, ParMutation,
};

/// Largest realized composite dimension an ancilla may produce.
pub const DIM_CAP: usize = 256;

/// Deviation a negative control must exceed to count as detected.
pub const CONTROL_THRESHOLD: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub trials: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seed: u64,
    /// Description of the worst trial when the check fails.
    pub witness: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub mutation: ParMutation,
    pub max_deviation: f64,
    /// The mutated theory was caught (deviation above [`CONTROL_THRESHOLD`]).
    pub detected: bool,
}

/// A concrete theory plus everything needed to replay the randomized checks.
#[derive(Clone, Debug)]
pub struct TheoryUnderTest {
    pub cfg: LatentConfig,
    pub ancilla_pool: Vec<SystemString>,
    pub seed: u64,
    pub trials: usize,
    pub tolerance: f64,
    /// Corrupt the parallel-composition rule (negative controls).
    pub mutation: Option<ParMutation>,
    elementary: Vec<SystemString>,
}

impl TheoryUnderTest {
    /// The empty ancilla is always added to the pool.
    pub fn new(cfg: LatentConfig, mut ancilla_pool: Vec<SystemString>, seed: u64) -> Self {
        if !ancilla_pool.iter().any(|e| e.is_trivial()) {
            ancilla_pool.insert(0, SystemString::trivial());
        }
        let elementary = cfg.labels().map(|l| cfg.system(&[l.name()]).expect("registered label")).collect();
        TheoryUnderTest { cfg, ancilla_pool, seed, trials: 100, tolerance: OP_TOL, mutation: None, elementary }
    }

    /// Pool `{ε, one elementary system, one two-label system}`, dropping
    /// members whose own space already exceeds the cap.
    pub fn with_default_pool(cfg: LatentConfig, seed: u64) -> Self {
        let labels: Vec<String> = cfg.labels().map(|l| l.name().to_string()).collect();
        let mut pool = vec![SystemString::trivial()];
        if let Some(first) = labels.first() {
            pool.push(cfg.system(&[first]).expect("registered"));
            let second = labels.get(1).unwrap_or(first);
            let two = cfg.system(&[first, second]).expect("registered");
            if qmap(&two, &cfg).map(|q| q.total_dim <= DIM_CAP / 4).unwrap_or(false) {
                pool.push(two);
            }
        }
        Self::new(cfg, pool, seed)
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_mutation(mut self, mutation: Option<ParMutation>) -> Self {
        self.mutation = mutation;
        self
    }

    fn par(&self, a: &LatentTransformation, b: &LatentTransformation) -> Result<LatentTransformation> {
        par_compose_with(a, b, &self.cfg, self.mutation)
    }

    fn rng(&self, check: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(check);
        rng
    }

    fn dim(&self, s: &SystemString) -> Result<usize> {
        Ok(qmap(s, &self.cfg)?.total_dim)
    }

    fn ancillas_for(&self, x: &LatentTransformation) -> Result<Vec<&SystemString>> {
        let mut out = Vec::new();
        for e in &self.ancilla_pool {
            let fits = e.is_trivial()
                || (self.dim(&compose_systems(x.input(), e))? <= DIM_CAP
                    && self.dim(&compose_systems(x.output(), e))? <= DIM_CAP);
            if fits {
                out.push(e);
            }
        }
        Ok(out)
    }

    /// `realize(x, E)` against the realizations of `x ⊠ I_E` and of
    /// `I_E ⊠ x` conjugated by swaps: the ancilla family must agree with
    /// parallel composition on both sides.
    fn cross_route(&self, x: &LatentTransformation, e: &SystemString, rx: &Operation) -> Result<f64> {
        let cfg = &self.cfg;
        let id_e = LatentTransformation::identity(e, cfg)?;
        let right = realize(&self.par(x, &id_e)?, &SystemString::trivial(), cfg)?;
        let left = seq_compose(
            &swap_transformation(e, x.output(), cfg)?,
            &seq_compose(&self.par(&id_e, x)?, &swap_transformation(x.input(), e, cfg)?)?,
        )?;
        let left = realize(&left, &SystemString::trivial(), cfg)?;
        Ok(rx.deviation(&right, self.seed)?.max(rx.deviation(&left, self.seed)?))
    }

    /// Realize-level distance between two transformations over the pool.
    pub fn distance(&self, x: &LatentTransformation, y: &LatentTransformation) -> Result<f64> {
        let mut worst = 0.0f64;
        for e in self.ancillas_for(x)? {
            let rx = realize(x, e, &self.cfg)?;
            let ry = realize(y, e, &self.cfg)?;
            worst = worst.max(rx.deviation(&ry, self.seed)?);
            if !e.is_trivial() {
                worst = worst.max(self.cross_route(x, e, &rx)?);
                worst = worst.max(self.cross_route(y, e, &ry)?);
            }
        }
        Ok(worst)
    }

    /// ε or one elementary system.
    fn random_system<R: Rng>(&self, rng: &mut R) -> SystemString {
        if self.elementary.is_empty() || rng.random_bool(0.25) {
            SystemString::trivial()
        } else {
            self.elementary[rng.random_range(0..self.elementary.len())].clone()
        }
    }

    /// Random transformation `a → b`: a random CPTNI operational part and a
    /// random routing of latent wires between same-label characters.
    pub fn random_transformation<R: Rng>(
        &self,
        a: &SystemString,
        b: &SystemString,
        rng: &mut R,
    ) -> Result<LatentTransformation> {
        let cfg = &self.cfg;
        let (qa, qb) = (qmap(a, cfg)?.shape(), qmap(b, cfg)?.shape());
        let map = random::cptni_between(&qa, &qb, rng.random_bool(0.5), rng);
        let mut used = vec![false; b.len()];
        let dests: Vec<Option<usize>> = (0..a.len())
            .map(|i| {
                if rng.random_bool(0.5) {
                    return None;
                }
                let o = (0..b.len()).find(|&o| !used[o] && b.label(o) == a.label(i))?;
                used[o] = true;
                Some(o)
            })
            .collect();
        let latent = NoisyPermutation::from_destinations(&dests, b.len())?;
        LatentTransformation::new(a.clone(), b.clone(), Operation::from_kraus(map), latent, cfg)
    }

    fn random_between<R: Rng>(&self, rng: &mut R) -> Result<LatentTransformation> {
        let (a, b) = (self.random_system(rng), self.random_system(rng));
        self.random_transformation(&a, &b, rng)
    }
}

/// Accumulates per-trial deviations into a report.
struct Tally {
    name: &'static str,
    trials: usize,
    worst: f64,
    witness: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally { name, trials: 0, worst: 0.0, witness: None }
    }

    fn record(&mut self, deviation: f64, describe: impl FnOnce() -> String) {
        self.trials += 1;
        if deviation > self.worst || deviation.is_nan() {
            self.worst = if deviation.is_nan() { f64::INFINITY } else { deviation };
            self.witness = Some(format!("trial {}: {}", self.trials - 1, describe()));
        }
    }

    fn finish(self, tut: &TheoryUnderTest) -> CheckReport {
        let pass = self.worst < tut.tolerance;
        CheckReport {
            check_name: self.name.to_string(),
            trials: self.trials,
            max_deviation: self.worst,
            tolerance: tut.tolerance,
            pass,
            seed: tut.seed,
            witness: if pass { None } else { self.witness },
        }
    }
}

fn sig(t: &LatentTransformation) -> String {
    format!("{}→{}", t.input(), t.output())
}

/// `(b∘a) ⊠ (d∘c) = (b⊠d) ∘ (a⊠c)`.
pub fn check_interchange(tut: &TheoryUnderTest) -> Result<CheckReport> {
    let mut rng = tut.rng(1);
    let mut tally = Tally::new("interchange");
    for _ in 0..tut.trials {
        let s: Vec<SystemString> = (0..6).map(|_| tut.random_system(&mut rng)).collect();
        let a = tut.random_transformation(&s[0], &s[1], &mut rng)?;
        let b = tut.random_transformation(&s[1], &s[2], &mut rng)?;
        let c = tut.random_transformation(&s[3], &s[4], &mut rng)?;
        let d = tut.random_transformation(&s[4], &s[5], &mut rng)?;
        let lhs = tut.par(&seq_compose(&b, &a)?, &seq_compose(&d, &c)?)?;
        let rhs = seq_compose(&tut.par(&b, &d)?, &tut.par(&a, &c)?)?;
        tally.record(tut.distance(&lhs, &rhs)?, || {
            format!("a: {}, b: {}, c: {}, d: {}", sig(&a), sig(&b), sig(&c), sig(&d))
        });
    }
    Ok(tally.finish(tut))
}

/// `(a⊠b)⊠c = a⊠(b⊠c)`, alternating with the restricted form
/// `(a⊠I_B)⊠I_C = a⊠I_{B⊠C}`.
pub fn check_assoc_parallel(tut: &TheoryUnderTest) -> Result<CheckReport> {
    let mut rng = tut.rng(2);
    let mut tally = Tally::new("assoc_parallel");
    let cfg = &tut.cfg;
    for trial in 0..tut.trials {
        let a = tut.random_between(&mut rng)?;
        let (lhs, rhs) = if trial % 2 == 0 {
            let b = tut.random_between(&mut rng)?;
            let c = tut.random_between(&mut rng)?;
            (tut.par(&tut.par(&a, &b)?, &c)?, tut.par(&a, &tut.par(&b, &c)?)?)
        } else {
            let sb = tut.random_system(&mut rng);
            let sc = tut.random_system(&mut rng);
            let ib = LatentTransformation::identity(&sb, cfg)?;
            let ic = LatentTransformation::identity(&sc, cfg)?;
            let ibc = LatentTransformation::identity(&compose_systems(&sb, &sc), cfg)?;
            (tut.par(&tut.par(&a, &ib)?, &ic)?, tut.par(&a, &ibc)?)
        };
        tally.record(tut.distance(&lhs, &rhs)?, || format!("a: {}, composite {}", sig(&a), sig(&lhs)));
    }
    Ok(tally.finish(tut))
}

/// `(c∘b)∘a = c∘(b∘a)`.
pub fn check_assoc_sequential(tut: &TheoryUnderTest) -> Result<CheckReport> {
    let mut rng = tut.rng(3);
    let mut tally = Tally::new("assoc_sequential");
    for _ in 0..tut.trials {
        let s: Vec<SystemString> = (0..4).map(|_| tut.random_system(&mut rng)).collect();
        let a = tut.random_transformation(&s[0], &s[1], &mut rng)?;
        let b = tut.random_transformation(&s[1], &s[2], &mut rng)?;
        let c = tut.random_transformation(&s[2], &s[3], &mut rng)?;
        let lhs = seq_compose(&seq_compose(&c, &b)?, &a)?;
        let rhs = seq_compose(&c, &seq_compose(&b, &a)?)?;
        tally.record(tut.distance(&lhs, &rhs)?, || format!("a: {}, b: {}, c: {}", sig(&a), sig(&b), sig(&c)));
    }
    Ok(tally.finish(tut))
}

/// `I∘T = T = T∘I` and `I_A ⊠ I_B = I_{A⊠B}`.
pub fn check_identity_laws(tut: &TheoryUnderTest) -> Result<CheckReport> {
    let mut rng = tut.rng(4);
    let mut tally = Tally::new("identity_laws");
    let cfg = &tut.cfg;
    for _ in 0..tut.trials {
        let t = tut.random_between(&mut rng)?;
        let id_in = LatentTransformation::identity(t.input(), cfg)?;
        let id_out = LatentTransformation::identity(t.output(), cfg)?;
        let mut dev = tut.distance(&seq_compose(&id_out, &t)?, &t)?;
        dev = dev.max(tut.distance(&seq_compose(&t, &id_in)?, &t)?);
        let (sa, sb) = (tut.random_system(&mut rng), tut.random_system(&mut rng));
        let pair = tut.par(&LatentTransformation::identity(&sa, cfg)?, &LatentTransformation::identity(&sb, cfg)?)?;
        dev = dev.max(tut.distance(&pair, &LatentTransformation::identity(&compose_systems(&sa, &sb), cfg)?)?);
        tally.record(dev, || format!("t: {}, identities on {sa} and {sb}", sig(&t)));
    }
    Ok(tally.finish(tut))
}

/// `T ⊠ I_I = T = I_I ⊠ T`.
pub fn check_unit_laws(tut: &TheoryUnderTest) -> Result<CheckReport> {
    let mut rng = tut.rng(5);
    let mut tally = Tally::new("unit_laws");
    let unit = LatentTransformation::identity(&SystemString::trivial(), &tut.cfg)?;
    for _ in 0..tut.trials {
        let t = tut.random_between(&mut rng)?;
        let dev = tut.distance(&tut.par(&t, &unit)?, &t)?.max(tut.distance(&tut.par(&unit, &t)?, &t)?);
        tally.record(dev, || format!("t: {}", sig(&t)));
    }
    Ok(tally.finish(tut))
}

/// `(b⊠a) ∘ Swap_{A,B} = Swap_{A′,B′} ∘ (a⊠b)`.
pub fn check_swap_naturality(tut: &TheoryUnderTest) -> Result<CheckReport> {
    let mut rng = tut.rng(6);
    let mut tally = Tally::new("swap_naturality");
    let cfg = &tut.cfg;
    for _ in 0..tut.trials {
        let a = tut.random_between(&mut rng)?;
        let b = tut.random_between(&mut rng)?;
        let lhs = seq_compose(&tut.par(&b, &a)?, &swap_transformation(a.input(), b.input(), cfg)?)?;
        let rhs = seq_compose(&swap_transformation(a.output(), b.output(), cfg)?, &tut.par(&a, &b)?)?;
        tally.record(tut.distance(&lhs, &rhs)?, || format!("a: {}, b: {}", sig(&a), sig(&b)));
    }
    Ok(tally.finish(tut))
}

/// `Swap_{A,B⊠C} = (I_B ⊠ Swap_{A,C}) ∘ (Swap_{A,B} ⊠ I_C)`, and the mirror
/// form for `Swap_{A⊠B,C}`.
pub fn check_swap_hexagon(tut: &TheoryUnderTest) -> Result<CheckReport> {
    let mut rng = tut.rng(7);
    let mut tally = Tally::new("swap_hexagon");
    let cfg = &tut.cfg;
    for _ in 0..tut.trials {
        let (a, b, c) = (tut.random_system(&mut rng), tut.random_system(&mut rng), tut.random_system(&mut rng));
        let id = |s: &SystemString| LatentTransformation::identity(s, cfg);
        let direct = swap_transformation(&a, &compose_systems(&b, &c), cfg)?;
        let stepwise = seq_compose(
            &tut.par(&id(&b)?, &swap_transformation(&a, &c, cfg)?)?,
            &tut.par(&swap_transformation(&a, &b, cfg)?, &id(&c)?)?,
        )?;
        let mut dev = tut.distance(&direct, &stepwise)?;
        let direct = swap_transformation(&compose_systems(&a, &b), &c, cfg)?;
        let stepwise = seq_compose(
            &tut.par(&swap_transformation(&a, &c, cfg)?, &id(&b)?)?,
            &tut.par(&id(&a)?, &swap_transformation(&b, &c, cfg)?)?,
        )?;
        dev = dev.max(tut.distance(&direct, &stepwise)?);
        tally.record(dev, || format!("systems {a}, {b}, {c}"));
    }
    Ok(tally.finish(tut))
}

/// `Swap_{B,A} ∘ Swap_{A,B} = I`, plus a cross-check of the swap on two
/// elementary systems against the factor-permutation operator.
pub fn check_swap_involution(tut: &TheoryUnderTest) -> Result<CheckReport> {
    let mut rng = tut.rng(8);
    let mut tally = Tally::new("swap_involution");
    let cfg = &tut.cfg;
    for _ in 0..tut.trials {
        let (a, b) = (tut.random_system(&mut rng), tut.random_system(&mut rng));
        let twice = seq_compose(&swap_transformation(&b, &a, cfg)?, &swap_transformation(&a, &b, cfg)?)?;
        let mut dev = tut.distance(&twice, &LatentTransformation::identity(&compose_systems(&a, &b), cfg)?)?;
        if a.len() == 1 && b.len() == 1 {
            dev = dev.max(swap_oracle_deviation(&a, &b, cfg, &mut rng)?);
        }
        tally.record(dev, || format!("systems {a}, {b}"));
    }
    Ok(tally.finish(tut))
}

/// Swapping `ξ ⊗ ρ_a ⊗ ρ_b` must give `ξ ⊗ ρ_b ⊗ ρ_a`, computed independently
/// with the operator that exchanges the two operational factors.
fn swap_oracle_deviation<R: Rng>(a: &SystemString, b: &SystemString, cfg: &LatentConfig, rng: &mut R) -> Result<f64> {
    let (da, db) = (a.label(0).dim(), b.label(0).dim());
    let (ra, rb) = (random::density(da, rng), random::density(db, rng));
    let ab = compose_systems(a, b);
    let input = embed_qt_state(&kron(&ra, &rb), &ab, cfg)?;
    let got = realize(&swap_transformation(a, b, cfg)?, &SystemString::trivial(), cfg)?.apply(&input)?;
    let dl = cfg.latent_dim(b.label(0).name(), a.label(0).name())?;
    let p = permutation_operator(&[0, 2, 1], &FactorShape::new(vec![dl, da, db])?)?;
    let oracle = &(&p * &input) * &p.adjoint();
    let direct = embed_qt_state(&kron(&rb, &ra), &compose_systems(b, a), cfg)?;
    Ok(got.max_abs_diff(&oracle).max(got.max_abs_diff(&direct)))
}

/// Sliding: `(a ⊠ I_{D′}) ∘ (I_A ⊠ d) = a ⊠ d = (I_{A′} ⊠ d) ∘ (a ⊠ I_D)`.
pub fn check_bifunctoriality(tut: &TheoryUnderTest) -> Result<CheckReport> {
    let mut rng = tut.rng(9);
    let mut tally = Tally::new("bifunctoriality");
    let cfg = &tut.cfg;
    for _ in 0..tut.trials {
        let a = tut.random_between(&mut rng)?;
        let d = tut.random_between(&mut rng)?;
        let id = |s: &SystemString| LatentTransformation::identity(s, cfg);
        let both = tut.par(&a, &d)?;
        let first_d = seq_compose(&tut.par(&a, &id(d.output())?)?, &tut.par(&id(a.input())?, &d)?)?;
        let first_a = seq_compose(&tut.par(&id(a.output())?, &d)?, &tut.par(&a, &id(d.input())?)?)?;
        let dev = tut.distance(&first_d, &both)?.max(tut.distance(&first_a, &both)?);
        tally.record(dev, || format!("a: {}, d: {}", sig(&a), sig(&d)));
    }
    Ok(tally.finish(tut))
}

/// All nine checks, in a fixed order.
pub fn run_suite(tut: &TheoryUnderTest) -> Result<Vec<CheckReport>> {
    let checks: [fn(&TheoryUnderTest) -> Result<CheckReport>; 9] = [
        check_interchange,
        check_assoc_parallel,
        check_assoc_sequential,
        check_identity_laws,
        check_unit_laws,
        check_swap_naturality,
        check_swap_hexagon,
        check_swap_involution,
        check_bifunctoriality,
    ];
    checks.iter().map(|check| check(tut)).collect()
}

/// Runs the suite once per rule mutation with `trials` trials each; every
/// mutation must be detected for the suite itself to be trusted.
pub fn run_negative_controls(tut: &TheoryUnderTest, trials: usize) -> Result<Vec<ControlReport>> {
    [ParMutation::OmitReset, ParMutation::OneSided, ParMutation::WrongFreshState]
        .into_iter()
        .map(|m| {
            let mutated = tut.clone().with_mutation(Some(m)).with_trials(trials);
            let worst = run_suite(&mutated)?.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
            Ok(ControlReport { mutation: m, max_deviation: worst, detected: worst > CONTROL_THRESHOLD })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::ElementaryLabel;

    fn qubit_labels() -> Vec<ElementaryLabel> {
        vec![ElementaryLabel::new("Q", 2).unwrap()]
    }

    fn simplest(seed: u64, trials: usize) -> TheoryUnderTest {
        let cfg = LatentConfig::simplest(&qubit_labels(), 2).unwrap();
        let q = cfg.system(&["Q"]).unwrap();
        TheoryUnderTest::new(cfg, vec![q], seed).with_trials(trials)
    }

    #[test]
    fn pool_always_contains_trivial() {
        let tut = simplest(0, 1);
        assert!(tut.ancilla_pool[0].is_trivial());
        assert_eq!(tut.ancilla_pool.len(), 2);
        let d = TheoryUnderTest::with_default_pool(LatentConfig::simplest(&qubit_labels(), 2).unwrap(), 0);
        assert_eq!(d.ancilla_pool.len(), 3);
    }

    #[test]
    fn qt_degenerate_suite_is_exact() {
        let cfg = LatentConfig::standard_qt(&qubit_labels()).unwrap();
        let q = cfg.system(&["Q"]).unwrap();
        let tut = TheoryUnderTest::new(cfg, vec![q], 3).with_trials(8);
        for r in run_suite(&tut).unwrap() {
            assert!(r.pass && r.max_deviation < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn simplest_suite_passes() {
        for r in run_suite(&simplest(1, 8)).unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn mixed_dimension_suite_passes() {
        let labels = vec![ElementaryLabel::new("Q", 2).unwrap(), ElementaryLabel::new("T", 3).unwrap()];
        let cfg = LatentConfig::simplest(&labels, 2)
            .unwrap()
            .with_pair("Q", "T", 3, &crate::theory::LatentStateSpec::Preset("pure_basis2".into()))
            .unwrap()
            .with_pair("T", "T", 1, &crate::theory::LatentStateSpec::pure_basis0())
            .unwrap();
        let q = cfg.system(&["Q"]).unwrap();
        let tut = TheoryUnderTest::new(cfg, vec![q], 4).with_trials(4);
        for r in run_suite(&tut).unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn negative_controls_are_detected() {
        for c in run_negative_controls(&simplest(2, 100), 6).unwrap() {
            assert!(c.detected, "{c:?}");
        }
    }

    #[test]
    fn same_seed_same_reports() {
        let a = run_suite(&simplest(11, 3)).unwrap();
        let b = run_suite(&simplest(11, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_transformations_are_valid() {
        let tut = simplest(0, 1);
        let mut rng = tut.rng(99);
        let q = tut.cfg.system(&["Q", "Q"]).unwrap();
        for _ in 0..20 {
            let t = tut.random_transformation(&q, &q, &mut rng).unwrap();
            let np = t.latent_part();
            assert!(NoisyPermutation::new(np.k(), np.k_prime(), np.perm().to_vec()).is_ok());
        }
    }
}
