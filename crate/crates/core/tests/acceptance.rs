//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
//! Reference values come from plain linear algebra written here. The exact
//! QT-degeneration check compares against plain tensor-product channels on
//! the same numeric kernel (no latent wiring), since exact equality is only
//! meaningful at a fixed summation order; naive Kraus sums are checked too.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};
use std::time::{Duration, Instant};

use latentq::bell::{self, Party, Scenario, SharedState};
use latentq::qmath::{kron, kron_all, random, ComplexMatrix, FactorShape, Operation, C64, ZERO};
use latentq::states_effects::{compose_effects, compose_povms, compose_states, pair, LqtEffect, LqtState, Povm};
use latentq::theory::{qmap, ElementaryLabel, LatentConfig, SystemString};
use latentq::transforms::{par_compose, realize, seq_compose, LatentTransformation, NoisyPermutation};
use latentq::verify::{run_negative_controls, run_suite, TheoryUnderTest, CONTROL_THRESHOLD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn qubits(latent: usize) -> LatentConfig {
    LatentConfig::simplest(&[ElementaryLabel::new("Q", 2).unwrap()], latent).unwrap()
}

fn within(elapsed: Duration, budget: Duration, detail: String) -> Outcome {
    if elapsed <= budget {
        Ok(detail)
    } else {
        Err(format!("{detail}; runtime {elapsed:.2?} over budget {budget:?}"))
    }
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn binom2(n: u32) -> u32 {
    n * n.saturating_sub(1) / 2
}

fn dimension_law() -> Outcome {
    let cfg = qubits(2);
    let start = Instant::now();
    let dims: Vec<usize> =
        (1..=4).map(|n| qmap(&cfg.system(&vec!["Q"; n]).unwrap(), &cfg).unwrap().total_dim).collect();
    let elapsed = start.elapsed();
    let expect: Vec<usize> = (1..=4u32).map(|n| 2usize.pow(binom2(n)) * 2usize.pow(n)).collect();
    ensure(dims == expect && dims == [2, 8, 64, 1024], format!("dims {dims:?}, expected {expect:?}"))?;
    within(elapsed, Duration::from_millis(1), format!("dims {dims:?} in {elapsed:.2?}"))
}

fn axiom_suite() -> Outcome {
    let cfg = qubits(2);
    let q = cfg.system(&["Q"]).unwrap();
    let tut = TheoryUnderTest::new(cfg, vec![SystemString::trivial(), q], 2024).with_trials(100);
    let start = Instant::now();
    let reports = run_suite(&tut).map_err(|e| e.to_string())?;
    let controls = run_negative_controls(&tut, 10).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let worst = reports.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
    let failed: Vec<&str> =
        reports.iter().filter(|r| !r.pass || r.trials != 100).map(|r| r.check_name.as_str()).collect();
    let ctl: Vec<String> = controls.iter().map(|c| format!("{:?} {:.2}", c.mutation, c.max_deviation)).collect();
    let detail = format!("{} checks x 100 trials, max dev {worst:.2e}; controls [{}]", reports.len(), ctl.join(", "));
    ensure(reports.len() == 9 && failed.is_empty() && worst < 1e-9, format!("{detail}; failing {failed:?}"))?;
    ensure(
        controls.len() == 3 && controls.iter().all(|c| c.detected && c.max_deviation > CONTROL_THRESHOLD),
        detail.clone(),
    )?;
    within(elapsed, Duration::from_secs(60), format!("{detail}, {elapsed:.1?}"))
}

fn pauli_obs(theta: f64) -> ComplexMatrix {
    // cos θ Z + sin θ X
    let (c, s) = (theta.cos(), theta.sin());
    ComplexMatrix::from_real_rows(&[&[c, s], &[s, -c]])
}

/// Plain two-qubit CHSH on |Φ⁺⟩ with ±1 observables.
fn chsh_oracle(a: [f64; 2], b: [f64; 2]) -> f64 {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let phi = ComplexMatrix::projector(&[h, ZERO, ZERO, h]);
    let e = |x: f64, y: f64| phi.trace_product(&kron(&pauli_obs(x), &pauli_obs(y))).re;
    e(a[0], b[0]) + e(a[0], b[1]) + e(a[1], b[0]) - e(a[1], b[1])
}

fn random_qq_povm(system: &SystemString, cfg: &LatentConfig, rng: &mut ChaCha8Rng) -> Povm {
    let d = qmap(system, cfg).unwrap().total_dim;
    let k = rng.random_range(2..=3);
    Povm::new(random::povm(d, k, rng).into_iter().map(|e| LqtEffect::new(system.clone(), e, cfg).unwrap()).collect())
        .unwrap()
}

fn bell_equivalence() -> Outcome {
    let cfg = qubits(2);
    let start = Instant::now();
    let err = |e: latentq::LqtError| e.to_string();

    // (a) CHSH at the Tsirelson angles.
    let s = bell::chsh_scenario(&cfg).map_err(err)?;
    let lqt = bell::correlations_lqt(&s, &cfg).map_err(err)?;
    let chsh = bell::chsh_value(&lqt).map_err(err)?;
    let oracle = chsh_oracle([0.0, FRAC_PI_2], [FRAC_PI_4, -FRAC_PI_4]);
    let a = bell::check_bell_equivalence(&s, &cfg, 1e-9).map_err(err)?;
    ensure(
        (chsh - 2.0 * SQRT_2).abs() < 1e-6 && (oracle - 2.0 * SQRT_2).abs() < 1e-12 && a.pass && lqt.rows.len() == 16,
        format!("CHSH {chsh}, oracle {oracle}, dev {:.1e}", a.max_deviation),
    )?;

    // (b) random scenarios.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst_b = 0.0f64;
    for i in 0..20 {
        let s = bell::random_scenario(&cfg, 2 + i % 2, &mut rng).map_err(err)?;
        worst_b = worst_b.max(bell::check_bell_equivalence(&s, &cfg, 1e-9).map_err(err)?.max_deviation);
    }
    ensure(worst_b < 1e-9, format!("random scenarios max dev {worst_b:.1e}"))?;

    // (c) preparation (Q₁Q₂)(Q₃Q₄), measurement (Q₁)(Q₂Q₃)(Q₄), and a mixture.
    let q = cfg.system(&["Q"]).unwrap();
    let qq = cfg.system(&["Q", "Q"]).unwrap();
    let comp = |rng: &mut ChaCha8Rng| LqtState::new(qq.clone(), random::density(8, rng), &cfg).unwrap();
    let parties = vec![
        Party {
            system: q.clone(),
            settings: vec![random_qq_povm(&q, &cfg, &mut rng), random_qq_povm(&q, &cfg, &mut rng)],
        },
        Party { system: qq.clone(), settings: vec![random_qq_povm(&qq, &cfg, &mut rng)] },
        Party { system: q.clone(), settings: vec![random_qq_povm(&q, &cfg, &mut rng)] },
    ];
    let t1 = vec![comp(&mut rng), comp(&mut rng)];
    let t2 = vec![comp(&mut rng), comp(&mut rng)];
    let mut worst_c = 0.0f64;
    for shared in [vec![(1.0, t1.clone())], vec![(0.25, t1), (0.75, t2)]] {
        let s = Scenario::new(parties.clone(), SharedState::Products(shared), &cfg).map_err(err)?;
        worst_c = worst_c.max(bell::check_scenario_structure(&s, &cfg, 1e-9).map_err(err)?.max_deviation);
    }
    ensure(worst_c < 1e-9, format!("crossed partition max dev {worst_c:.1e}"))?;
    let elapsed = start.elapsed();
    within(
        elapsed,
        Duration::from_secs(30),
        format!("CHSH {chsh:.12} (oracle {oracle:.12}); 20 random max dev {worst_b:.1e}; crossed+mixture {worst_c:.1e}; {elapsed:.1?}"),
    )
}

fn local_tomography() -> Outcome {
    let start = Instant::now();
    let err = |e: latentq::LqtError| e.to_string();
    let (l2, l1) = (qubits(2), qubits(1));
    let s2 = bell::tomography_span(&l2.system(&["Q", "Q"]).unwrap(), &l2).map_err(err)?;
    let s1 = bell::tomography_span(&l1.system(&["Q", "Q"]).unwrap(), &l1).map_err(err)?;
    let w = bell::tomography_violation_witness(&l2).map_err(err)?.ok_or("no witness for latent dim 2")?;
    let none = bell::tomography_violation_witness(&l1).map_err(err)?;
    let elapsed = start.elapsed();
    let detail = format!(
        "deficit {} ({}/{}) and {} ({}/{}); witness product dev {:.1e}, success {}; {elapsed:.1?}",
        s2.deficit(),
        s2.span,
        s2.ambient,
        s1.deficit(),
        s1.span,
        s1.ambient,
        w.product_stat_deviation,
        w.success_prob
    );
    ensure(
        s2.deficit() == 48
            && s1.deficit() == 0
            && w.product_stat_deviation < 1e-12
            && w.success_prob >= 1.0 - 1e-9
            && w.distinguishing_povm.is_pvm()
            && none.is_none(),
        detail.clone(),
    )?;
    within(elapsed, Duration::from_secs(10), detail)
}

fn random_pvm(system: &SystemString, cfg: &LatentConfig, rng: &mut ChaCha8Rng) -> Povm {
    let d = qmap(system, cfg).unwrap().total_dim;
    let u = random::unitary(d, rng);
    let k = rng.random_range(2..=d);
    // Outcome o gets columns o, o + k, o + 2k, ...
    let effects = (0..k)
        .map(|o| {
            let mut p = ComplexMatrix::zeros(d, d);
            for c in (o..d).step_by(k) {
                let col: Vec<C64> = (0..d).map(|r| u.get(r, c)).collect();
                p = &p + &ComplexMatrix::projector(&col);
            }
            LqtEffect::new(system.clone(), p, cfg).unwrap()
        })
        .collect();
    Povm::new(effects).unwrap()
}

fn purity_and_pvm_closure() -> Outcome {
    let labels = [ElementaryLabel::new("Q", 2).unwrap(), ElementaryLabel::new("T", 3).unwrap()];
    let cfg = LatentConfig::simplest(&labels, 2).unwrap();
    let systems: Vec<SystemString> =
        [vec!["Q"], vec!["T"], vec!["Q", "Q"]].iter().map(|n| cfg.system(n).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut ranks = Vec::new();
    for _ in 0..50 {
        let n = rng.random_range(2..=3);
        let mut parts = Vec::new();
        let mut labels = 0;
        while parts.len() < n {
            let s = &systems[rng.random_range(0..systems.len())];
            if labels + s.len() > 3 {
                if parts.len() >= 2 {
                    break;
                }
                continue;
            }
            labels += s.len();
            let d = qmap(s, &cfg).unwrap().total_dim;
            let psi = random::pure_state(d, &mut rng);
            parts.push(LqtState::new(s.clone(), ComplexMatrix::projector(&psi), &cfg).unwrap());
        }
        let c = compose_states(&parts, &cfg).map_err(|e| e.to_string())?;
        ranks.push(c.op().rank_hermitian(1e-9));
    }
    let mut pvm_ok = 0;
    let mut worst_idem = 0.0f64;
    for _ in 0..50 {
        let a = random_pvm(&systems[rng.random_range(0..2)], &cfg, &mut rng);
        let b = random_pvm(&systems[rng.random_range(0..3)], &cfg, &mut rng);
        let c = compose_povms(&[a, b], &cfg).map_err(|e| e.to_string())?;
        for e in c.outcomes() {
            worst_idem = worst_idem.max((e.op() * e.op()).max_abs_diff(e.op()));
        }
        pvm_ok += usize::from(c.is_pvm());
    }
    let rank_one = ranks.iter().filter(|&&r| r == 1).count();
    ensure(
        rank_one == 50 && pvm_ok == 50 && worst_idem < 1e-9,
        format!("{rank_one}/50 composites rank one; {pvm_ok}/50 composed PVMs flagged, max |P²−P| {worst_idem:.1e}"),
    )
}

/// Plain Kraus application, kept independent of the library's apply.
fn kraus_apply(ops: &[ComplexMatrix], rho: &ComplexMatrix) -> ComplexMatrix {
    let dout = ops[0].rows();
    let mut out = ComplexMatrix::zeros(dout, dout);
    for k in ops {
        out = &out + &(&(k * rho) * &k.adjoint());
    }
    out
}

fn qt_degeneration() -> Outcome {
    let labels = [ElementaryLabel::new("Q", 2).unwrap(), ElementaryLabel::new("T", 3).unwrap()];
    let cfg = LatentConfig::standard_qt(&labels).unwrap();
    let sys = |n: &[&str]| cfg.system(n).unwrap();
    let corpus = [sys(&["Q"]), sys(&["T"]), sys(&["Q", "T"]), sys(&["Q", "Q"])];
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut note = |name: &'static str, dev: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some((_, w)) => *w = w.max(dev),
        None => worst.push((name, dev)),
    };
    let dim = |s: &SystemString| qmap(s, &cfg).unwrap().total_dim;
    // Transformations are also checked against naive Σ K ρ K† arithmetic;
    // that differs from any factor-wise evaluation by rounding only.
    let mut naive = 0.0f64;

    for _ in 0..20 {
        let (a, b) = (&corpus[rng.random_range(0..4)], &corpus[rng.random_range(0..4)]);
        let (ra, rb) = (random::density(dim(a), &mut rng), random::density(dim(b), &mut rng));
        let sa = LqtState::new(a.clone(), ra.clone(), &cfg).unwrap();
        let sb = LqtState::new(b.clone(), rb.clone(), &cfg).unwrap();
        let joint = compose_states(&[sa, sb], &cfg).unwrap();
        note("states", joint.op().max_abs_diff(&kron(&ra, &rb)));

        let (pa, pb) = (random::povm(dim(a), 2, &mut rng), random::povm(dim(b), 3, &mut rng));
        let ea: Vec<LqtEffect> = pa.iter().map(|e| LqtEffect::new(a.clone(), e.clone(), &cfg).unwrap()).collect();
        let eb: Vec<LqtEffect> = pb.iter().map(|e| LqtEffect::new(b.clone(), e.clone(), &cfg).unwrap()).collect();
        let e = compose_effects(&[ea[0].clone(), eb[1].clone()], &cfg).unwrap();
        note("effects", e.op().max_abs_diff(&kron(&pa[0], &pb[1])));
        let povm = compose_povms(&[Povm::new(ea).unwrap(), Povm::new(eb).unwrap()], &cfg).unwrap();
        for (i, out) in povm.outcomes().iter().enumerate() {
            note("povms", out.op().max_abs_diff(&kron(&pa[i / 3], &pb[i % 3])));
        }
        let rho = kron(&ra, &rb);
        let born = (0..rho.rows())
            .flat_map(|i| (0..rho.rows()).map(move |j| (i, j)))
            .fold(ZERO, |acc, (i, j)| acc + rho.get(i, j) * e.op().get(j, i))
            .re;
        note("born rule", (pair(&e, &joint).unwrap() - born).abs());

        // Transformations: parallel, sequential, and with a spectator.
        let shape = |s: &SystemString| FactorShape::new(vec![dim(s)]).unwrap();
        let ka = random::cptni(&shape(a), true, &mut rng);
        let kb = random::cptni(&shape(b), false, &mut rng);
        let kc = random::cptni(&shape(a), false, &mut rng);
        let ta = LatentTransformation::from_kraus(
            a.clone(),
            a.clone(),
            ka.kraus_ops().to_vec(),
            NoisyPermutation::identity(a.len()),
            &cfg,
        )
        .unwrap();
        let tb = LatentTransformation::from_kraus(
            b.clone(),
            b.clone(),
            kb.kraus_ops().to_vec(),
            NoisyPermutation::identity(b.len()),
            &cfg,
        )
        .unwrap();
        let tc = LatentTransformation::from_kraus(
            a.clone(),
            a.clone(),
            kc.kraus_ops().to_vec(),
            NoisyPermutation::identity(a.len()),
            &cfg,
        )
        .unwrap();
        let (oa, ob, oc) =
            (Operation::from_kraus(ka.clone()), Operation::from_kraus(kb.clone()), Operation::from_kraus(kc.clone()));
        let entangled = random::density(dim(a) * dim(b), &mut rng);
        let tensor_ops: Vec<ComplexMatrix> =
            ka.kraus_ops().iter().flat_map(|x| kb.kraus_ops().iter().map(move |y| kron(x, y))).collect();

        let par = realize(&par_compose(&ta, &tb, &cfg).unwrap(), &SystemString::trivial(), &cfg).unwrap();
        let qt_par = Operation::tensor(&oa, &ob);
        for input in [&rho, &entangled] {
            let out = par.apply(input).unwrap();
            note("parallel transformations", out.max_abs_diff(&qt_par.apply(input).unwrap()));
            naive = naive.max(out.max_abs_diff(&kraus_apply(&tensor_ops, input)));
        }
        let seq = realize(&seq_compose(&tc, &ta).unwrap(), &SystemString::trivial(), &cfg).unwrap();
        let out = seq.apply(&ra).unwrap();
        note("sequential transformations", out.max_abs_diff(&oa.then(&oc).unwrap().apply(&ra).unwrap()));
        naive = naive.max(out.max_abs_diff(&kraus_apply(kc.kraus_ops(), &kraus_apply(ka.kraus_ops(), &ra))));
        let spectator = realize(&ta, b, &cfg).unwrap();
        let out = spectator.apply(&rho).unwrap();
        note(
            "spectator realization",
            out.max_abs_diff(&Operation::tensor(&oa, &Operation::identity(shape(b))).apply(&rho).unwrap()),
        );
        naive = naive.max(out.max_abs_diff(&kron(&kraus_apply(ka.kraus_ops(), &ra), &rb)));
    }

    // Bell tables against the tensor-product oracle.
    for i in 0..6 {
        let s = bell::random_scenario(&cfg, 2 + i % 2, &mut rng).unwrap();
        let lqt = bell::correlations_lqt(&s, &cfg).unwrap();
        let mut dev = 0.0f64;
        for r in &lqt.rows {
            let pi = kron_all(
                s.parties()
                    .iter()
                    .zip(r.settings.iter().zip(&r.outcomes))
                    .map(|(p, (&x, &o))| p.settings[x].outcomes()[o].op()),
            );
            dev = dev.max((s.sigma().op().trace_product(&pi).re - r.probability).abs());
        }
        note("bell tables", dev);
    }
    let span = bell::tomography_span(&sys(&["Q", "T"]), &cfg).unwrap();
    note("tomography span", (span.ambient - span.span) as f64);

    let total = worst.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let detail = worst.iter().map(|(n, d)| format!("{n} {d:.1e}")).collect::<Vec<_>>().join("; ");
    ensure(total == 0.0 && naive < 1e-14, format!("{detail}; transformations vs naive Kraus sums {naive:.1e}"))
}

fn no_super_quantum() -> Outcome {
    let start = Instant::now();
    let r = bell::chsh_sampling(&qubits(2), 10_000, 77).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let detail = format!(
        "{} samples, max |CHSH| {:.9} vs bound {:.9} ({}); {elapsed:.1?}",
        r.samples, r.max_chsh, r.bound, r.note
    );
    ensure(r.samples == 10_000 && r.max_chsh <= 2.0 * SQRT_2 + 1e-6, detail.clone())?;
    within(elapsed, Duration::from_secs(30), detail)
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("dimension law", dimension_law),
        ("axiom suite and negative controls", axiom_suite),
        ("Bell equivalence", bell_equivalence),
        ("local tomography", local_tomography),
        ("purity and PVM closure", purity_and_pvm_closure),
        ("QT degeneration", qt_degeneration),
        ("no super-quantum CHSH (sampling)", no_super_quantum),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
