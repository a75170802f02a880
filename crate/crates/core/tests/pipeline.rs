//! End-to-end paths through the public API: file → system → Carleman → checks.

use carleman::carleman::{assemble, NonlinearSystem};
use carleman::convergence::{bound_curve, level_sweep, SweepOptions};
use carleman::dissipativity::certify;
use carleman::io::{parse_system_json, parse_system_toml, DenseSpec};
use carleman::linalg::{c, CMatrix, CVector};
use carleman::oracle::integrate;
use carleman::semigroup::{evolve, EvolutionMethod};

fn two_mode() -> NonlinearSystem {
    let w1 = CMatrix::from_row_slice(2, 2, &[c(-1.0), c(0.2), c(0.2), c(-1.5)]);
    let mut w2 = CMatrix::zeros(2, 4);
    w2[(0, 3)] = c(0.3);
    w2[(1, 0)] = c(-0.3);
    NonlinearSystem::quadratic(w1, w2, CVector::from_vec(vec![c(0.3), c(-0.2)])).unwrap()
}

#[test]
fn json_and_toml_describe_the_same_system() {
    let sys = two_mode();
    let json = serde_json::to_string(&DenseSpec::from(&sys)).unwrap();
    let toml = toml::to_string(&DenseSpec::from(&sys)).unwrap();
    let a = parse_system_json(&json).unwrap().build().unwrap().system;
    let b = parse_system_toml(&toml).unwrap().build().unwrap().system;
    assert_eq!(a, sys);
    assert_eq!(b, sys);
}

#[test]
fn certified_system_converges_under_bound() {
    let sys = two_mode();
    let rep = certify(&assemble(&sys, 4).unwrap(), 1e-10).unwrap();
    assert!(rep.all_pass(), "{rep:?}");
    let run = level_sweep(&sys, 6, 1.0, &SweepOptions::default()).unwrap();
    for row in &run.rows {
        let bound = bound_curve(&sys, row.sweep_var, 1.0).unwrap();
        assert!(row.e1 <= 1.05 * bound + 1e-12, "N = {}: {} > {}", row.sweep_var, row.e1, bound);
    }
    assert!(run.e1().windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn evolution_methods_agree_with_each_other_and_the_oracle() {
    let sys = two_mode();
    let cs = assemble(&sys, 8).unwrap();
    let v0 = cs.initial_state().unwrap();
    let times = [0.5, 1.0];
    let e = evolve(&cs, &v0, &times, EvolutionMethod::Expm).unwrap().level1();
    let r = evolve(&cs, &v0, &times, EvolutionMethod::Rk4 { step: 1e-3 }).unwrap().level1();
    let x = evolve(&cs, &v0, &times, EvolutionMethod::Etdrk4 { step: 1e-2 }).unwrap().level1();
    let oracle = integrate(&sys, &times, 1e-3).unwrap();
    for k in 0..times.len() {
        assert!((&e[k] - &r[k]).norm() < 1e-10);
        assert!((&e[k] - &x[k]).norm() < 1e-8);
        assert!((&e[k] - &oracle.states[k]).norm() < 1e-4);
    }
}

#[test]
fn fuzz_corpus_seeds_are_valid_inputs() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut seen = 0;
    for (dir, parse) in [
        ("system_json", (|t: &str| parse_system_json(t).and_then(|s| s.build()).map(|_| ())) as fn(&str) -> carleman::Result<()>),
        ("system_toml", |t: &str| parse_system_toml(t).and_then(|s| s.build()).map(|_| ())),
        ("km_baseline", |t: &str| carleman::io::parse_km_baseline(t).map(|_| ())),
    ] {
        for entry in std::fs::read_dir(root.join(dir)).unwrap() {
            let path = entry.unwrap().path();
            let text = std::fs::read_to_string(&path).unwrap();
            parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 9);
}
