mod common;

use common::{baseline_enumeration, max_abs_diff, suite};
use opsense::envs::{fig2, gen_taxi, load_mdp, random_sparse_mdp, save_mdp, EnvSpec};
use opsense::{as_policy, evaluate_on_roots, solve_baseline, BaselineMdp, Convention, Error, SensingProblem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GENERATED: [&str; 10] = [
    "fig2",
    "fig8",
    "frozen_lake:4x4-default",
    "frozen_lake:4x4-hard",
    "frozen_lake:4x4-default:deterministic",
    "frozen_lake:8x8",
    "taxi",
    "taxi:deterministic",
    "inventory",
    "random:12:3:4",
];

#[test]
fn json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in GENERATED {
        let mdp = name.parse::<EnvSpec>().unwrap().build().unwrap();
        let path = dir.path().join("mdp.json");
        save_mdp(&mdp, &path).unwrap();
        let back = load_mdp(&path).unwrap();
        assert_eq!(back.to_json_string(), mdp.to_json_string(), "{name}");
        assert_eq!(back.convention(), mdp.convention());
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                assert_eq!(back.cost(s, a), mdp.cost(s, a));
            }
        }
    }
}

#[test]
fn reward_files_are_negated() {
    let text = r#"{"name": "r", "num_states": 2, "num_actions": 1, "discount": 0.5,
        "convention": "reward", "transitions": [[[0, 1], [0, 1]]], "costs": [[3], [0]]}"#;
    let mdp = BaselineMdp::from_json_str(text).unwrap();
    assert_eq!(mdp.convention(), Convention::Reward);
    assert_eq!(mdp.cost(0, 0), -3.0);
    let sol = solve_baseline(&mdp, 1e-12).unwrap();
    assert!((sol.v_star[0] + 3.0).abs() < 1e-12);
}

#[test]
fn schema_errors_name_the_field() {
    let missing = r#"{"name": "x", "num_states": 1, "num_actions": 1, "discount": 0.5, "convention": "cost",
        "transitions": [[[1]]]}"#;
    assert!(matches!(BaselineMdp::from_json_str(missing), Err(Error::Schema { path, .. }) if path == "costs"));
    let ragged = r#"{"name": "x", "num_states": 2, "num_actions": 1, "discount": 0.5, "convention": "cost",
        "transitions": [[[1, 0], [1]]], "costs": [[0], [0]]}"#;
    assert!(matches!(BaselineMdp::from_json_str(ragged), Err(Error::Schema { path, .. }) if path == "transitions[0][1]"));
    let unnormalized = r#"{"name": "x", "num_states": 1, "num_actions": 1, "discount": 0.5, "convention": "cost",
        "transitions": [[[0.5]]], "costs": [[0]]}"#;
    assert!(matches!(BaselineMdp::from_json_str(unnormalized), Err(Error::InvalidMdp(_))));
}

#[test]
fn large_sparse_instance_loads_and_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(716);
    let mdp = random_sparse_mdp(&mut rng, 716, 25, 0.99, 8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.json");
    save_mdp(&mdp, &path).unwrap();
    let mdp = load_mdp(&path).unwrap();
    let sol = solve_baseline(&mdp, 1e-8).unwrap();
    let bellman: Vec<f64> = mdp
        .backup(&sol.v_star)
        .chunks(mdp.num_actions())
        .map(|q| q.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    let residual = max_abs_diff(&bellman, &sol.v_star);
    assert!(residual < 1e-6, "{residual}");
    let problem = SensingProblem::uniform(mdp, 0.1).unwrap();
    let v = evaluate_on_roots(&problem, &as_policy(&problem.baseline)).unwrap().values;
    assert!(max_abs_diff(&v, &problem.baseline.v_star.iter().map(|x| x + 10.0).collect::<Vec<_>>()) < 1e-6);
}

#[test]
fn deterministic_lake_start_value() {
    let mdp = "frozen_lake:4x4-default:deterministic".parse::<EnvSpec>().unwrap().build().unwrap();
    let sol = solve_baseline(&mdp, 1e-12).unwrap();
    assert!((-sol.v_star[0] - 0.59049).abs() < 1e-9);
}

/// Slippery Frozen Lake built from coordinates, solved by plain value iteration.
fn lake_oracle(rows: &[&str]) -> Vec<f64> {
    let h = rows.len() as i32;
    let w = rows[0].len() as i32;
    let cell = |r: i32, c: i32| rows[r as usize].as_bytes()[c as usize];
    let deltas = [(0, -1), (1, 0), (0, 1), (-1, 0)];
    let mut v = vec![0.0f64; (h * w) as usize];
    for _ in 0..2000 {
        let mut next = v.clone();
        for r in 0..h {
            for c in 0..w {
                if matches!(cell(r, c), b'H' | b'G') {
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                for a in 0..4 {
                    let mut q = 0.0;
                    for slip in [3, 0, 1] {
                        let (dr, dc) = deltas[(a + slip) % 4];
                        let (nr, nc) = ((r + dr).clamp(0, h - 1), (c + dc).clamp(0, w - 1));
                        let reward = if cell(nr, nc) == b'G' { 1.0 } else { 0.0 };
                        q += (reward + 0.9 * v[(nr * w + nc) as usize]) / 3.0;
                    }
                    best = best.max(q);
                }
                next[(r * w + c) as usize] = best;
            }
        }
        v = next;
    }
    v
}

#[test]
fn slippery_lakes_match_coordinate_oracle() {
    for (spec, rows) in [
        ("frozen_lake:4x4-default", vec!["SFFF", "FHFH", "FFFH", "HFFG"]),
        ("frozen_lake:4x4-hard", vec!["FHSF", "FGHF", "FHHF", "FFFF"]),
    ] {
        let mdp = spec.parse::<EnvSpec>().unwrap().build().unwrap();
        let sol = solve_baseline(&mdp, 1e-12).unwrap();
        let reward_values: Vec<f64> = sol.v_star.iter().map(|v| -v).collect();
        assert!(max_abs_diff(&reward_values, &lake_oracle(&rows)) < 1e-9, "{spec}");
    }
}

#[test]
fn taxi_shape() {
    let mdp = gen_taxi(true);
    assert_eq!((mdp.num_states(), mdp.num_actions()), (500, 6));
    assert_eq!(mdp.start_distribution().iter().filter(|&&p| p > 0.0).count(), 300);
    mdp.ensure_valid().unwrap();
}

#[test]
fn always_sense_identity_on_generated_envs() {
    for name in GENERATED {
        let mdp = name.parse::<EnvSpec>().unwrap().build().unwrap();
        let base = SensingProblem::uniform(mdp, 0.0).unwrap();
        let alpha = base.discount();
        for k in [0.0, 0.01, 0.25] {
            let problem = base.with_cost(opsense::SensingCostModel::Uniform(k)).unwrap();
            let v = evaluate_on_roots(&problem, &as_policy(&problem.baseline)).unwrap().values;
            let expect: Vec<f64> = problem.baseline.v_star.iter().map(|x| x + k / (1.0 - alpha)).collect();
            assert!(max_abs_diff(&v, &expect) < 1e-8, "{name} k={k}");
        }
    }
}

#[test]
fn baseline_matches_policy_enumeration() {
    for inst in suite(60) {
        let sol = solve_baseline(&inst.mdp, 1e-12).unwrap();
        assert!(max_abs_diff(&sol.v_star, &baseline_enumeration(&inst.mdp)) < 1e-9, "seed {}", inst.seed);
    }
    let sol = solve_baseline(&fig2(), 1e-12).unwrap();
    assert!(max_abs_diff(&sol.v_star, &baseline_enumeration(&fig2())) < 1e-9);
}

#[test]
fn discount_override_is_validated() {
    let spec: EnvSpec = "fig2".parse().unwrap();
    assert!(spec.clone().with_discount(Some(0.7)).build().is_ok());
    assert!(matches!(spec.with_discount(Some(1.0)).build(), Err(Error::InvalidMdp(_))));
}
