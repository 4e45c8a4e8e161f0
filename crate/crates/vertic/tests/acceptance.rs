#![allow(clippy::needless_range_loop)]

//! End-to-end acceptance suite. Each test prints a `[criterion N] PASS`
//! line (visible with `cargo test --test acceptance -- --nocapture`) after
//! asserting its gate.

mod common;

use common::{oracle_solve, random_all_nsc_dag, random_lp, random_two_system, OracleOutcome};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;
use vertic::contracts::{BlockBuilder, LtiRdContract, SignalWindow};
use vertic::network::EdgeFilter;
use vertic::platoon::{
    build_platoon, check_trajectory_guarantees, simulate, total_contract, LeaderProfile,
    PlatoonParams,
};
use vertic::problem::ProblemFile;
use vertic::simplex::{solve_with, LpOutcome, SimplexOptions};
use vertic::verification::{
    validate_witness, verify, Mode, Report, RhoValue, Target, VerificationProblem, VerifyOptions,
};

fn load_fixture(name: &str) -> ProblemFile {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    ProblemFile::parse(&text).expect("fixture parses")
}

fn assert_all_rho_within(report: &Report, bound: f64) {
    for r in &report.results {
        match r.value {
            RhoValue::Finite(v) => assert!(
                v.abs() <= bound,
                "{:?} has rho {v}, outside [-{bound}, {bound}]",
                r.target
            ),
            other => panic!("{:?} has non-finite rho {other:?}", r.target),
        }
    }
}

#[test]
fn criterion_1_platoon_m2_all_rho_zero() {
    let start = Instant::now();
    let problem = build_platoon(&PlatoonParams::new(2)).unwrap();
    let report = verify(&problem).unwrap();
    assert!(report.verdict, "vertical contract must hold at M=2");
    assert_eq!(report.lp_groups(), 3, "M=2 solves |V|+1 = 3 LP groups");
    assert_all_rho_within(&report, 1e-6);
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "took {elapsed:?}, budget 10 s"
    );
    println!(
        "[criterion 1] PASS platoon M=2: verdict true, 3 groups, all |rho| <= 1e-6 in {elapsed:?}"
    );
}

#[test]
fn criterion_2_lp_group_scaling() {
    let cases = [(2usize, 3usize), (5, 9), (10, 19), (20, 39)];
    for &(m, groups) in &cases {
        let start = Instant::now();
        let problem = build_platoon(&PlatoonParams::new(m)).unwrap();
        let report = verify(&problem).unwrap();
        assert_eq!(report.lp_groups(), groups, "M={m}");
        assert!(report.verdict, "M={m} verdict");
        let elapsed = start.elapsed();
        if m == 20 {
            assert!(
                elapsed.as_secs_f64() < 120.0,
                "M=20 took {elapsed:?}, budget 120 s"
            );
        }
    }
    println!("[criterion 2] PASS LP group counts {{3, 9, 19, 39}} at M in {{2, 5, 10, 20}}, all verdicts true");
}

#[test]
fn criterion_3_mutation_falsification_with_certified_witness() {
    let params = PlatoonParams::new(2);
    let base = build_platoon(&params).unwrap();
    let mut tightened = params;
    tightened.headway = 2.5;
    let mutated = VerificationProblem::new(
        base.network.clone(),
        Arc::new(total_contract(&tightened)),
        base.options,
    )
    .unwrap();
    let report = verify(&mutated).unwrap();
    assert!(
        !report.verdict,
        "tightened headway must falsify the vertical contract"
    );

    let omega = report
        .results
        .iter()
        .find(|r| r.target == Target::Omega)
        .expect("omega result");
    let rho = match omega.value {
        RhoValue::Finite(v) => v,
        RhoValue::PosInf => f64::INFINITY,
        RhoValue::NegInf => panic!("omega cannot be vacuous here"),
    };
    assert!(rho > 1e-6, "rho_omega = {rho}");
    assert!(
        validate_witness(&mutated, omega).unwrap(),
        "witness must certify"
    );

    // Independent oracle: re-evaluate gamma_tot on the decoded witness.
    let w = omega
        .witness
        .as_ref()
        .expect("finite rho carries a witness");
    let c_tot = &mutated.c_tot;
    let m = c_tot.guarantee_depth();
    let t = w.objective.time;
    let d = SignalWindow::from_steps(c_tot.n_d(), &w.d_ext[t - m..=t]).unwrap();
    let y = SignalWindow::from_steps(c_tot.n_y(), &w.y_ext[t - m..=t]).unwrap();
    let gamma = c_tot.eval_gamma(&d, &y).unwrap();
    assert!(
        gamma > 0.0,
        "witness must violate the system guarantee, gamma = {gamma}"
    );
    println!("[criterion 3] PASS h' = 2.5 mutation: verdict false, rho_omega = {rho:.4}, witness certified, eval_gamma = {gamma:.4} > 0");
}

#[test]
fn criterion_4_graph_fixtures_and_reachability_oracle() {
    let net = load_fixture("fig1.json").build_network().unwrap();
    assert_eq!(net.count_topological_orders(12).unwrap(), 11);

    let id = |name: &str| net.node_by_name(name).unwrap();
    let names = |s: &BTreeSet<usize>| -> BTreeSet<String> {
        s.iter().map(|&i| net.node(i).name.clone()).collect()
    };
    assert_eq!(
        names(&net.backward_reachable(id("C"), EdgeFilter::All)),
        BTreeSet::from(["A".to_string(), "B".to_string()])
    );
    assert_eq!(
        names(&net.backward_reachable(id("F"), EdgeFilter::All)),
        BTreeSet::from([
            "A".to_string(),
            "B".to_string(),
            "D".to_string(),
            "E".to_string()
        ])
    );

    // Validity predicate on the returned ordering.
    let order = net.topological_order().unwrap();
    let pos: Vec<usize> = {
        let mut p = vec![0; order.len()];
        for (i, &v) in order.iter().enumerate() {
            p[v] = i;
        }
        p
    };
    for &(s, d) in net.edges() {
        assert!(pos[s] < pos[d], "edge {s}->{d} out of order");
    }

    // 100 random graphs: BR against a Floyd-Warshall closure, and order
    // validity whenever the graph is acyclic.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        use rand::Rng;
        let n = rng.gen_range(1..=10usize);
        let mut edges = Vec::new();
        for s in 0..n {
            for d in 0..n {
                if s != d && rng.gen_bool(0.22) {
                    edges.push((s, d));
                }
            }
        }
        let net = common::bare_graph_network(n, &edges);
        let mut reach = vec![vec![false; n]; n];
        for &(s, d) in &edges {
            reach[s][d] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    reach[i][j] |= reach[i][k] && reach[k][j];
                }
            }
        }
        for i in 0..n {
            let br = net.backward_reachable(i, EdgeFilter::All);
            for j in 0..n {
                assert_eq!(br.contains(&j), reach[j][i], "trial {trial} i={i} j={j}");
            }
        }
        if let Ok(order) = net.topological_order() {
            let mut p = vec![0; n];
            for (i, &v) in order.iter().enumerate() {
                p[v] = i;
            }
            for &(s, d) in &edges {
                assert!(p[s] < p[d], "trial {trial}");
            }
        }
    }
    println!("[criterion 4] PASS Fig-1 fixtures (11 orderings, BR sets) and 100-graph reachability oracle");
}

#[test]
fn criterion_5_simplex_matches_vertex_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = [0usize; 3];
    let opts = SimplexOptions::default();
    let no_presolve = SimplexOptions {
        presolve_equalities: false,
        ..Default::default()
    };
    for trial in 0..220 {
        let lp = random_lp(&mut rng);
        let expected = oracle_solve(&lp);
        for (label, o) in [("presolve", &opts), ("phase1", &no_presolve)] {
            let got = solve_with(&lp, o).unwrap();
            match (&got, expected) {
                (LpOutcome::Infeasible, OracleOutcome::Infeasible) => counts[0] += 1,
                (LpOutcome::Unbounded, OracleOutcome::Unbounded) => counts[1] += 1,
                (LpOutcome::Optimal { value, point }, OracleOutcome::Optimal(want)) => {
                    counts[2] += 1;
                    assert!(
                        (value - want).abs() <= 1e-7 * (1.0 + want.abs()),
                        "trial {trial} ({label}): value {value} vs oracle {want}\n{}",
                        lp.dump()
                    );
                    // Feasibility invariant on the returned point.
                    let scale = 1.0
                        + lp.ineq_rhs
                            .iter()
                            .chain(&lp.eq_rhs)
                            .fold(0.0f64, |a, b| a.max(b.abs()));
                    for r in 0..lp.eq_rhs.len() {
                        let resid: f64 = lp
                            .eq_lhs
                            .row(r)
                            .iter()
                            .zip(point)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                            - lp.eq_rhs[r];
                        assert!(
                            resid.abs() <= 1e-9 * scale,
                            "trial {trial} eq residual {resid}"
                        );
                    }
                    for r in 0..lp.ineq_rhs.len() {
                        let resid: f64 = lp
                            .ineq_lhs
                            .row(r)
                            .iter()
                            .zip(point)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                            - lp.ineq_rhs[r];
                        assert!(
                            resid <= 1e-9 * scale,
                            "trial {trial} ineq violation {resid}"
                        );
                    }
                }
                (got, expected) => {
                    panic!(
                        "trial {trial} ({label}): solver {got:?} vs oracle {expected:?}\n{}",
                        lp.dump()
                    )
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "sweep took {elapsed:?}, budget 30 s"
    );
    println!(
        "[criterion 5] PASS 220 random LPs x 2 solver routes agree with the vertex oracle \
         (infeasible {}, unbounded {}, optimal {}) in {elapsed:?}",
        counts[0], counts[1], counts[2]
    );
}

fn rho_values(report: &Report) -> Vec<(Target, RhoValue)> {
    report.results.iter().map(|r| (r.target, r.value)).collect()
}

#[test]
fn criterion_6_cascade_and_general_builders_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..50 {
        let mut problem = random_all_nsc_dag(&mut rng);
        problem.options.mode = Mode::General;
        let general = verify(&problem).unwrap();
        problem.options.mode = Mode::Cascade;
        let cascade = verify(&problem).unwrap();
        for ((t1, v1), (t2, v2)) in rho_values(&general).into_iter().zip(rho_values(&cascade)) {
            assert_eq!(t1, t2);
            match (v1, v2) {
                (RhoValue::Finite(a), RhoValue::Finite(b)) => {
                    assert!((a - b).abs() <= 1e-9, "trial {trial} {t1:?}: {a} vs {b}")
                }
                (a, b) => assert_eq!(a, b, "trial {trial} {t1:?}"),
            }
        }
    }
    println!("[criterion 6] PASS cascade and general rho values agree on 50 all-non-strict DAGs");
}

#[test]
fn criterion_7_horizon_stability() {
    let signs_at_extensions = |problem: &VerificationProblem| -> Vec<Vec<i8>> {
        (0..3usize)
            .map(|dh| {
                let mut p = problem.clone();
                p.options.mode = Mode::TwoSystemFeedback;
                p.options.horizon_extension = dh;
                verify(&p)
                    .unwrap()
                    .results
                    .iter()
                    .map(|r| r.value.sign(1e-9))
                    .collect()
            })
            .collect()
    };

    let platoon = build_platoon(&PlatoonParams::new(2)).unwrap();
    let signs = signs_at_extensions(&platoon);
    assert_eq!(signs[0], signs[1], "platoon m vs m+1");
    assert_eq!(signs[0], signs[2], "platoon m vs m+2");

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut neg, mut pos) = (0usize, 0usize);
    for trial in 0..20 {
        let problem = random_two_system(&mut rng);
        let signs = signs_at_extensions(&problem);
        assert_eq!(signs[0], signs[1], "trial {trial}: m vs m+1: {signs:?}");
        assert_eq!(signs[0], signs[2], "trial {trial}: m vs m+2: {signs:?}");
        for &s in &signs[0] {
            if s > 0 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
    }
    // The sweep must exercise both outcomes, not only failures.
    assert!(
        neg > 0 && pos > 0,
        "one-sided sweep: {neg} non-positive vs {pos} positive"
    );
    println!(
        "[criterion 7] PASS sign(rho) stable across horizons m, m+1, m+2 on the platoon and 20 random \
         feedback pairs ({pos} positive, {neg} non-positive rho targets)"
    );
}

#[test]
fn criterion_8_simulation_sweep() {
    let params = PlatoonParams::new(2);
    for seed in 0..50u64 {
        let traj = simulate(&params, 300, seed, &LeaderProfile::scenario()).unwrap();
        assert!(
            traj.infeasible_steps.is_empty(),
            "seed {seed} raised infeasible-control flags"
        );
        let check = check_trajectory_guarantees(&traj, &params);
        assert!(
            check.ok,
            "seed {seed} violated: {:?}",
            check.first_violation
        );
    }
    println!(
        "[criterion 8] PASS 50 seeded 300-step runs keep headway and speed limits with zero flags"
    );
}

#[test]
fn criterion_9_module_invariants() {
    // Membership monotonicity under prefix shortening.
    {
        let band = {
            let a = BlockBuilder::assumption(0, 1, 1)
                .row(3.0)
                .d(0, 0, 1.0)
                .row(0.0)
                .d(0, 0, -1.0)
                .build();
            LtiRdContract::new(1, 1, vec![a], vec![], "band").unwrap()
        };
        let d: Vec<Vec<f64>> = (0..12).map(|k| vec![(k % 4) as f64]).collect();
        let y: Vec<Vec<f64>> = (0..12).map(|_| vec![0.0]).collect();
        assert!(band.check_assumption_prefix(&d, &y).unwrap());
        for n in 0..12 {
            assert!(band.check_assumption_prefix(&d[..n], &y[..n]).unwrap());
        }
    }

    // SRD over a union is the conjunction of the parts.
    {
        let g = BlockBuilder::guarantee(0, 3, 1)
            .row(0.0)
            .y(0, 0, 1.0)
            .d(0, 0, -1.0)
            .d(0, 2, 0.5)
            .build();
        let c = LtiRdContract::new(3, 1, vec![], vec![g], "mix").unwrap();
        for s1 in [vec![0usize], vec![1], vec![2]] {
            for s2 in [vec![0usize], vec![1], vec![2]] {
                let mut both = s1.clone();
                both.extend(&s2);
                assert_eq!(
                    c.is_srd(&both).unwrap(),
                    c.is_srd(&s1).unwrap() && c.is_srd(&s2).unwrap()
                );
            }
        }
    }

    // Vacuity: contradictory system assumptions make every rho vacuous.
    {
        let relay = {
            let g = BlockBuilder::guarantee(0, 1, 1)
                .row(0.0)
                .y(0, 0, 1.0)
                .d(0, 0, -1.0)
                .row(0.0)
                .d(0, 0, 1.0)
                .y(0, 0, -1.0)
                .build();
            let a = BlockBuilder::assumption(0, 1, 1)
                .row(1.0)
                .d(0, 0, 1.0)
                .row(1.0)
                .d(0, 0, -1.0)
                .build();
            Arc::new(LtiRdContract::new(1, 1, vec![a], vec![g], "relay").unwrap())
        };
        let absurd = {
            let a = BlockBuilder::assumption(0, 1, 1)
                .row(0.0)
                .d(0, 0, 1.0)
                .row(-1.0)
                .d(0, 0, -1.0)
                .build();
            Arc::new(LtiRdContract::new(1, 1, vec![a], vec![], "absurd").unwrap())
        };
        let mut b = vertic::network::Network::builder();
        let n0 = b.add_node("solo", relay.clone(), 1);
        b.stack_inputs(n0, &[vertic::network::InputSource::External(1)])
            .unwrap();
        b.stack_outputs(&[n0]).unwrap();
        let problem =
            VerificationProblem::new(b.build().unwrap(), absurd, VerifyOptions::default()).unwrap();
        let report = verify(&problem).unwrap();
        assert!(report.verdict);
        assert!(report.results.iter().all(|r| r.value == RhoValue::NegInf));

        // Self-refinement of the same single-node network against its own
        // contract.
        let mut b = vertic::network::Network::builder();
        let n0 = b.add_node("solo", relay.clone(), 1);
        b.stack_inputs(n0, &[vertic::network::InputSource::External(1)])
            .unwrap();
        b.stack_outputs(&[n0]).unwrap();
        let problem =
            VerificationProblem::new(b.build().unwrap(), relay, VerifyOptions::default()).unwrap();
        let report = verify(&problem).unwrap();
        assert!(report.verdict, "self-refinement");
        // Witness certification for every finite rho.
        for r in &report.results {
            if r.value.finite().is_some() {
                assert!(validate_witness(&problem, r).unwrap());
            }
        }
    }

    // rho monotonicity under guarantee strengthening on random problems.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let problem = random_all_nsc_dag(&mut rng);
            let base = verify(&problem).unwrap();
            // Strengthen node 0: intersect its guarantees with |y| <= 0.25.
            let node0 = problem.network.node(0);
            let extra = BlockBuilder::guarantee(0, node0.contract.n_d(), 1)
                .row(0.25)
                .y(0, 0, 1.0)
                .row(0.25)
                .y(0, 0, -1.0)
                .build();
            let mut guarantees = node0.contract.guarantees().to_vec();
            guarantees.push(extra);
            let stronger = Arc::new(
                LtiRdContract::new(
                    node0.contract.n_d(),
                    node0.contract.n_y(),
                    node0.contract.assumptions().to_vec(),
                    guarantees,
                    "stronger",
                )
                .unwrap(),
            );
            let mut b = vertic::network::Network::builder();
            for (i, n) in problem.network.nodes().iter().enumerate() {
                let c = if i == 0 {
                    stronger.clone()
                } else {
                    n.contract.clone()
                };
                b.add_node(n.name.clone(), c, n.n_d_ext);
            }
            for &(s, d) in problem.network.edges() {
                b.add_edge(s, d);
                if let Some(f) = problem.network.f(d, s) {
                    b.set_f(d, s, f.clone());
                }
            }
            for i in 0..problem.network.node_count() {
                b.set_e(i, problem.network.e(i).clone());
                if let Some(h) = problem.network.h(i) {
                    b.set_h(i, h.clone());
                    b.add_output(i);
                }
            }
            b.set_n_y_ext(problem.network.n_y_ext());
            let strong_problem = VerificationProblem::new(
                b.build().unwrap(),
                problem.c_tot.clone(),
                problem.options,
            )
            .unwrap();
            let strong = verify(&strong_problem).unwrap();
            for (b_res, s_res) in base.results.iter().zip(&strong.results) {
                let to_f = |v: RhoValue| match v {
                    RhoValue::Finite(x) => x,
                    RhoValue::NegInf => f64::NEG_INFINITY,
                    RhoValue::PosInf => f64::INFINITY,
                };
                assert!(
                    to_f(s_res.value) <= to_f(b_res.value) + 1e-9,
                    "{:?}: {:?} > {:?}",
                    b_res.target,
                    s_res.value,
                    b_res.value
                );
            }
        }
    }

    println!("[criterion 9] PASS module invariants (monotonicity, SRD union, vacuity, self-refinement, witness certification, rho monotonicity)");
}
