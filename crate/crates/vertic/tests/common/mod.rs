//! Shared test support: an independent vertex-enumeration LP oracle and
//! random problem generators.

use rand::Rng;
use std::sync::Arc;
use vertic::contracts::{BlockBuilder, ContractRef, LtiRdContract};
use vertic::mat::Mat;
use vertic::network::{InputSource, Network};
use vertic::simplex::LpProblem;
use vertic::verification::{Mode, VerificationProblem, VerifyOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleOutcome {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

/// Brute-force LP oracle: enumerate every basis (n-subset of the rows plus
/// a large bounding box), keep the feasible vertices, and take the maximum
/// objective. Re-running with a doubled box separates "finite optimum" from
/// "unbounded". Independent of the simplex implementation by construction.
pub fn oracle_solve(lp: &LpProblem) -> OracleOutcome {
    const BOX: f64 = 1e7;
    match (enumerate_max(lp, BOX), enumerate_max(lp, 2.0 * BOX)) {
        (None, None) => OracleOutcome::Infeasible,
        (Some(a), Some(b)) => {
            if b > a + 1e-6 * (1.0 + a.abs()) {
                OracleOutcome::Unbounded
            } else {
                OracleOutcome::Optimal(a + lp.objective_offset)
            }
        }
        // A feasible set that appears only in the doubled box: treat as
        // unbounded-ish; the generators keep data small enough that this
        // does not occur.
        _ => OracleOutcome::Unbounded,
    }
}

fn enumerate_max(lp: &LpProblem, bound: f64) -> Option<f64> {
    let n = lp.n_vars;
    // All rows as (coeffs, rhs, is_equality).
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for r in 0..lp.eq_rhs.len() {
        rows.push((lp.eq_lhs.row(r).to_vec(), lp.eq_rhs[r], true));
    }
    for r in 0..lp.ineq_rhs.len() {
        rows.push((lp.ineq_lhs.row(r).to_vec(), lp.ineq_rhs[r], false));
    }
    for j in 0..n {
        let mut plus = vec![0.0; n];
        plus[j] = 1.0;
        rows.push((plus.clone(), bound, false));
        let mut minus = vec![0.0; n];
        minus[j] = -1.0;
        rows.push((minus, bound, false));
    }

    let feasible = |x: &[f64]| {
        rows.iter().all(|(coeffs, rhs, eq)| {
            let v: f64 = coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            if *eq {
                (v - rhs).abs() <= 1e-6 * (1.0 + rhs.abs())
            } else {
                v <= rhs + 1e-6 * (1.0 + rhs.abs())
            }
        })
    };

    let mut best: Option<f64> = None;
    let mut consider = |x: &[f64]| {
        if feasible(x) {
            let v: f64 = lp.objective.iter().zip(x).map(|(a, b)| a * b).sum();
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    };

    if n == 0 {
        consider(&[]);
        return best;
    }

    // Every vertex of the (box-clipped) feasible polytope solves some
    // nonsingular n-subset of active rows.
    let m = rows.len();
    let mut subset: Vec<usize> = (0..n).collect();
    loop {
        if let Some(x) = solve_square(&rows, &subset, n) {
            consider(&x);
        }
        // Next n-combination of 0..m in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] != i + m - n {
                subset[i] += 1;
                for j in i + 1..n {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_square(rows: &[(Vec<f64>, f64, bool)], subset: &[usize], n: usize) -> Option<Vec<f64>> {
    let mut a = vec![vec![0.0; n + 1]; n];
    for (r, &idx) in subset.iter().enumerate() {
        a[r][..n].copy_from_slice(&rows[idx].0);
        a[r][n] = rows[idx].1;
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..n {
        let (mut best, mut best_abs) = (col, 0.0);
        for r in col..n {
            if a[r][col].abs() > best_abs {
                best_abs = a[r][col].abs();
                best = r;
            }
        }
        if best_abs < 1e-9 {
            return None;
        }
        a.swap(col, best);
        let pivot = a[col][col];
        for c in col..=n {
            a[col][c] /= pivot;
        }
        for r in 0..n {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col];
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..n).map(|r| a[r][n]).collect())
}

/// Random desk-scale LP over free variables: up to 6 variables and 10
/// rows, small integer coefficients, a few equalities.
pub fn random_lp<R: Rng>(rng: &mut R) -> LpProblem {
    // Half of the instances carry two-sided variable bounds so that finite
    // optima are well represented; everything stays within 10 rows.
    let bounded = rng.gen_bool(0.5);
    let n = if bounded {
        rng.gen_range(1..=3usize)
    } else {
        rng.gen_range(1..=6usize)
    };
    let budget = 10 - if bounded { 2 * n } else { 0 };
    let n_eq = rng.gen_range(0..=2usize.min(budget));
    let n_ineq = rng.gen_range(0..=(budget - n_eq));
    let coeff = |rng: &mut R| rng.gen_range(-3i64..=3) as f64;
    let mut lp = LpProblem::new(n);
    lp.objective = (0..n).map(|_| coeff(rng)).collect();
    let mut eq_rows = Vec::new();
    for _ in 0..n_eq {
        eq_rows.push((0..n).map(|_| coeff(rng)).collect::<Vec<_>>());
        lp.eq_rhs.push(rng.gen_range(-6i64..=6) as f64);
    }
    let mut ineq_rows = Vec::new();
    for _ in 0..n_ineq {
        ineq_rows.push((0..n).map(|_| coeff(rng)).collect::<Vec<_>>());
        lp.ineq_rhs.push(rng.gen_range(-6i64..=6) as f64);
    }
    if bounded {
        for j in 0..n {
            let mut up = vec![0.0; n];
            up[j] = 1.0;
            ineq_rows.push(up);
            lp.ineq_rhs.push(rng.gen_range(0i64..=6) as f64);
            let mut down = vec![0.0; n];
            down[j] = -1.0;
            ineq_rows.push(down);
            lp.ineq_rhs.push(rng.gen_range(0i64..=6) as f64);
        }
    }
    lp.eq_lhs = if eq_rows.is_empty() {
        Mat::zeros(0, n)
    } else {
        Mat::from_rows(&eq_rows).unwrap()
    };
    lp.ineq_lhs = if ineq_rows.is_empty() {
        Mat::zeros(0, n)
    } else {
        Mat::from_rows(&ineq_rows).unwrap()
    };
    lp
}

/// Band guarantee `|y(k) - sum_c a_c d_c(k)| <= width` with every `a_c`
/// nonzero, so any fed coordinate is a feedthrough.
fn feedthrough_band<R: Rng>(
    rng: &mut R,
    n_d: usize,
    n_y: usize,
    width: f64,
) -> vertic::contracts::InequalityBlock {
    let mut hi = BlockBuilder::guarantee(0, n_d, n_y).row(width).y(0, 0, 1.0);
    let coeffs: Vec<f64> = (0..n_d)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.25..1.5)
        })
        .collect();
    for (c, &a) in coeffs.iter().enumerate() {
        hi = hi.d(0, c, -a);
    }
    let mut lo = hi.row(width).y(0, 0, -1.0);
    for (c, &a) in coeffs.iter().enumerate() {
        lo = lo.d(0, c, a);
    }
    lo.build()
}

/// Random assumption rows of depth <= 2 (arbitrary; these sit on the
/// conclusion side of the verification LPs). Loose right-hand sides are
/// mixed in so both verdicts occur in the sweeps.
fn random_assumption<R: Rng>(
    rng: &mut R,
    n_d: usize,
    n_y: usize,
) -> vertic::contracts::InequalityBlock {
    let depth = rng.gen_range(0..=2usize);
    let rows = rng.gen_range(1..=2usize);
    let loose = rng.gen_bool(0.4);
    let mut b = BlockBuilder::assumption(depth, n_d, n_y);
    for _ in 0..rows {
        b = b.row(if loose {
            rng.gen_range(30.0..80.0)
        } else {
            rng.gen_range(-1.0..3.0)
        });
        for lag in 0..=depth {
            for c in 0..n_d {
                if rng.gen_bool(0.5) {
                    b = b.d(lag, c, rng.gen_range(-2.0..2.0));
                }
            }
        }
        for lag in 1..=depth {
            for c in 0..n_y {
                if rng.gen_bool(0.3) {
                    b = b.y(lag, c, rng.gen_range(-2.0..2.0));
                }
            }
        }
    }
    b.build()
}

/// A random all-feedthrough DAG problem: every derived edge label is
/// non-strict, so cascade and general premise windows coincide.
pub fn random_all_nsc_dag<R: Rng>(rng: &mut R) -> VerificationProblem {
    let n = rng.gen_range(1..=5usize);
    let mut edges = Vec::new();
    for s in 0..n {
        for d in s + 1..n {
            if rng.gen_bool(0.4) {
                edges.push((s, d));
            }
        }
    }
    let mut b = Network::builder();
    for v in 0..n {
        let indeg = edges.iter().filter(|e| e.1 == v).count();
        let n_d = 1 + indeg;
        let width = rng.gen_range(0.5..2.0);
        let guarantee = feedthrough_band(rng, n_d, 1, width);
        let assumption = random_assumption(rng, n_d, 1);
        let contract: ContractRef = Arc::new(
            LtiRdContract::new(n_d, 1, vec![assumption], vec![guarantee], format!("c{v}")).unwrap(),
        );
        b.add_node(format!("n{v}"), contract, 1);
    }
    for v in 0..n {
        let mut sources = vec![InputSource::External(1)];
        for &(s, d) in &edges {
            if d == v {
                sources.push(InputSource::NodeOutput(s));
            }
        }
        b.stack_inputs(v, &sources).unwrap();
    }
    b.stack_outputs(&(0..n).collect::<Vec<_>>()).unwrap();
    let network = b.build().unwrap();

    // System contract: a band on every external coordinate plus random
    // guarantee rows.
    let mut a = BlockBuilder::assumption(0, n, n);
    for c in 0..n {
        a = a.row(2.0).d(0, c, 1.0).row(2.0).d(0, c, -1.0);
    }
    let mut g = BlockBuilder::guarantee(0, n, n);
    for _ in 0..rng.gen_range(1..=3usize) {
        g = g.row(rng.gen_range(-0.5..4.0));
        for c in 0..n {
            if rng.gen_bool(0.5) {
                g = g.y(0, c, rng.gen_range(-1.5..1.5));
            }
            if rng.gen_bool(0.3) {
                g = g.d(0, c, rng.gen_range(-1.5..1.5));
            }
        }
    }
    let c_tot: ContractRef =
        Arc::new(LtiRdContract::new(n, n, vec![a.build()], vec![g.build()], "tot").unwrap());
    VerificationProblem::new(network, c_tot, VerifyOptions::default()).unwrap()
}

/// A random plant/controller feedback pair with jointly extendable
/// premises: all guarantee and system-assumption blocks are depth-0 bands,
/// so every signal stays pinned and prefix satisfaction always extends.
pub fn random_two_system<R: Rng>(rng: &mut R) -> VerificationProblem {
    let sym = |rng: &mut R, lo: f64, hi: f64| {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        sign * rng.gen_range(lo..hi)
    };
    // Plant: d = [d_ext, u], y scalar. Guarantees read d_ext(k) but never
    // u(k), so the controller edge derives strictly causal.
    let a_plant = sym(rng, 0.3, 1.5);
    let plant_guarantee = BlockBuilder::guarantee(0, 2, 1)
        .row(1.0)
        .y(0, 0, 1.0)
        .d(0, 0, -a_plant)
        .row(1.0)
        .y(0, 0, -1.0)
        .d(0, 0, a_plant)
        .build();
    let plant_assumption = random_assumption(rng, 2, 1);
    let plant: ContractRef = Arc::new(
        LtiRdContract::new(2, 1, vec![plant_assumption], vec![plant_guarantee], "plant").unwrap(),
    );

    // Controller: d = y_plant, y = u, with feedthrough.
    let e_ctr = sym(rng, 0.3, 1.5);
    let ctr_guarantee = BlockBuilder::guarantee(0, 1, 1)
        .row(1.0)
        .y(0, 0, 1.0)
        .d(0, 0, -e_ctr)
        .row(1.0)
        .y(0, 0, -1.0)
        .d(0, 0, e_ctr)
        .build();
    let ctr_assumption = random_assumption(rng, 1, 1);
    let ctr: ContractRef = Arc::new(
        LtiRdContract::new(1, 1, vec![ctr_assumption], vec![ctr_guarantee], "ctr").unwrap(),
    );

    let mut b = Network::builder();
    let p = b.add_node("plant", plant, 1);
    let c = b.add_node("ctr", ctr, 0);
    b.stack_inputs(p, &[InputSource::External(1), InputSource::NodeOutput(c)])
        .unwrap();
    b.stack_inputs(c, &[InputSource::NodeOutput(p)]).unwrap();
    b.stack_outputs(&[p]).unwrap();
    let network = b.build().unwrap();

    let a_tot = BlockBuilder::assumption(0, 1, 1)
        .row(2.0)
        .d(0, 0, 1.0)
        .row(2.0)
        .d(0, 0, -1.0)
        .build();
    let mut g_tot = BlockBuilder::guarantee(0, 1, 1);
    let loose = rng.gen_bool(0.4);
    for _ in 0..rng.gen_range(1..=2usize) {
        g_tot = g_tot
            .row(if loose {
                rng.gen_range(30.0..80.0)
            } else {
                rng.gen_range(-1.0..4.0)
            })
            .y(0, 0, sym(rng, 0.2, 1.5))
            .d(0, 0, sym(rng, 0.0, 1.0));
    }
    let c_tot: ContractRef =
        Arc::new(LtiRdContract::new(1, 1, vec![a_tot], vec![g_tot.build()], "tot").unwrap());

    VerificationProblem::new(
        network,
        c_tot,
        VerifyOptions {
            mode: Mode::TwoSystemFeedback,
            ..Default::default()
        },
    )
    .unwrap()
}

/// Pure-graph helper: relay contracts on a bare digraph (every source gets
/// one external coordinate).
pub fn bare_graph_network(n: usize, edges: &[(usize, usize)]) -> Network {
    let relay = |n_d: usize| -> ContractRef {
        let mut hi = BlockBuilder::guarantee(0, n_d, 1).row(0.0).y(0, 0, 1.0);
        for c in 0..n_d {
            hi = hi.d(0, c, -1.0 / n_d as f64);
        }
        let mut lo = hi.row(0.0).y(0, 0, -1.0);
        for c in 0..n_d {
            lo = lo.d(0, c, 1.0 / n_d as f64);
        }
        Arc::new(LtiRdContract::new(n_d, 1, vec![], vec![lo.build()], "relay").unwrap())
    };
    let mut b = Network::builder();
    let indeg: Vec<usize> = (0..n)
        .map(|v| edges.iter().filter(|e| e.1 == v).count())
        .collect();
    for v in 0..n {
        let ext = if indeg[v] == 0 { 1 } else { 0 };
        b.add_node(format!("n{v}"), relay(indeg[v].max(1)), ext);
    }
    for v in 0..n {
        let mut sources: Vec<InputSource> = edges
            .iter()
            .filter(|e| e.1 == v)
            .map(|e| InputSource::NodeOutput(e.0))
            .collect();
        if sources.is_empty() {
            sources.push(InputSource::External(1));
        }
        b.stack_inputs(v, &sources).unwrap();
    }
    b.set_n_y_ext(1);
    b.build().unwrap()
}
