//! Vertical-contract verification: does the composition of the component
//! contracts refine a system-level contract?
//!
//! For every node `i` one group of LPs asks "can the system-level
//! assumptions plus the upstream guarantees be satisfied while an
//! assumption row of `C_i` is violated?", and one final group asks the same
//! for the system-level guarantee rows. Each group's optimum `rho` is the
//! worst violation: the vertical contract holds exactly when every `rho`
//! is non-positive.
//!
//! The premise windows differ by mode. In `General` mode a guarantee of an
//! upstream node `j` is available up to the terminal time when `j` is
//! backward-reachable through non-strictly-causal edges only, and up to one
//! step earlier otherwise. `Cascade` mode (feedback-less networks) uses the
//! uniform windows over `BR(i)`. The `TwoSystemFeedback` builder enumerates
//! the objective over a whole horizon and exists mainly to exercise the
//! horizon-stability property of the underlying induction argument.
//!
//! Maximizing a pointwise max of affine rows is not a single LP, so each
//! group contains one LP per objective row and the max is taken outside; an
//! unbounded row forces `rho = +inf`, an empty or everywhere-infeasible
//! group yields `rho = -inf` (the premises already contradict themselves,
//! so the implication holds vacuously).
//!
//! The bounded-horizon programs are equivalent to the unbounded refinement
//! claim only when the premise families are *extendable* (any finite
//! prefix satisfying them admits a next step). That side condition is not
//! checked algorithmically; callers assert it through
//! [`VerifyOptions::extendibility_asserted`], which is echoed into the
//! report.

use crate::contracts::{BlockKind, ContractError, ContractRef, InequalityBlock, SignalWindow};
use crate::mat::{dot, Mat};
use crate::network::{EdgeFilter, Finding, Network, NodeId};
use crate::simplex::{self, LpOutcome, LpProblem, SimplexError, SimplexOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    General,
    Cascade,
    TwoSystemFeedback,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Verdict tolerance epsilon: true iff every rho <= epsilon.
    pub tolerance: f64,
    pub mode: Mode,
    /// Extra horizon Delta_h added to the theorem-minimal windows.
    pub horizon_extension: usize,
    /// The extendibility side conditions are the caller's responsibility;
    /// this flag is echoed into the report.
    pub extendibility_asserted: bool,
    /// Promote the conservative output-dependence findings to errors.
    pub strict_assumption_check: bool,
    pub simplex: SimplexOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tolerance: 1e-6,
            mode: Mode::General,
            horizon_extension: 0,
            extendibility_asserted: false,
            strict_assumption_check: false,
            simplex: SimplexOptions::default(),
        }
    }
}

/// A network, a system-level contract on its external signature, and the
/// options controlling the LP construction.
#[derive(Clone, Debug)]
pub struct VerificationProblem {
    pub network: Network,
    pub c_tot: ContractRef,
    pub options: VerifyOptions,
}

impl VerificationProblem {
    pub fn new(
        network: Network,
        c_tot: ContractRef,
        options: VerifyOptions,
    ) -> Result<Self, VerifyError> {
        if c_tot.n_d() != network.n_d_ext_total() {
            return Err(VerifyError::CtotInputDim {
                got: c_tot.n_d(),
                want: network.n_d_ext_total(),
            });
        }
        if c_tot.n_y() != network.n_y_ext() {
            return Err(VerifyError::CtotOutputDim {
                got: c_tot.n_y(),
                want: network.n_y_ext(),
            });
        }
        let problem = VerificationProblem {
            network,
            c_tot,
            options,
        };
        match options.mode {
            Mode::General => {}
            Mode::Cascade => {
                if let Err(cycle) = problem.network.topological_order() {
                    return Err(VerifyError::CascadeNeedsDag { cycle: cycle.edges });
                }
            }
            Mode::TwoSystemFeedback => {
                problem.two_system_roles()?;
            }
        }
        Ok(problem)
    }

    /// Identifies the (plant, controller) pair of a two-node feedback
    /// topology: a 2-cycle whose controller-to-plant edge is strictly
    /// causal, plant-to-controller edge is not, and `W` = {plant}.
    pub fn two_system_roles(&self) -> Result<(NodeId, NodeId), VerifyError> {
        let net = &self.network;
        let shape = |msg: &str| VerifyError::NotTwoSystem {
            msg: msg.to_string(),
        };
        if net.node_count() != 2 {
            return Err(shape("exactly two nodes required"));
        }
        let edges: BTreeSet<(NodeId, NodeId)> = net.edges().iter().copied().collect();
        if edges != BTreeSet::from([(0, 1), (1, 0)]) {
            return Err(shape("the two nodes must form a feedback 2-cycle"));
        }
        let lab = net.causality();
        let (plant, ctr) = if lab.is_strict(1, 0) && !lab.is_strict(0, 1) {
            (0, 1)
        } else if lab.is_strict(0, 1) && !lab.is_strict(1, 0) {
            (1, 0)
        } else {
            return Err(shape(
                "exactly one edge must be strictly causal (controller to plant)",
            ));
        };
        if net.output_set() != &BTreeSet::from([plant]) {
            return Err(shape("the output set must be exactly the plant node"));
        }
        Ok((plant, ctr))
    }

    /// Largest window depth over every contract in the problem; the
    /// two-system mode uses this (plus the horizon extension) as its
    /// uniform horizon.
    pub fn max_depth(&self) -> usize {
        let mut m = self
            .c_tot
            .assumption_depth()
            .max(self.c_tot.guarantee_depth());
        for node in self.network.nodes() {
            m = m
                .max(node.contract.assumption_depth())
                .max(node.contract.guarantee_depth());
        }
        m
    }
}

/// What a group of LPs is certifying: one node's assumptions, or the
/// system-level guarantees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    Node(NodeId),
    Omega,
}

/// An extended-real optimum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RhoValue {
    NegInf,
    Finite(f64),
    PosInf,
}

impl RhoValue {
    /// Verdict contribution: rho passes iff it is at most epsilon.
    pub fn passes(self, epsilon: f64) -> bool {
        match self {
            RhoValue::NegInf => true,
            RhoValue::Finite(v) => v <= epsilon,
            RhoValue::PosInf => false,
        }
    }

    /// Sign with tolerance: -1, 0 or +1.
    pub fn sign(self, epsilon: f64) -> i8 {
        match self {
            RhoValue::NegInf => -1,
            RhoValue::Finite(v) if v > epsilon => 1,
            RhoValue::Finite(v) if v < -epsilon => -1,
            RhoValue::Finite(_) => 0,
            RhoValue::PosInf => 1,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            RhoValue::Finite(v) => Some(v),
            _ => None,
        }
    }
}

/// Which affine row a group LP maximizes, and at which terminal time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjectiveId {
    pub target: Target,
    pub block: usize,
    pub row: usize,
    pub time: usize,
}

/// Variable layout of one LP: time-major, within each step `d_ext`,
/// `y_ext`, then `d_j`/`y_j` for each in-scope node in declaration order.
#[derive(Clone, Debug)]
pub struct LpLayout {
    horizon: usize,
    n_d_ext: usize,
    n_y_ext: usize,
    scope: Vec<NodeId>,
    d_offsets: BTreeMap<NodeId, usize>,
    y_offsets: BTreeMap<NodeId, usize>,
    stride: usize,
}

impl LpLayout {
    fn new(net: &Network, scope: &[NodeId], horizon: usize) -> Self {
        let n_d_ext = net.n_d_ext_total();
        let n_y_ext = net.n_y_ext();
        let mut offset = n_d_ext + n_y_ext;
        let mut d_offsets = BTreeMap::new();
        let mut y_offsets = BTreeMap::new();
        for &j in scope {
            d_offsets.insert(j, offset);
            offset += net.node(j).contract.n_d();
            y_offsets.insert(j, offset);
            offset += net.node(j).contract.n_y();
        }
        LpLayout {
            horizon,
            n_d_ext,
            n_y_ext,
            scope: scope.to_vec(),
            d_offsets,
            y_offsets,
            stride: offset,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn scope(&self) -> &[NodeId] {
        &self.scope
    }

    pub fn n_vars(&self) -> usize {
        self.stride * (self.horizon + 1)
    }

    fn d_ext(&self, t: usize, c: usize) -> usize {
        t * self.stride + c
    }

    fn y_ext(&self, t: usize, c: usize) -> usize {
        t * self.stride + self.n_d_ext + c
    }

    fn d_node(&self, j: NodeId, t: usize, c: usize) -> usize {
        t * self.stride + self.d_offsets[&j] + c
    }

    fn y_node(&self, j: NodeId, t: usize, c: usize) -> usize {
        t * self.stride + self.y_offsets[&j] + c
    }

    fn var_names(&self, net: &Network) -> Vec<String> {
        let mut names = vec![String::new(); self.n_vars()];
        for t in 0..=self.horizon {
            for c in 0..self.n_d_ext {
                names[self.d_ext(t, c)] = format!("dext_t{t}_{c}");
            }
            for c in 0..self.n_y_ext {
                names[self.y_ext(t, c)] = format!("yext_t{t}_{c}");
            }
            for &j in &self.scope {
                let node = net.node(j);
                for c in 0..node.contract.n_d() {
                    names[self.d_node(j, t, c)] = format!("d_{}_t{t}_{c}", node.name);
                }
                for c in 0..node.contract.n_y() {
                    names[self.y_node(j, t, c)] = format!("y_{}_t{t}_{c}", node.name);
                }
            }
        }
        names
    }

    fn decode(&self, net: &Network, point: &[f64]) -> DecodedSignals {
        let times = 0..=self.horizon;
        let d_ext: Vec<Vec<f64>> = times
            .clone()
            .map(|t| (0..self.n_d_ext).map(|c| point[self.d_ext(t, c)]).collect())
            .collect();
        let y_ext: Vec<Vec<f64>> = times
            .clone()
            .map(|t| (0..self.n_y_ext).map(|c| point[self.y_ext(t, c)]).collect())
            .collect();
        let mut nodes = BTreeMap::new();
        for &j in &self.scope {
            let node = net.node(j);
            let d = (0..=self.horizon)
                .map(|t| {
                    (0..node.contract.n_d())
                        .map(|c| point[self.d_node(j, t, c)])
                        .collect()
                })
                .collect();
            let y = (0..=self.horizon)
                .map(|t| {
                    (0..node.contract.n_y())
                        .map(|c| point[self.y_node(j, t, c)])
                        .collect()
                })
                .collect();
            nodes.insert(j, NodeSignals { d, y });
        }
        (d_ext, y_ext, nodes)
    }
}

/// `(d_ext, y_ext, per-node signals)` as decoded from an LP point.
type DecodedSignals = (Vec<Vec<f64>>, Vec<Vec<f64>>, BTreeMap<NodeId, NodeSignals>);

/// Per-node slice of a decoded witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSignals {
    pub d: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

/// An LP optimum decoded back into finite signal trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub horizon: usize,
    pub d_ext: Vec<Vec<f64>>,
    pub y_ext: Vec<Vec<f64>>,
    pub nodes: BTreeMap<NodeId, NodeSignals>,
    pub objective: ObjectiveId,
}

/// One LP of a verification group, together with the data needed to decode
/// its optimum back into signals.
#[derive(Clone, Debug)]
pub struct VerificationLp {
    pub problem: LpProblem,
    pub objective: ObjectiveId,
    pub layout: Arc<LpLayout>,
}

/// The aggregated optimum of one target's LP group.
#[derive(Clone, Debug)]
pub struct RhoResult {
    pub target: Target,
    pub value: RhoValue,
    /// Present exactly when the value is finite.
    pub witness: Option<Witness>,
    pub lp_count: usize,
    pub solve_time: Duration,
    /// Summed over the group's LPs (divide by `lp_count` for the averages).
    pub total_vars: usize,
    pub total_constraints: usize,
}

/// Outcome of a whole verification run.
#[derive(Clone, Debug)]
pub struct Report {
    pub results: Vec<RhoResult>,
    pub verdict: bool,
    pub total_time: Duration,
    pub tolerance: f64,
    pub mode: Mode,
    pub extendibility_asserted: bool,
    /// Conservative structural warnings (empty unless Assumption-1-style
    /// output dependences were found).
    pub warnings: Vec<Finding>,
}

impl Report {
    pub fn lp_groups(&self) -> usize {
        self.results.len()
    }

    pub fn rho_of(&self, target: Target) -> Option<RhoValue> {
        self.results
            .iter()
            .find(|r| r.target == target)
            .map(|r| r.value)
    }

    /// JSON form of the report: rho values with `"+inf"`/`"-inf"`
    /// sentinels, witnesses as time-indexed arrays keyed by node name,
    /// timings in milliseconds, and per-group LP statistics.
    pub fn to_json(&self, network: &Network) -> serde_json::Value {
        use serde_json::json;
        let target_name = |t: Target| match t {
            Target::Omega => "omega".to_string(),
            Target::Node(i) => format!("node:{}", network.node(i).name),
        };
        let rho_json = |v: RhoValue| match v {
            RhoValue::PosInf => json!("+inf"),
            RhoValue::NegInf => json!("-inf"),
            RhoValue::Finite(x) => json!(x),
        };
        let results: Vec<serde_json::Value> = self
            .results
            .iter()
            .map(|r| {
                let witness = r.witness.as_ref().map(|w| {
                    let nodes: serde_json::Map<String, serde_json::Value> = w
                        .nodes
                        .iter()
                        .map(|(&j, s)| {
                            (network.node(j).name.clone(), json!({ "d": s.d, "y": s.y }))
                        })
                        .collect();
                    json!({
                        "horizon": w.horizon,
                        "d_ext": w.d_ext,
                        "y_ext": w.y_ext,
                        "nodes": nodes,
                        "objective": {
                            "target": target_name(w.objective.target),
                            "block": w.objective.block,
                            "row": w.objective.row,
                            "time": w.objective.time,
                        },
                    })
                });
                json!({
                    "target": target_name(r.target),
                    "rho": rho_json(r.value),
                    "pass": r.value.passes(self.tolerance),
                    "lp_count": r.lp_count,
                    "solve_time_ms": r.solve_time.as_secs_f64() * 1e3,
                    "avg_vars": r.total_vars as f64 / r.lp_count.max(1) as f64,
                    "avg_constraints": r.total_constraints as f64 / r.lp_count.max(1) as f64,
                    "witness": witness,
                })
            })
            .collect();
        let warnings: Vec<String> = self
            .warnings
            .iter()
            .map(|w| match w {
                Finding::AlgebraicLoop { cycle } => format!("algebraic loop: {cycle:?}"),
                Finding::OutputDependentAssumption { node } => format!(
                    "node {} has output-dependent assumptions outside the output set",
                    network.node(*node).name
                ),
            })
            .collect();
        json!({
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "mode": self.mode,
            "extendibility_asserted": self.extendibility_asserted,
            "lp_groups": self.lp_groups(),
            "total_time_ms": self.total_time.as_secs_f64() * 1e3,
            "warnings": warnings,
            "results": results,
        })
    }
}

#[derive(Debug, Clone, Error)]
pub enum VerifyError {
    #[error("system contract reads {got} external inputs, the network provides {want}")]
    CtotInputDim { got: usize, want: usize },
    #[error("system contract constrains {got} external outputs, the network provides {want}")]
    CtotOutputDim { got: usize, want: usize },
    #[error("algebraic loop (cycle of non-strictly-causal edges): {cycle:?}")]
    AlgebraicLoop { cycle: Vec<(NodeId, NodeId)> },
    #[error(
        "node {node}: assumptions depend on its own output but the node is not an output node"
    )]
    OutputDependence { node: NodeId },
    #[error("cascade mode requires a feedback-less network; found cycle {cycle:?}")]
    CascadeNeedsDag { cycle: Vec<(NodeId, NodeId)> },
    #[error("not a two-system feedback topology: {msg}")]
    NotTwoSystem { msg: String },
    #[error("horizon {m} is below the maximum contract depth {need}")]
    HorizonTooShort { m: usize, need: usize },
    #[error("mode {mode:?} does not drive this builder")]
    WrongMode { mode: Mode },
    #[error(transparent)]
    Solver(#[from] SimplexError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("rho result carries no witness")]
    MissingWitness,
}

/// Inclusive time range `I_{lo, hi}`, empty when `hi < lo`.
fn times(lo: usize, hi: i64) -> Vec<usize> {
    if hi < lo as i64 {
        Vec::new()
    } else {
        (lo..=hi as usize).collect()
    }
}

/// The full constraint/objective schedule of one LP group. Shared between
/// the matrix builder and the witness validator, which walk it through
/// independent evaluation paths.
#[derive(Clone, Debug)]
struct GroupPlan {
    target: Target,
    horizon: usize,
    scope: Vec<NodeId>,
    consistency: Vec<NodeId>,
    /// (assumption block of c_tot, time)
    alpha_tot: Vec<(usize, usize)>,
    /// (node, guarantee block, time)
    gammas: Vec<(NodeId, usize, usize)>,
    objectives: Vec<ObjectiveId>,
}

fn plan_assumption_group(
    problem: &VerificationProblem,
    i: NodeId,
) -> Result<GroupPlan, VerifyError> {
    let net = &problem.network;
    let contract = &net.node(i).contract;
    let h = contract.assumption_depth() + problem.options.horizon_extension;

    let br = net.backward_reachable(i, EdgeFilter::All);
    let br_nsc = net.backward_reachable(i, EdgeFilter::NonStrictOnly);

    let mut scope: BTreeSet<NodeId> = br.clone();
    scope.insert(i);
    scope.extend(net.output_set().iter().copied());
    let mut consistency: BTreeSet<NodeId> = br.clone();
    consistency.insert(i);

    let mut alpha_tot = Vec::new();
    for (bi, block) in problem.c_tot.assumptions().iter().enumerate() {
        for t in times(block.depth(), h as i64) {
            alpha_tot.push((bi, t));
        }
    }

    let mut gammas = Vec::new();
    for &j in &br {
        let end: i64 = match problem.options.mode {
            Mode::Cascade => h as i64,
            _ => {
                if br_nsc.contains(&j) {
                    h as i64
                } else {
                    h as i64 - 1
                }
            }
        };
        for (bi, block) in net.node(j).contract.guarantees().iter().enumerate() {
            for t in times(block.depth(), end) {
                gammas.push((j, bi, t));
            }
        }
    }

    let mut objectives = Vec::new();
    for (bi, block) in contract.assumptions().iter().enumerate() {
        for row in 0..block.rows() {
            objectives.push(ObjectiveId {
                target: Target::Node(i),
                block: bi,
                row,
                time: h,
            });
        }
    }

    Ok(GroupPlan {
        target: Target::Node(i),
        horizon: h,
        scope: scope.into_iter().collect(),
        consistency: consistency.into_iter().collect(),
        alpha_tot,
        gammas,
        objectives,
    })
}

fn plan_guarantee_group(problem: &VerificationProblem) -> Result<GroupPlan, VerifyError> {
    let net = &problem.network;
    let h = problem.c_tot.guarantee_depth() + problem.options.horizon_extension;
    let all: Vec<NodeId> = (0..net.node_count()).collect();

    let mut alpha_tot = Vec::new();
    for (bi, block) in problem.c_tot.assumptions().iter().enumerate() {
        for t in times(block.depth(), h as i64) {
            alpha_tot.push((bi, t));
        }
    }
    let mut gammas = Vec::new();
    for &j in &all {
        for (bi, block) in net.node(j).contract.guarantees().iter().enumerate() {
            for t in times(block.depth(), h as i64) {
                gammas.push((j, bi, t));
            }
        }
    }
    let mut objectives = Vec::new();
    for (bi, block) in problem.c_tot.guarantees().iter().enumerate() {
        for row in 0..block.rows() {
            objectives.push(ObjectiveId {
                target: Target::Omega,
                block: bi,
                row,
                time: h,
            });
        }
    }
    Ok(GroupPlan {
        target: Target::Omega,
        horizon: h,
        scope: all.clone(),
        consistency: all,
        alpha_tot,
        gammas,
        objectives,
    })
}

/// The uniform-horizon two-system plans: objectives enumerated over every
/// admissible terminal time up to `m`.
fn plan_two_system(problem: &VerificationProblem, m: usize) -> Result<Vec<GroupPlan>, VerifyError> {
    let (plant, ctr) = problem.two_system_roles()?;
    let need = problem.max_depth();
    if m < need {
        return Err(VerifyError::HorizonTooShort { m, need });
    }
    let net = &problem.network;
    let scope: Vec<NodeId> = {
        let mut s = vec![plant, ctr];
        s.sort_unstable();
        s
    };

    let alpha_tot_upto = |end: i64| {
        let mut v = Vec::new();
        for (bi, block) in problem.c_tot.assumptions().iter().enumerate() {
            for t in times(block.depth(), end) {
                v.push((bi, t));
            }
        }
        v
    };
    let gamma_upto = |node: NodeId, end: i64| {
        let mut v = Vec::new();
        for (bi, block) in net.node(node).contract.guarantees().iter().enumerate() {
            for t in times(block.depth(), end) {
                v.push((node, bi, t));
            }
        }
        v
    };

    let mut plans = Vec::with_capacity(3);

    // rho_plant: assumptions of the plant; both guarantees stop one step
    // short of the terminal time.
    {
        let contract = &net.node(plant).contract;
        let mut objectives = Vec::new();
        for t in times(contract.assumption_depth(), m as i64) {
            for (bi, block) in contract.assumptions().iter().enumerate() {
                for row in 0..block.rows() {
                    objectives.push(ObjectiveId {
                        target: Target::Node(plant),
                        block: bi,
                        row,
                        time: t,
                    });
                }
            }
        }
        let mut gammas = gamma_upto(plant, m as i64 - 1);
        gammas.extend(gamma_upto(ctr, m as i64 - 1));
        plans.push(GroupPlan {
            target: Target::Node(plant),
            horizon: m,
            scope: scope.clone(),
            consistency: scope.clone(),
            alpha_tot: alpha_tot_upto(m as i64),
            gammas,
            objectives,
        });
    }

    // rho_controller: the plant's guarantees reach the terminal time (the
    // plant-to-controller edge is non-strictly causal), its own stop short.
    {
        let contract = &net.node(ctr).contract;
        let mut objectives = Vec::new();
        for t in times(contract.assumption_depth(), m as i64) {
            for (bi, block) in contract.assumptions().iter().enumerate() {
                for row in 0..block.rows() {
                    objectives.push(ObjectiveId {
                        target: Target::Node(ctr),
                        block: bi,
                        row,
                        time: t,
                    });
                }
            }
        }
        let mut gammas = gamma_upto(plant, m as i64);
        gammas.extend(gamma_upto(ctr, m as i64 - 1));
        plans.push(GroupPlan {
            target: Target::Node(ctr),
            horizon: m,
            scope: scope.clone(),
            consistency: scope.clone(),
            alpha_tot: alpha_tot_upto(m as i64),
            gammas,
            objectives,
        });
    }

    // rho_Omega: all guarantees available everywhere.
    {
        let mut objectives = Vec::new();
        for t in times(problem.c_tot.guarantee_depth(), m as i64) {
            for (bi, block) in problem.c_tot.guarantees().iter().enumerate() {
                for row in 0..block.rows() {
                    objectives.push(ObjectiveId {
                        target: Target::Omega,
                        block: bi,
                        row,
                        time: t,
                    });
                }
            }
        }
        let mut gammas = gamma_upto(plant, m as i64);
        gammas.extend(gamma_upto(ctr, m as i64));
        plans.push(GroupPlan {
            target: Target::Omega,
            horizon: m,
            scope: scope.clone(),
            consistency: scope,
            alpha_tot: alpha_tot_upto(m as i64),
            gammas,
            objectives,
        });
    }

    Ok(plans)
}

/// Scatters one block row into a dense LP row at terminal time `time`.
fn scatter_block_row(
    row_out: &mut [f64],
    block: &InequalityBlock,
    kind: BlockKind,
    row: usize,
    time: usize,
    d_dim: usize,
    y_dim: usize,
    d_index: &dyn Fn(usize, usize) -> usize,
    y_index: &dyn Fn(usize, usize) -> usize,
) {
    let m = block.depth();
    let cd = block.coeff_d().row(row);
    for slot in 0..=m {
        let t = time - m + slot;
        for c in 0..d_dim {
            let v = cd[slot * d_dim + c];
            if v != 0.0 {
                row_out[d_index(t, c)] += v;
            }
        }
    }
    let w = kind.y_window_len(m);
    let cy = block.coeff_y().row(row);
    for slot in 0..w {
        let t = time - m + slot;
        for c in 0..y_dim {
            let v = cy[slot * y_dim + c];
            if v != 0.0 {
                row_out[y_index(t, c)] += v;
            }
        }
    }
}

/// Lowers a plan to its LP group: the shared constraint matrices plus one
/// problem per objective row.
fn lower_plan(
    problem: &VerificationProblem,
    plan: &GroupPlan,
) -> Result<Vec<VerificationLp>, VerifyError> {
    if plan.objectives.is_empty() {
        return Ok(Vec::new());
    }
    let net = &problem.network;
    let layout = Arc::new(LpLayout::new(net, &plan.scope, plan.horizon));
    let n_vars = layout.n_vars();

    // Interconnection identities.
    let mut eq_rows: Vec<Vec<f64>> = Vec::new();
    for &j in &plan.consistency {
        let node = net.node(j);
        let n_d = node.contract.n_d();
        for t in 0..=plan.horizon {
            for c in 0..n_d {
                let mut row = vec![0.0; n_vars];
                row[layout.d_node(j, t, c)] = 1.0;
                for &src in net.predecessors(j) {
                    if let Some(f) = net.f(j, src) {
                        for q in 0..f.cols() {
                            let v = f.get(c, q);
                            if v != 0.0 {
                                row[layout.y_node(src, t, q)] -= v;
                            }
                        }
                    }
                }
                let e = net.e(j);
                for q in 0..e.cols() {
                    let v = e.get(c, q);
                    if v != 0.0 {
                        row[layout.d_ext(t, q)] -= v;
                    }
                }
                eq_rows.push(row);
            }
        }
    }
    for t in 0..=plan.horizon {
        for c in 0..net.n_y_ext() {
            let mut row = vec![0.0; n_vars];
            row[layout.y_ext(t, c)] = 1.0;
            for &j in net.output_set() {
                if let Some(h) = net.h(j) {
                    for q in 0..h.cols() {
                        let v = h.get(c, q);
                        if v != 0.0 {
                            row[layout.y_node(j, t, q)] -= v;
                        }
                    }
                }
            }
            eq_rows.push(row);
        }
    }
    let eq_rhs = vec![0.0; eq_rows.len()];

    // Premise inequalities.
    let mut ineq_rows: Vec<Vec<f64>> = Vec::new();
    let mut ineq_rhs: Vec<f64> = Vec::new();
    for &(bi, t) in &plan.alpha_tot {
        let block = &problem.c_tot.assumptions()[bi];
        for r in 0..block.rows() {
            let mut row = vec![0.0; n_vars];
            scatter_block_row(
                &mut row,
                block,
                BlockKind::Assumption,
                r,
                t,
                net.n_d_ext_total(),
                net.n_y_ext(),
                &|tt, c| layout.d_ext(tt, c),
                &|tt, c| layout.y_ext(tt, c),
            );
            ineq_rows.push(row);
            ineq_rhs.push(block.rhs()[r]);
        }
    }
    for &(j, bi, t) in &plan.gammas {
        let contract = &net.node(j).contract;
        let block = &contract.guarantees()[bi];
        for r in 0..block.rows() {
            let mut row = vec![0.0; n_vars];
            scatter_block_row(
                &mut row,
                block,
                BlockKind::Guarantee,
                r,
                t,
                contract.n_d(),
                contract.n_y(),
                &|tt, c| layout.d_node(j, tt, c),
                &|tt, c| layout.y_node(j, tt, c),
            );
            ineq_rows.push(row);
            ineq_rhs.push(block.rhs()[r]);
        }
    }

    let eq_lhs = Mat::from_rows(&eq_rows).expect("uniform equality rows");
    let ineq_lhs = if ineq_rows.is_empty() {
        Mat::zeros(0, n_vars)
    } else {
        Mat::from_rows(&ineq_rows).expect("uniform inequality rows")
    };
    let names = layout.var_names(net);

    let mut lps = Vec::with_capacity(plan.objectives.len());
    for &objective_id in &plan.objectives {
        let mut objective = vec![0.0; n_vars];
        let (block, kind, d_dim, y_dim): (&InequalityBlock, BlockKind, usize, usize) =
            match objective_id.target {
                Target::Omega => (
                    &problem.c_tot.guarantees()[objective_id.block],
                    BlockKind::Guarantee,
                    net.n_d_ext_total(),
                    net.n_y_ext(),
                ),
                Target::Node(i) => (
                    &net.node(i).contract.assumptions()[objective_id.block],
                    BlockKind::Assumption,
                    net.node(i).contract.n_d(),
                    net.node(i).contract.n_y(),
                ),
            };
        match objective_id.target {
            Target::Omega => scatter_block_row(
                &mut objective,
                block,
                kind,
                objective_id.row,
                objective_id.time,
                d_dim,
                y_dim,
                &|t, c| layout.d_ext(t, c),
                &|t, c| layout.y_ext(t, c),
            ),
            Target::Node(i) => scatter_block_row(
                &mut objective,
                block,
                kind,
                objective_id.row,
                objective_id.time,
                d_dim,
                y_dim,
                &|t, c| layout.d_node(i, t, c),
                &|t, c| layout.y_node(i, t, c),
            ),
        }
        let problem_lp = LpProblem {
            n_vars,
            objective,
            objective_offset: -block.rhs()[objective_id.row],
            eq_lhs: eq_lhs.clone(),
            eq_rhs: eq_rhs.clone(),
            ineq_lhs: ineq_lhs.clone(),
            ineq_rhs: ineq_rhs.clone(),
            var_names: Some(names.clone()),
        };
        lps.push(VerificationLp {
            problem: problem_lp,
            objective: objective_id,
            layout: Arc::clone(&layout),
        });
    }
    Ok(lps)
}

/// Builds the LP group certifying node `i`'s assumptions, honoring the
/// problem's mode (`General` feedback windows or `Cascade` uniform ones).
pub fn build_assumption_lps(
    problem: &VerificationProblem,
    i: NodeId,
) -> Result<Vec<VerificationLp>, VerifyError> {
    if problem.options.mode == Mode::TwoSystemFeedback {
        return Err(VerifyError::WrongMode {
            mode: problem.options.mode,
        });
    }
    let plan = plan_assumption_group(problem, i)?;
    lower_plan(problem, &plan)
}

/// Builds the LP group certifying the system-level guarantee rows.
pub fn build_guarantee_lps(
    problem: &VerificationProblem,
) -> Result<Vec<VerificationLp>, VerifyError> {
    if problem.options.mode == Mode::TwoSystemFeedback {
        return Err(VerifyError::WrongMode {
            mode: problem.options.mode,
        });
    }
    let plan = plan_guarantee_group(problem)?;
    lower_plan(problem, &plan)
}

/// Builds the three uniform-horizon groups (plant, controller, system) of
/// the two-system feedback formulation at horizon `m`.
pub fn build_two_system_feedback_lps(
    problem: &VerificationProblem,
    m: usize,
) -> Result<Vec<(Target, Vec<VerificationLp>)>, VerifyError> {
    let plans = plan_two_system(problem, m)?;
    plans
        .iter()
        .map(|p| Ok((p.target, lower_plan(problem, p)?)))
        .collect()
}

/// Max-aggregation over a group's LP outcomes: optimal values contribute,
/// any unbounded program forces `+inf`, no contributing program at all
/// (empty group or every premise infeasible) yields `-inf`.
fn aggregate(outcomes: &[LpOutcome]) -> (RhoValue, Option<usize>) {
    let mut best: Option<(usize, f64)> = None;
    for (idx, out) in outcomes.iter().enumerate() {
        match out {
            LpOutcome::Unbounded => return (RhoValue::PosInf, None),
            LpOutcome::Infeasible => {}
            LpOutcome::Optimal { value, .. } => {
                if best.is_none_or(|(_, bv)| *value > bv) {
                    best = Some((idx, *value));
                }
            }
        }
    }
    match best {
        Some((idx, v)) => (RhoValue::Finite(v), Some(idx)),
        None => (RhoValue::NegInf, None),
    }
}

/// Solves a group and aggregates it into a [`RhoResult`].
pub fn compute_rho(
    network: &Network,
    target: Target,
    lps: &[VerificationLp],
    simplex_options: &SimplexOptions,
) -> Result<RhoResult, VerifyError> {
    let start = Instant::now();
    let mut outcomes = Vec::with_capacity(lps.len());
    for lp in lps {
        let out = simplex::solve_with(&lp.problem, simplex_options)?;
        let unbounded = matches!(out, LpOutcome::Unbounded);
        outcomes.push(out);
        if unbounded {
            break;
        }
    }
    let (value, argmax) = aggregate(&outcomes);
    let witness = argmax.map(|idx| {
        let point = outcomes[idx].point().expect("argmax is optimal");
        let lp = &lps[idx];
        let (d_ext, y_ext, nodes) = lp.layout.decode(network, point);
        Witness {
            horizon: lp.layout.horizon(),
            d_ext,
            y_ext,
            nodes,
            objective: lp.objective,
        }
    });
    Ok(RhoResult {
        target,
        value,
        witness,
        lp_count: lps.len(),
        solve_time: start.elapsed(),
        total_vars: lps.iter().map(|l| l.problem.n_vars).sum(),
        total_constraints: lps.iter().map(|l| l.problem.n_constraints()).sum(),
    })
}

/// Runs the whole verification: one LP group per node plus the system
/// group (or the three two-system groups), solved in parallel, aggregated
/// into a report with the verdict `all rho <= tolerance`.
pub fn verify(problem: &VerificationProblem) -> Result<Report, VerifyError> {
    let start = Instant::now();
    let findings = problem.network.check_assumptions();
    let mut warnings = Vec::new();
    for f in findings {
        match f {
            Finding::AlgebraicLoop { cycle } => return Err(VerifyError::AlgebraicLoop { cycle }),
            Finding::OutputDependentAssumption { node } => {
                if problem.options.strict_assumption_check {
                    return Err(VerifyError::OutputDependence { node });
                }
                warnings.push(Finding::OutputDependentAssumption { node });
            }
        }
    }

    let results: Result<Vec<RhoResult>, VerifyError> = match problem.options.mode {
        Mode::General | Mode::Cascade => {
            let mut targets: Vec<Target> = (0..problem.network.node_count())
                .map(Target::Node)
                .collect();
            targets.push(Target::Omega);
            targets
                .into_par_iter()
                .map(|target| {
                    let lps = match target {
                        Target::Node(i) => build_assumption_lps(problem, i)?,
                        Target::Omega => build_guarantee_lps(problem)?,
                    };
                    compute_rho(&problem.network, target, &lps, &problem.options.simplex)
                })
                .collect()
        }
        Mode::TwoSystemFeedback => {
            let m = problem.max_depth() + problem.options.horizon_extension;
            let groups = build_two_system_feedback_lps(problem, m)?;
            groups
                .into_par_iter()
                .map(|(target, lps)| {
                    compute_rho(&problem.network, target, &lps, &problem.options.simplex)
                })
                .collect()
        }
    };
    let results = results?;

    let verdict = results
        .iter()
        .all(|r| r.value.passes(problem.options.tolerance));
    Ok(Report {
        results,
        verdict,
        total_time: start.elapsed(),
        tolerance: problem.options.tolerance,
        mode: problem.options.mode,
        extendibility_asserted: problem.options.extendibility_asserted,
        warnings,
    })
}

/// Certifies a finite rho against the problem itself, independently of the
/// LP matrices: every premise constraint of the target's plan is
/// re-evaluated on the witness signals through the contract evaluators and
/// wiring residuals, and the objective row must reproduce `rho.value`.
pub fn validate_witness(
    problem: &VerificationProblem,
    rho: &RhoResult,
) -> Result<bool, VerifyError> {
    let witness = rho.witness.as_ref().ok_or(VerifyError::MissingWitness)?;
    let value = rho.value.finite().ok_or(VerifyError::MissingWitness)?;
    let tol = problem.options.tolerance;
    let net = &problem.network;

    let plan = match problem.options.mode {
        Mode::TwoSystemFeedback => plan_two_system(problem, witness.horizon)?
            .into_iter()
            .find(|p| p.target == rho.target)
            .ok_or(VerifyError::MissingWitness)?,
        _ => match rho.target {
            Target::Node(i) => plan_assumption_group(problem, i)?,
            Target::Omega => plan_guarantee_group(problem)?,
        },
    };
    if plan.horizon != witness.horizon {
        return Ok(false);
    }

    // Interconnection residuals.
    for &j in &plan.consistency {
        let node = net.node(j);
        let signals = match witness.nodes.get(&j) {
            Some(s) => s,
            None => return Ok(false),
        };
        for t in 0..=plan.horizon {
            for c in 0..node.contract.n_d() {
                let mut expect = 0.0;
                for &src in net.predecessors(j) {
                    if let Some(f) = net.f(j, src) {
                        let y_src = match witness.nodes.get(&src) {
                            Some(s) => &s.y[t],
                            None => return Ok(false),
                        };
                        expect += dot(f.row(c), y_src);
                    }
                }
                let e = net.e(j);
                for q in 0..e.cols() {
                    expect += e.get(c, q) * witness.d_ext[t][q];
                }
                if (signals.d[t][c] - expect).abs() > tol {
                    return Ok(false);
                }
            }
        }
    }
    for t in 0..=plan.horizon {
        for c in 0..net.n_y_ext() {
            let mut expect = 0.0;
            for &j in net.output_set() {
                if let Some(h) = net.h(j) {
                    let y_j = match witness.nodes.get(&j) {
                        Some(s) => &s.y[t],
                        None => return Ok(false),
                    };
                    expect += dot(h.row(c), y_j);
                }
            }
            if (witness.y_ext[t][c] - expect).abs() > tol {
                return Ok(false);
            }
        }
    }

    let window = |signal: &[Vec<f64>],
                  dim: usize,
                  t: usize,
                  steps: usize|
     -> Result<SignalWindow, ContractError> {
        SignalWindow::from_steps(dim, &signal[t + 1 - steps..=t])
    };

    // Premise inequalities through the block evaluators.
    for &(bi, t) in &plan.alpha_tot {
        let block = &problem.c_tot.assumptions()[bi];
        let m = block.depth();
        let d_win = window(&witness.d_ext, net.n_d_ext_total(), t, m + 1)?;
        let y_win = if m == 0 {
            SignalWindow::empty(net.n_y_ext())
        } else {
            SignalWindow::from_steps(net.n_y_ext(), &witness.y_ext[t - m..t])?
        };
        for v in block.residuals(BlockKind::Assumption, &d_win, &y_win)? {
            if v > tol {
                return Ok(false);
            }
        }
    }
    for &(j, bi, t) in &plan.gammas {
        let contract = &net.node(j).contract;
        let block = &contract.guarantees()[bi];
        let m = block.depth();
        let signals = match witness.nodes.get(&j) {
            Some(s) => s,
            None => return Ok(false),
        };
        let d_win = window(&signals.d, contract.n_d(), t, m + 1)?;
        let y_win = window(&signals.y, contract.n_y(), t, m + 1)?;
        for v in block.residuals(BlockKind::Guarantee, &d_win, &y_win)? {
            if v > tol {
                return Ok(false);
            }
        }
    }

    // The violated (or boundary) conclusion row reproduces the rho value.
    let oid = &witness.objective;
    let achieved = match oid.target {
        Target::Omega => {
            let block = &problem.c_tot.guarantees()[oid.block];
            let m = block.depth();
            let d_win = window(&witness.d_ext, net.n_d_ext_total(), oid.time, m + 1)?;
            let y_win = window(&witness.y_ext, net.n_y_ext(), oid.time, m + 1)?;
            block.row_residual(BlockKind::Guarantee, oid.row, &d_win, &y_win)
        }
        Target::Node(i) => {
            let contract = &net.node(i).contract;
            let block = &contract.assumptions()[oid.block];
            let m = block.depth();
            let signals = match witness.nodes.get(&i) {
                Some(s) => s,
                None => return Ok(false),
            };
            let d_win = window(&signals.d, contract.n_d(), oid.time, m + 1)?;
            let y_win = if m == 0 {
                SignalWindow::empty(contract.n_y())
            } else {
                SignalWindow::from_steps(contract.n_y(), &signals.y[oid.time - m..oid.time])?
            };
            block.row_residual(BlockKind::Assumption, oid.row, &d_win, &y_win)
        }
    };
    Ok((achieved - value).abs() <= 1e-6)
}
