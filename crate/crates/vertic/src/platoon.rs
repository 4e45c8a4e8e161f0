//! The M-vehicle platooning case study: contract factory, closed-loop
//! simulator, and trajectory-level guarantee checks.
//!
//! A leader (vehicle 1) and `M-1` followers drive in a lane. Each follower
//! is split into a *physical* node (input: predecessor position/velocity
//! plus the control signal; output: own position/velocity) and a
//! *controller* node (input: both vehicles' states; output: the control
//! signal). The physical guarantees never read the current control input,
//! so the controller-to-plant edges are strictly causal and the network has
//! no algebraic loops despite the feedback.
//!
//! The system-level contract assumes the leader follows the kinematic law
//! within its speed limit and guarantees every follower keeps the time
//! headway `h` and its own speed limit. All quantities are SI (m, m/s,
//! m/s^2); use [`kmh`] at the boundary.

use crate::contracts::{BlockBuilder, ContractRef, LtiRdContract};
use crate::network::{Network, NodeId};
use crate::verification::{VerificationProblem, VerifyOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io;
use std::sync::Arc;
use thiserror::Error;

/// km/h to m/s.
pub fn kmh(v: f64) -> f64 {
    v * 1000.0 / 3600.0
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlatoonParams {
    /// Total vehicle count M (leader plus M-1 followers).
    pub vehicles: usize,
    /// Discrete time step in seconds.
    pub dt: f64,
    /// Time headway h in seconds.
    pub headway: f64,
    /// Leader speed limit in m/s.
    pub v_max_leader: f64,
    /// Follower speed limit in m/s.
    pub v_max_follower: f64,
    /// Parasitic acceleration bound omega_acc in m/s^2.
    pub accel_bound: f64,
}

impl PlatoonParams {
    /// Case-study defaults: dt 1 s, h 2 s, limits 110/100 km/h, 0.3 m/s^2.
    pub fn new(vehicles: usize) -> Self {
        PlatoonParams {
            vehicles,
            dt: 1.0,
            headway: 2.0,
            v_max_leader: kmh(110.0),
            v_max_follower: kmh(100.0),
            accel_bound: 0.3,
        }
    }

    pub fn validate(&self) -> Result<(), PlatoonError> {
        if self.vehicles < 2 {
            return Err(PlatoonError::Invalid {
                msg: format!("need at least 2 vehicles, got {}", self.vehicles),
            });
        }
        for (name, v) in [
            ("dt", self.dt),
            ("headway", self.headway),
            ("v_max_leader", self.v_max_leader),
            ("v_max_follower", self.v_max_follower),
            ("accel_bound", self.accel_bound),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(PlatoonError::Invalid {
                    msg: format!("{name} must be positive, got {v}"),
                });
            }
        }
        // The controller's admissible interval must be nonempty:
        // (V^f - v)/dt - w >= -v/dt + w for all v.
        if self.v_max_follower <= 2.0 * self.accel_bound * self.dt {
            return Err(PlatoonError::Invalid {
                msg: "follower speed limit leaves no admissible control interval".into(),
            });
        }
        Ok(())
    }
}

/// Contract of a follower's physical node. Input `[p_prev, v_prev, u]`,
/// output `[p, v]`.
pub fn physical_contract(params: &PlatoonParams) -> LtiRdContract {
    let (dt, h, w) = (params.dt, params.headway, params.accel_bound);
    let vf = params.v_max_follower;
    // Assumptions: the predecessor moves kinematically, and the control
    // applied at k-1 respected the headway/speed envelopes of the k-1
    // state. The lag keeps the window strictly recursive (outputs enter
    // only at k-1).
    let assumption = BlockBuilder::assumption(1, 3, 2)
        .row(0.0)
        .d(0, 0, 1.0)
        .d(1, 0, -1.0)
        .d(1, 1, -dt)
        .row(0.0)
        .d(0, 0, -1.0)
        .d(1, 0, 1.0)
        .d(1, 1, dt)
        .row(-w)
        .d(1, 2, 1.0)
        .d(1, 0, -1.0 / (h * dt))
        .d(1, 1, -1.0 / h)
        .y(1, 0, 1.0 / (h * dt))
        .y(1, 1, 1.0 / dt + 1.0 / h)
        .row(-w)
        .d(1, 2, -1.0)
        .y(1, 1, -1.0 / dt)
        .row(vf / dt - w)
        .d(1, 2, 1.0)
        .y(1, 1, 1.0 / dt)
        .build();
    // Guarantees: headway and speed band now, own kinematics over one step.
    let envelope = BlockBuilder::guarantee(0, 3, 2)
        .row(0.0)
        .y(0, 0, 1.0)
        .y(0, 1, h)
        .d(0, 0, -1.0)
        .row(vf)
        .y(0, 1, 1.0)
        .row(0.0)
        .y(0, 1, -1.0)
        .build();
    let kinematics = BlockBuilder::guarantee(1, 3, 2)
        .row(0.0)
        .y(0, 0, 1.0)
        .y(1, 0, -1.0)
        .y(1, 1, -dt)
        .row(0.0)
        .y(0, 0, -1.0)
        .y(1, 0, 1.0)
        .y(1, 1, dt)
        .build();
    LtiRdContract::new(3, 2, vec![assumption], vec![envelope, kinematics], "phy")
        .expect("valid contract")
}

/// Contract of a follower's controller node. Input
/// `[p_prev, v_prev, p, v]`, output `[u]`.
pub fn controller_contract(params: &PlatoonParams) -> LtiRdContract {
    let (dt, h, w) = (params.dt, params.headway, params.accel_bound);
    let (vl, vf) = (params.v_max_leader, params.v_max_follower);
    let assumption = BlockBuilder::assumption(1, 4, 1)
        .row(0.0)
        .d(0, 0, 1.0)
        .d(1, 0, -1.0)
        .d(1, 1, -dt)
        .row(0.0)
        .d(0, 0, -1.0)
        .d(1, 0, 1.0)
        .d(1, 1, dt)
        .row(0.0)
        .d(0, 2, 1.0)
        .d(1, 2, -1.0)
        .d(1, 3, -dt)
        .row(0.0)
        .d(0, 2, -1.0)
        .d(1, 2, 1.0)
        .d(1, 3, dt)
        .row(vl)
        .d(0, 1, 1.0)
        .row(0.0)
        .d(0, 1, -1.0)
        .row(vf)
        .d(0, 3, 1.0)
        .row(0.0)
        .d(0, 3, -1.0)
        .build();
    let bounds = BlockBuilder::guarantee(0, 4, 1)
        .row(-w)
        .y(0, 0, 1.0)
        .d(0, 0, -1.0 / (h * dt))
        .d(0, 1, -1.0 / h)
        .d(0, 2, 1.0 / (h * dt))
        .d(0, 3, 1.0 / dt + 1.0 / h)
        .row(-w)
        .y(0, 0, -1.0)
        .d(0, 3, -1.0 / dt)
        .row(vf / dt - w)
        .y(0, 0, 1.0)
        .d(0, 3, 1.0 / dt)
        .build();
    LtiRdContract::new(4, 1, vec![assumption], vec![bounds], "ctr").expect("valid contract")
}

/// System-level contract on the follower convoy. Input `[p_1, v_1]`,
/// output `[p_2, v_2, ..., p_M, v_M]`.
pub fn total_contract(params: &PlatoonParams) -> LtiRdContract {
    let m = params.vehicles;
    let (dt, h) = (params.dt, params.headway);
    let n_y = 2 * (m - 1);
    let assumption = BlockBuilder::assumption(1, 2, n_y)
        .row(0.0)
        .d(0, 0, 1.0)
        .d(1, 0, -1.0)
        .d(1, 1, -dt)
        .row(0.0)
        .d(0, 0, -1.0)
        .d(1, 0, 1.0)
        .d(1, 1, dt)
        .row(params.v_max_leader)
        .d(0, 1, 1.0)
        .row(0.0)
        .d(0, 1, -1.0)
        .build();
    let mut g = BlockBuilder::guarantee(0, 2, n_y);
    for f in 0..m - 1 {
        // Headway against the predecessor (external leader for the first
        // follower, the previous follower otherwise).
        g = g.row(0.0).y(0, 2 * f, 1.0).y(0, 2 * f + 1, h);
        g = if f == 0 {
            g.d(0, 0, -1.0)
        } else {
            g.y(0, 2 * (f - 1), -1.0)
        };
        g = g.row(params.v_max_follower).y(0, 2 * f + 1, 1.0);
        g = g.row(0.0).y(0, 2 * f + 1, -1.0);
    }
    LtiRdContract::new(2, n_y, vec![assumption], vec![g.build()], "tot").expect("valid contract")
}

/// Node ids of the generated network, `(physical, controller)` per
/// follower in convoy order.
pub fn follower_nodes(params: &PlatoonParams) -> Vec<(NodeId, NodeId)> {
    (0..params.vehicles - 1)
        .map(|f| (2 * f, 2 * f + 1))
        .collect()
}

/// Builds the full verification problem for an M-vehicle platoon.
pub fn build_platoon(params: &PlatoonParams) -> Result<VerificationProblem, PlatoonError> {
    build_platoon_with(params, VerifyOptions::default())
}

pub fn build_platoon_with(
    params: &PlatoonParams,
    options: VerifyOptions,
) -> Result<VerificationProblem, PlatoonError> {
    params.validate()?;
    let m = params.vehicles;
    let phy: ContractRef = Arc::new(physical_contract(params));
    let ctr: ContractRef = Arc::new(controller_contract(params));

    let mut b = Network::builder();
    let mut ids = Vec::new();
    for r in 2..=m {
        // The leader state [p_1, v_1] is the only external input; the
        // first follower's plant contributes the slice and its controller
        // reads the same coordinates.
        let ext = if r == 2 { 2 } else { 0 };
        let p = b.add_node(format!("veh{r}.phy"), Arc::clone(&phy), ext);
        let c = b.add_node(format!("veh{r}.ctr"), Arc::clone(&ctr), 0);
        ids.push((p, c));
    }
    for (f, &(p, c)) in ids.iter().enumerate() {
        use crate::network::InputSource::{External, ExternalAt, NodeOutput};
        let pred = if f == 0 { None } else { Some(ids[f - 1].0) };
        match pred {
            None => {
                b.stack_inputs(p, &[External(2), NodeOutput(c)])?;
                b.stack_inputs(c, &[ExternalAt { offset: 0, len: 2 }, NodeOutput(p)])?;
            }
            Some(prev_phy) => {
                b.stack_inputs(p, &[NodeOutput(prev_phy), NodeOutput(c)])?;
                b.stack_inputs(c, &[NodeOutput(prev_phy), NodeOutput(p)])?;
            }
        }
    }
    b.stack_outputs(&ids.iter().map(|&(p, _)| p).collect::<Vec<_>>())?;
    let network = b.build()?;
    let c_tot: ContractRef = Arc::new(total_contract(params));
    Ok(VerificationProblem::new(network, c_tot, options)?)
}

/// One phase of the leader's speed schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeaderSegment {
    pub steps: usize,
    /// Target speed in m/s.
    pub target_speed: f64,
    /// Largest speed change per second in m/s^2.
    pub max_slew: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeaderProfile {
    pub initial_speed: f64,
    pub segments: Vec<LeaderSegment>,
}

impl LeaderProfile {
    pub fn constant(speed: f64) -> Self {
        LeaderProfile {
            initial_speed: speed,
            segments: Vec::new(),
        }
    }

    /// The case-study scenario: hold 95 km/h for 100 s, then brake and
    /// accelerate hard between 95 and 10 km/h, then ramp slowly to
    /// 105 km/h.
    pub fn scenario() -> Self {
        let mut segments = vec![LeaderSegment {
            steps: 100,
            target_speed: kmh(95.0),
            max_slew: 3.0,
        }];
        for _ in 0..4 {
            segments.push(LeaderSegment {
                steps: 12,
                target_speed: kmh(10.0),
                max_slew: 3.0,
            });
            segments.push(LeaderSegment {
                steps: 13,
                target_speed: kmh(95.0),
                max_slew: 3.0,
            });
        }
        segments.push(LeaderSegment {
            steps: 100,
            target_speed: kmh(105.0),
            max_slew: 0.3,
        });
        LeaderProfile {
            initial_speed: kmh(95.0),
            segments,
        }
    }

    /// Speed samples for `steps` steps, slew-limited and clamped to
    /// `[0, cap]`. Holds the last speed once the segments are exhausted.
    pub fn speeds(&self, steps: usize, dt: f64, cap: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(steps);
        let mut v = self.initial_speed.clamp(0.0, cap);
        let mut seg_iter = self.segments.iter();
        let mut current = seg_iter.next();
        let mut left = current.map_or(0, |s| s.steps);
        for _ in 0..steps {
            out.push(v);
            while left == 0 {
                current = seg_iter.next();
                match current {
                    Some(s) => left = s.steps,
                    None => break,
                }
            }
            if let Some(s) = current {
                if left > 0 {
                    let delta = (s.target_speed - v).clamp(-s.max_slew * dt, s.max_slew * dt);
                    v = (v + delta).clamp(0.0, cap);
                    left -= 1;
                }
            }
        }
        out
    }
}

/// A simulated run. Vehicles are indexed 0 (leader) to M-1; followers also
/// appear in the control/noise tables at index `vehicle - 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub seed: u64,
    pub rng_algorithm: String,
    pub steps: usize,
    /// `positions[vehicle][step]` in meters.
    pub positions: Vec<Vec<f64>>,
    /// `velocities[vehicle][step]` in m/s.
    pub velocities: Vec<Vec<f64>>,
    /// `controls[follower][step]` in m/s^2.
    pub controls: Vec<Vec<f64>>,
    /// `noise[follower][step]` in m/s^2; the final sample is unused and 0.
    pub noise: Vec<Vec<f64>>,
    /// Steps at which min(upper bounds) fell below the lower bound;
    /// `(step, vehicle)` with 1-based vehicle numbering.
    pub infeasible_steps: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub steps: usize,
    pub seed: u64,
    pub leader: LeaderProfile,
    /// Initial bumper gap between consecutive vehicles in meters.
    pub initial_gap: f64,
    /// Initial follower speed in m/s.
    pub follower_speed: f64,
    /// Suppress the acceleration noise (draws become exactly 0).
    pub zero_noise: bool,
}

impl SimConfig {
    /// The default scenario: 80 m gaps, followers at 98 km/h, the
    /// three-phase leader schedule.
    pub fn scenario(steps: usize, seed: u64) -> Self {
        SimConfig {
            steps,
            seed,
            leader: LeaderProfile::scenario(),
            initial_gap: 80.0,
            follower_speed: kmh(98.0),
            zero_noise: false,
        }
    }
}

/// Runs the closed-loop simulation of the default scenario with the
/// saturating controller.
pub fn simulate(
    params: &PlatoonParams,
    steps: usize,
    seed: u64,
    leader: &LeaderProfile,
) -> Result<Trajectory, PlatoonError> {
    let mut config = SimConfig::scenario(steps, seed);
    config.leader = leader.clone();
    simulate_config(params, &config)
}

pub fn simulate_config(
    params: &PlatoonParams,
    config: &SimConfig,
) -> Result<Trajectory, PlatoonError> {
    params.validate()?;
    if config.steps == 0 {
        return Err(PlatoonError::Invalid {
            msg: "steps must be at least 1".into(),
        });
    }
    let m = params.vehicles;
    let steps = config.steps;
    let (dt, h, w) = (params.dt, params.headway, params.accel_bound);
    let leader_speeds = config.leader.speeds(steps, dt, params.v_max_leader);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut positions = vec![vec![0.0; steps]; m];
    let mut velocities = vec![vec![0.0; steps]; m];
    let mut controls = vec![vec![0.0; steps]; m - 1];
    let mut noise = vec![vec![0.0; steps]; m - 1];
    let mut infeasible = Vec::new();

    for i in 0..m {
        positions[i][0] = -(i as f64) * config.initial_gap;
        velocities[i][0] = if i == 0 {
            leader_speeds[0]
        } else {
            config.follower_speed
        };
    }

    for k in 0..steps {
        velocities[0][k] = leader_speeds[k];
        // Saturating controller: the minimum of the two upper bounds,
        // floored at the lower bound (flagged when that floor is needed).
        for f in 0..m - 1 {
            let i = f + 1;
            let (pp, vp) = (positions[i - 1][k], velocities[i - 1][k]);
            let (p, v) = (positions[i][k], velocities[i][k]);
            let ub1 = (pp - p - h * v) / (h * dt) + (vp - v) / h - w;
            let ub2 = (params.v_max_follower - v) / dt - w;
            let lb = -v / dt + w;
            let mut u = ub1.min(ub2);
            if u < lb {
                infeasible.push((k, i + 1));
                u = lb;
            }
            controls[f][k] = u;
        }
        if k + 1 == steps {
            break;
        }
        for f in 0..m - 1 {
            noise[f][k] = if config.zero_noise {
                0.0
            } else {
                w * (2.0 * rng.gen::<f64>() - 1.0)
            };
        }
        for i in 0..m {
            positions[i][k + 1] = positions[i][k] + dt * velocities[i][k];
        }
        for f in 0..m - 1 {
            let i = f + 1;
            velocities[i][k + 1] = velocities[i][k] + dt * (controls[f][k] + noise[f][k]);
        }
    }

    Ok(Trajectory {
        dt,
        seed: config.seed,
        rng_algorithm: "chacha8".into(),
        steps,
        positions,
        velocities,
        controls,
        noise,
        infeasible_steps: infeasible,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Headway,
    SpeedBelowZero,
    SpeedAboveMax,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    /// 1-based vehicle number (the leader is vehicle 1).
    pub vehicle: usize,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuaranteeCheck {
    pub ok: bool,
    pub first_violation: Option<Violation>,
}

/// Checks the composite guarantees on every step of a trajectory:
/// headway `p_{r-1} - p_r - h v_r >= 0` and `0 <= v_r <= V_max^f` for
/// every follower, within an absolute tolerance of 1e-9.
pub fn check_trajectory_guarantees(traj: &Trajectory, params: &PlatoonParams) -> GuaranteeCheck {
    const TOL: f64 = 1e-9;
    let m = traj.positions.len();
    for k in 0..traj.steps {
        for i in 1..m {
            let headway = traj.positions[i - 1][k]
                - traj.positions[i][k]
                - params.headway * traj.velocities[i][k];
            let v = traj.velocities[i][k];
            let kind = if headway < -TOL {
                Some(ViolationKind::Headway)
            } else if v < -TOL {
                Some(ViolationKind::SpeedBelowZero)
            } else if v > params.v_max_follower + TOL {
                Some(ViolationKind::SpeedAboveMax)
            } else {
                None
            };
            if let Some(kind) = kind {
                return GuaranteeCheck {
                    ok: false,
                    first_violation: Some(Violation {
                        step: k,
                        vehicle: i + 1,
                        kind,
                    }),
                };
            }
        }
    }
    GuaranteeCheck {
        ok: true,
        first_violation: None,
    }
}

/// The trajectory's external signals in the system contract's layout:
/// `d_ext = [p_1, v_1]`, `y_ext = [p_2, v_2, ..., p_M, v_M]`.
pub fn trajectory_ext_signals(traj: &Trajectory) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = traj.positions.len();
    let d_ext = (0..traj.steps)
        .map(|k| vec![traj.positions[0][k], traj.velocities[0][k]])
        .collect();
    let y_ext = (0..traj.steps)
        .map(|k| {
            let mut row = Vec::with_capacity(2 * (m - 1));
            for i in 1..m {
                row.push(traj.positions[i][k]);
                row.push(traj.velocities[i][k]);
            }
            row
        })
        .collect();
    (d_ext, y_ext)
}

/// CSV export: `step,vehicle,p,v,u,omega` with 1-based vehicles; the
/// leader's control columns stay empty.
pub fn write_csv<W: io::Write>(traj: &Trajectory, mut out: W) -> io::Result<()> {
    writeln!(out, "step,vehicle,p,v,u,omega")?;
    let m = traj.positions.len();
    for k in 0..traj.steps {
        for i in 0..m {
            if i == 0 {
                writeln!(
                    out,
                    "{k},1,{},{},,",
                    traj.positions[0][k], traj.velocities[0][k]
                )?;
            } else {
                writeln!(
                    out,
                    "{k},{},{},{},{},{}",
                    i + 1,
                    traj.positions[i][k],
                    traj.velocities[i][k],
                    traj.controls[i - 1][k],
                    traj.noise[i - 1][k],
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Error)]
pub enum PlatoonError {
    #[error("invalid platoon parameters: {msg}")]
    Invalid { msg: String },
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Verify(#[from] crate::verification::VerifyError),
}
