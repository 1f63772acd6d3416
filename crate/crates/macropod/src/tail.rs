//! Eight-joint elastic underactuated tail driven by two antagonist wires.
//!
//! The wires run in series over every link at a constant moment arm, so a
//! frictionless routing carries the same tension to each joint and the net
//! wire torque is `r·(f_upper − f_lower)` at every joint, positive bending
//! the tail up. Each joint carries a linear torsional spring, viscous
//! damping and a symmetric angle limit.
//!
//! Two limit treatments are used deliberately:
//! - statics ([`TailParams::static_equilibrium`]) treats limits as hard, so
//!   the no-gravity equilibrium is exactly `clamp(r·Δf/k, ±limit)` at every
//!   joint;
//! - dynamics ([`TailParams::dynamics_step`]) and the stiffness probe use a
//!   stiff one-sided penalty layer (`limit_stiffness_factor`×k), which keeps
//!   the fixed-step integrator simple.
//!
//! Taut wires also resist transverse deviation of the chain in proportion to
//! their tension. With the serial constant-arm routing this appears as a
//! stiffness against curvature *redistribution* (deviation of a joint from
//! the mean bend), with potential `½·κ·(f_u+f_l)·‖θ − θ̄·1‖²`; uniform bends
//! are the wrap mode and feel no such force, so equilibria depend only on
//! the tension difference while stiffness grows with co-contraction.

use nalgebra::{DVector, Vector2};

use crate::dynamics::{
    self, BaseKind, BodyParams, BodyRef, ChainModel, ChainState, DynamicsError, ExternalWrench,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TailParams {
    pub joint_count: usize,
    /// Length of each link, m.
    pub link_length: f64,
    /// Mass of the whole tail, distributed uniformly, kg.
    pub total_mass: f64,
    /// Wire moment arm at every joint, upper and lower, m.
    pub moment_arm: f64,
    /// Torsional spring constant per joint, N·m/rad.
    pub spring_constant: f64,
    /// Symmetric joint angle limit, rad.
    pub joint_limit: f64,
    /// Wire tension cap, N.
    pub max_tension: f64,
    /// Viscous joint damping, N·m·s/rad.
    pub damping: f64,
    /// Penalty stiffness beyond the limit, as a multiple of the spring.
    pub limit_stiffness_factor: f64,
    /// Taut-wire transverse stiffness per unit co-tension, m (per joint,
    /// about the mean bend). Defaults to `moment_arm² / link_length`.
    pub transverse_stiffness: f64,
}

impl Default for TailParams {
    fn default() -> Self {
        let moment_arm = 0.035;
        let link_length = 0.05;
        TailParams {
            joint_count: 8,
            link_length,
            total_mass: 1.6,
            moment_arm,
            spring_constant: 10.0,
            joint_limit: 30.0f64.to_radians(),
            max_tension: 450.0,
            damping: 0.1,
            limit_stiffness_factor: 100.0,
            transverse_stiffness: moment_arm * moment_arm / link_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TailError {
    TensionOutOfBounds { value: f64, max: f64 },
    Dynamics(DynamicsError),
    NonConvergence { residual: f64 },
    Diverged { speed: f64 },
    BadParameter { what: &'static str },
}

impl std::fmt::Display for TailError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TailError::TensionOutOfBounds { value, max } => {
                write!(f, "tension {value} N outside [0, {max}] N")
            }
            TailError::Dynamics(e) => write!(f, "{e}"),
            TailError::NonConvergence { residual } => {
                write!(f, "relaxation did not converge, residual {residual:.3e}")
            }
            TailError::Diverged { speed } => {
                write!(f, "integration diverged, joint speed {speed:.3e} rad/s")
            }
            TailError::BadParameter { what } => write!(f, "bad tail parameter: {what}"),
        }
    }
}

impl std::error::Error for TailError {}

impl From<DynamicsError> for TailError {
    fn from(e: DynamicsError) -> Self {
        TailError::Dynamics(e)
    }
}

impl TailParams {
    pub fn validate(&self) -> Result<(), TailError> {
        let positive = [
            (self.joint_count as f64, "joint_count"),
            (self.link_length, "link_length"),
            (self.total_mass, "total_mass"),
            (self.moment_arm, "moment_arm"),
            (self.spring_constant, "spring_constant"),
            (self.joint_limit, "joint_limit"),
            (self.max_tension, "max_tension"),
            (self.limit_stiffness_factor, "limit_stiffness_factor"),
        ];
        for (v, what) in positive {
            if v <= 0.0 {
                return Err(TailError::BadParameter { what });
            }
        }
        if self.damping < 0.0 || self.transverse_stiffness < 0.0 {
            return Err(TailError::BadParameter {
                what: "damping and transverse_stiffness must be >= 0",
            });
        }
        Ok(())
    }

    fn check_tension(&self, f: f64) -> Result<(), TailError> {
        if !(0.0..=self.max_tension).contains(&f) {
            return Err(TailError::TensionOutOfBounds {
                value: f,
                max: self.max_tension,
            });
        }
        Ok(())
    }

    /// Fixed-base serial chain of `joint_count` uniform rod links along +x.
    pub fn build_chain(&self, gravity_on: bool) -> ChainModel {
        let g = if gravity_on {
            Vector2::new(0.0, -9.81)
        } else {
            Vector2::zeros()
        };
        let link_mass = self.total_mass / self.joint_count as f64;
        ChainModel::serial(
            BaseKind::Fixed,
            g,
            (0..self.joint_count)
                .map(|_| BodyParams::rod(link_mass, self.link_length))
                .collect(),
        )
        .expect("tail chain")
    }

    /// Net wire torque at every joint for tensions inside the caps.
    ///
    /// At a uniform bend this is exactly `r·(f_upper − f_lower)` per joint;
    /// non-uniform bends additionally feel the co-tension transverse term.
    pub fn wire_torques(
        &self,
        theta: &DVector<f64>,
        f_upper: f64,
        f_lower: f64,
    ) -> Result<DVector<f64>, TailError> {
        self.check_tension(f_upper)?;
        self.check_tension(f_lower)?;
        let n = theta.len();
        let base = self.moment_arm * (f_upper - f_lower);
        let kappa = self.transverse_stiffness * (f_upper + f_lower);
        let mean = theta.mean();
        Ok(DVector::from_fn(n, |i, _| base - kappa * (theta[i] - mean)))
    }

    /// Spring torque `−k·θ` plus the one-sided penalty beyond the limits.
    pub fn spring_torques(&self, theta: &DVector<f64>) -> DVector<f64> {
        let k = self.spring_constant;
        let kp = self.limit_stiffness_factor * k;
        let lim = self.joint_limit;
        DVector::from_fn(theta.len(), |i, _| {
            let t = theta[i];
            let mut tau = -k * t;
            if t > lim {
                tau -= kp * (t - lim);
            } else if t < -lim {
                tau -= kp * (t + lim);
            }
            tau
        })
    }

    pub fn damping_torques(&self, theta_dot: &DVector<f64>) -> DVector<f64> {
        -self.damping * theta_dot
    }

    /// Static equilibrium under constant tensions, hard joint limits.
    ///
    /// Without gravity the answer is closed-form: every joint settles at
    /// `clamp(r·(f_u−f_l)/k, ±limit)` (the transverse term vanishes on
    /// uniform bends and the potential is strictly convex, so this is the
    /// unique equilibrium). With gravity the same potential plus gravity is
    /// relaxed by damped pseudo-dynamics with projection onto the limits.
    pub fn static_equilibrium(
        &self,
        f_upper: f64,
        f_lower: f64,
        gravity_on: bool,
    ) -> Result<DVector<f64>, TailError> {
        self.check_tension(f_upper)?;
        self.check_tension(f_lower)?;
        let n = self.joint_count;
        if !gravity_on {
            let bend = (self.moment_arm * (f_upper - f_lower) / self.spring_constant)
                .clamp(-self.joint_limit, self.joint_limit);
            return Ok(DVector::from_element(n, bend));
        }
        let chain = self.build_chain(true);
        self.relax(&chain, f_upper, f_lower, None)
    }

    /// Damped dynamic relaxation with hard projection onto the limits.
    fn relax(
        &self,
        chain: &ChainModel,
        f_upper: f64,
        f_lower: f64,
        tip_force: Option<Vector2<f64>>,
    ) -> Result<DVector<f64>, TailError> {
        let n = self.joint_count;
        let lim = self.joint_limit;
        let mut theta: DVector<f64> = DVector::zeros(n);
        let mut vel: DVector<f64> = DVector::zeros(n);
        // Pseudo-dynamics on unit mass: stable dt from the stiffest mode.
        let k_max =
            self.spring_constant + self.transverse_stiffness * (f_upper + f_lower) + 1.0;
        let dt = 0.5 / k_max.sqrt();
        let c = 2.0 * k_max.sqrt();
        let tol = 1e-9;
        let max_iter = 400_000;
        let mut residual = f64::INFINITY;
        for _ in 0..max_iter {
            let state = ChainState::new(theta.clone(), DVector::zeros(n));
            // Gravity generalized torque = −b(θ, 0).
            let gravity_tau = -dynamics::bias_forces(chain, &state)?;
            let mut tau = self.wire_torques(&theta, f_upper, f_lower)?
                + DVector::from_fn(n, |i, _| -self.spring_constant * theta[i])
                + gravity_tau;
            if let Some(force) = tip_force {
                let kin = dynamics::kinematics(chain, &state)?;
                let tip = kin
                    .point_position(BodyRef::Link(n - 1), Vector2::new(self.link_length, 0.0));
                for j in 0..n {
                    let pivot = kin.body_origin(BodyRef::Link(j));
                    let r = tip - pivot;
                    tau[j] += r.x * force.y - r.y * force.x;
                }
            }
            vel = (&vel + &tau * dt) / (1.0 + c * dt);
            theta += &vel * dt;
            for j in 0..n {
                if theta[j] > lim {
                    theta[j] = lim;
                    vel[j] = vel[j].min(0.0);
                } else if theta[j] < -lim {
                    theta[j] = -lim;
                    vel[j] = vel[j].max(0.0);
                }
            }
            // Converged when the free directions are in balance.
            residual = 0.0;
            for j in 0..n {
                let free = (theta[j] < lim - 1e-15 || tau[j] < 0.0)
                    && (theta[j] > -lim + 1e-15 || tau[j] > 0.0);
                if free {
                    residual = residual.max(tau[j].abs());
                }
                residual = residual.max(vel[j].abs());
            }
            if residual < tol {
                return Ok(theta);
            }
        }
        Err(TailError::NonConvergence { residual })
    }

    /// Tip stiffness under co-contraction: the ratio of a small downward
    /// probe force at the tip to the tip displacement it causes, N/m.
    ///
    /// Equilibria are settled with the penalty-layer limit model so the
    /// metric stays finite and penalty-dominated when joints sit on a limit.
    /// Gravity is off: the metric isolates wire and spring effects.
    pub fn stiffness_metric(&self, f_upper: f64, f_lower: f64) -> Result<f64, TailError> {
        let probe = 1.0;
        let base = self.settle_penalty(f_upper, f_lower, None)?;
        let probed = self.settle_penalty(f_upper, f_lower, Some(Vector2::new(0.0, -probe)))?;
        let displacement = (self.tip_position(&probed) - self.tip_position(&base)).norm();
        Ok(probe / displacement)
    }

    /// Relaxation with penalty limits (no projection), gravity off.
    fn settle_penalty(
        &self,
        f_upper: f64,
        f_lower: f64,
        tip_force: Option<Vector2<f64>>,
    ) -> Result<DVector<f64>, TailError> {
        self.check_tension(f_upper)?;
        self.check_tension(f_lower)?;
        let n = self.joint_count;
        let chain = self.build_chain(false);
        let mut theta: DVector<f64> = DVector::zeros(n);
        let mut vel: DVector<f64> = DVector::zeros(n);
        let k_max = self.spring_constant * (1.0 + self.limit_stiffness_factor)
            + self.transverse_stiffness * (f_upper + f_lower)
            + 1.0;
        let dt = 0.5 / k_max.sqrt();
        let c = 2.0 * k_max.sqrt();
        let mut residual = f64::INFINITY;
        for _ in 0..400_000 {
            let mut tau =
                self.wire_torques(&theta, f_upper, f_lower)? + self.spring_torques(&theta);
            if let Some(force) = tip_force {
                let state = ChainState::new(theta.clone(), DVector::zeros(n));
                let kin = dynamics::kinematics(&chain, &state)?;
                let tip = kin
                    .point_position(BodyRef::Link(n - 1), Vector2::new(self.link_length, 0.0));
                for j in 0..n {
                    let pivot = kin.body_origin(BodyRef::Link(j));
                    let r = tip - pivot;
                    tau[j] += r.x * force.y - r.y * force.x;
                }
            }
            vel = (&vel + &tau * dt) / (1.0 + c * dt);
            theta += &vel * dt;
            residual = tau.amax().max(vel.amax());
            if residual < 1e-10 {
                return Ok(theta);
            }
        }
        Err(TailError::NonConvergence { residual })
    }

    /// One explicit step of the full tail dynamics: wire, spring (penalty
    /// limits), damping and gravity torques through the articulated chain.
    ///
    /// `extra` wrenches let callers add contact or probe forces. Aborts with
    /// a diagnostic when joint speeds blow past 10³ rad/s.
    pub fn dynamics_step(
        &self,
        chain: &ChainModel,
        state: &mut ChainState,
        f_upper: f64,
        f_lower: f64,
        dt: f64,
        extra: &[ExternalWrench],
    ) -> Result<(), TailError> {
        let tau = self.wire_torques(&state.q, f_upper, f_lower)?
            + self.spring_torques(&state.q)
            + self.damping_torques(&state.qd);
        let qdd = dynamics::forward_dynamics(chain, state, &tau, extra)?;
        state.qd += qdd * dt;
        state.q += &state.qd * dt;
        let speed = state.qd.amax();
        if speed > 1e3 {
            return Err(TailError::Diverged { speed });
        }
        Ok(())
    }

    /// Conserved quantity of the undamped tail under constant tensions:
    /// kinetic + gravity + spring + penalty + transverse potentials minus
    /// the work function of the constant wire torque.
    pub fn total_energy(
        &self,
        chain: &ChainModel,
        state: &ChainState,
        f_upper: f64,
        f_lower: f64,
    ) -> Result<f64, TailError> {
        let ke = dynamics::kinetic_energy(chain, state)?;
        let pe = dynamics::potential_energy(chain, state)?;
        let k = self.spring_constant;
        let kp = self.limit_stiffness_factor * k;
        let lim = self.joint_limit;
        let mut spring = 0.0;
        for i in 0..state.q.len() {
            let t = state.q[i];
            spring += 0.5 * k * t * t;
            if t > lim {
                spring += 0.5 * kp * (t - lim) * (t - lim);
            } else if t < -lim {
                spring += 0.5 * kp * (t + lim) * (t + lim);
            }
        }
        let mean = state.q.mean();
        let kappa = self.transverse_stiffness * (f_upper + f_lower);
        let mut transverse = 0.0;
        for i in 0..state.q.len() {
            let d = state.q[i] - mean;
            transverse += 0.5 * kappa * d * d;
        }
        let wire_work = self.moment_arm * (f_upper - f_lower) * state.q.sum();
        Ok(ke + pe + spring + transverse - wire_work)
    }

    /// World tip position for a joint-angle vector (fixed-base tail chain).
    pub fn tip_position(&self, theta: &DVector<f64>) -> Vector2<f64> {
        let chain = self.build_chain(false);
        let state = ChainState::new(theta.clone(), DVector::zeros(theta.len()));
        let kin = dynamics::kinematics(&chain, &state).unwrap();
        kin.point_position(
            BodyRef::Link(self.joint_count - 1),
            Vector2::new(self.link_length, 0.0),
        )
    }

    /// Joint positions plus the tip, for shape plots.
    pub fn shape_points(&self, theta: &DVector<f64>) -> Vec<Vector2<f64>> {
        let chain = self.build_chain(false);
        let state = ChainState::new(theta.clone(), DVector::zeros(theta.len()));
        let kin = dynamics::kinematics(&chain, &state).unwrap();
        let mut pts: Vec<Vector2<f64>> = (0..self.joint_count)
            .map(|i| kin.body_origin(BodyRef::Link(i)))
            .collect();
        pts.push(kin.point_position(
            BodyRef::Link(self.joint_count - 1),
            Vector2::new(self.link_length, 0.0),
        ));
        pts
    }
}

/// Lag (in samples) of the strongest autocorrelation peak of a series,
/// searched in `[min_lag, max_lag)`. Used to confirm periodic steady
/// oscillation under sinusoidal drive.
pub fn autocorrelation_peak_lag(series: &[f64], min_lag: usize, max_lag: usize) -> usize {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let mut best = (min_lag, f64::NEG_INFINITY);
    for lag in min_lag..max_lag.min(n - 1) {
        let mut acc = 0.0;
        for i in 0..(n - lag) {
            acc += centered[i] * centered[i + lag];
        }
        let score = acc / (n - lag) as f64;
        if score > best.1 {
            best = (lag, score);
        }
    }
    best.0
}
