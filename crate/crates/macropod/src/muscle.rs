//! Wire (muscle) routing geometry and tension allocation.
//!
//! A muscle is a polyline of attachment and via points, each bound to a body
//! of the chain with a body-frame offset. Via points are frictionless and
//! infinitesimal, so tension is identical along the whole wire and the
//! generalized torque of a tension vector `f` is `τ = −Gᵀ f`, where
//! `G = ∂L/∂θ` is the muscle-length Jacobian.
//!
//! Tension allocation solves `min ‖f‖²` subject to `τ = −Gᵀ f` and
//! `0 ≤ f ≤ f_max`. Wires pull only, hence the box.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::dynamics::{kinematics, BodyRef, ChainModel, ChainState, DynamicsError};
use crate::qp;

/// One attachment or via point of a wire path.
#[derive(Debug, Clone)]
pub struct MusclePoint {
    pub body: BodyRef,
    /// Body-frame offset, m.
    pub offset: Vector2<f64>,
}

#[derive(Debug, Clone)]
pub struct Muscle {
    pub name: String,
    /// Ordered path, at least two points.
    pub path: Vec<MusclePoint>,
    /// Maximum tension, N (> 0).
    pub f_max: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MuscleRouting {
    pub muscles: Vec<Muscle>,
}

#[derive(Debug, Clone)]
pub enum MuscleError {
    Dynamics(DynamicsError),
    PathTooShort { muscle: String },
    NonPositiveTensionLimit { muscle: String },
    DimensionMismatch { expected: usize, got: usize },
    Solver(qp::QpError),
    /// No tension vector inside the box realizes the requested torque. The
    /// nearest tensions (least-squares over the box) and the torque residual
    /// they leave are reported so callers can clamp or fail.
    Infeasible {
        nearest: DVector<f64>,
        residual: f64,
    },
}

impl std::fmt::Display for MuscleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MuscleError::Dynamics(e) => write!(f, "{e}"),
            MuscleError::PathTooShort { muscle } => {
                write!(f, "muscle '{muscle}' needs at least two path points")
            }
            MuscleError::NonPositiveTensionLimit { muscle } => {
                write!(f, "muscle '{muscle}' needs f_max > 0")
            }
            MuscleError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            MuscleError::Solver(e) => write!(f, "allocator: {e}"),
            MuscleError::Infeasible { residual, .. } => {
                write!(f, "torque target infeasible, residual {residual:.3e} N·m")
            }
        }
    }
}

impl std::error::Error for MuscleError {}

impl From<DynamicsError> for MuscleError {
    fn from(e: DynamicsError) -> Self {
        MuscleError::Dynamics(e)
    }
}

impl From<qp::QpError> for MuscleError {
    fn from(e: qp::QpError) -> Self {
        MuscleError::Solver(e)
    }
}

impl MuscleRouting {
    pub fn validate(&self, model: &ChainModel) -> Result<(), MuscleError> {
        for m in &self.muscles {
            if m.path.len() < 2 {
                return Err(MuscleError::PathTooShort {
                    muscle: m.name.clone(),
                });
            }
            if m.f_max <= 0.0 {
                return Err(MuscleError::NonPositiveTensionLimit {
                    muscle: m.name.clone(),
                });
            }
            for p in &m.path {
                if let BodyRef::Link(i) = p.body {
                    if i >= model.links().len() {
                        return Err(DynamicsError::InvalidBody {
                            index: i,
                            links: model.links().len(),
                        }
                        .into());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn tension_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.muscles.len(), self.muscles.iter().map(|m| m.f_max))
    }

    pub fn names(&self) -> Vec<&str> {
        self.muscles.iter().map(|m| m.name.as_str()).collect()
    }
}

/// Path length of every muscle at a state: sum of segment norms, m.
pub fn muscle_lengths(
    routing: &MuscleRouting,
    model: &ChainModel,
    state: &ChainState,
) -> Result<DVector<f64>, MuscleError> {
    routing.validate(model)?;
    let kin = kinematics(model, state)?;
    let mut lengths = DVector::zeros(routing.muscles.len());
    for (mi, m) in routing.muscles.iter().enumerate() {
        let mut total = 0.0;
        for seg in m.path.windows(2) {
            let p0 = kin.point_position(seg[0].body, seg[0].offset);
            let p1 = kin.point_position(seg[1].body, seg[1].offset);
            total += (p1 - p0).norm();
        }
        lengths[mi] = total;
    }
    Ok(lengths)
}

/// Muscle-length Jacobian `G = ∂L/∂θ` (muscles × dof).
///
/// Built from the point Jacobians: for a segment from `p` to `q`,
/// `∂‖q−p‖/∂θ = û·(J_q − J_p)` with `û` the segment direction. Joints a
/// muscle does not cross get exactly zero columns, and base columns vanish
/// because path lengths are invariant under rigid motion of the whole chain.
pub fn muscle_jacobian(
    routing: &MuscleRouting,
    model: &ChainModel,
    state: &ChainState,
) -> Result<DMatrix<f64>, MuscleError> {
    routing.validate(model)?;
    let mut g = DMatrix::zeros(routing.muscles.len(), model.dof());
    for (mi, m) in routing.muscles.iter().enumerate() {
        let mut points = Vec::with_capacity(m.path.len());
        for p in &m.path {
            points.push(crate::dynamics::point_kinematics(
                model, state, p.body, p.offset,
            )?);
        }
        for w in points.windows(2) {
            let (p0, _, ref j0) = w[0];
            let (p1, _, ref j1) = w[1];
            let d = p1 - p0;
            let norm = d.norm();
            if norm < 1e-12 {
                continue;
            }
            let unit = d / norm;
            let dj = j1 - j0;
            for c in 0..model.dof() {
                g[(mi, c)] += unit.x * dj[(0, c)] + unit.y * dj[(1, c)];
            }
        }
    }
    Ok(g)
}

/// Muscle shortening rates `L̇ = G θ̇`, m/s.
pub fn muscle_velocities(g: &DMatrix<f64>, qd: &DVector<f64>) -> DVector<f64> {
    g * qd
}

/// Generalized torques of a tension vector: `τ = −Gᵀ f`.
pub fn tension_to_torque(g: &DMatrix<f64>, f: &DVector<f64>) -> Result<DVector<f64>, MuscleError> {
    if g.nrows() != f.len() {
        return Err(MuscleError::DimensionMismatch {
            expected: g.nrows(),
            got: f.len(),
        });
    }
    Ok(-(g.transpose() * f))
}

/// Relative torque-residual tolerance of the allocator.
pub const ALLOCATION_TOL: f64 = 1e-6;

/// Minimum-norm tension allocation: `min ‖f‖²` s.t. `τ = −Gᵀ f`, `0 ≤ f ≤ f_max`.
///
/// `g` must contain only the actuated joint columns (muscles × joints).
/// Infeasible targets are an explicit result carrying the least-squares
/// nearest tensions, not a panic: the hopping controller clamps to them.
pub fn allocate_tensions(
    g: &DMatrix<f64>,
    tau_desired: &DVector<f64>,
    f_max: &DVector<f64>,
) -> Result<DVector<f64>, MuscleError> {
    if g.ncols() != tau_desired.len() {
        return Err(MuscleError::DimensionMismatch {
            expected: g.ncols(),
            got: tau_desired.len(),
        });
    }
    if g.nrows() != f_max.len() {
        return Err(MuscleError::DimensionMismatch {
            expected: g.nrows(),
            got: f_max.len(),
        });
    }
    let a = -g.transpose();
    let feasible = qp::bounded_least_squares(&a, tau_desired, f_max)?;
    let residual = feasible.residual.amax();
    let tol = ALLOCATION_TOL * tau_desired.amax().max(1.0);
    if residual > tol {
        return Err(MuscleError::Infeasible {
            nearest: feasible.x,
            residual,
        });
    }
    Ok(qp::min_norm_polish(&a, f_max, &feasible.x)?)
}

/// Normalized KKT violation of an allocation (see [`qp::kkt_violation`]).
pub fn allocation_kkt_violation(
    g: &DMatrix<f64>,
    tau_desired: &DVector<f64>,
    f_max: &DVector<f64>,
    f: &DVector<f64>,
) -> f64 {
    qp::kkt_violation(&(-g.transpose()), tau_desired, f_max, f)
}
