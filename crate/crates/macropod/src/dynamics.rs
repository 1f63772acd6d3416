//! Planar articulated rigid-body kinematics and dynamics for open chains.
//!
//! Bodies are rigid links connected by revolute joints into a tree rooted at
//! the base. The base is either fixed to the world frame or floating with
//! three planar degrees of freedom `(x, z, pitch)` prepended to the joint
//! coordinates.
//!
//! Sign conventions, used everywhere in this crate:
//! - world x is forward, world z is up, gravity default `(0, -9.81)`;
//! - angles and torques are counterclockwise positive;
//! - each joint angle is measured from the parent link's x-axis to the
//!   child link's x-axis;
//! - a link frame has its origin at the link's own joint and its x-axis
//!   along the link, so the next joint sits at `(length, 0)`.
//!
//! With these conventions the equation of motion reads
//! `M(q) q̈ + b(q, q̇) = τ + Σ Jᵀ w` where `b` collects Coriolis,
//! centrifugal and gravity terms (for a horizontal link the gravity part of
//! `b` is `+m·g·l_com`, the torque an actuator must apply to hold it).

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

/// Reference to a rigid body in a [`ChainModel`]: the base or a link by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyRef {
    Base,
    Link(usize),
}

/// Inertial parameters of one rigid body.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    /// Mass in kg, ≥ 0.
    pub mass: f64,
    /// Centre of mass in the body frame, m.
    pub com: Vector2<f64>,
    /// Distance from the body's joint to its tip along x, m (> 0).
    pub length: f64,
    /// Rotational inertia about the centre of mass, kg·m², ≥ 0.
    pub inertia: f64,
}

impl BodyParams {
    /// Uniform slender rod: COM at mid-length, inertia `m·l²/12`.
    pub fn rod(mass: f64, length: f64) -> Self {
        BodyParams {
            mass,
            com: Vector2::new(0.5 * length, 0.0),
            length,
            inertia: mass * length * length / 12.0,
        }
    }
}

/// One link of the tree: a revolute joint mounted on a parent body plus the
/// link's own inertial parameters.
#[derive(Debug, Clone)]
pub struct Link {
    pub parent: BodyRef,
    /// Joint pivot position in the parent body frame, m.
    pub joint_offset: Vector2<f64>,
    pub body: BodyParams,
}

/// Base of the chain: welded to the world, or a floating rigid body whose
/// pose `(x, z, pitch)` contributes the first three generalized coordinates.
#[derive(Debug, Clone)]
pub enum BaseKind {
    Fixed,
    Floating(BodyParams),
}

/// Planar articulated chain (serial or branched, no loops).
#[derive(Debug, Clone)]
pub struct ChainModel {
    base: BaseKind,
    links: Vec<Link>,
    gravity: Vector2<f64>,
    /// Per link, the indices of joints between the base and that link,
    /// including its own joint.
    ancestors: Vec<Vec<usize>>,
}

/// Generalized position and velocity of a chain.
///
/// For a floating base the layout is `[x, z, pitch, θ₁..θₙ]`; for a fixed
/// base it is just `[θ₁..θₙ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

/// A point wrench applied to one body: planar force plus a scalar torque.
#[derive(Debug, Clone)]
pub struct ExternalWrench {
    pub body: BodyRef,
    /// Application point in the body frame, m.
    pub point: Vector2<f64>,
    /// World-frame force, N.
    pub force: Vector2<f64>,
    /// Pure torque, N·m.
    pub torque: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DynamicsError {
    DimensionMismatch { expected: usize, got: usize },
    InvalidBody { index: usize, links: usize },
    /// Parent link index not smaller than the child's own index.
    BadTopology { link: usize },
    NonPhysicalParameter { what: &'static str },
    SingularMassMatrix,
}

impl std::fmt::Display for DynamicsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DynamicsError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            DynamicsError::InvalidBody { index, links } => {
                write!(f, "body index {index} out of range ({links} links)")
            }
            DynamicsError::BadTopology { link } => {
                write!(f, "link {link} must have a parent with a smaller index")
            }
            DynamicsError::NonPhysicalParameter { what } => {
                write!(f, "non-physical parameter: {what}")
            }
            DynamicsError::SingularMassMatrix => write!(f, "singular mass matrix"),
        }
    }
}

impl std::error::Error for DynamicsError {}

fn rot(a: f64) -> Matrix2<f64> {
    let (s, c) = a.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// 90° counterclockwise rotation of a planar vector.
fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

impl ChainModel {
    pub fn new(base: BaseKind, gravity: Vector2<f64>) -> Self {
        ChainModel {
            base,
            links: Vec::new(),
            gravity,
            ancestors: Vec::new(),
        }
    }

    /// Standard gravity, fixed base.
    pub fn fixed_base() -> Self {
        ChainModel::new(BaseKind::Fixed, Vector2::new(0.0, -9.81))
    }

    /// Append a link; its parent must already exist.
    pub fn add_link(
        &mut self,
        parent: BodyRef,
        joint_offset: Vector2<f64>,
        body: BodyParams,
    ) -> Result<usize, DynamicsError> {
        let idx = self.links.len();
        if body.mass < 0.0 || body.inertia < 0.0 {
            return Err(DynamicsError::NonPhysicalParameter {
                what: "mass and inertia must be >= 0",
            });
        }
        if body.length <= 0.0 {
            return Err(DynamicsError::NonPhysicalParameter {
                what: "length must be > 0",
            });
        }
        let mut anc = match parent {
            BodyRef::Base => Vec::new(),
            BodyRef::Link(p) => {
                if p >= idx {
                    return Err(DynamicsError::BadTopology { link: idx });
                }
                self.ancestors[p].clone()
            }
        };
        anc.push(idx);
        self.links.push(Link {
            parent,
            joint_offset,
            body,
        });
        self.ancestors.push(anc);
        Ok(idx)
    }

    /// Serial chain helper: each link mounted at the previous link's tip.
    pub fn serial(
        base: BaseKind,
        gravity: Vector2<f64>,
        bodies: Vec<BodyParams>,
    ) -> Result<Self, DynamicsError> {
        let mut model = ChainModel::new(base, gravity);
        let mut parent = BodyRef::Base;
        let mut offset = Vector2::zeros();
        for body in bodies {
            let len = body.length;
            let idx = model.add_link(parent, offset, body)?;
            parent = BodyRef::Link(idx);
            offset = Vector2::new(len, 0.0);
        }
        Ok(model)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn gravity(&self) -> Vector2<f64> {
        self.gravity
    }

    pub fn set_gravity(&mut self, g: Vector2<f64>) {
        self.gravity = g;
    }

    pub fn is_floating(&self) -> bool {
        matches!(self.base, BaseKind::Floating(_))
    }

    pub fn base_body(&self) -> Option<&BodyParams> {
        match &self.base {
            BaseKind::Floating(b) => Some(b),
            BaseKind::Fixed => None,
        }
    }

    /// Number of generalized coordinates (3 base DOF when floating + joints).
    pub fn dof(&self) -> usize {
        self.links.len() + if self.is_floating() { 3 } else { 0 }
    }

    pub fn joint_count(&self) -> usize {
        self.links.len()
    }

    /// Index of a joint coordinate within the generalized vector.
    pub fn joint_coord(&self, joint: usize) -> usize {
        joint + if self.is_floating() { 3 } else { 0 }
    }

    pub fn zero_state(&self) -> ChainState {
        ChainState {
            q: DVector::zeros(self.dof()),
            qd: DVector::zeros(self.dof()),
        }
    }

    fn check_state(&self, state: &ChainState) -> Result<(), DynamicsError> {
        self.check_vec(&state.q)?;
        self.check_vec(&state.qd)
    }

    fn check_vec(&self, v: &DVector<f64>) -> Result<(), DynamicsError> {
        if v.len() != self.dof() {
            return Err(DynamicsError::DimensionMismatch {
                expected: self.dof(),
                got: v.len(),
            });
        }
        Ok(())
    }

    fn check_body(&self, body: BodyRef) -> Result<(), DynamicsError> {
        match body {
            BodyRef::Base => Ok(()),
            BodyRef::Link(i) if i < self.links.len() => Ok(()),
            BodyRef::Link(i) => Err(DynamicsError::InvalidBody {
                index: i,
                links: self.links.len(),
            }),
        }
    }
}

impl ChainState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>) -> Self {
        ChainState { q, qd }
    }

    /// Joint angles only (base pose stripped when floating).
    pub fn joint_angles(&self, model: &ChainModel) -> DVector<f64> {
        let off = if model.is_floating() { 3 } else { 0 };
        self.q.rows(off, model.joint_count()).into_owned()
    }

    /// Base pose `(x, z, pitch)`; zero for a fixed base.
    pub fn base_pose(&self, model: &ChainModel) -> (Vector2<f64>, f64) {
        if model.is_floating() {
            (Vector2::new(self.q[0], self.q[1]), self.q[2])
        } else {
            (Vector2::zeros(), 0.0)
        }
    }
}

/// World-frame pose and motion of every body at one state, produced by a
/// single forward pass and shared by all dynamics routines.
#[derive(Debug, Clone)]
pub struct Kinematics {
    /// Absolute link angles, base first (index 0 = base).
    angle: Vec<f64>,
    /// World joint-origin positions (index 0 = base origin).
    origin: Vec<Vector2<f64>>,
    omega: Vec<f64>,
    origin_vel: Vec<Vector2<f64>>,
}

impl Kinematics {
    fn slot(body: BodyRef) -> usize {
        match body {
            BodyRef::Base => 0,
            BodyRef::Link(i) => i + 1,
        }
    }

    pub fn body_angle(&self, body: BodyRef) -> f64 {
        self.angle[Self::slot(body)]
    }

    pub fn body_origin(&self, body: BodyRef) -> Vector2<f64> {
        self.origin[Self::slot(body)]
    }

    pub fn body_omega(&self, body: BodyRef) -> f64 {
        self.omega[Self::slot(body)]
    }

    /// World position of a body-frame point.
    pub fn point_position(&self, body: BodyRef, point: Vector2<f64>) -> Vector2<f64> {
        let s = Self::slot(body);
        self.origin[s] + rot(self.angle[s]) * point
    }

    /// World velocity of a body-frame point.
    pub fn point_velocity(&self, body: BodyRef, point: Vector2<f64>) -> Vector2<f64> {
        let s = Self::slot(body);
        self.origin_vel[s] + self.omega[s] * perp(rot(self.angle[s]) * point)
    }
}

/// Forward kinematics pass: absolute angles, origins and their rates.
pub fn kinematics(model: &ChainModel, state: &ChainState) -> Result<Kinematics, DynamicsError> {
    model.check_state(state)?;
    let n = model.links.len();
    let mut k = Kinematics {
        angle: vec![0.0; n + 1],
        origin: vec![Vector2::zeros(); n + 1],
        omega: vec![0.0; n + 1],
        origin_vel: vec![Vector2::zeros(); n + 1],
    };
    if model.is_floating() {
        k.origin[0] = Vector2::new(state.q[0], state.q[1]);
        k.angle[0] = state.q[2];
        k.origin_vel[0] = Vector2::new(state.qd[0], state.qd[1]);
        k.omega[0] = state.qd[2];
    }
    for (i, link) in model.links.iter().enumerate() {
        let p = Kinematics::slot(link.parent);
        let c = i + 1;
        let u = rot(k.angle[p]) * link.joint_offset;
        k.origin[c] = k.origin[p] + u;
        k.origin_vel[c] = k.origin_vel[p] + k.omega[p] * perp(u);
        let j = model.joint_coord(i);
        k.angle[c] = k.angle[p] + state.q[j];
        k.omega[c] = k.omega[p] + state.qd[j];
    }
    Ok(k)
}

/// Position Jacobian (2×dof) of a body-frame point, plus the shared angular
/// velocity row (1×dof) of the body carrying it.
fn point_jacobian(
    model: &ChainModel,
    kin: &Kinematics,
    body: BodyRef,
    point: Vector2<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let dof = model.dof();
    let p = kin.point_position(body, point);
    let mut jac = DMatrix::zeros(2, dof);
    let mut jrot = DVector::zeros(dof);
    if model.is_floating() {
        jac[(0, 0)] = 1.0;
        jac[(1, 1)] = 1.0;
        let r = perp(p - kin.body_origin(BodyRef::Base));
        jac[(0, 2)] = r.x;
        jac[(1, 2)] = r.y;
        jrot[2] = 1.0;
    }
    if let BodyRef::Link(i) = body {
        for &a in &model.ancestors[i] {
            let col = model.joint_coord(a);
            let r = perp(p - kin.body_origin(BodyRef::Link(a)));
            jac[(0, col)] = r.x;
            jac[(1, col)] = r.y;
            jrot[col] = 1.0;
        }
    }
    (jac, jrot)
}

/// Angular velocity Jacobian row of a body: 1 for the base pitch and every
/// ancestor joint, 0 elsewhere.
pub fn angular_jacobian(model: &ChainModel, body: BodyRef) -> Result<DVector<f64>, DynamicsError> {
    model.check_body(body)?;
    let mut row = DVector::zeros(model.dof());
    if model.is_floating() {
        row[2] = 1.0;
    }
    if let BodyRef::Link(i) = body {
        for &a in &model.ancestors[i] {
            row[model.joint_coord(a)] = 1.0;
        }
    }
    Ok(row)
}

/// Whole-body centre of gravity, its velocity and 2×dof Jacobian.
pub fn center_of_gravity(
    model: &ChainModel,
    state: &ChainState,
) -> Result<(Vector2<f64>, Vector2<f64>, DMatrix<f64>), DynamicsError> {
    let kin = kinematics(model, state)?;
    let mut total = 0.0;
    let mut weighted = Vector2::zeros();
    let mut weighted_vel = Vector2::zeros();
    let mut jac = DMatrix::zeros(2, model.dof());
    for_each_body(model, |body, params| {
        total += params.mass;
        weighted += params.mass * kin.point_position(body, params.com);
        weighted_vel += params.mass * kin.point_velocity(body, params.com);
        let (jc, _) = point_jacobian(model, &kin, body, params.com);
        jac += params.mass * jc;
    });
    if total <= 0.0 {
        return Err(DynamicsError::NonPhysicalParameter {
            what: "total mass must be > 0 for a centre of gravity",
        });
    }
    Ok((weighted / total, weighted_vel / total, jac / total))
}

/// Total mass of every body in the model.
pub fn total_mass(model: &ChainModel) -> f64 {
    let mut total = 0.0;
    for_each_body(model, |_, params| total += params.mass);
    total
}

/// World position, velocity and 2×dof Jacobian of a body-frame point.
pub fn point_kinematics(
    model: &ChainModel,
    state: &ChainState,
    body: BodyRef,
    point: Vector2<f64>,
) -> Result<(Vector2<f64>, Vector2<f64>, DMatrix<f64>), DynamicsError> {
    model.check_body(body)?;
    let kin = kinematics(model, state)?;
    let (jac, _) = point_jacobian(model, &kin, body, point);
    Ok((
        kin.point_position(body, point),
        kin.point_velocity(body, point),
        jac,
    ))
}

fn for_each_body<F: FnMut(BodyRef, &BodyParams)>(model: &ChainModel, mut f: F) {
    if let BaseKind::Floating(b) = &model.base {
        f(BodyRef::Base, b);
    }
    for (i, link) in model.links.iter().enumerate() {
        f(BodyRef::Link(i), &link.body);
    }
}

/// Joint-space mass matrix `M(q)`, symmetric positive-semidefinite.
pub fn mass_matrix(model: &ChainModel, q: &DVector<f64>) -> Result<DMatrix<f64>, DynamicsError> {
    model.check_vec(q)?;
    let state = ChainState::new(q.clone(), DVector::zeros(model.dof()));
    let kin = kinematics(model, &state)?;
    let dof = model.dof();
    let mut m = DMatrix::zeros(dof, dof);
    for_each_body(model, |body, params| {
        let (jc, jrot) = point_jacobian(model, &kin, body, params.com);
        m.gemm_tr(params.mass, &jc, &jc, 1.0);
        m.ger(params.inertia, &jrot, &jrot, 1.0);
    });
    // Symmetrize away rounding asymmetry from the sums.
    let mt = m.transpose();
    Ok((m + mt) * 0.5)
}

/// Per-body accelerations for given `q̈`: angular and COM linear.
struct Accelerations {
    omega_dot: Vec<f64>,
    com_acc: Vec<Vector2<f64>>,
}

fn accelerations(
    model: &ChainModel,
    qdd: &DVector<f64>,
    kin: &Kinematics,
) -> Accelerations {
    let n = model.links.len();
    let mut omega_dot = vec![0.0; n + 1];
    let mut origin_acc = vec![Vector2::zeros(); n + 1];
    if model.is_floating() {
        origin_acc[0] = Vector2::new(qdd[0], qdd[1]);
        omega_dot[0] = qdd[2];
    }
    for (i, link) in model.links.iter().enumerate() {
        let p = Kinematics::slot(link.parent);
        let c = i + 1;
        let u = rot(kin.angle[p]) * link.joint_offset;
        origin_acc[c] =
            origin_acc[p] + omega_dot[p] * perp(u) - kin.omega[p] * kin.omega[p] * u;
        omega_dot[c] = omega_dot[p] + qdd[model.joint_coord(i)];
    }
    let mut com_acc = vec![Vector2::zeros(); n + 1];
    let mut fill = |body: BodyRef, params: &BodyParams| {
        let s = Kinematics::slot(body);
        let r = rot(kin.angle[s]) * params.com;
        com_acc[s] =
            origin_acc[s] + omega_dot[s] * perp(r) - kin.omega[s] * kin.omega[s] * r;
    };
    if let BaseKind::Floating(b) = &model.base {
        fill(BodyRef::Base, b);
    }
    for (i, link) in model.links.iter().enumerate() {
        fill(BodyRef::Link(i), &link.body);
    }
    Accelerations { omega_dot, com_acc }
}

/// Generalized forces from a set of external wrenches: `Σ Jᵀ w`.
pub fn generalized_wrench_forces(
    model: &ChainModel,
    kin: &Kinematics,
    wrenches: &[ExternalWrench],
) -> Result<DVector<f64>, DynamicsError> {
    let mut tau = DVector::zeros(model.dof());
    for w in wrenches {
        model.check_body(w.body)?;
        let (jac, jrot) = point_jacobian(model, kin, w.body, w.point);
        tau += jac.transpose() * w.force + jrot * w.torque;
    }
    Ok(tau)
}

/// Inverse dynamics: the generalized forces `τ` satisfying
/// `M q̈ + b = τ + Σ Jᵀ w` for the given accelerations and wrenches.
pub fn inverse_dynamics(
    model: &ChainModel,
    state: &ChainState,
    qdd: &DVector<f64>,
    wrenches: &[ExternalWrench],
) -> Result<DVector<f64>, DynamicsError> {
    model.check_state(state)?;
    model.check_vec(qdd)?;
    let kin = kinematics(model, state)?;
    let acc = accelerations(model, qdd, &kin);
    let g = model.gravity;
    let mut tau = DVector::zeros(model.dof());
    for_each_body(model, |body, params| {
        let s = Kinematics::slot(body);
        let (jc, jrot) = point_jacobian(model, &kin, body, params.com);
        tau += jc.transpose() * (params.mass * (acc.com_acc[s] - g));
        tau += jrot * (params.inertia * acc.omega_dot[s]);
    });
    tau -= generalized_wrench_forces(model, &kin, wrenches)?;
    Ok(tau)
}

/// Coriolis, centrifugal and gravity forces `b(q, q̇)`.
pub fn bias_forces(model: &ChainModel, state: &ChainState) -> Result<DVector<f64>, DynamicsError> {
    inverse_dynamics(model, state, &DVector::zeros(model.dof()), &[])
}

/// Forward dynamics: `q̈ = M⁻¹ (τ + Σ Jᵀ w − b)`.
pub fn forward_dynamics(
    model: &ChainModel,
    state: &ChainState,
    tau: &DVector<f64>,
    wrenches: &[ExternalWrench],
) -> Result<DVector<f64>, DynamicsError> {
    model.check_state(state)?;
    model.check_vec(tau)?;
    let m = mass_matrix(model, &state.q)?;
    let b = bias_forces(model, state)?;
    let kin = kinematics(model, state)?;
    let rhs = tau + generalized_wrench_forces(model, &kin, wrenches)? - b;
    match m.cholesky() {
        Some(chol) => Ok(chol.solve(&rhs)),
        None => Err(DynamicsError::SingularMassMatrix),
    }
}

/// Total kinetic energy at a state.
pub fn kinetic_energy(model: &ChainModel, state: &ChainState) -> Result<f64, DynamicsError> {
    let kin = kinematics(model, state)?;
    let mut e = 0.0;
    for_each_body(model, |body, params| {
        let v = kin.point_velocity(body, params.com);
        let w = kin.body_omega(body);
        e += 0.5 * params.mass * v.norm_squared() + 0.5 * params.inertia * w * w;
    });
    Ok(e)
}

/// Gravitational potential energy at a state (zero level: world origin).
pub fn potential_energy(model: &ChainModel, state: &ChainState) -> Result<f64, DynamicsError> {
    let kin = kinematics(model, state)?;
    let g = model.gravity;
    let mut e = 0.0;
    for_each_body(model, |body, params| {
        let p = kin.point_position(body, params.com);
        e -= params.mass * g.dot(&p);
    });
    Ok(e)
}
