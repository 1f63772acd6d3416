//! Shared independent oracles for the integration suites.
//!
//! Everything here deliberately avoids the library's own computation paths:
//! Jacobians come from finite differences of positions, the mass matrix from
//! the kinetic-energy quadratic form, and the tension QP from coordinate
//! descent and exhaustive active-set enumeration.

#![allow(dead_code)]

use macropod::dynamics::{self, BodyRef, ChainModel, ChainState};
use nalgebra::{DMatrix, DVector, Vector2};

/// Central finite-difference Jacobian of a body point, positions only.
pub fn fd_point_jacobian(
    model: &ChainModel,
    state: &ChainState,
    body: BodyRef,
    point: Vector2<f64>,
    h: f64,
) -> DMatrix<f64> {
    let dof = model.dof();
    let mut jac = DMatrix::zeros(2, dof);
    for c in 0..dof {
        let mut qp = state.q.clone();
        let mut qm = state.q.clone();
        qp[c] += h;
        qm[c] -= h;
        let pp = position_of(model, &qp, body, point);
        let pm = position_of(model, &qm, body, point);
        let d = (pp - pm) / (2.0 * h);
        jac[(0, c)] = d.x;
        jac[(1, c)] = d.y;
    }
    jac
}

fn position_of(
    model: &ChainModel,
    q: &DVector<f64>,
    body: BodyRef,
    point: Vector2<f64>,
) -> Vector2<f64> {
    let state = ChainState::new(q.clone(), DVector::zeros(model.dof()));
    let (pos, _, _) = dynamics::point_kinematics(model, &state, body, point).unwrap();
    pos
}

fn body_angle_of(model: &ChainModel, q: &DVector<f64>, body: BodyRef) -> f64 {
    // Angle from two points on the body's x-axis; avoids the library's
    // angle bookkeeping.
    let o = position_of(model, q, body, Vector2::zeros());
    let t = position_of(model, q, body, Vector2::new(1.0, 0.0));
    let d = t - o;
    d.y.atan2(d.x)
}

/// Kinetic energy from finite differences of positions along `q̇`.
pub fn kinetic_energy_fd(model: &ChainModel, q: &DVector<f64>, qd: &DVector<f64>) -> f64 {
    let eps = 1e-6;
    let qp = q + qd * eps;
    let qm = q - qd * eps;
    let mut bodies: Vec<(BodyRef, f64, Vector2<f64>, f64)> = Vec::new();
    if let Some(base) = model.base_body() {
        bodies.push((BodyRef::Base, base.mass, base.com, base.inertia));
    }
    for (i, link) in model.links().iter().enumerate() {
        bodies.push((BodyRef::Link(i), link.body.mass, link.body.com, link.body.inertia));
    }
    let mut e = 0.0;
    for (body, mass, com, inertia) in bodies {
        let v = (position_of(model, &qp, body, com) - position_of(model, &qm, body, com))
            / (2.0 * eps);
        let ap = body_angle_of(model, &qp, body);
        let am = body_angle_of(model, &qm, body);
        let mut da = ap - am;
        while da > std::f64::consts::PI {
            da -= 2.0 * std::f64::consts::PI;
        }
        while da < -std::f64::consts::PI {
            da += 2.0 * std::f64::consts::PI;
        }
        let w = da / (2.0 * eps);
        e += 0.5 * mass * v.norm_squared() + 0.5 * inertia * w * w;
    }
    e
}

/// Mass matrix recovered from the kinetic-energy quadratic form.
pub fn mass_matrix_oracle(model: &ChainModel, q: &DVector<f64>) -> DMatrix<f64> {
    let dof = model.dof();
    let mut m = DMatrix::zeros(dof, dof);
    let mut diag = vec![0.0; dof];
    for i in 0..dof {
        let mut qd = DVector::zeros(dof);
        qd[i] = 1.0;
        diag[i] = 2.0 * kinetic_energy_fd(model, q, &qd);
        m[(i, i)] = diag[i];
    }
    for i in 0..dof {
        for j in (i + 1)..dof {
            let mut qd = DVector::zeros(dof);
            qd[i] = 1.0;
            qd[j] = 1.0;
            let both = kinetic_energy_fd(model, q, &qd);
            let mij = both - 0.5 * diag[i] - 0.5 * diag[j];
            m[(i, j)] = mij;
            m[(j, i)] = mij;
        }
    }
    m
}

/// Coordinate descent for `min ½‖Ax − b‖²` over `0 ≤ x ≤ u`, run to
/// stationarity. Deterministic sweeps, no shared machinery with the
/// library's active-set solver.
pub fn cd_box_least_squares(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    u: &DVector<f64>,
    max_sweeps: usize,
) -> DVector<f64> {
    let n = a.ncols();
    let mut x: DVector<f64> = DVector::zeros(n);
    let mut r = -b.clone(); // r = A x − b
    let h: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    let tol = 1e-15 * (1.0 + u.amax());
    for _ in 0..max_sweeps {
        let mut moved: f64 = 0.0;
        for j in 0..n {
            if h[j] == 0.0 {
                continue;
            }
            let g = a.column(j).dot(&r);
            let target: f64 = (x[j] - g / h[j]).clamp(0.0, u[j]);
            let delta = target - x[j];
            if delta != 0.0 {
                r += a.column(j) * delta;
                x[j] = target;
                moved = moved.max(delta.abs());
            }
        }
        if moved < tol {
            break;
        }
    }
    x
}

/// Penalty-path oracle for `min ‖x‖² s.t. Ax = b, 0 ≤ x ≤ u`: coordinate
/// descent on `‖x‖² + ρ‖Ax − b‖²` with ρ driven up a geometric schedule.
pub fn penalty_min_norm(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    u: &DVector<f64>,
) -> DVector<f64> {
    let n = a.ncols();
    let mut x: DVector<f64> = DVector::zeros(n);
    let col_h: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    for rho in [1e2, 1e4, 1e6, 1e8, 1e10, 1e12] {
        let tol = 1e-16 * (1.0 + u.amax());
        let mut r = a * &x - b;
        for _ in 0..20_000 {
            let mut moved: f64 = 0.0;
            for j in 0..n {
                let h = 1.0 + rho * col_h[j];
                let g = x[j] + rho * a.column(j).dot(&r);
                let target: f64 = (x[j] - g / h).clamp(0.0, u[j]);
                let delta = target - x[j];
                if delta != 0.0 {
                    r += a.column(j) * delta;
                    x[j] = target;
                    moved = moved.max(delta.abs());
                }
            }
            if moved < tol {
                break;
            }
        }
    }
    x
}

/// Exhaustive active-set enumeration for `min ‖x‖² s.t. Ax = b, box`.
///
/// Every lower/upper/free assignment is tried; free variables take the
/// minimum-norm solution of their equality system (SVD pseudo-inverse).
/// Returns the best feasible objective, or `None` when no assignment
/// reproduces `b` within tolerance.
pub fn enumerate_min_norm(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    u: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let n = a.ncols();
    let tol_eq = 1e-8 * (1.0 + b.amax());
    let tol_box = 1e-9 * (1.0 + u.amax());
    let mut best: Option<(DVector<f64>, f64)> = None;
    let patterns = 3usize.pow(n as u32);
    for code in 0..patterns {
        let mut c = code;
        let mut x: DVector<f64> = DVector::zeros(n);
        let mut free = Vec::new();
        for j in 0..n {
            match c % 3 {
                0 => x[j] = 0.0,
                1 => x[j] = u[j],
                _ => free.push(j),
            }
            c /= 3;
        }
        let mut rhs = b.clone();
        for j in 0..n {
            if !free.contains(&j) {
                rhs -= a.column(j) * x[j];
            }
        }
        if free.is_empty() {
            if rhs.amax() > tol_eq {
                continue;
            }
        } else {
            let a_free = a.select_columns(free.iter());
            let svd = a_free.clone().svd(true, true);
            let sol = svd
                .solve(&rhs, 1e-12 * (1.0 + svd.singular_values.max()))
                .unwrap();
            if (&a_free * &sol - &rhs).amax() > tol_eq {
                continue;
            }
            let mut ok = true;
            for (fi, &j) in free.iter().enumerate() {
                if sol[fi] < -tol_box || sol[fi] > u[j] + tol_box {
                    ok = false;
                    break;
                }
                x[j] = sol[fi].clamp(0.0, u[j]);
            }
            if !ok {
                continue;
            }
        }
        let obj = x.norm_squared();
        if best.as_ref().map_or(true, |(_, bo)| obj < *bo) {
            best = Some((x, obj));
        }
    }
    best
}
