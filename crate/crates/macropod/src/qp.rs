//! Small dense active-set solvers used by the tension allocator.
//!
//! Two routines, both specialized to boxes `0 ≤ x ≤ u` with at most a dozen
//! variables:
//!
//! - [`bounded_least_squares`]: `min ‖A x − b‖²` over the box. Used to find a
//!   feasible starting point and, when the torque target is unreachable, the
//!   least-squares-nearest tensions.
//! - [`min_norm_polish`]: `min ‖x‖²` subject to `A x = A x₀` and the box,
//!   starting from a feasible `x₀`. Identity Hessian, so every step is the
//!   projection of `−x` onto the null space of the free columns.
//!
//! Both use deterministic tie-breaking (lowest index) so identical inputs
//! give identical outputs.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QpError {
    DimensionMismatch { expected: usize, got: usize },
    /// Active-set iteration cap hit; indicates degenerate cycling.
    IterationLimit,
}

impl std::fmt::Display for QpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QpError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            QpError::IterationLimit => write!(f, "active-set iteration limit reached"),
        }
    }
}

impl std::error::Error for QpError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    AtLower,
    AtUpper,
    Free,
}

pub struct BvlsSolution {
    pub x: DVector<f64>,
    /// `A x − b` at the solution.
    pub residual: DVector<f64>,
}

/// Least-squares solve via SVD, minimum-norm on rank deficiency.
fn pinv_solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    svd.solve(rhs, 1e-12 * (1.0 + svd.singular_values.max()))
        .expect("svd solve")
}

fn check_dims(a: &DMatrix<f64>, b: &DVector<f64>, u: &DVector<f64>) -> Result<(), QpError> {
    if a.nrows() != b.len() {
        return Err(QpError::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    if a.ncols() != u.len() {
        return Err(QpError::DimensionMismatch {
            expected: a.ncols(),
            got: u.len(),
        });
    }
    Ok(())
}

/// `min ‖A x − b‖²` subject to `0 ≤ x ≤ u`.
///
/// Active-set method in the Lawson–Hanson style: variables start at their
/// lower bound; the variable with the steepest feasible descent gradient is
/// freed, and the free subproblem is re-solved with clamping until the
/// gradient has no feasible descent direction left.
pub fn bounded_least_squares(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<BvlsSolution, QpError> {
    check_dims(a, b, u)?;
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut state = vec![VarState::AtLower; n];
    let grad_scale = 1.0 + a.amax() * (1.0 + b.amax() + a.amax() * u.amax());
    let tol_w = 1e-12 * grad_scale;

    let max_outer = 30 * (n + 1);
    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        // Most promising bound variable with a feasible descent direction.
        let mut pick: Option<(usize, f64)> = None;
        for j in 0..n {
            let wj = w[j];
            let eligible = match state[j] {
                VarState::AtLower => wj > tol_w && u[j] > 0.0,
                VarState::AtUpper => wj < -tol_w,
                VarState::Free => false,
            };
            if eligible {
                let mag = wj.abs();
                if pick.map_or(true, |(_, best)| mag > best) {
                    pick = Some((j, mag));
                }
            }
        }
        let Some((j, _)) = pick else {
            let residual = a * &x - b;
            return Ok(BvlsSolution { x, residual });
        };
        state[j] = VarState::Free;

        // Re-solve on the free set, clamping until the LS point is interior.
        let max_inner = 3 * (n + 1);
        let mut inner_ok = false;
        for _ in 0..max_inner {
            let free: Vec<usize> = (0..n).filter(|&k| state[k] == VarState::Free).collect();
            if free.is_empty() {
                inner_ok = true;
                break;
            }
            let a_free = a.select_columns(free.iter());
            let mut rhs = b.clone();
            for k in 0..n {
                if state[k] != VarState::Free {
                    rhs -= a.column(k) * x[k];
                }
            }
            let z = pinv_solve(&a_free, &rhs);
            let within = free
                .iter()
                .enumerate()
                .all(|(fi, &k)| z[fi] >= -1e-14 && z[fi] <= u[k] + 1e-14);
            if within {
                for (fi, &k) in free.iter().enumerate() {
                    x[k] = z[fi].clamp(0.0, u[k]);
                }
                inner_ok = true;
                break;
            }
            // Step from x toward z, stopping at the first bound crossed.
            let mut alpha = 1.0;
            let mut block: Option<(usize, VarState)> = None;
            for (fi, &k) in free.iter().enumerate() {
                let d = z[fi] - x[k];
                if d < -1e-15 {
                    let step = x[k] / -d;
                    if step < alpha {
                        alpha = step;
                        block = Some((k, VarState::AtLower));
                    }
                } else if d > 1e-15 {
                    let step = (u[k] - x[k]) / d;
                    if step < alpha {
                        alpha = step;
                        block = Some((k, VarState::AtUpper));
                    }
                }
            }
            for (fi, &k) in free.iter().enumerate() {
                x[k] = (x[k] + alpha * (z[fi] - x[k])).clamp(0.0, u[k]);
            }
            match block {
                Some((k, s)) => {
                    x[k] = if s == VarState::AtUpper { u[k] } else { 0.0 };
                    state[k] = s;
                }
                None => {
                    inner_ok = true;
                    break;
                }
            }
        }
        if !inner_ok {
            return Err(QpError::IterationLimit);
        }
    }
    Err(QpError::IterationLimit)
}

/// `min ‖x‖²` subject to `A x = A x₀` and `0 ≤ x ≤ u`, from a feasible `x₀`.
///
/// Primal active-set with identity Hessian: each step is the projection of
/// the negative iterate onto the null space of the free equality columns,
/// which keeps `A x` invariant by construction.
pub fn min_norm_polish(
    a: &DMatrix<f64>,
    u: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<DVector<f64>, QpError> {
    check_dims(a, &DVector::zeros(a.nrows()), u)?;
    if x0.len() != a.ncols() {
        return Err(QpError::DimensionMismatch {
            expected: a.ncols(),
            got: x0.len(),
        });
    }
    let n = a.ncols();
    let scale = 1.0 + u.amax();
    let tol_bound = 1e-11 * scale;
    let tol_step = 1e-12 * scale;
    let tol_mu = 1e-9 * scale;

    let mut x = x0.clone();
    let mut state: Vec<VarState> = (0..n)
        .map(|j| {
            if x[j] <= tol_bound {
                x[j] = 0.0;
                VarState::AtLower
            } else if x[j] >= u[j] - tol_bound {
                x[j] = u[j];
                VarState::AtUpper
            } else {
                VarState::Free
            }
        })
        .collect();

    let max_iter = 100 * (n + 1);
    for _ in 0..max_iter {
        let free: Vec<usize> = (0..n).filter(|&k| state[k] == VarState::Free).collect();
        let a_free = a.select_columns(free.iter());
        let x_free = DVector::from_iterator(free.len(), free.iter().map(|&k| x[k]));

        // Step direction: -x_free projected onto null(A_free).
        let p = if free.is_empty() {
            DVector::zeros(0)
        } else {
            let row_component = pinv_solve(&a_free, &(&a_free * &x_free));
            let mut p = -&x_free;
            p += row_component;
            p
        };

        if p.amax() <= tol_step {
            // Multipliers: x_free = A_freeᵀ λ in least squares.
            let lambda = if free.is_empty() {
                DVector::zeros(a.nrows())
            } else {
                pinv_solve(&a_free.transpose(), &x_free)
            };
            let at_lambda = a.transpose() * &lambda;
            // Bound multiplier violations; drop the worst offender.
            let mut worst: Option<(usize, f64)> = None;
            for k in 0..n {
                let v = match state[k] {
                    VarState::AtLower => at_lambda[k],
                    VarState::AtUpper => u[k] - at_lambda[k],
                    VarState::Free => continue,
                };
                if v > tol_mu && worst.map_or(true, |(_, best)| v > best) {
                    worst = Some((k, v));
                }
            }
            match worst {
                None => return Ok(x),
                Some((k, _)) => state[k] = VarState::Free,
            }
            continue;
        }

        // Longest feasible step along p, capped at the full step.
        let mut alpha = 1.0;
        let mut block: Option<(usize, VarState)> = None;
        for (fi, &k) in free.iter().enumerate() {
            if p[fi] < -1e-15 {
                let step = x[k] / -p[fi];
                if step < alpha {
                    alpha = step;
                    block = Some((k, VarState::AtLower));
                }
            } else if p[fi] > 1e-15 {
                let step = (u[k] - x[k]) / p[fi];
                if step < alpha {
                    alpha = step;
                    block = Some((k, VarState::AtUpper));
                }
            }
        }
        for (fi, &k) in free.iter().enumerate() {
            x[k] = (x[k] + alpha * p[fi]).clamp(0.0, u[k]);
        }
        if let Some((k, s)) = block {
            x[k] = if s == VarState::AtUpper { u[k] } else { 0.0 };
            state[k] = s;
        }
    }
    Err(QpError::IterationLimit)
}

/// Normalized KKT violation of `min ‖f‖² s.t. A f = b, 0 ≤ f ≤ u` at `f`.
///
/// Zero (up to tolerance) iff `f` is stationary: the gradient is a
/// combination of equality-row space and non-negative multiples of the
/// active bound normals. The returned value is scaled by `max(1, ‖f‖∞)` so a
/// threshold of 1e-6 is meaningful across problem magnitudes.
pub fn kkt_violation(a: &DMatrix<f64>, b: &DVector<f64>, u: &DVector<f64>, f: &DVector<f64>) -> f64 {
    let n = a.ncols();
    let scale = f.amax().max(1.0);
    let tol_bound = 1e-7 * (1.0 + u.amax());
    let free: Vec<usize> = (0..n)
        .filter(|&k| f[k] > tol_bound && f[k] < u[k] - tol_bound)
        .collect();
    let a_free = a.select_columns(free.iter());
    let f_free = DVector::from_iterator(free.len(), free.iter().map(|&k| f[k]));
    let lambda = if free.is_empty() {
        DVector::zeros(a.nrows())
    } else {
        pinv_solve(&a_free.transpose(), &f_free)
    };
    let at_lambda = a.transpose() * &lambda;
    let mut viol: f64 = (a * f - b).amax();
    for k in 0..n {
        if f[k] <= tol_bound {
            // Lower bound active: need (Aᵀλ)ₖ ≤ 0.
            viol = viol.max(at_lambda[k]);
        } else if f[k] >= u[k] - tol_bound {
            // Upper bound active: need (Aᵀλ)ₖ ≥ uₖ.
            viol = viol.max(u[k] - at_lambda[k]);
        } else {
            viol = viol.max((f[k] - at_lambda[k]).abs());
        }
    }
    // Box violations are disqualifying regardless of multipliers.
    for k in 0..n {
        viol = viol.max(-f[k]);
        viol = viol.max(f[k] - u[k]);
    }
    viol / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bvls_unconstrained_interior() {
        // A = I, b interior: exact recovery.
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![0.3, 0.7]);
        let u = DVector::from_vec(vec![1.0, 1.0]);
        let sol = bounded_least_squares(&a, &b, &u).unwrap();
        assert_relative_eq!(sol.x, b, epsilon = 1e-12);
    }

    #[test]
    fn bvls_clamps_to_box() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![2.0, -1.0]);
        let u = DVector::from_vec(vec![1.0, 1.0]);
        let sol = bounded_least_squares(&a, &b, &u).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.x[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bvls_rank_deficient() {
        // Two identical columns; any split solves it, residual must be zero.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0]);
        let u = DVector::from_vec(vec![2.0, 2.0]);
        let sol = bounded_least_squares(&a, &b, &u).unwrap();
        assert!(sol.residual.amax() < 1e-12);
    }

    #[test]
    fn polish_reaches_min_norm_split() {
        // x1 + x2 = 1: minimum norm is the even split.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let u = DVector::from_vec(vec![2.0, 2.0]);
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let x = min_norm_polish(&a, &u, &x0).unwrap();
        assert_relative_eq!(x[0], 0.5, epsilon = 1e-10);
        assert_relative_eq!(x[1], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn polish_respects_upper_bound() {
        // x1 + x2 = 1.8 with u = (1, 2): optimum pins nothing at start but
        // the even split (0.9, 0.9) is interior and optimal.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let u = DVector::from_vec(vec![1.0, 2.0]);
        let x0 = DVector::from_vec(vec![0.2, 1.6]);
        let x = min_norm_polish(&a, &u, &x0).unwrap();
        assert_relative_eq!(x[0], 0.9, epsilon = 1e-10);
        assert_relative_eq!(x[1], 0.9, epsilon = 1e-10);
        assert!(kkt_violation(&a, &(&a * &x), &u, &x) < 1e-8);
    }

    #[test]
    fn polish_keeps_constraint_value() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.2, 0.0, 1.0, 1.0]);
        let u = DVector::from_vec(vec![5.0, 5.0, 5.0]);
        let x0 = DVector::from_vec(vec![2.0, 1.0, 3.0]);
        let b = &a * &x0;
        let x = min_norm_polish(&a, &u, &x0).unwrap();
        assert_relative_eq!(&a * &x, b, epsilon = 1e-9);
        assert!(x.norm_squared() <= x0.norm_squared() + 1e-12);
    }
}
