//! Damped Newton iteration with a dogleg trust-region fallback for small
//! square systems.

use crate::linalg::solve_small;
use crate::scalar::lit;
use crate::Real;

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonOptions<T> {
    /// Convergence when `max|F| <= tol`.
    pub tol: T,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome<T> {
    pub x: Vec<T>,
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
}

fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |s, &x| s + x * x)
}

fn transpose_mul<T: Real>(j: &[Vec<T>], r: &[T]) -> Vec<T> {
    let n = r.len();
    (0..j[0].len()).map(|c| (0..n).fold(T::zero(), |s, i| s + j[i][c] * r[i])).collect()
}

fn mul<T: Real>(j: &[Vec<T>], v: &[T]) -> Vec<T> {
    j.iter().map(|row| row.iter().zip(v).fold(T::zero(), |s, (&a, &b)| s + a * b)).collect()
}

/// Solves `F(x) = 0`. `admissible` rejects iterates outside the domain
/// (for instance an amplitude below its floor). Returns the best iterate
/// seen whether or not the tolerance was reached.
pub(crate) fn newton_dogleg<T, F, J, A>(f: F, jac: J, admissible: A, x0: &[T], opts: NewtonOptions<T>) -> NewtonOutcome<T>
where
    T: Real,
    F: Fn(&[T]) -> Option<Vec<T>>,
    J: Fn(&[T]) -> Option<Vec<Vec<T>>>,
    A: Fn(&[T]) -> bool,
{
    let eval = |x: &[T]| -> Option<Vec<T>> {
        if !admissible(x) {
            return None;
        }
        f(x).filter(|r| r.iter().all(|v| v.is_finite()))
    };
    let mut x = x0.to_vec();
    let Some(mut r) = eval(&x) else {
        return NewtonOutcome { x, residual: T::infinity(), iterations: 0, converged: false };
    };
    let mut best = (x.clone(), max_abs(&r));
    let mut radius = lit::<T>(0.5) * (T::one() + norm2(&x).sqrt());
    let armijo = lit::<T>(1e-4);

    for it in 0..opts.max_iter {
        let res = max_abs(&r);
        if res < best.1 {
            best = (x.clone(), res);
        }
        if res <= opts.tol {
            return NewtonOutcome { x, residual: res, iterations: it, converged: true };
        }
        let Some(jm) = jac(&x) else { break };
        let phi0 = norm2(&r);
        let newton = solve_small(jm.clone(), r.iter().map(|&v| -v).collect());

        let mut accepted = false;
        if let Some(p) = &newton {
            let mut step = T::one();
            for _ in 0..30 {
                let xn: Vec<T> = x.iter().zip(p).map(|(&a, &b)| a + step * b).collect();
                if let Some(rn) = eval(&xn) {
                    if norm2(&rn) <= (T::one() - armijo * step) * phi0 {
                        x = xn;
                        r = rn;
                        accepted = true;
                        break;
                    }
                }
                step *= lit(0.5);
            }
        }
        if !accepted {
            // Dogleg between the Cauchy point and the Newton step.
            let g = transpose_mul(&jm, &r);
            let jg = mul(&jm, &g);
            let gg = norm2(&g);
            let jgjg = norm2(&jg);
            if gg == T::zero() || jgjg == T::zero() {
                break;
            }
            let sd: Vec<T> = g.iter().map(|&v| -v * gg / jgjg).collect();
            for _ in 0..40 {
                let pstep: Vec<T> = match &newton {
                    Some(p) if norm2(p).sqrt() <= radius => p.clone(),
                    _ if norm2(&sd).sqrt() >= radius => {
                        let s = radius / gg.sqrt();
                        g.iter().map(|&v| -v * s).collect()
                    }
                    Some(p) => {
                        let d: Vec<T> = p.iter().zip(&sd).map(|(&a, &b)| a - b).collect();
                        let (aa, bb, cc) = (
                            norm2(&d),
                            lit::<T>(2.0) * d.iter().zip(&sd).fold(T::zero(), |s, (&a, &b)| s + a * b),
                            norm2(&sd) - radius * radius,
                        );
                        let tau = (-bb + (bb * bb - lit::<T>(4.0) * aa * cc).max(T::zero()).sqrt()) / (lit::<T>(2.0) * aa);
                        sd.iter().zip(&d).map(|(&a, &b)| a + tau * b).collect()
                    }
                    None => sd.clone(),
                };
                let xn: Vec<T> = x.iter().zip(&pstep).map(|(&a, &b)| a + b).collect();
                let predicted = phi0 - norm2(&r.iter().zip(mul(&jm, &pstep)).map(|(&a, b)| a + b).collect::<Vec<_>>());
                if let Some(rn) = eval(&xn) {
                    let actual = phi0 - norm2(&rn);
                    if actual > T::zero() && predicted > T::zero() {
                        let rho = actual / predicted;
                        if rho > lit(0.75) {
                            radius *= lit(2.0);
                        } else if rho < lit(0.25) {
                            radius *= lit(0.5);
                        }
                        x = xn;
                        r = rn;
                        accepted = true;
                        break;
                    }
                }
                radius *= lit(0.25);
                if radius <= T::epsilon() * (T::one() + norm2(&x).sqrt()) {
                    break;
                }
            }
        }
        if !accepted {
            break;
        }
    }
    let res = max_abs(&r);
    if res < best.1 {
        best = (x, res);
    }
    let converged = best.1 <= opts.tol;
    NewtonOutcome { x: best.0, residual: best.1, iterations: opts.max_iter, converged }
}
