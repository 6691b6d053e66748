//! All branches of `R^{-1}(w)`: the roots of `z^N - w z^m + lambda`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::rational_map::{cmp_arg_modulus, MapSpec};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 200;
const ANGLE_OFFSET: f64 = 0.37;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreimageSet {
    pub target: Complex64,
    /// `(root, multiplicity)` sorted by argument, then modulus.
    pub roots: Vec<(Complex64, usize)>,
    /// `|p(root)|` for each entry of `roots`.
    pub residuals: Vec<f64>,
}

impl PreimageSet {
    pub fn total_multiplicity(&self) -> usize {
        self.roots.iter().map(|r| r.1).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.roots.iter().map(|r| r.0)
    }
}

/// Coefficients of `z^N - w z^m + lambda`, lowest degree first.
pub fn preimage_polynomial(spec: &MapSpec, w: Complex64) -> Vec<Complex64> {
    let nn = spec.degree();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); nn + 1];
    coeffs[0] = spec.lambda();
    coeffs[spec.m() as usize] -= w;
    coeffs[nn] += Complex64::new(1.0, 0.0);
    coeffs
}

fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Rounding-error bound of Horner evaluation at `z`.
fn eval_bound(coeffs: &[Complex64], z: Complex64) -> f64 {
    let r = z.norm();
    coeffs.iter().rev().fold(0.0, |acc, a| acc * r + a.norm()) * 16.0 * f64::EPSILON
}

/// Simultaneous Aberth–Ehrlich iteration on a monic polynomial.
fn aberth(coeffs: &[Complex64], init: Vec<Complex64>) -> Result<Vec<Complex64>> {
    let mut z = init;
    let deg = z.len();
    let mut converged = vec![false; deg];
    for _sweep in 0..MAX_SWEEPS {
        for k in 0..deg {
            if converged[k] {
                continue;
            }
            let (p, dp) = horner(coeffs, z[k]);
            if p.norm() <= eval_bound(coeffs, z[k]) {
                converged[k] = true;
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..deg)
                .filter(|&j| j != k)
                .map(|j| (z[k] - z[j]).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[k] -= step;
                if step.norm() <= f64::EPSILON * z[k].norm() {
                    converged[k] = true;
                }
            }
        }
        if converged.iter().all(|c| *c) {
            return Ok(z);
        }
    }
    let residuals: Vec<f64> = z.iter().map(|r| horner(coeffs, *r).0.norm()).collect();
    let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
    // clusters at multiple roots stall the step test but still reach the
    // backward-error floor up to a modest factor
    let scale: f64 = coeffs.iter().map(|c| c.norm()).sum();
    if max_residual <= 1e-10 * scale {
        return Ok(z);
    }
    Err(Error::Solver {
        sweeps: MAX_SWEEPS,
        best: z,
        residuals,
        max_residual,
    })
}

/// Roots of `R(z) = w` with multiplicities.
///
/// Critical points whose critical value lies within `1e3 * tol * scale` of
/// `w` are reported as double roots; any other roots closer than `10 * tol`
/// are merged.
pub fn solve_preimages(spec: &MapSpec, w: Complex64, tol: f64) -> Result<PreimageSet> {
    if !(tol > 0.0) {
        return Err(Error::domain("tol must be positive"));
    }
    let nn = spec.degree();
    let coeffs = preimage_polynomial(spec, w);
    let scale = 1.0 + w.norm() + spec.lambda().norm();
    let radius = scale.powf(1.0 / nn as f64);
    let init: Vec<Complex64> = (0..nn)
        .map(|k| {
            Complex64::from_polar(
                radius,
                2.0 * std::f64::consts::PI * k as f64 / nn as f64 + ANGLE_OFFSET,
            )
        })
        .collect();
    let mut raw = aberth(&coeffs, init)?;

    // Newton polish away from multiple roots
    for z in raw.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(&coeffs, *z);
            if dp.norm() < 1e-6 * scale {
                break;
            }
            let step = p / dp;
            if !(step.re.is_finite() && step.im.is_finite()) {
                break;
            }
            *z -= step;
            if step.norm() <= f64::EPSILON * z.norm() {
                break;
            }
        }
    }

    let mut taken = vec![false; nn];
    let mut roots: Vec<(Complex64, usize)> = Vec::with_capacity(nn);

    let crit_tol = 1e3 * tol * scale;
    for c in spec.critical_points() {
        let Some(v) = spec.eval_finite(c).finite() else {
            continue;
        };
        if (v - w).norm() > crit_tol {
            continue;
        }
        // the two approximations nearest c collapse onto c
        let mut near: Vec<usize> = (0..nn).filter(|&k| !taken[k]).collect();
        near.sort_by(|&a, &b| (raw[a] - c).norm().total_cmp(&(raw[b] - c).norm()));
        for &k in near.iter().take(2) {
            taken[k] = true;
        }
        roots.push((c, 2));
    }

    let merge_radius = 10.0 * tol;
    for k in 0..nn {
        if taken[k] {
            continue;
        }
        taken[k] = true;
        let mut sum = raw[k];
        let mut mult = 1;
        for j in k + 1..nn {
            if !taken[j] && (raw[j] - raw[k]).norm() < merge_radius {
                taken[j] = true;
                sum += raw[j];
                mult += 1;
            }
        }
        roots.push((sum / mult as f64, mult));
    }

    roots.sort_by(|a, b| cmp_arg_modulus(&a.0, &b.0));
    let residuals = roots
        .iter()
        .map(|(r, _)| horner(&coeffs, *r).0.norm())
        .collect();
    Ok(PreimageSet {
        target: w,
        roots,
        residuals,
    })
}

/// Solve many targets; results are in input order regardless of `exec`.
pub fn solve_preimages_batch(
    spec: &MapSpec,
    targets: &[Complex64],
    tol: f64,
    exec: Execution,
) -> Result<Vec<PreimageSet>> {
    exec::map_slice(exec, targets, |w| solve_preimages(spec, *w, tol))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn polynomial_coefficients() {
        let r = MapSpec::sierpinski();
        let p = preimage_polynomial(&r, c(4.0 / 3.0, 0.0));
        assert_eq!(
            p,
            vec![
                c(-16.0 / 27.0, 0.0),
                c(-4.0 / 3.0, 0.0),
                c(0.0, 0.0),
                c(1.0, 0.0)
            ]
        );
        let p0 = preimage_polynomial(&r, c(0.0, 0.0));
        assert_eq!(
            p0,
            vec![c(-16.0 / 27.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]
        );
        let q = MapSpec::quartic_example();
        let p4 = preimage_polynomial(&q, c(1.0, 0.0));
        assert_eq!(
            p4,
            vec![
                q.lambda(),
                c(0.0, 0.0),
                c(-1.0, 0.0),
                c(0.0, 0.0),
                c(1.0, 0.0)
            ]
        );
    }

    #[test]
    fn fixed_point_preimages() {
        let r = MapSpec::sierpinski();
        let set = solve_preimages(&r, c(4.0 / 3.0, 0.0), DEFAULT_TOL).unwrap();
        assert_eq!(set.roots.len(), 2);
        assert_eq!(set.total_multiplicity(), 3);
        let (a, ma) = set.roots[0];
        let (b, mb) = set.roots[1];
        assert!((a - c(4.0 / 3.0, 0.0)).norm() < 1e-12 && ma == 1);
        assert!((b - c(-2.0 / 3.0, 0.0)).norm() < 1e-12 && mb == 2);
        assert!(set.residuals.iter().all(|r| *r <= 1e-10));
    }

    #[test]
    fn two_cycle_preimage() {
        let r = MapSpec::sierpinski();
        let z1 = c(4.0 / 3.0, 0.0) * r.omega();
        let z2 = z1 * r.omega();
        let set = solve_preimages(&r, z2, DEFAULT_TOL).unwrap();
        assert!(set.points().any(|p| (p - z1).norm() < 1e-12));
    }

    #[test]
    fn generic_target_is_simple() {
        let r = MapSpec::sierpinski();
        let set = solve_preimages(&r, c(0.3, -0.8), DEFAULT_TOL).unwrap();
        assert_eq!(set.roots.len(), 3);
        for (z, m) in &set.roots {
            assert_eq!(*m, 1);
            let back = r.eval_finite(*z).finite().unwrap();
            assert!((back - c(0.3, -0.8)).norm() <= 1e-8 * (1.0 + 0.8544));
        }
    }

    #[test]
    fn ordering_is_by_argument() {
        let r = MapSpec::quartic_example();
        let set = solve_preimages(&r, c(0.1, 0.2), DEFAULT_TOL).unwrap();
        let args: Vec<f64> = set.points().map(crate::rational_map::arg_2pi).collect();
        assert!(args.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn bad_tolerance() {
        assert!(solve_preimages(&MapSpec::sierpinski(), c(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn batch_modes_agree() {
        let r = MapSpec::sierpinski();
        let targets: Vec<_> = (0..16)
            .map(|k| Complex64::from_polar(1.0, k as f64))
            .collect();
        let a = solve_preimages_batch(&r, &targets, DEFAULT_TOL, Execution::Sequential).unwrap();
        let b = solve_preimages_batch(&r, &targets, DEFAULT_TOL, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
