//! The three-tile renormalization problem on the gasket.
//!
//! Given tile weights `(1, r1, r2)` and level-0 conductances, find `λ` such
//! that the harmonic extension satisfies `ℰ_1(ũ) = λ^{-1} ℰ_0(u)`. Reducing the
//! level-1 network with Δ–Y transforms yields three polynomial equations in
//! `(r1, r2, s1, s2, λ)`; the symmetric case `r1 = r2` has a closed form.
//!
//! Conductance conventions: `c_i` is the conductance of the level-0 edge
//! opposite vertex `i`, and after normalising the star resistance at vertex 0
//! to 1 the shape parameters are `s1 = c1/c0`, `s2 = c2/c0`.

use serde::Serialize;

use crate::dirichlet_form::ConductanceModel;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};

fn positive3(x: [f64; 3], what: &str) -> Result<()> {
    if x.iter().all(|v| *v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be positive, got {x:?}")))
    }
}

/// Triangle resistances `w_i` (opposite vertex `i`) to the equivalent star.
pub fn delta_to_y(w: [f64; 3]) -> Result<[f64; 3]> {
    positive3(w, "delta resistances")?;
    let d = w[0] + w[1] + w[2];
    Ok([w[1] * w[2] / d, w[0] * w[2] / d, w[0] * w[1] / d])
}

/// Star resistances `y_i` (at vertex `i`) to the equivalent triangle.
pub fn y_to_delta(y: [f64; 3]) -> Result<[f64; 3]> {
    positive3(y, "star resistances")?;
    let p = y[0] * y[1] + y[1] * y[2] + y[2] * y[0];
    Ok([p / y[0], p / y[1], p / y[2]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriangleNetwork {
    pub delta_resistances: [f64; 3],
    pub y_resistances: [f64; 3],
}

impl TriangleNetwork {
    pub fn from_delta(w: [f64; 3]) -> Result<Self> {
        Ok(TriangleNetwork {
            delta_resistances: w,
            y_resistances: delta_to_y(w)?,
        })
    }

    pub fn from_conductances(c: [f64; 3]) -> Result<Self> {
        positive3(c, "conductances")?;
        Self::from_delta([1.0 / c[0], 1.0 / c[1], 1.0 / c[2]])
    }

    /// `(s1, s2)`: the star resistances scaled so that the one at vertex 0 is 1.
    pub fn shape(&self) -> (f64, f64) {
        let y = self.y_resistances;
        (y[1] / y[0], y[2] / y[0])
    }
}

/// `s₊(r) = (r - 1 + √(5r² - 2r + 1)) / (r + 1)`.
pub fn symmetric_s(r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain(format!("weight r must be positive, got {r}")));
    }
    let root = (5.0 * r * r - 2.0 * r + 1.0).sqrt();
    if r < 1.0 {
        // rationalised to avoid cancellation as r -> 0
        Ok(4.0 * r * r / ((r + 1.0) * (root + 1.0 - r)))
    } else {
        Ok((r - 1.0 + root) / (r + 1.0))
    }
}

pub fn sigma(r1: f64, r2: f64, s1: f64, s2: f64) -> f64 {
    r1 + r2 + s1 + s2 + s1 * r1 + s2 * r2
}

fn positive4(r1: f64, r2: f64, s1: f64, s2: f64) -> Result<()> {
    if [r1, r2, s1, s2].iter().all(|v| *v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain(
            "weights and shape parameters must be positive",
        ))
    }
}

/// `λ = 1 + s1 s2 (1 + r1)(1 + r2) / Σ`.
pub fn lambda_from_system(r1: f64, r2: f64, s1: f64, s2: f64) -> Result<f64> {
    positive4(r1, r2, s1, s2)?;
    Ok(1.0 + s1 * s2 * (1.0 + r1) * (1.0 + r2) / sigma(r1, r2, s1, s2))
}

/// Defects (LHS - RHS) of the two shape equations.
pub fn system_residuals(r1: f64, r2: f64, s1: f64, s2: f64, lambda: f64) -> (f64, f64) {
    let sg = sigma(r1, r2, s1, s2);
    let a = sg * s2 * r1 + s1 * (1.0 + r1) * (r1 + r2) - lambda * s1 * sg;
    let b = sg * s1 * r2 + s2 * (1.0 + r2) * (r1 + r2) - lambda * s2 * sg;
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenormSolution {
    pub r: [f64; 3],
    pub s: [f64; 2],
    pub lambda: f64,
    pub r_tilde: [f64; 3],
    pub residuals: [f64; 2],
    #[serde(rename = "Sigma")]
    pub sigma: f64,
}

impl RenormSolution {
    pub fn from_parameters(r1: f64, r2: f64, s1: f64, s2: f64) -> Result<Self> {
        let lambda = lambda_from_system(r1, r2, s1, s2)?;
        let (a, b) = system_residuals(r1, r2, s1, s2, lambda);
        Ok(RenormSolution {
            r: [1.0, r1, r2],
            s: [s1, s2],
            lambda,
            r_tilde: [1.0 / lambda, r1 / lambda, r2 / lambda],
            residuals: [a, b],
            sigma: sigma(r1, r2, s1, s2),
        })
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals[0].abs().max(self.residuals[1].abs())
    }

    /// Residuals within `rel · Σ²`.
    pub fn is_accepted(&self, rel: f64) -> bool {
        self.max_residual() <= rel * self.sigma * self.sigma
    }

    /// Conductance model on the gasket triangle with level-0 edges
    /// `(0,1), (1,2), (2,0)` and tile weights `r̃`.
    pub fn conductance_model(&self) -> ConductanceModel {
        let [s1, s2] = self.s;
        ConductanceModel {
            base: vec![s2, 1.0, s1],
            weights: self.r_tilde.to_vec(),
        }
    }
}

/// Weights `(1, r, r)` with the symmetric shape `s1 = s2 = s₊(r)`.
pub fn solve_symmetric(r: f64) -> Result<RenormSolution> {
    let s = symmetric_s(r)?;
    let sol = RenormSolution::from_parameters(r, r, s, s)?;
    if !sol.r_tilde.iter().all(|x| *x > 0.0 && *x < 1.0) {
        return Err(Error::Consistency(format!(
            "corrected weights {:?} fall outside (0, 1)",
            sol.r_tilde
        )));
    }
    Ok(sol)
}

pub const SCAN_POINTS: usize = 10_000;
pub const SCAN_RANGE: (f64, f64) = (1e-3, 1e3);
pub const BISECTION_TOL: f64 = 1e-12;
/// Acceptance threshold for scanned roots, relative to `Σ²`.
pub const SCAN_ACCEPT: f64 = 1e-8;

/// The unique positive `r2` solving the second shape equation for given `r1`.
///
/// With `λ` eliminated that equation is quadratic in `r2` with positive
/// leading and negative constant coefficient, so exactly one root is positive.
pub fn r2_from_second(r1: f64, s1: f64, s2: f64) -> f64 {
    let b = r1 + s1 + s2 + s1 * r1;
    let k = (1.0 + r1) * s1 * s2 * s2;
    let a2 = s1 * (1.0 + s2) + s2;
    let a1 = s1 * b + s2 * (1.0 + r1) - s2 * (1.0 + s2) - k;
    let a0 = s2 * (r1 - b) - k;
    let root = (a1 * a1 - 4.0 * a2 * a0).sqrt();
    if a1 > 0.0 {
        -2.0 * a0 / (a1 + root)
    } else {
        (root - a1) / (2.0 * a2)
    }
}

/// First shape equation with `λ` and `r2` eliminated.
fn reduced(r1: f64, s1: f64, s2: f64) -> f64 {
    let r2 = r2_from_second(r1, s1, s2);
    let sg = sigma(r1, r2, s1, s2);
    sg * s2 * r1 + s1 * (1.0 + r1) * (r1 + r2) - sg * s1 - (1.0 + r1) * (1.0 + r2) * s1 * s1 * s2
}

/// Exploratory root scan for raw conductances `c`: log grid in `r1`, sign
/// changes of the reduced equation, bisection. Roots are returned only when
/// the full residuals pass [`SCAN_ACCEPT`]; an empty list is a valid answer.
/// Tangential roots without a sign change are not detected.
pub fn general_scan(
    c: [f64; 3],
    points: usize,
    exec_mode: Execution,
) -> Result<Vec<RenormSolution>> {
    if points < 2 {
        return Err(Error::domain("scan needs at least 2 grid points"));
    }
    let (s1, s2) = TriangleNetwork::from_conductances(c)?.shape();
    let (lo, hi) = (SCAN_RANGE.0.ln(), SCAN_RANGE.1.ln());
    let grid: Vec<f64> = (0..points)
        .map(|k| (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp())
        .collect();
    let values = exec::map_slice(exec_mode, &grid, |&r1| reduced(r1, s1, s2));
    let brackets: Vec<usize> = (0..points - 1)
        .filter(|&k| values[k] == 0.0 || values[k].signum() != values[k + 1].signum())
        .collect();
    let roots = exec::map_slice(exec_mode, &brackets, |&k| {
        let (mut a, mut b) = (grid[k], grid[k + 1]);
        let mut fa = values[k];
        if fa == 0.0 {
            return a;
        }
        while b - a > BISECTION_TOL * b.max(1.0) {
            let mid = 0.5 * (a + b);
            let fm = reduced(mid, s1, s2);
            if fm == 0.0 {
                return mid;
            }
            if fm.signum() == fa.signum() {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    });
    let mut out: Vec<RenormSolution> = Vec::new();
    for r1 in roots {
        let r2 = r2_from_second(r1, s1, s2);
        let sol = RenormSolution::from_parameters(r1, r2, s1, s2)?;
        if sol.is_accepted(SCAN_ACCEPT)
            && !out
                .iter()
                .any(|o| (o.r[1] - r1).abs() <= 1e-9 * r1.max(1.0))
        {
            out.push(sol);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_y_examples() {
        assert_eq!(delta_to_y([3.0, 3.0, 3.0]).unwrap(), [1.0, 1.0, 1.0]);
        let y = delta_to_y([1.0, 1.0, 1.0]).unwrap();
        assert!(y.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-16));
        assert!(delta_to_y([1.0, 0.0, 1.0]).is_err());
        assert!(y_to_delta([1.0, -1.0, 1.0]).is_err());
        let w = [0.3, 2.0, 7.5];
        let back = y_to_delta(delta_to_y(w).unwrap()).unwrap();
        for (a, b) in w.iter().zip(back) {
            assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn shape_from_conductances() {
        let n = TriangleNetwork::from_conductances([2.0, 3.0, 5.0]).unwrap();
        let (s1, s2) = n.shape();
        assert!((s1 - 1.5).abs() < 1e-15 && (s2 - 2.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(symmetric_s(1.0).unwrap(), 1.0);
        assert!((symmetric_s(2.0).unwrap() - (1.0 + 17f64.sqrt()) / 3.0).abs() < 1e-15);
        assert!(symmetric_s(0.0).is_err());
        assert!(symmetric_s(-1.0).is_err());
        assert!(symmetric_s(1e-9).unwrap() > 0.0);
    }

    #[test]
    fn standard_solution() {
        let sol = solve_symmetric(1.0).unwrap();
        assert!((sol.lambda - 5.0 / 3.0).abs() < 1e-15);
        assert!(sol.r_tilde.iter().all(|x| (x - 0.6).abs() < 1e-15));
        assert!(sol.max_residual() < 1e-12);
        assert_eq!(sol.sigma, 6.0);
    }

    #[test]
    fn perturbed_shape_is_rejected() {
        let s = symmetric_s(1.0).unwrap() + 0.1;
        let lam = lambda_from_system(1.0, 1.0, s, s).unwrap();
        let (a, b) = system_residuals(1.0, 1.0, s, s, lam);
        assert!(a.abs() > 1e-3 && b.abs() > 1e-3);
    }

    #[test]
    fn relabeling_symmetry() {
        // (r1, s1) <-> (r2, s2) swaps the two shape equations
        let (r1, r2, s1, s2) = (0.7, 2.3, 1.1, 0.4);
        let lam = lambda_from_system(r1, r2, s1, s2).unwrap();
        assert_eq!(lam, lambda_from_system(r2, r1, s2, s1).unwrap());
        let (a, b) = system_residuals(r1, r2, s1, s2, lam);
        let (c, d) = system_residuals(r2, r1, s2, s1, lam);
        assert!((a - d).abs() < 1e-12 && (b - c).abs() < 1e-12);
    }

    #[test]
    fn scan_finds_symmetric_root() {
        let sols = general_scan([1.0, 1.0, 1.0], SCAN_POINTS, Execution::default()).unwrap();
        assert!(sols
            .iter()
            .any(|s| (s.r[1] - 1.0).abs() < 1e-8 && (s.r[2] - 1.0).abs() < 1e-8));
        let c = [1.0, 2.0, 2.0];
        let sols = general_scan(c, SCAN_POINTS, Execution::default()).unwrap();
        assert!(sols.iter().any(|s| (s.r[1] - s.r[2]).abs() < 1e-8));
    }

    #[test]
    fn asymmetric_scan_root() {
        // s1 = 2, s2 = 1/2
        let sols = general_scan([1.0, 2.0, 0.5], SCAN_POINTS, Execution::Sequential).unwrap();
        let hit = sols
            .iter()
            .find(|s| (s.r[1] - 2.27901).abs() < 1e-4)
            .expect("root near r1 = 2.279");
        assert!((hit.r[2] - 0.273726).abs() < 1e-5);
        assert!((hit.lambda - 1.42847).abs() < 1e-4);
        let par = general_scan([1.0, 2.0, 0.5], SCAN_POINTS, Execution::Parallel).unwrap();
        assert_eq!(sols, par);
    }

    #[test]
    fn json_field_names() {
        let s = serde_json::to_string(&solve_symmetric(1.0).unwrap()).unwrap();
        for key in [
            "\"r\"",
            "\"s\"",
            "\"lambda\"",
            "\"r_tilde\"",
            "\"residuals\"",
            "\"Sigma\"",
        ] {
            assert!(s.contains(key), "{s}");
        }
    }
}
