//! The family `R(z) = z^n + lambda / z^m` on the Riemann sphere.
//!
//! Evaluation, derivatives, critical points, orbit detection with cycle
//! multipliers, and the Misiurewicz classification of critical orbits.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ORBIT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Absolute tolerance used to deduplicate post-critical points and cycles.
pub const POST_CRITICAL_DEDUP_TOL: f64 = 1e-8;
/// `| |multiplier| - 1 |` below this marks a cycle as indifferent (undecided).
pub const INDIFFERENT_TOL: f64 = 1e-6;

const TAU: f64 = 2.0 * PI;

/// A point of the extended complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Extended {
    Finite(Complex64),
    Infinity,
}

impl Extended {
    pub fn finite(self) -> Option<Complex64> {
        match self {
            Extended::Finite(z) => Some(z),
            Extended::Infinity => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::Infinity)
    }
}

impl From<Complex64> for Extended {
    fn from(z: Complex64) -> Self {
        Extended::Finite(z)
    }
}

/// Argument normalised to `[0, 2π)`. Angles within `1e-12` below `2π` wrap to 0
/// so that points on the positive real axis with round-off noise sort first.
pub fn arg_2pi(z: Complex64) -> f64 {
    let mut a = z.im.atan2(z.re);
    if a < 0.0 {
        a += TAU;
    }
    if a >= TAU - 1e-12 {
        a = 0.0;
    }
    a
}

/// Sort key used everywhere a deterministic point order is needed.
pub fn cmp_arg_modulus(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    arg_2pi(*a)
        .total_cmp(&arg_2pi(*b))
        .then(a.norm().total_cmp(&b.norm()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapSpecRepr", into = "MapSpecRepr")]
pub struct MapSpec {
    n: u32,
    m: u32,
    lambda: Complex64,
}

#[derive(Serialize, Deserialize)]
struct MapSpecRepr {
    n: u32,
    m: u32,
    lambda: [f64; 2],
}

impl TryFrom<MapSpecRepr> for MapSpec {
    type Error = Error;

    fn try_from(r: MapSpecRepr) -> Result<Self> {
        MapSpec::new(r.n, r.m, Complex64::new(r.lambda[0], r.lambda[1]))
    }
}

impl From<MapSpec> for MapSpecRepr {
    fn from(s: MapSpec) -> Self {
        MapSpecRepr {
            n: s.n,
            m: s.m,
            lambda: [s.lambda.re, s.lambda.im],
        }
    }
}

/// Outcome of iterating a single starting point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitAnalysis {
    pub start: Complex64,
    /// Steps before the orbit enters its cycle. Zero when not converged.
    pub preperiod: usize,
    /// Cycle length. Zero when not converged.
    pub period: usize,
    /// `start, R(start), ...` up to (excluding) the first cycle point.
    pub transient: Vec<Complex64>,
    /// Newton-polished cycle, beginning at `R^preperiod(start)`.
    pub cycle: Vec<Complex64>,
    /// `(R^period)'` along the cycle.
    pub multiplier: Complex64,
    pub converged: bool,
    pub escaped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub critical_points: Vec<Complex64>,
    pub critical_orbits: Vec<OrbitAnalysis>,
    pub post_critical_set: Vec<Complex64>,
    /// Periods of the distinct cycles reached by critical orbits.
    pub cycle_periods: Vec<usize>,
    /// Product of the distinct cycle periods.
    pub s: usize,
    /// Product with one factor per critical point.
    pub s_per_critical_point: usize,
    pub mu_min: f64,
    /// Some cycle has `|multiplier|` within [`INDIFFERENT_TOL`] of 1.
    pub indeterminate: bool,
    pub is_misiurewicz: bool,
    pub is_ms_candidate: bool,
}

impl MapSpec {
    pub fn new(n: u32, m: u32, lambda: Complex64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("n must be >= 2, got {n}")));
        }
        if m < 1 {
            return Err(Error::domain(format!("m must be >= 1, got {m}")));
        }
        if !(lambda.re.is_finite() && lambda.im.is_finite()) || lambda == Complex64::new(0.0, 0.0) {
            return Err(Error::domain("lambda must be finite and nonzero"));
        }
        Ok(MapSpec { n, m, lambda })
    }

    /// `z^2 - 16/(27 z)`, whose Julia set is a Sierpinski gasket.
    pub fn sierpinski() -> Self {
        MapSpec::new(2, 1, Complex64::new(-16.0 / 27.0, 0.0)).expect("valid")
    }

    /// `z^2 + lambda/z^2` with the rounded parameter `-0.36428`.
    pub fn quartic_example() -> Self {
        MapSpec::new(2, 2, Complex64::new(-0.36428, 0.0)).expect("valid")
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    pub fn with_lambda(&self, lambda: Complex64) -> Result<Self> {
        MapSpec::new(self.n, self.m, lambda)
    }

    /// Degree `N = n + m`.
    pub fn degree(&self) -> usize {
        (self.n + self.m) as usize
    }

    /// Primitive `N`-th root of unity `e^{2πi/N}`.
    pub fn omega(&self) -> Complex64 {
        Complex64::from_polar(1.0, TAU / self.degree() as f64)
    }

    pub fn escape_radius(&self) -> f64 {
        let l = self.lambda.norm();
        2f64.max((2.0 * l).powf(1.0 / self.m as f64))
            .max(2f64.powf(1.0 / (self.n as f64 - 1.0)))
    }

    pub fn eval(&self, z: Extended) -> Extended {
        match z {
            Extended::Infinity => Extended::Infinity,
            Extended::Finite(z) => self.eval_finite(z),
        }
    }

    /// `R(z)` for finite `z`; `z = 0` maps to ∞.
    pub fn eval_finite(&self, z: Complex64) -> Extended {
        if z.re == 0.0 && z.im == 0.0 {
            return Extended::Infinity;
        }
        Extended::Finite(z.powu(self.n) + self.lambda / z.powu(self.m))
    }

    pub fn derivative(&self, z: Complex64) -> Result<Complex64> {
        if z.re == 0.0 && z.im == 0.0 {
            return Err(Error::domain("R' is undefined at the pole z = 0"));
        }
        Ok(self.derivative_unchecked(z))
    }

    pub(crate) fn derivative_unchecked(&self, z: Complex64) -> Complex64 {
        let n = self.n as f64;
        let m = self.m as f64;
        n * z.powu(self.n - 1) - m * self.lambda / z.powu(self.m + 1)
    }

    /// The `N` solutions of `n z^N = m lambda`, sorted by argument in `[0, 2π)`.
    pub fn critical_points(&self) -> Vec<Complex64> {
        let nn = self.degree();
        let target = self.lambda * (self.m as f64 / self.n as f64);
        let rho = target.norm().powf(1.0 / nn as f64);
        let mut pts: Vec<Complex64> = if self.lambda.im == 0.0 {
            // exact placement for real lambda: angles are (offset + 2k)π/N
            let offset = if target.re < 0.0 { 1 } else { 0 };
            (0..nn)
                .map(|k| {
                    let num = offset + 2 * k;
                    if num % (2 * nn) == 0 {
                        Complex64::new(rho, 0.0)
                    } else if num % (2 * nn) == nn {
                        Complex64::new(-rho, 0.0)
                    } else {
                        Complex64::from_polar(rho, num as f64 * PI / nn as f64)
                    }
                })
                .collect()
        } else {
            let theta = target.arg();
            (0..nn)
                .map(|k| Complex64::from_polar(rho, (theta + TAU * k as f64) / nn as f64))
                .collect()
        };
        pts.sort_by(cmp_arg_modulus);
        pts
    }

    pub fn critical_values(&self) -> Vec<Complex64> {
        self.critical_points()
            .into_iter()
            .filter_map(|c| self.eval_finite(c).finite())
            .collect()
    }

    /// `R^k(z)`.
    pub fn iterate(&self, z: Extended, k: usize) -> Extended {
        (0..k).fold(z, |acc, _| self.eval(acc))
    }

    /// `(R^k)'(z)` via the chain rule, together with `R^k(z)`.
    fn iterate_with_derivative(&self, z: Complex64, k: usize) -> Option<(Complex64, Complex64)> {
        let mut x = z;
        let mut d = Complex64::new(1.0, 0.0);
        for _ in 0..k {
            d *= self.derivative(x).ok()?;
            x = self.eval_finite(x).finite()?;
        }
        Some((x, d))
    }

    /// Iterate from `z` until the orbit recurs within `tol`, escapes, or
    /// `max_iter` steps elapse.
    pub fn orbit_analysis(&self, z: Complex64, max_iter: usize, tol: f64) -> Result<OrbitAnalysis> {
        if max_iter < 1 || tol <= 0.0 || tol.is_nan() {
            return Err(Error::domain(
                "orbit_analysis needs max_iter >= 1 and tol > 0",
            ));
        }
        if z.norm() < tol {
            return Err(Error::PoleCollision {
                start: z,
                steps: 0,
                tol,
            });
        }
        let radius = self.escape_radius();
        let mut history = vec![z];
        let not_converged = |history: Vec<Complex64>, escaped: bool| OrbitAnalysis {
            start: z,
            preperiod: 0,
            period: 0,
            transient: history,
            cycle: Vec::new(),
            multiplier: Complex64::new(0.0, 0.0),
            converged: false,
            escaped,
        };

        for step in 1..=max_iter {
            let prev = history[step - 1];
            let next = match self.eval_finite(prev) {
                Extended::Infinity => return Ok(not_converged(history, true)),
                Extended::Finite(w) => w,
            };
            if !next.re.is_finite() || !next.im.is_finite() || next.norm() > radius {
                return Ok(not_converged(history, true));
            }
            if next.norm() < tol {
                return Err(Error::PoleCollision {
                    start: z,
                    steps: step,
                    tol,
                });
            }
            if let Some(a) = history.iter().position(|h| (next - *h).norm() < tol) {
                let period = step - a;
                let cycle = self.polish_cycle(history[a], period);
                let multiplier = cycle
                    .iter()
                    .map(|c| self.derivative_unchecked(*c))
                    .product();
                history.truncate(a);
                return Ok(OrbitAnalysis {
                    start: z,
                    preperiod: a,
                    period,
                    transient: history,
                    cycle,
                    multiplier,
                    converged: true,
                    escaped: false,
                });
            }
            history.push(next);
        }
        Ok(not_converged(history, false))
    }

    /// Newton on `R^p(x) = x`; falls back to the unpolished point if Newton
    /// moves away.
    fn polish_cycle(&self, x0: Complex64, period: usize) -> Vec<Complex64> {
        let mut x = x0;
        for _ in 0..50 {
            let Some((fx, dfx)) = self.iterate_with_derivative(x, period) else {
                break;
            };
            let denom = dfx - 1.0;
            if denom.norm() < 1e-300 {
                break;
            }
            let step = (fx - x) / denom;
            if !step.re.is_finite() || step.norm() > 1e-3 * (1.0 + x.norm()) {
                x = x0;
                break;
            }
            x -= step;
            if step.norm() <= 4.0 * f64::EPSILON * (1.0 + x.norm()) {
                break;
            }
        }
        let mut cycle = Vec::with_capacity(period);
        let mut y = x;
        for _ in 0..period {
            cycle.push(y);
            y = self.eval_finite(y).finite().unwrap_or(y);
        }
        cycle
    }

    /// Classify the critical orbits: preperiodicity, cycle multipliers and the
    /// expansion constant on the ω-limit set.
    pub fn classify(&self, max_iter: usize, tol: f64) -> Result<ClassificationReport> {
        let critical_points = self.critical_points();
        let mut critical_orbits = Vec::with_capacity(critical_points.len());
        for &c in &critical_points {
            let orbit = match self.orbit_analysis(c, max_iter, tol) {
                Ok(o) => o,
                // hitting the pole sends the orbit to ∞
                Err(Error::PoleCollision { .. }) => OrbitAnalysis {
                    start: c,
                    preperiod: 0,
                    period: 0,
                    transient: vec![c],
                    cycle: Vec::new(),
                    multiplier: Complex64::new(0.0, 0.0),
                    converged: false,
                    escaped: true,
                },
                Err(e) => return Err(e),
            };
            critical_orbits.push(orbit);
        }

        // distinct cycles
        let mut cycles: Vec<(usize, Complex64, Vec<Complex64>)> = Vec::new();
        for o in critical_orbits.iter().filter(|o| o.converged) {
            let seen = cycles.iter().any(|(_, _, pts)| {
                pts.iter()
                    .any(|p| (*p - o.cycle[0]).norm() < POST_CRITICAL_DEDUP_TOL)
            });
            if !seen {
                cycles.push((o.period, o.multiplier, o.cycle.clone()));
            }
        }
        let cycle_periods: Vec<usize> = cycles.iter().map(|c| c.0).collect();
        let s: usize = cycle_periods.iter().product();
        let s_per_critical_point: usize = critical_orbits
            .iter()
            .filter(|o| o.converged)
            .map(|o| o.period)
            .product();
        let mu_min = cycles
            .iter()
            .map(|(p, mult, _)| mult.norm().powi((s / p) as i32))
            .fold(f64::INFINITY, f64::min);
        let mu_min = if cycles.is_empty() { 0.0 } else { mu_min };
        let indeterminate = cycles
            .iter()
            .any(|(_, mult, _)| (mult.norm() - 1.0).abs() <= INDIFFERENT_TOL);

        let mut post_critical_set: Vec<Complex64> = Vec::new();
        for o in critical_orbits.iter().filter(|o| o.converged) {
            for &p in o.transient.iter().skip(1).chain(o.cycle.iter()) {
                if !post_critical_set
                    .iter()
                    .any(|q| (*q - p).norm() < POST_CRITICAL_DEDUP_TOL)
                {
                    post_critical_set.push(p);
                }
            }
        }
        post_critical_set.sort_by(cmp_arg_modulus);

        let all_converged = critical_orbits.iter().all(|o| o.converged);
        let is_misiurewicz = all_converged && !indeterminate && mu_min > 1.0;
        let is_ms_candidate = is_misiurewicz
            && critical_points
                .iter()
                .all(|c| self.basin_probe(*c, max_iter));

        let report = ClassificationReport {
            critical_points,
            critical_orbits,
            post_critical_set,
            cycle_periods,
            s,
            s_per_critical_point,
            mu_min,
            indeterminate,
            is_misiurewicz,
            is_ms_candidate,
        };

        if let Some(bad) = report
            .critical_orbits
            .iter()
            .find(|o| !o.converged && !o.escaped)
        {
            return Err(Error::Inconclusive {
                reason: format!(
                    "critical orbit of {} unresolved after {max_iter} iterations",
                    bad.start
                ),
                partial: Box::new(report),
            });
        }
        Ok(report)
    }

    /// A critical point sitting on both the basin of ∞ and the trap door has
    /// escaping points just outside and just inside it along its ray.
    fn basin_probe(&self, c: Complex64, max_iter: usize) -> bool {
        let escapes = |z: Complex64| {
            let r = self.escape_radius();
            let mut x = Extended::Finite(z);
            for _ in 0..max_iter {
                match x {
                    Extended::Infinity => return true,
                    Extended::Finite(w) if w.norm() > r => return true,
                    _ => x = self.eval(x),
                }
            }
            false
        };
        escapes(c * (1.0 + 1e-3)) && escapes(c * (1.0 - 1e-3))
    }

    /// Largest defect of the rotation identity `R(ω^i z) = ω^{in} R(z)`, and of
    /// `R(z̄) = conj R(z)` when lambda is real.
    pub fn symmetry_check(&self, samples: &[Complex64]) -> f64 {
        let nn = self.degree();
        let omega = self.omega();
        let mut worst = 0f64;
        for &z in samples {
            let Some(rz) = self.eval_finite(z).finite() else {
                continue;
            };
            for i in 1..nn {
                let rot = omega.powu(i as u32);
                let lhs = self.eval_finite(rot * z).finite();
                let rhs = omega.powu(((i * self.n as usize) % nn) as u32) * rz;
                if let Some(lhs) = lhs {
                    worst = worst.max((lhs - rhs).norm());
                }
            }
            if self.lambda.im == 0.0 {
                if let Some(lhs) = self.eval_finite(z.conj()).finite() {
                    worst = worst.max((lhs - rz.conj()).norm());
                }
            }
        }
        worst
    }

    /// `R^{a+p}(c) - R^a(c)` for the critical point with the given index.
    pub fn preperiodic_defect(
        &self,
        critical_index: usize,
        preperiod: usize,
        period: usize,
    ) -> Result<Complex64> {
        let crit = self.critical_points();
        let c = *crit
            .get(critical_index)
            .ok_or_else(|| Error::domain("critical point index out of range"))?;
        let a = self.iterate(c.into(), preperiod);
        let b = self.iterate(a, period);
        match (a, b) {
            (Extended::Finite(a), Extended::Finite(b)) => Ok(b - a),
            _ => Err(Error::domain("critical orbit reaches infinity")),
        }
    }

    /// Newton refinement of lambda on the condition `R^{a+p}(c) = R^a(c)`.
    ///
    /// A real parameter stays real. Returns the refined map and the final defect.
    pub fn refine_lambda(
        &self,
        critical_index: usize,
        preperiod: usize,
        period: usize,
    ) -> Result<(MapSpec, f64)> {
        let real_only = self.lambda.im == 0.0;
        let mut spec = *self;
        let g = |s: &MapSpec| s.preperiodic_defect(critical_index, preperiod, period);
        let mut defect = g(&spec)?;
        for _ in 0..60 {
            if defect.norm() <= 1e-14 {
                break;
            }
            let l = spec.lambda;
            let h = 1e-7 * l.norm().max(1e-3);
            let dg = if real_only {
                (g(&spec.with_lambda(l + h)?)? - g(&spec.with_lambda(l - h)?)?) / (2.0 * h)
            } else {
                let hc = Complex64::new(h, 0.0);
                (g(&spec.with_lambda(l + hc)?)? - g(&spec.with_lambda(l - hc)?)?) / (2.0 * h)
            };
            if dg.norm() == 0.0 {
                return Err(Error::domain("vanishing derivative in lambda refinement"));
            }
            let mut step = defect / dg;
            if real_only {
                step = Complex64::new(step.re, 0.0);
            }
            let candidate = spec.with_lambda(l - step)?;
            let new_defect = g(&candidate)?;
            if new_defect.norm() >= defect.norm() && step.norm() < 1e-15 * l.norm() {
                break;
            }
            spec = candidate;
            defect = new_defect;
        }
        Ok((spec, defect.norm()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eval_sierpinski_values() {
        let r = MapSpec::sierpinski();
        let z0 = r.eval(c(4.0 / 3.0, 0.0).into()).finite().unwrap();
        assert!((z0 - c(4.0 / 3.0, 0.0)).norm() < 1e-15);
        assert_eq!(r.eval(c(0.0, 0.0).into()), Extended::Infinity);
        assert_eq!(r.eval(Extended::Infinity), Extended::Infinity);
        let v = r.eval(c(-2.0 / 3.0, 0.0).into()).finite().unwrap();
        assert!((v - c(4.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn derivative_values() {
        let r = MapSpec::sierpinski();
        assert!((r.derivative(c(4.0 / 3.0, 0.0)).unwrap() - c(3.0, 0.0)).norm() < 1e-12);
        assert!((r.derivative(c(1.0, 0.0)).unwrap() - c(2.0 + 16.0 / 27.0, 0.0)).norm() < 1e-14);
        assert!(matches!(r.derivative(c(0.0, 0.0)), Err(Error::Domain(_))));
        for cp in r.critical_points() {
            assert!(r.derivative(cp).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn critical_points_are_cube_roots() {
        let r = MapSpec::sierpinski();
        let cps = r.critical_points();
        assert_eq!(cps.len(), 3);
        let s3 = 3f64.sqrt() / 3.0;
        let expected = [c(1.0 / 3.0, s3), c(-2.0 / 3.0, 0.0), c(1.0 / 3.0, -s3)];
        for (a, b) in cps.iter().zip(expected) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
        // closed under rotation by omega
        let w = r.omega();
        for p in &cps {
            assert!(cps.iter().any(|q| (q - p * w).norm() < 1e-12));
        }
    }

    #[test]
    fn quartic_critical_points() {
        let r = MapSpec::quartic_example();
        let cps = r.critical_points();
        assert_eq!(cps.len(), 4);
        for p in &cps {
            assert!((p.powu(4) - r.lambda()).norm() < 1e-12);
            assert!(r.derivative(*p).unwrap().norm() <= 1e-10 * (1.0 + p.norm().powi(4)));
        }
    }

    #[test]
    fn orbit_of_critical_points() {
        let r = MapSpec::sierpinski();
        let cps = r.critical_points();
        let c0 = r.orbit_analysis(cps[1], 200, 1e-9).unwrap();
        assert!(c0.converged);
        assert_eq!((c0.preperiod, c0.period), (1, 1));
        assert!((c0.multiplier - c(3.0, 0.0)).norm() < 1e-9);

        let c1 = r.orbit_analysis(cps[0], 200, 1e-9).unwrap();
        assert_eq!((c1.preperiod, c1.period), (1, 2));
        assert!((c1.multiplier - c(9.0, 0.0)).norm() < 1e-9);
        // cycle closes
        let back = r.eval_finite(*c1.cycle.last().unwrap()).finite().unwrap();
        assert!((back - c1.cycle[0]).norm() < 1e-9);
    }

    #[test]
    fn orbit_pole_collision() {
        // R(z) = z^2 + 1/z... choose z with R(z) = 0 exactly: z^3 = -lambda
        let r = MapSpec::new(2, 1, c(-1.0, 0.0)).unwrap();
        let err = r.orbit_analysis(c(1.0, 0.0), 10, 1e-9).unwrap_err();
        assert!(matches!(err, Error::PoleCollision { steps: 1, .. }));
    }

    #[test]
    fn escaping_map_is_not_misiurewicz() {
        let r = MapSpec::new(2, 1, c(5.0, 0.0)).unwrap();
        let rep = r.classify(200, 1e-9).unwrap();
        assert!(rep.critical_orbits.iter().all(|o| o.escaped));
        assert!(!rep.is_misiurewicz);
    }

    #[test]
    fn classify_sierpinski() {
        let rep = MapSpec::sierpinski().classify(200, 1e-9).unwrap();
        assert!(rep.is_misiurewicz);
        assert!(rep.is_ms_candidate);
        let mut periods = rep.cycle_periods.clone();
        periods.sort();
        assert_eq!(periods, vec![1, 2]);
        assert_eq!(rep.s, 2);
        assert_eq!(rep.s_per_critical_point, 4);
        assert!((rep.mu_min - 9.0).abs() < 1e-9);
        assert_eq!(rep.post_critical_set.len(), 3);
        let w = MapSpec::sierpinski().omega();
        let q0 = c(4.0 / 3.0, 0.0);
        for (p, e) in rep.post_critical_set.iter().zip([q0, q0 * w, q0 * w * w]) {
            assert!((p - e).norm() < 1e-12, "{p} vs {e}");
        }
    }

    #[test]
    fn post_critical_set_is_forward_invariant() {
        let r = MapSpec::sierpinski();
        let rep = r.classify(200, 1e-9).unwrap();
        for p in &rep.post_critical_set {
            let q = r.eval_finite(*p).finite().unwrap();
            assert!(rep.post_critical_set.iter().any(|x| (x - q).norm() < 1e-9));
        }
    }

    #[test]
    fn multiplier_independent_of_representative() {
        let r = MapSpec::sierpinski();
        let z1 = c(4.0 / 3.0, 0.0) * r.omega();
        let a = r.orbit_analysis(z1, 50, 1e-9).unwrap();
        let b = r
            .orbit_analysis(r.eval_finite(z1).finite().unwrap(), 50, 1e-9)
            .unwrap();
        assert!((a.multiplier - b.multiplier).norm() <= 1e-9 * a.multiplier.norm());
    }

    #[test]
    fn orbit_analysis_is_deterministic() {
        let r = MapSpec::quartic_example();
        let z = c(0.3, 0.7);
        assert_eq!(
            r.orbit_analysis(z, 100, 1e-9).unwrap(),
            r.orbit_analysis(z, 100, 1e-9).unwrap()
        );
    }

    #[test]
    fn symmetry_residuals() {
        let r = MapSpec::sierpinski();
        let samples: Vec<_> = (0..20)
            .map(|k| Complex64::from_polar(0.2 + 0.1 * k as f64, 0.3 * k as f64))
            .collect();
        assert!(r.symmetry_check(&samples) <= 1e-12);
        // positive real axis, real lambda: conjugation exact
        let real_samples = [c(0.5, 0.0), c(1.7, 0.0)];
        for z in real_samples {
            let a = r.eval_finite(z.conj()).finite().unwrap();
            let b = r.eval_finite(z).finite().unwrap().conj();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn quartic_orbit_and_refinement() {
        let r = MapSpec::quartic_example();
        let d = r.preperiodic_defect(0, 3, 1).unwrap();
        assert!(d.norm() <= 1e-3);
        let (refined, defect) = r.refine_lambda(0, 3, 1).unwrap();
        assert!(defect <= 1e-10);
        // closed form: |lambda| = (3 + 2 sqrt 2) / 16
        let exact = -(3.0 + 2.0 * 2f64.sqrt()) / 16.0;
        assert!((refined.lambda().re - exact).abs() < 1e-10);
        assert_eq!(refined.lambda().im, 0.0);
        let o = refined
            .orbit_analysis(refined.critical_points()[0], 200, 1e-9)
            .unwrap();
        assert_eq!((o.preperiod, o.period), (3, 1));
        let rep = refined.classify(200, 1e-9).unwrap();
        assert!(rep.is_misiurewicz);
        assert_eq!(rep.post_critical_set.len(), 4);
    }

    #[test]
    fn json_roundtrip() {
        let r = MapSpec::sierpinski();
        let s = serde_json::to_string(&r).unwrap();
        assert!(
            s.starts_with(r#"{"n":2,"m":1,"lambda":[-0.5925925925925926,0.0]}"#),
            "{s}"
        );
        let back: MapSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<MapSpec>(r#"{"n":1,"m":1,"lambda":[1,0]}"#).is_err());
    }

    #[test]
    fn escape_radius_formula() {
        let r = MapSpec::new(3, 1, c(4.0, 0.0)).unwrap();
        assert!((r.escape_radius() - 8.0).abs() < 1e-12);
        assert_eq!(MapSpec::sierpinski().escape_radius(), 2.0);
    }
}
