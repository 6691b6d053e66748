//! Lumped masses, stiffness/mass pairs and their eigenproblems.
//!
//! Each `m`-cell carries mass `N^{-m}`, split equally among its `B` vertices.
//! The stiffness matrix comes from the renormalized conductances, so
//! `uᵀ L v = ℰ_m(u, v)`. Eigenpairs solve `L u = λ M u` through the symmetric
//! reduction `M^{-1/2} L M^{-1/2}`.

use serde::Serialize;

use crate::cell_complex::{build_level, pullback, GluingTable, LevelGraph};
use crate::dirichlet_form::{energy, ConductanceModel, Scalar};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexMeasure<T = f64> {
    pub level: usize,
    /// Mass of each vertex, by canonical id.
    pub masses: Vec<T>,
    pub cell_mass: T,
}

fn natural<T: Scalar>(k: usize) -> T {
    (0..k).fold(T::zero(), |acc, _| acc + T::one())
}

/// Lumped vertex masses of `graph` in any scalar type.
pub fn vertex_measure_in<T: Scalar>(graph: &LevelGraph) -> VertexMeasure<T> {
    let n: T = natural(graph.n_tiles);
    let cells = (0..graph.level).fold(T::one(), |acc, _| acc * n.clone());
    let cell_mass = T::one() / cells;
    let share = cell_mass.clone() / natural::<T>(graph.boundary_size);
    let mut masses = vec![T::zero(); graph.vertex_count()];
    for cell in &graph.cells {
        for &v in &cell.vertices {
            masses[v] = masses[v].clone() + share.clone();
        }
    }
    VertexMeasure {
        level: graph.level,
        masses,
        cell_mass,
    }
}

pub fn vertex_measure(graph: &LevelGraph) -> VertexMeasure {
    vertex_measure_in(graph)
}

impl<T: Scalar> VertexMeasure<T> {
    pub fn total(&self) -> T {
        self.masses.iter().fold(T::zero(), |acc, m| acc + m.clone())
    }
}

/// Defects of the finite invariance identities between consecutive levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureInvariance<T = f64> {
    /// `max_w |Σ_{x ∈ R⁻¹(w)} μ_{m+1}(x) - μ_m(w)|`, each preimage vertex once.
    pub vertex_defect: T,
    /// Same sum with each preimage weighted by its local degree. Not an
    /// identity for lumped masses; reported for comparison.
    pub weighted_defect: T,
    /// `max_w |Σ_{children} N^{-(m+1)} - N^{-m}|` over `m`-cells.
    pub cell_defect: T,
    /// Every `m`-cell has exactly `N` preimage cells, each mapped onto it
    /// vertex by vertex.
    pub cells_ok: bool,
}

pub fn measure_invariance<T: Scalar>(
    coarse: &LevelGraph,
    fine: &LevelGraph,
) -> Result<MeasureInvariance<T>> {
    let mu0: VertexMeasure<T> = vertex_measure_in(coarse);
    let mu1: VertexMeasure<T> = vertex_measure_in(fine);
    let map = fine.apply_r_map(coarse)?;
    let mult = fine.branch_multiplicity();
    let mut plain = vec![T::zero(); coarse.vertex_count()];
    let mut weighted = vec![T::zero(); coarse.vertex_count()];
    for (x, &w) in map.iter().enumerate() {
        plain[w] = plain[w].clone() + mu1.masses[x].clone();
        weighted[w] = weighted[w].clone() + mu1.masses[x].clone() * natural::<T>(mult[x]);
    }
    let max_defect = |sums: &[T]| {
        sums.iter()
            .zip(&mu0.masses)
            .map(|(s, m)| (s.clone() - m.clone()).abs())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    };

    let n = fine.n_tiles;
    let tail_words = fine.word_count() / n;
    let mut children = vec![0usize; coarse.cells.len()];
    let mut cells_ok = true;
    for cell in &fine.cells {
        let target = cell.word % tail_words;
        children[target] += 1;
        let images: Vec<usize> = cell.vertices.iter().map(|&v| map[v]).collect();
        cells_ok &= images == coarse.cells[target].vertices;
    }
    cells_ok &= children.iter().all(|&c| c == n);
    let cell_defect = children
        .iter()
        .map(|&c| (natural::<T>(c) * mu1.cell_mass.clone() - mu0.cell_mass.clone()).abs())
        .fold(T::zero(), |a, b| if b > a { b } else { a });

    Ok(MeasureInvariance {
        vertex_defect: max_defect(&plain),
        weighted_defect: max_defect(&weighted),
        cell_defect,
        cells_ok,
    })
}

/// Builds levels `m` and `m+1` of `table` and runs [`measure_invariance`].
pub fn measure_invariance_check<T: Scalar>(
    table: &GluingTable,
    m: usize,
) -> Result<MeasureInvariance<T>> {
    let coarse = build_level(table, m)?;
    let fine = build_level(table, m + 1)?;
    measure_invariance(&coarse, &fine)
}

#[derive(Debug, Clone)]
pub struct LaplacianPair {
    pub level: usize,
    pub stiffness: Matrix,
    /// Diagonal of the mass matrix.
    pub mass: Vec<f64>,
    pub boundary_ids: Vec<usize>,
}

pub fn assemble(
    graph: &LevelGraph,
    model: &ConductanceModel,
    measure: &VertexMeasure,
) -> Result<LaplacianPair> {
    if measure.level != graph.level || measure.masses.len() != graph.vertex_count() {
        return Err(Error::domain("measure does not belong to this level"));
    }
    let cond = model.conductances(graph)?;
    let mut l = Matrix::zeros(graph.vertex_count());
    for (e, c) in graph.edges.iter().zip(cond) {
        l.add(e.a, e.a, c);
        l.add(e.b, e.b, c);
        l.add(e.a, e.b, -c);
        l.add(e.b, e.a, -c);
    }
    Ok(LaplacianPair {
        level: graph.level,
        stiffness: l,
        mass: measure.masses.clone(),
        boundary_ids: graph.boundary.clone(),
    })
}

/// Builds the level graph, its measure and the pair in one go.
pub fn assemble_level(
    table: &GluingTable,
    model: &ConductanceModel,
    m: usize,
) -> Result<(LevelGraph, LaplacianPair)> {
    let graph = build_level(table, m)?;
    let measure = vertex_measure(&graph);
    let pair = assemble(&graph, model, &measure)?;
    Ok((graph, pair))
}

impl LaplacianPair {
    pub fn size(&self) -> usize {
        self.mass.len()
    }

    /// Largest absolute row sum of `L`.
    pub fn stiffness_norm(&self) -> f64 {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).map(|j| self.stiffness.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Rows kept for `kind`: interior vertices (Dirichlet) or all (Neumann).
    pub fn free_ids(&self, kind: SpectrumKind) -> Vec<usize> {
        match kind {
            SpectrumKind::Neumann => (0..self.size()).collect(),
            SpectrumKind::Dirichlet => (0..self.size())
                .filter(|v| !self.boundary_ids.contains(v))
                .collect(),
        }
    }

    /// `‖L u - λ M u‖₂ / ‖u‖₂` over the rows of `kind`.
    pub fn eigen_residual(&self, kind: SpectrumKind, lambda: f64, u: &[f64]) -> f64 {
        let lu = self.stiffness.mul_vec(u);
        let ids = self.free_ids(kind);
        let num: f64 = ids
            .iter()
            .map(|&i| (lu[i] - lambda * self.mass[i] * u[i]).powi(2))
            .sum();
        let den: f64 = u.iter().map(|x| x * x).sum();
        (num / den).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    Dirichlet,
    Neumann,
}

impl std::fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SpectrumKind::Dirichlet => "dirichlet",
            SpectrumKind::Neumann => "neumann",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenSolver {
    /// Householder tridiagonalisation and implicit QL.
    #[default]
    TridiagonalQl,
    /// Cyclic Jacobi rotations.
    Jacobi,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub level: usize,
    pub kind: SpectrumKind,
    pub eigenvalues: Vec<f64>,
    /// Full-length, `M`-orthonormal eigenvectors (zero on `V_0` for Dirichlet).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
    /// Defect of `(ρλ, u∘R)` as an eigenpair one level up.
    pub map_residuals: Vec<f64>,
    /// Relative distance of `ρλ` to the next level's spectrum.
    pub spectrum_distances: Vec<f64>,
    /// `|ℰ_{m+1}(u∘R) - ρ ℰ_m(u)|` for each mapped eigenvector.
    pub energy_defects: Vec<f64>,
}

pub fn solve_spectrum(pair: &LaplacianPair, kind: SpectrumKind) -> Result<SpectralReport> {
    solve_spectrum_with(pair, kind, EigenSolver::default(), false)
}

pub fn solve_spectrum_with(
    pair: &LaplacianPair,
    kind: SpectrumKind,
    solver: EigenSolver,
    want_vectors: bool,
) -> Result<SpectralReport> {
    let ids = pair.free_ids(kind);
    if ids.is_empty() {
        return Err(Error::domain(format!(
            "level {} has no interior vertices for a Dirichlet problem",
            pair.level
        )));
    }
    let scale: Vec<f64> = ids.iter().map(|&i| pair.mass[i].sqrt().recip()).collect();
    let n = ids.len();
    let mut a = Matrix::zeros(n);
    for (p, &i) in ids.iter().enumerate() {
        for (q, &j) in ids.iter().enumerate() {
            a.set(p, q, pair.stiffness.get(i, j) * scale[p] * scale[q]);
        }
    }
    let eig = match solver {
        EigenSolver::TridiagonalQl => linalg::symmetric_eigen(&a, want_vectors)?,
        EigenSolver::Jacobi => linalg::jacobi_eigen(&a, 1e-14, 100)?,
    };
    let eigenvectors = if want_vectors {
        eig.vectors.map(|vs| {
            vs.into_iter()
                .map(|y| {
                    let mut u = vec![0.0; pair.size()];
                    for (p, &i) in ids.iter().enumerate() {
                        u[i] = y[p] * scale[p];
                    }
                    u
                })
                .collect()
        })
    } else {
        None
    };
    Ok(SpectralReport {
        level: pair.level,
        kind,
        eigenvalues: eig.values,
        eigenvectors,
        map_residuals: Vec::new(),
        spectrum_distances: Vec::new(),
        energy_defects: Vec::new(),
    })
}

/// `f(x) = (1/μ(x)) Σ_{y~x} c(x,y) (u(y) - u(x))` at an interior vertex.
pub fn pointwise_laplacian(pair: &LaplacianPair, u: &[f64], x: usize) -> Result<f64> {
    if x >= pair.size() || u.len() != pair.size() {
        return Err(Error::domain("vertex or function out of range"));
    }
    if pair.boundary_ids.contains(&x) {
        return Err(Error::domain(format!("vertex {x} is on the boundary")));
    }
    let lu: f64 = (0..pair.size())
        .map(|j| pair.stiffness.get(x, j) * u[j])
        .sum();
    Ok(-lu / pair.mass[x])
}

/// Relative distance from `x` to the nearest entry of `spectrum`.
pub fn relative_distance(x: f64, spectrum: &[f64]) -> f64 {
    spectrum
        .iter()
        .map(|s| (s - x).abs())
        .fold(f64::INFINITY, f64::min)
        / x.abs()
}

/// Two-point extrapolation for errors decaying like `ratio^{-m}`.
pub fn richardson(coarse: f64, fine: f64, ratio: f64) -> f64 {
    (ratio * fine - coarse) / (ratio - 1.0)
}

/// Pull the `k` lowest Dirichlet eigenfunctions of level `m` back by `R` and
/// test them against level `m+1`.
pub fn spectral_map_report(
    table: &GluingTable,
    model: &ConductanceModel,
    m: usize,
    k: usize,
) -> Result<SpectralReport> {
    if m < 1 {
        return Err(Error::domain("spectral map report needs m >= 1"));
    }
    let (coarse, pair0) = assemble_level(table, model, m)?;
    let (fine, pair1) = assemble_level(table, model, m + 1)?;
    let mut report = solve_spectrum_with(
        &pair0,
        SpectrumKind::Dirichlet,
        EigenSolver::default(),
        true,
    )?;
    let next = solve_spectrum(&pair1, SpectrumKind::Dirichlet)?;
    if k > report.eigenvalues.len() {
        return Err(Error::domain(format!(
            "asked for {k} eigenpairs, level {m} has {}",
            report.eigenvalues.len()
        )));
    }
    let rho = model.renormalized_factor();
    let free = pair1.free_ids(SpectrumKind::Dirichlet);
    report.eigenvalues.truncate(k);
    let vectors = report.eigenvectors.take().expect("vectors requested");
    for (lam, u) in report.eigenvalues.iter().zip(vectors.iter().take(k)) {
        let v = pullback(&fine, &coarse, u)?;
        let lv = pair1.stiffness.mul_vec(&v);
        let target = rho * lam;
        let res: f64 = free
            .iter()
            .map(|&i| (lv[i] - target * pair1.mass[i] * v[i]).powi(2) / pair1.mass[i])
            .sum::<f64>()
            .sqrt();
        let norm: f64 = v
            .iter()
            .zip(&pair1.mass)
            .map(|(x, m)| m * x * x)
            .sum::<f64>()
            .sqrt();
        report.map_residuals.push(res / norm);
        report
            .spectrum_distances
            .push(relative_distance(target, &next.eigenvalues));
        let e0 = energy(&coarse, model, u, None)?.renormalized;
        let e1 = energy(&fine, model, &v, None)?.renormalized;
        report.energy_defects.push((e1 - rho * e0).abs());
    }
    report.eigenvectors = Some(vectors.into_iter().take(k).collect());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn sg() -> GluingTable {
        GluingTable::sg_dynamical_gluing()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn lumped_masses() {
        let g0 = build_level(&sg(), 0).unwrap();
        assert_eq!(vertex_measure(&g0).masses, vec![1.0 / 3.0; 3]);
        let g1 = build_level(&sg(), 1).unwrap();
        let mu: VertexMeasure<BigRational> = vertex_measure_in(&g1);
        let ninth = BigRational::new(1.into(), 9.into());
        for v in 0..6 {
            let expected = if g1.is_boundary(v) {
                ninth.clone()
            } else {
                ninth.clone() * BigRational::from_integer(2.into())
            };
            assert_eq!(mu.masses[v], expected);
        }
        for m in 0..5 {
            let g = build_level(&sg(), m).unwrap();
            let mu: VertexMeasure<BigRational> = vertex_measure_in(&g);
            assert_eq!(mu.total(), BigRational::from_integer(1.into()));
        }
    }

    #[test]
    fn level_zero_pair() {
        let model = ConductanceModel::standard(&sg());
        let (_, pair) = assemble_level(&sg(), &model, 0).unwrap();
        assert_eq!(
            pair.stiffness,
            Matrix::from_rows(&[
                vec![2.0, -1.0, -1.0],
                vec![-1.0, 2.0, -1.0],
                vec![-1.0, -1.0, 2.0]
            ])
        );
        let rep = solve_spectrum(&pair, SpectrumKind::Neumann).unwrap();
        assert!(close(&rep.eigenvalues, &[0.0, 9.0, 9.0], 1e-12));
        assert!(solve_spectrum(&pair, SpectrumKind::Dirichlet).is_err());
    }

    #[test]
    fn level_one_dirichlet_by_hand() {
        // interior block (5/3)·[[4,-1,-1],[-1,4,-1],[-1,-1,4]] has eigenvalues
        // (5/3)·{2,5,5}; the three midpoints carry mass 2/9 each
        let model = ConductanceModel::standard(&sg());
        let (_, pair) = assemble_level(&sg(), &model, 1).unwrap();
        let rep = solve_spectrum(&pair, SpectrumKind::Dirichlet).unwrap();
        assert!(
            close(&rep.eigenvalues, &[15.0, 37.5, 37.5], 1e-12),
            "{:?}",
            rep.eigenvalues
        );
    }

    #[test]
    fn solvers_agree() {
        let model = ConductanceModel::standard(&sg());
        let (_, pair) = assemble_level(&sg(), &model, 3).unwrap();
        for kind in [SpectrumKind::Dirichlet, SpectrumKind::Neumann] {
            let a = solve_spectrum_with(&pair, kind, EigenSolver::TridiagonalQl, true).unwrap();
            let b = solve_spectrum_with(&pair, kind, EigenSolver::Jacobi, true).unwrap();
            assert!(close(&a.eigenvalues, &b.eigenvalues, 1e-9));
            let norm = pair.stiffness_norm();
            for (lam, u) in a.eigenvalues.iter().zip(a.eigenvectors.as_ref().unwrap()) {
                assert!(pair.eigen_residual(kind, *lam, u) <= 1e-9 * norm);
            }
        }
    }

    #[test]
    fn neumann_ground_state_is_constant() {
        let model = ConductanceModel::standard(&sg());
        let (_, pair) = assemble_level(&sg(), &model, 2).unwrap();
        let rep = solve_spectrum_with(&pair, SpectrumKind::Neumann, EigenSolver::default(), true)
            .unwrap();
        assert!(rep.eigenvalues[0].abs() < 1e-10);
        assert!(rep.eigenvalues[1] > 1.0);
        let u0 = &rep.eigenvectors.unwrap()[0];
        assert!(u0.iter().all(|x| (x - u0[0]).abs() < 1e-10));
    }

    #[test]
    fn pointwise_matches_eigen_relation() {
        let model = ConductanceModel::standard(&sg());
        let (g, pair) = assemble_level(&sg(), &model, 2).unwrap();
        let rep = solve_spectrum_with(&pair, SpectrumKind::Dirichlet, EigenSolver::default(), true)
            .unwrap();
        let u = &rep.eigenvectors.unwrap()[0];
        for x in g.interior() {
            let f = pointwise_laplacian(&pair, u, x).unwrap();
            assert!((f + rep.eigenvalues[0] * u[x]).abs() < 1e-10);
        }
        assert!(pointwise_laplacian(&pair, u, g.boundary[0]).is_err());
        let ones = vec![1.0; g.vertex_count()];
        assert!(
            pointwise_laplacian(&pair, &ones, g.interior()[0])
                .unwrap()
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn measure_identity_is_exact() {
        for m in 0..4 {
            let r: MeasureInvariance<BigRational> = measure_invariance_check(&sg(), m).unwrap();
            assert_eq!(r.vertex_defect, BigRational::from_integer(0.into()));
            assert_eq!(r.cell_defect, BigRational::from_integer(0.into()));
            assert!(r.cells_ok);
        }
        let r: MeasureInvariance<BigRational> = measure_invariance_check(&sg(), 0).unwrap();
        // c0 has local degree 2: 1/9 + 2·(2/9) against 1/3
        assert_eq!(r.weighted_defect, BigRational::new(2.into(), 9.into()));
    }

    #[test]
    fn spectral_map_diagnostics() {
        let table = sg();
        let model = ConductanceModel::standard(&table);
        let fine = build_level(&table, 3).unwrap();
        let mut ground = Vec::new();
        for m in 1..=2 {
            let rep = spectral_map_report(&table, &model, m, 3).unwrap();
            let vectors = rep.eigenvectors.as_ref().unwrap();
            for (d, lam) in rep.energy_defects.iter().zip(&rep.eigenvalues) {
                // eigenvectors are M-normalised, so ℰ_m(u) = λ
                assert!(*d <= 1e-12 * 5.0 * lam);
            }
            if m == 2 {
                let coarse = build_level(&table, 2).unwrap();
                for u in vectors {
                    let v = pullback(&fine, &coarse, u).unwrap();
                    assert!(fine.boundary.iter().all(|&b| v[b] == 0.0));
                }
            }
            // the two degenerate eigenvalues map exactly, the ground state does not
            assert!(rep.spectrum_distances[1] < 1e-12 && rep.spectrum_distances[2] < 1e-12);
            ground.push(rep.spectrum_distances[0]);
        }
        assert!(ground[1] > ground[0] && ground[0] > 0.3, "{ground:?}");
    }

    #[test]
    fn richardson_removes_geometric_error() {
        let exact = 3.0;
        let a = exact + 0.8;
        let b = exact + 0.8 / 5.0;
        assert!((richardson(a, b, 5.0) - exact).abs() < 1e-15);
    }
}
