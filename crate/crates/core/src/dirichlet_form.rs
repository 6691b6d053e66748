//! Graph energies `E_m`, renormalized energies and harmonic extension.
//!
//! A [`ConductanceModel`] carries a conductance per level-0 edge and a weight
//! `r̃_i` per tile. An edge of `Γ_m` copied from level-0 edge `e` into the cell
//! with word `w` has raw conductance `base[e]` and renormalized conductance
//! `base[e] / ∏_k r̃_{w_k}`. With unit base and weights `3/5` this is the
//! familiar `(5/3)^m` scaling on the gasket.
//!
//! Everything is generic over [`Scalar`], so the same code runs in `f64` and
//! in exact rational arithmetic.

use std::fmt::Debug;

use num_rational::BigRational;
use num_traits::{Num, Signed};
use serde::Serialize;

use crate::cell_complex::{build_level, pullback, GluingTable, LevelGraph};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg::{self, Matrix};

/// Field types usable for energies: `f64` and `BigRational`.
pub trait Scalar: Num + Signed + Clone + PartialOrd + Send + Sync + Debug {}
impl<T: Num + Signed + Clone + PartialOrd + Send + Sync + Debug> Scalar for T {}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConductanceModel<T = f64> {
    /// Conductance of each level-0 edge, in the table's `level0_edges` order.
    pub base: Vec<T>,
    /// Renormalization weight `r̃_i` of each tile.
    pub weights: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyValue<T = f64> {
    pub level: usize,
    /// Energy with the level-0 conductances on every copy.
    pub raw: T,
    /// Energy with weight-corrected conductances.
    pub renormalized: T,
}

impl<T: Scalar> ConductanceModel<T> {
    pub fn new(base: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if base.is_empty() || weights.is_empty() {
            return Err(Error::domain("conductance model needs edges and tiles"));
        }
        if base.iter().chain(&weights).any(|x| *x <= T::zero()) {
            return Err(Error::domain("conductances and weights must be positive"));
        }
        Ok(ConductanceModel { base, weights })
    }

    pub fn uniform(table: &GluingTable, base: T, weight: T) -> Result<Self> {
        Self::new(
            vec![base; table.level0_edges.len()],
            vec![weight; table.n_tiles],
        )
    }

    fn check(&self, graph: &LevelGraph) -> Result<()> {
        if self.weights.len() != graph.n_tiles || self.base.len() != graph.edges_per_cell() {
            return Err(Error::domain(format!(
                "model has {} weights and {} base edges, graph has N={} and {} edges per cell",
                self.weights.len(),
                self.base.len(),
                graph.n_tiles,
                graph.edges_per_cell()
            )));
        }
        Ok(())
    }

    /// `∏_k r̃_{w_k}` for every word of the graph's level.
    pub fn word_products(&self, graph: &LevelGraph) -> Vec<T> {
        let n = self.weights.len();
        let mut prod = vec![T::one()];
        for _ in 0..graph.level {
            prod = (0..n * prod.len())
                .map(|w| self.weights[w / prod.len()].clone() * prod[w % prod.len()].clone())
                .collect();
        }
        prod
    }

    pub fn raw_conductances(&self, graph: &LevelGraph) -> Result<Vec<T>> {
        self.check(graph)?;
        Ok(graph
            .edges
            .iter()
            .map(|e| self.base[e.base].clone())
            .collect())
    }

    pub fn conductances(&self, graph: &LevelGraph) -> Result<Vec<T>> {
        self.check(graph)?;
        let prod = self.word_products(graph);
        Ok(graph
            .edges
            .iter()
            .map(|e| self.base[e.base].clone() / prod[e.word].clone())
            .collect())
    }

    /// `N`: the raw energy gains this factor under pullback by `R`.
    pub fn raw_factor(&self) -> T {
        (0..self.weights.len()).fold(T::zero(), |acc, _| acc + T::one())
    }

    /// `Σ_i 1/r̃_i`: the renormalized energy gains this factor under pullback.
    pub fn renormalized_factor(&self) -> T {
        self.weights
            .iter()
            .fold(T::zero(), |acc, r| acc + T::one() / r.clone())
    }
}

impl ConductanceModel<f64> {
    /// Unit conductances and weights `3/5` on every tile.
    pub fn standard(table: &GluingTable) -> Self {
        ConductanceModel {
            base: vec![1.0; table.level0_edges.len()],
            weights: vec![0.6; table.n_tiles],
        }
    }
}

impl ConductanceModel<BigRational> {
    pub fn standard_exact(table: &GluingTable) -> Self {
        let one = BigRational::from_integer(1.into());
        let w = BigRational::new(3.into(), 5.into());
        ConductanceModel {
            base: vec![one; table.level0_edges.len()],
            weights: vec![w; table.n_tiles],
        }
    }
}

fn check_len<T>(graph: &LevelGraph, u: &[T]) -> Result<()> {
    if u.len() != graph.vertex_count() {
        return Err(Error::domain(format!(
            "function has {} values, level {} has {} vertices",
            u.len(),
            graph.level,
            graph.vertex_count()
        )));
    }
    Ok(())
}

/// `E(u, v) = Σ_{x~y} c(x,y) (u(x)-u(y)) (v(x)-v(y))`; `v` defaults to `u`.
pub fn energy<T: Scalar>(
    graph: &LevelGraph,
    model: &ConductanceModel<T>,
    u: &[T],
    v: Option<&[T]>,
) -> Result<EnergyValue<T>> {
    model.check(graph)?;
    check_len(graph, u)?;
    let v = v.unwrap_or(u);
    check_len(graph, v)?;
    let prod = model.word_products(graph);
    let mut raw = T::zero();
    let mut renormalized = T::zero();
    for e in &graph.edges {
        let term = (u[e.a].clone() - u[e.b].clone()) * (v[e.a].clone() - v[e.b].clone());
        if term.is_zero() {
            continue;
        }
        let c = model.base[e.base].clone();
        raw = raw + c.clone() * term.clone();
        renormalized = renormalized + c * term / prod[e.word].clone();
    }
    Ok(EnergyValue {
        level: graph.level,
        raw,
        renormalized,
    })
}

/// Defects of the pullback identities `E_m(u∘R) = N·E_{m-1}(u)` and
/// `ℰ_m(u∘R) = (Σ 1/r̃_i)·ℰ_{m-1}(u)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceResidual<T = f64> {
    pub coarse: EnergyValue<T>,
    pub fine: EnergyValue<T>,
    pub raw: T,
    pub renormalized: T,
}

pub fn dynamical_invariance<T: Scalar>(
    coarse: &LevelGraph,
    fine: &LevelGraph,
    model: &ConductanceModel<T>,
    u: &[T],
) -> Result<InvarianceResidual<T>> {
    let pulled = pullback(fine, coarse, u)?;
    let e0 = energy(coarse, model, u, None)?;
    let e1 = energy(fine, model, &pulled, None)?;
    let raw = (e1.raw.clone() - model.raw_factor() * e0.raw.clone()).abs();
    let renormalized =
        (e1.renormalized.clone() - model.renormalized_factor() * e0.renormalized.clone()).abs();
    Ok(InvarianceResidual {
        coarse: e0,
        fine: e1,
        raw,
        renormalized,
    })
}

/// Builds levels `m-1` and `m` of `table` and runs [`dynamical_invariance`].
pub fn check_dynamical_invariance<T: Scalar>(
    table: &GluingTable,
    model: &ConductanceModel<T>,
    m: usize,
    u: &[T],
) -> Result<InvarianceResidual<T>> {
    if m == 0 {
        return Err(Error::domain("invariance check needs m >= 1"));
    }
    let coarse = build_level(table, m - 1)?;
    let fine = build_level(table, m)?;
    dynamical_invariance(&coarse, &fine, model, u)
}

/// Harmonic extension operator of one cell, shared by every cell of a level.
///
/// New vertices of `V_{m+1}` are interior to a single `m`-cell, and inside a
/// cell all conductances carry the same factor `∏ r̃_w`, so one small solve on
/// the local pattern serves every cell.
#[derive(Debug, Clone)]
pub struct CellExtension<T> {
    /// `(child tile, boundary index)` representative of each new local vertex.
    pub new_vertices: Vec<(usize, usize)>,
    /// `values(new) = matrix · values(corners)`, one row per new vertex.
    pub matrix: Vec<Vec<T>>,
}

impl<T: Scalar> CellExtension<T> {
    pub fn new(fine: &LevelGraph, model: &ConductanceModel<T>) -> Result<Self> {
        if fine.level == 0 {
            return Err(Error::domain("extension target must have level >= 1"));
        }
        model.check(fine)?;
        let (n, b) = (fine.n_tiles, fine.boundary_size);
        // local classes from the first cell (word 0 at level m, children 0..N)
        let mut ids: Vec<usize> = Vec::new();
        let mut local = vec![vec![0usize; b]; n];
        let mut reps = Vec::new();
        for i in 0..n {
            for p in 0..b {
                let id = fine.vertex_of(i, p);
                let k = match ids.iter().position(|&x| x == id) {
                    Some(k) => k,
                    None => {
                        ids.push(id);
                        reps.push((i, p));
                        ids.len() - 1
                    }
                };
                local[i][p] = k;
            }
        }
        let corners: Vec<usize> = fine
            .boundary_lift()
            .iter()
            .map(|&(t, a)| local[t][a])
            .collect();
        let new: Vec<usize> = (0..ids.len()).filter(|k| !corners.contains(k)).collect();
        let size = ids.len();
        let mut lap = vec![vec![T::zero(); size]; size];
        let edges = fine.edges_per_cell();
        for i in 0..n {
            for e in 0..edges {
                let edge = &fine.edges[i * edges + e];
                let (p, q) = (edge.a, edge.b);
                let (p, q) = (
                    ids.iter().position(|&x| x == p).expect("local vertex"),
                    ids.iter().position(|&x| x == q).expect("local vertex"),
                );
                let c = model.base[edge.base].clone() / model.weights[i].clone();
                lap[p][p] = lap[p][p].clone() + c.clone();
                lap[q][q] = lap[q][q].clone() + c.clone();
                lap[p][q] = lap[p][q].clone() - c.clone();
                lap[q][p] = lap[q][p].clone() - c;
            }
        }
        let a: Vec<Vec<T>> = new
            .iter()
            .map(|&r| new.iter().map(|&c| lap[r][c].clone()).collect())
            .collect();
        let rhs: Vec<Vec<T>> = new
            .iter()
            .map(|&r| corners.iter().map(|&c| -lap[r][c].clone()).collect())
            .collect();
        let matrix = if new.is_empty() {
            Vec::new()
        } else {
            linalg::gauss_solve(a, rhs).map_err(|_| {
                Error::Structural("cell interior is not connected to its corners".into())
            })?
        };
        Ok(CellExtension {
            new_vertices: new.iter().map(|&k| reps[k]).collect(),
            matrix,
        })
    }
}

fn check_consecutive(coarse: &LevelGraph, fine: &LevelGraph) -> Result<Vec<usize>> {
    coarse.embedding_into(fine)
}

/// Energy-minimising extension of `u` from `V_m` to `V_{m+1}`.
pub fn harmonic_extension<T: Scalar>(
    coarse: &LevelGraph,
    fine: &LevelGraph,
    model: &ConductanceModel<T>,
    u: &[T],
) -> Result<Vec<T>> {
    harmonic_extension_with(coarse, fine, model, u, Execution::default())
}

pub fn harmonic_extension_with<T: Scalar>(
    coarse: &LevelGraph,
    fine: &LevelGraph,
    model: &ConductanceModel<T>,
    u: &[T],
    exec_mode: Execution,
) -> Result<Vec<T>> {
    check_len(coarse, u)?;
    let emb = check_consecutive(coarse, fine)?;
    let local = CellExtension::new(fine, model)?;
    let n = fine.n_tiles;
    let per_cell = exec::map_range(exec_mode, coarse.cells.len(), |w| {
        let corners = &coarse.cells[w].vertices;
        local
            .new_vertices
            .iter()
            .zip(&local.matrix)
            .map(|(&(i, p), row)| {
                let value = row
                    .iter()
                    .zip(corners)
                    .fold(T::zero(), |acc, (h, &c)| acc + h.clone() * u[c].clone());
                (fine.vertex_of(w * n + i, p), value)
            })
            .collect::<Vec<_>>()
    });
    let mut out = vec![T::zero(); fine.vertex_count()];
    for (v, &f) in emb.iter().enumerate() {
        out[f] = u[v].clone();
    }
    for (id, value) in per_cell.into_iter().flatten() {
        out[id] = value;
    }
    Ok(out)
}

/// Same minimiser via one global Cholesky solve on all new vertices.
pub fn harmonic_extension_global(
    coarse: &LevelGraph,
    fine: &LevelGraph,
    model: &ConductanceModel<f64>,
    u: &[f64],
) -> Result<Vec<f64>> {
    check_len(coarse, u)?;
    let emb = check_consecutive(coarse, fine)?;
    let cond = model.conductances(fine)?;
    let mut out = vec![f64::NAN; fine.vertex_count()];
    let mut fixed = vec![false; fine.vertex_count()];
    for (v, &f) in emb.iter().enumerate() {
        out[f] = u[v];
        fixed[f] = true;
    }
    let free: Vec<usize> = (0..fine.vertex_count()).filter(|&v| !fixed[v]).collect();
    let mut index = vec![usize::MAX; fine.vertex_count()];
    for (k, &v) in free.iter().enumerate() {
        index[v] = k;
    }
    let mut a = Matrix::zeros(free.len());
    let mut rhs = vec![0.0; free.len()];
    for (e, &c) in fine.edges.iter().zip(&cond) {
        for (x, y) in [(e.a, e.b), (e.b, e.a)] {
            if fixed[x] {
                continue;
            }
            let i = index[x];
            a.add(i, i, c);
            if fixed[y] {
                rhs[i] += c * out[y];
            } else {
                a.add(i, index[y], -c);
            }
        }
    }
    let l = linalg::cholesky(&a)
        .map_err(|_| Error::Structural("interior system is singular".into()))?;
    for (k, x) in linalg::cholesky_solve(&l, &rhs).into_iter().enumerate() {
        out[free[k]] = x;
    }
    Ok(out)
}

/// Non-harmonic extension: each new vertex takes the mean of the cell corners
/// adjacent to it (all corners of its cell if none are adjacent).
pub fn midpoint_interpolation(
    coarse: &LevelGraph,
    fine: &LevelGraph,
    u: &[f64],
) -> Result<Vec<f64>> {
    check_len(coarse, u)?;
    let emb = check_consecutive(coarse, fine)?;
    let mut out = vec![f64::NAN; fine.vertex_count()];
    let mut fixed = vec![false; fine.vertex_count()];
    for (v, &f) in emb.iter().enumerate() {
        out[f] = u[v];
        fixed[f] = true;
    }
    let adj = fine.adjacency();
    let n = fine.n_tiles;
    for (w, cell) in coarse.cells.iter().enumerate() {
        let corners: Vec<usize> = cell.vertices.iter().map(|&c| emb[c]).collect();
        for i in 0..n {
            for p in 0..fine.boundary_size {
                let x = fine.vertex_of(w * n + i, p);
                if fixed[x] || !out[x].is_nan() {
                    continue;
                }
                let near: Vec<f64> = adj[x]
                    .iter()
                    .filter(|(y, _)| corners.contains(y))
                    .map(|&(y, _)| out[y])
                    .collect();
                let pool = if near.is_empty() {
                    corners.iter().map(|&c| out[c]).collect()
                } else {
                    near
                };
                out[x] = pool.iter().sum::<f64>() / pool.len() as f64;
            }
        }
    }
    Ok(out)
}

/// `ℰ_m` of the repeated harmonic extension of `u` (given on `V_0`) for
/// `m = 0..=m_max`.
pub fn energy_limit_estimate(
    table: &GluingTable,
    model: &ConductanceModel<f64>,
    u: &[f64],
    m_max: usize,
) -> Result<Vec<EnergyValue>> {
    if m_max < 1 {
        return Err(Error::domain("m_max must be at least 1"));
    }
    let mut graph = build_level(table, 0)?;
    let mut values = u.to_vec();
    let mut out = vec![energy(&graph, model, &values, None)?];
    for m in 1..=m_max {
        let fine = build_level(table, m)?;
        values = harmonic_extension(&graph, &fine, model, &values)?;
        out.push(energy(&fine, model, &values, None)?);
        graph = fine;
    }
    Ok(out)
}
