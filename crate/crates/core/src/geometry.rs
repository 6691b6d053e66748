//! Numeric realisation of the level graphs in the plane.
//!
//! `V_0` is the post-critical set ordered by argument. `V_{m+1}` is obtained by
//! solving `R(z) = w` for every `w ∈ V_m` and assigning each root to a tile by
//! the angular sector it falls in; sector boundaries are the arguments of the
//! critical points. Tile 0 is the sector containing the positive real axis.

use num_complex::Complex64;
use serde::Serialize;

use crate::cell_complex::{build_level, cycle_edges, GluingTable, LevelGraph};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::preimage::{self, PreimageSet};
use crate::rational_map::{arg_2pi, MapSpec, DEFAULT_MAX_ITER, DEFAULT_ORBIT_TOL};

/// Default matching tolerance for embedded coordinates.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Two tile copies closer than this are the same point.
pub const GLUE_TOL: f64 = 1e-6;
/// Roots within this angle (radians) of a sector boundary are ambiguous.
pub const SECTOR_TIE_TOL: f64 = 1e-9;

const TAU: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddedLevel {
    pub level: usize,
    /// Coordinates indexed by canonical vertex id.
    pub coords: Vec<Complex64>,
    pub tolerance: f64,
}

/// `V_0`: the post-critical set sorted by argument, cycles Newton-polished.
pub fn boundary_points(spec: &MapSpec) -> Result<Vec<Complex64>> {
    let report = spec.classify(DEFAULT_MAX_ITER, DEFAULT_ORBIT_TOL)?;
    if !report.is_misiurewicz {
        return Err(Error::Embedding(
            "map is not Misiurewicz; V0 is not a finite repelling set".into(),
        ));
    }
    let pts = report.post_critical_set;
    for w in pts.windows(2) {
        if (arg_2pi(w[0]) - arg_2pi(w[1])).abs() < SECTOR_TIE_TOL {
            return Err(Error::Embedding(format!(
                "post-critical points {} and {} share an argument; ordering by argument is ambiguous",
                w[0], w[1]
            )));
        }
    }
    Ok(pts)
}

/// Sector boundaries: critical-point arguments in ascending order.
fn sector_bounds(spec: &MapSpec) -> Result<Vec<f64>> {
    let theta: Vec<f64> = spec.critical_points().iter().map(|c| arg_2pi(*c)).collect();
    if theta[0] < SECTOR_TIE_TOL {
        return Err(Error::Embedding(
            "a critical point lies on the positive real axis; tile 0 is undefined".into(),
        ));
    }
    Ok(theta)
}

/// Tiles of one root: one tile for a simple root, the two tiles meeting at a
/// critical point for a double root.
fn tiles_of(theta: &[f64], z: Complex64, mult: usize) -> Result<Vec<usize>> {
    let nn = theta.len();
    let a = arg_2pi(z);
    let near = |t: f64| {
        let d = (a - t).abs();
        d.min(TAU - d) < SECTOR_TIE_TOL
    };
    if mult == 2 {
        let j = (0..nn).find(|&j| near(theta[j])).ok_or_else(|| {
            Error::Embedding(format!("double root {z} is not on a sector boundary"))
        })?;
        return Ok(vec![j, (j + 1) % nn]);
    }
    if mult != 1 {
        return Err(Error::Embedding(format!(
            "root {z} has multiplicity {mult}"
        )));
    }
    if let Some(j) = (0..nn).find(|&j| near(theta[j])) {
        return Err(Error::Embedding(format!(
            "simple root {z} lies on the sector boundary at critical argument {}",
            theta[j]
        )));
    }
    Ok(vec![theta.iter().position(|&t| a < t).unwrap_or(0)])
}

/// For each tile, the root of `set` belonging to it.
pub fn assign_branches(spec: &MapSpec, set: &PreimageSet) -> Result<Vec<Complex64>> {
    let theta = sector_bounds(spec)?;
    let nn = theta.len();
    let mut out: Vec<Option<Complex64>> = vec![None; nn];
    for &(z, mult) in &set.roots {
        for t in tiles_of(&theta, z, mult)? {
            if out[t].replace(z).is_some() {
                return Err(Error::Embedding(format!(
                    "tile {t} receives two preimages of {}",
                    set.target
                )));
            }
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(t, z)| {
            z.ok_or_else(|| {
                Error::Embedding(format!("tile {t} receives no preimage of {}", set.target))
            })
        })
        .collect()
}

/// Coordinates of levels `0..=m_max`.
pub fn embed_levels(
    spec: &MapSpec,
    table: &GluingTable,
    m_max: usize,
    tol: f64,
    exec_mode: Execution,
) -> Result<Vec<EmbeddedLevel>> {
    table.validate()?;
    if spec.degree() != table.n_tiles {
        return Err(Error::domain(format!(
            "map has degree {}, table has {} tiles",
            spec.degree(),
            table.n_tiles
        )));
    }
    let v0 = boundary_points(spec)?;
    if v0.len() != table.boundary_size {
        return Err(Error::domain(format!(
            "post-critical set has {} points, table has B = {}",
            v0.len(),
            table.boundary_size
        )));
    }
    for (v, &z) in v0.iter().enumerate() {
        let image = spec.eval_finite(z).finite().unwrap_or(z);
        if (image - v0[table.boundary_dynamics[v]]).norm() > tol {
            return Err(Error::Consistency(format!(
                "R(q_{v}) does not match q_{} of boundary_dynamics",
                table.boundary_dynamics[v]
            )));
        }
    }
    let mut graph = build_level(table, 0)?;
    let mut levels = vec![EmbeddedLevel {
        level: 0,
        coords: v0,
        tolerance: tol,
    }];
    for k in 1..=m_max {
        let fine = build_level(table, k)?;
        let coarse_coords = &levels[k - 1].coords;
        let branches: Vec<Vec<Complex64>> =
            exec::map_slice(exec_mode, coarse_coords, |&w| -> Result<Vec<Complex64>> {
                let set = preimage::solve_preimages(spec, w, preimage::DEFAULT_TOL)?;
                assign_branches(spec, &set)
            })
            .into_iter()
            .collect::<Result<_>>()?;
        let coords = place_level(&graph, &fine, &branches)?;
        levels.push(EmbeddedLevel {
            level: k,
            coords,
            tolerance: tol,
        });
        graph = fine;
    }
    Ok(levels)
}

/// Level-`m` coordinates only.
pub fn embed_vertices(
    spec: &MapSpec,
    table: &GluingTable,
    m: usize,
    tol: f64,
) -> Result<EmbeddedLevel> {
    Ok(embed_levels(spec, table, m, tol, Execution::default())?
        .pop()
        .expect("level 0 is always present"))
}

/// Coordinates of `fine` from per-coarse-vertex branch values, checking that
/// every address of a vertex lands on the same point.
fn place_level(
    coarse: &LevelGraph,
    fine: &LevelGraph,
    branches: &[Vec<Complex64>],
) -> Result<Vec<Complex64>> {
    let b = fine.boundary_size;
    let tail_words = fine.word_count() / fine.n_tiles;
    let mut coords: Vec<Option<Complex64>> = vec![None; fine.vertex_count()];
    for x in 0..fine.address_count() {
        let (word, point) = (x / b, x % b);
        let letter = word / tail_words;
        let target = coarse.vertex_of(word % tail_words, point);
        let z = branches[target][letter];
        let v = fine.vertex_of_address(x);
        match coords[v] {
            None => coords[v] = Some(z),
            Some(prev) if (prev - z).norm() > GLUE_TOL => {
                return Err(Error::Consistency(format!(
                    "glued address {} lands at {z}, vertex {v} is at {prev}",
                    fine.format_address(x)
                )));
            }
            Some(_) => {}
        }
    }
    Ok(coords
        .into_iter()
        .map(|z| z.expect("every vertex has an address"))
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct GluingInference {
    pub table: GluingTable,
    pub v0: Vec<Complex64>,
    /// `F_i(q_b)`, indexed `[tile][boundary index]`.
    pub tile_points: Vec<Vec<Complex64>>,
    /// Points shared by two tiles.
    pub glue_points: Vec<Complex64>,
    /// Distinct level-1 points outside `V_0` that are not glue points.
    pub extra_points: Vec<Complex64>,
}

/// Recover the gluing table from level-1 numerics.
pub fn infer_gluing(spec: &MapSpec, tol: f64) -> Result<GluingTable> {
    Ok(infer_gluing_detailed(spec, tol)?.table)
}

pub fn infer_gluing_detailed(spec: &MapSpec, tol: f64) -> Result<GluingInference> {
    let inference = |e: Error| Error::Inference(e.to_string());
    let v0 = boundary_points(spec).map_err(inference)?;
    let bsize = v0.len();
    let nn = spec.degree();
    let mut tile_points = vec![vec![Complex64::new(0.0, 0.0); bsize]; nn];
    for (q, &w) in v0.iter().enumerate() {
        let set = preimage::solve_preimages(spec, w, preimage::DEFAULT_TOL).map_err(inference)?;
        let per_tile = assign_branches(spec, &set).map_err(inference)?;
        for (t, z) in per_tile.into_iter().enumerate() {
            tile_points[t][q] = z;
        }
    }
    let close = |a: Complex64, b: Complex64| (a - b).norm() < GLUE_TOL;

    let mut glue_pairs = Vec::new();
    let mut glue_points: Vec<Complex64> = Vec::new();
    for i in 0..nn {
        for j in i + 1..nn {
            for a in 0..bsize {
                for b in 0..bsize {
                    if close(tile_points[i][a], tile_points[j][b]) {
                        glue_pairs.push(((i, a), (j, b)));
                        glue_points.push(tile_points[i][a]);
                    }
                }
            }
        }
    }

    let mut boundary_lift = Vec::with_capacity(bsize);
    for (v, &q) in v0.iter().enumerate() {
        let hits: Vec<(usize, usize)> = (0..nn)
            .flat_map(|t| (0..bsize).map(move |a| (t, a)))
            .filter(|&(t, a)| close(tile_points[t][a], q))
            .collect();
        match hits.as_slice() {
            [one] => boundary_lift.push(*one),
            _ => {
                return Err(Error::Inference(format!(
                    "boundary point q_{v} = {q} has {} tile copies at level 1",
                    hits.len()
                )))
            }
        }
    }

    let mut boundary_dynamics = Vec::with_capacity(bsize);
    for (v, &q) in v0.iter().enumerate() {
        let image = spec.eval_finite(q).finite().unwrap_or(q);
        let target = v0
            .iter()
            .position(|&p| (p - image).norm() < tol.max(GLUE_TOL))
            .ok_or_else(|| Error::Inference(format!("R(q_{v}) = {image} is not in V0")))?;
        boundary_dynamics.push(target);
    }

    let table = GluingTable {
        n_tiles: nn,
        boundary_size: bsize,
        glue_pairs,
        boundary_lift,
        boundary_dynamics,
        level0_edges: cycle_edges(bsize),
    };
    table
        .validate()
        .map_err(|e| Error::Inference(format!("inferred table is inconsistent: {e}")))?;

    let mut extra_points: Vec<Complex64> = Vec::new();
    for z in tile_points.iter().flatten() {
        let known = v0
            .iter()
            .chain(&glue_points)
            .chain(&extra_points)
            .any(|p| close(*p, *z));
        if !known {
            extra_points.push(*z);
        }
    }
    Ok(GluingInference {
        table,
        v0,
        tile_points,
        glue_points,
        extra_points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenderConfig {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub width: usize,
    pub height: usize,
    pub max_iter: u32,
    pub escape_radius: f64,
}

impl RenderConfig {
    /// Square window `[-r, r]²` with `r` the map's escape radius.
    pub fn square(spec: &MapSpec, size: usize, max_iter: u32) -> Self {
        let r = spec.escape_radius();
        RenderConfig {
            re_min: -r,
            re_max: r,
            im_min: -r,
            im_max: r,
            width: size,
            height: size,
            max_iter,
            escape_radius: r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain("image must be at least 1x1"));
        }
        if !(self.escape_radius >= 2.0) {
            return Err(Error::domain("escape radius must be at least 2"));
        }
        if !(self.re_min < self.re_max && self.im_min < self.im_max) {
            return Err(Error::domain("window must have positive extent"));
        }
        if self.max_iter == 0 {
            return Err(Error::domain("max_iter must be positive"));
        }
        Ok(())
    }

    /// Centre of pixel `(col, row)`; row 0 is the top edge `im_max`.
    pub fn pixel_center(&self, col: usize, row: usize) -> Complex64 {
        let dx = (self.re_max - self.re_min) / self.width as f64;
        let dy = (self.im_max - self.im_min) / self.height as f64;
        Complex64::new(
            self.re_min + (col as f64 + 0.5) * dx,
            self.im_max - (row as f64 + 0.5) * dy,
        )
    }

    /// `(col, row)` of the pixel containing `z`, if inside the window.
    pub fn pixel_of(&self, z: Complex64) -> Option<(usize, usize)> {
        let fx = (z.re - self.re_min) / (self.re_max - self.re_min);
        let fy = (self.im_max - z.im) / (self.im_max - self.im_min);
        if !(0.0..1.0).contains(&fx) || !(0.0..1.0).contains(&fy) {
            return None;
        }
        Some((
            (fx * self.width as f64) as usize,
            (fy * self.height as f64) as usize,
        ))
    }

    /// Whether the orbit of `z` stays within the escape radius for
    /// `max_iter` steps under this configuration.
    pub fn is_bounded(&self, spec: &MapSpec, z: Complex64) -> bool {
        escape_count(spec, z, self.max_iter, self.escape_radius) == self.max_iter
    }
}

/// Iterations before `|z|` exceeds `radius`; 0 maps to ∞ in one step, and
/// points that never escape report `max_iter`.
pub fn escape_count(spec: &MapSpec, z: Complex64, max_iter: u32, radius: f64) -> u32 {
    let mut z = z;
    for k in 0..max_iter {
        if z.norm() > radius {
            return k;
        }
        match spec.eval_finite(z).finite() {
            Some(w) if w.re.is_finite() && w.im.is_finite() => z = w,
            _ => return k + 1,
        }
    }
    max_iter
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapeImage {
    pub width: usize,
    pub height: usize,
    pub max_iter: u32,
    /// Row-major counts, top row first.
    pub counts: Vec<u32>,
}

impl EscapeImage {
    /// Binary greymap: `P5`, one byte per pixel, `count * 255 / max_iter`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.counts
                .iter()
                .map(|&c| (c as u64 * 255 / self.max_iter as u64) as u8),
        );
        out
    }

    pub fn count_at(&self, col: usize, row: usize) -> u32 {
        self.counts[row * self.width + col]
    }
}

pub fn render(spec: &MapSpec, cfg: &RenderConfig) -> Result<EscapeImage> {
    render_with(spec, cfg, Execution::default())
}

pub fn render_with(
    spec: &MapSpec,
    cfg: &RenderConfig,
    exec_mode: Execution,
) -> Result<EscapeImage> {
    cfg.validate()?;
    let mut counts = vec![0u32; cfg.width * cfg.height];
    exec::for_each_chunk_mut(exec_mode, &mut counts, cfg.width, |row, line| {
        for (col, c) in line.iter_mut().enumerate() {
            *c = escape_count(
                spec,
                cfg.pixel_center(col, row),
                cfg.max_iter,
                cfg.escape_radius,
            );
        }
    });
    Ok(EscapeImage {
        width: cfg.width,
        height: cfg.height,
        max_iter: cfg.max_iter,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_complex::build_level;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sg_boundary_points() {
        let v0 = boundary_points(&MapSpec::sierpinski()).unwrap();
        let w = MapSpec::sierpinski().omega();
        let expected = [c(4.0 / 3.0, 0.0), w * (4.0 / 3.0), w * w * (4.0 / 3.0)];
        for (a, b) in v0.iter().zip(expected) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn sg_inferred_table() {
        let t = infer_gluing(&MapSpec::sierpinski(), DEFAULT_TOL).unwrap();
        assert_eq!(t, GluingTable::sg_dynamical_gluing());
    }

    #[test]
    fn level_one_contains_critical_points() {
        let spec = MapSpec::sierpinski();
        let lvl =
            embed_vertices(&spec, &GluingTable::sg_dynamical_gluing(), 1, DEFAULT_TOL).unwrap();
        assert_eq!(lvl.coords.len(), 6);
        for cp in spec.critical_points() {
            assert!(lvl.coords.iter().any(|z| (z - cp).norm() < 1e-12));
        }
    }

    #[test]
    fn embedding_commutes_with_r() {
        let spec = MapSpec::sierpinski();
        let t = GluingTable::sg_dynamical_gluing();
        let levels = embed_levels(&spec, &t, 4, DEFAULT_TOL, Execution::Sequential).unwrap();
        for k in 1..=4 {
            let coarse = build_level(&t, k - 1).unwrap();
            let fine = build_level(&t, k).unwrap();
            for (v, z) in levels[k].coords.iter().enumerate() {
                let image = spec.eval_finite(*z).finite().unwrap();
                let w = fine.apply_r(&coarse, v).unwrap();
                assert!((image - levels[k - 1].coords[w]).norm() < 1e-7);
            }
            let emb = coarse.embedding_into(&fine).unwrap();
            for (v, &f) in emb.iter().enumerate() {
                assert!((levels[k - 1].coords[v] - levels[k].coords[f]).norm() < DEFAULT_TOL);
            }
        }
        let par = embed_levels(&spec, &t, 4, DEFAULT_TOL, Execution::Parallel).unwrap();
        assert_eq!(par[4].coords, levels[4].coords);
    }

    #[test]
    fn quartic_inference() {
        let (refined, _) = MapSpec::quartic_example().refine_lambda(0, 3, 1).unwrap();
        let inf = infer_gluing_detailed(&refined, DEFAULT_TOL).unwrap();
        assert_eq!(inf.table.boundary_size, 4);
        assert_eq!(inf.glue_points.len(), 4);
        assert_eq!(inf.extra_points.len(), 4);
        assert_eq!(
            inf.table.glue_pairs,
            vec![
                ((0, 1), (1, 1)),
                ((0, 3), (3, 3)),
                ((1, 3), (2, 3)),
                ((2, 1), (3, 1))
            ]
        );
        assert_eq!(
            inf.table.boundary_lift,
            vec![(0, 0), (1, 2), (2, 0), (3, 2)]
        );
        assert_eq!(inf.table.boundary_dynamics, vec![0, 2, 0, 2]);
        for z in &inf.extra_points {
            assert!((z.norm() - 0.5).abs() < 1e-3, "{z}");
        }
        let g = build_level(&inf.table, 1).unwrap();
        assert_eq!(g.vertex_count(), 12);
    }

    #[test]
    fn escape_counts() {
        let spec = MapSpec::sierpinski();
        let r = spec.escape_radius();
        assert_eq!(escape_count(&spec, c(0.0, 0.0), 100, r), 1);
        assert_eq!(escape_count(&spec, c(10.0, 0.0), 100, r), 0);
        assert_eq!(escape_count(&spec, c(4.0 / 3.0, 0.0), 100, r), 100);
    }

    #[test]
    fn render_is_deterministic() {
        let spec = MapSpec::sierpinski();
        let cfg = RenderConfig::square(&spec, 64, 50);
        let a = render_with(&spec, &cfg, Execution::Sequential).unwrap();
        let b = render_with(&spec, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let pgm = a.to_pgm();
        assert!(pgm.starts_with(b"P5\n64 64\n255\n"));
        assert_eq!(pgm.len(), 13 + 64 * 64);
        let mut bad = cfg;
        bad.escape_radius = 1.0;
        assert!(render(&spec, &bad).is_err());
    }
}
