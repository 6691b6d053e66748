//! Combinatorial level graphs.
//!
//! A level-`m` vertex is an equivalence class of addresses `w·b`: a word
//! `w ∈ {0..N-1}^m` naming a nested tile and a boundary index `b < B` naming
//! a point of `V_0`. The address stands for `F_{w_1} ∘ … ∘ F_{w_m}(q_b)` where
//! `F_i` is the inverse branch of `R` on tile `i`. Sibling tiles are glued
//! according to a [`GluingTable`]; `R` acts by deleting the first letter.
//!
//! Addresses are packed as `word_index * B + b`, with the first letter most
//! significant in `word_index`, so numeric order equals lexicographic order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite description of how the `N` tile copies of `V_0` are glued.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GluingTable {
    #[serde(rename = "N")]
    pub n_tiles: usize,
    #[serde(rename = "B")]
    pub boundary_size: usize,
    /// `((i, a), (j, b))` with `i < j`: point `a` of tile `i` is point `b` of tile `j`.
    pub glue_pairs: Vec<((usize, usize), (usize, usize))>,
    /// For each boundary point `v`, the `(tile, index)` with `F_tile(q_index) = q_v`.
    pub boundary_lift: Vec<(usize, usize)>,
    /// `R(q_v)` as an index into `V_0`.
    pub boundary_dynamics: Vec<usize>,
    /// Edges of the level-0 graph (the boundary cycle in cyclic order).
    pub level0_edges: Vec<(usize, usize)>,
}

impl GluingTable {
    /// The table of the dynamical IFS `F_0`, `F_1 ∘ ω²`, `F_2 ∘ ω` on the
    /// Sierpinski gasket.
    pub fn sg_dynamical_gluing() -> Self {
        GluingTable {
            n_tiles: 3,
            boundary_size: 3,
            glue_pairs: vec![((0, 1), (1, 1)), ((0, 2), (2, 2)), ((1, 0), (2, 0))],
            boundary_lift: vec![(0, 0), (1, 2), (2, 1)],
            boundary_dynamics: vec![0, 2, 1],
            level0_edges: cycle_edges(3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, b) = (self.n_tiles, self.boundary_size);
        let bad = |msg: String| Err(Error::Structural(msg));
        if n < 2 || b < 2 {
            return bad(format!("need N >= 2 and B >= 2, got N={n}, B={b}"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &((i, a), (j, c)) in &self.glue_pairs {
            if i >= j || j >= n || a >= b || c >= b {
                return bad(format!("malformed glue pair (({i},{a}),({j},{c}))"));
            }
            if a != c {
                // R strips the tile letter, so glued copies must share the image point
                return bad(format!(
                    "glue pair (({i},{a}),({j},{c})) identifies copies of different boundary points"
                ));
            }
            if !seen.insert((i, a, j, c)) {
                return bad(format!("duplicate glue pair (({i},{a}),({j},{c}))"));
            }
        }
        if self.boundary_lift.len() != b || self.boundary_dynamics.len() != b {
            return bad("boundary_lift and boundary_dynamics need B entries".into());
        }
        let glued: std::collections::BTreeSet<(usize, usize)> =
            self.glue_pairs.iter().flat_map(|&(x, y)| [x, y]).collect();
        let mut lifts = std::collections::BTreeSet::new();
        for (v, &(t, a)) in self.boundary_lift.iter().enumerate() {
            if t >= n || a >= b {
                return bad(format!("boundary_lift[{v}] out of range"));
            }
            if !lifts.insert((t, a)) {
                return bad(format!("boundary_lift is not injective at {v}"));
            }
            if glued.contains(&(t, a)) {
                return bad(format!("boundary_lift[{v}] lands on a glued copy"));
            }
            if self.boundary_dynamics[v] != a {
                return bad(format!(
                    "boundary_dynamics[{v}] = {} disagrees with lift index {a}",
                    self.boundary_dynamics[v]
                ));
            }
        }
        if self.level0_edges.is_empty()
            || self
                .level0_edges
                .iter()
                .any(|&(x, y)| x >= b || y >= b || x == y)
        {
            return bad("level0_edges must be a nonempty list of distinct index pairs".into());
        }
        Ok(())
    }
}

/// `(0,1), (1,2), …, (B-1,0)`.
pub fn cycle_edges(b: usize) -> Vec<(usize, usize)> {
    (0..b).map(|k| (k, (k + 1) % b)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Word index of the tile carrying this copy of a level-0 edge.
    pub word: usize,
    /// Index into the table's `level0_edges`.
    pub base: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cell {
    pub word: usize,
    pub vertices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LevelGraph {
    pub level: usize,
    pub n_tiles: usize,
    pub boundary_size: usize,
    pub edges: Vec<Edge>,
    pub cells: Vec<Cell>,
    /// Vertex ids of `V_0` inside this level, in boundary-index order.
    pub boundary: Vec<usize>,
    class_of: Vec<usize>,
    canonical: Vec<usize>,
    lift: Vec<(usize, usize)>,
}

/// Largest address count `build_level` will allocate.
pub const MAX_ADDRESSES: usize = 1 << 24;

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Root of the merged class is its smallest element.
    fn union(&mut self, x: usize, y: usize) {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx != ry {
            let (lo, hi) = if rx < ry { (rx, ry) } else { (ry, rx) };
            self.parent[hi] = lo;
        }
    }
}

/// `(word_index, point)` of `q_a` realised at depth `k`.
fn boundary_addresses(table: &GluingTable, depth: usize) -> Vec<Vec<(usize, usize)>> {
    let mut out = vec![(0..table.boundary_size).map(|a| (0, a)).collect::<Vec<_>>()];
    for k in 1..=depth {
        let pow = table.n_tiles.pow((k - 1) as u32);
        let prev = &out[k - 1];
        let row = (0..table.boundary_size)
            .map(|a| {
                let (t, inner) = table.boundary_lift[a];
                let (w, p) = prev[inner];
                (t * pow + w, p)
            })
            .collect();
        out.push(row);
    }
    out
}

/// Build the level-`m` graph generated by `table`.
pub fn build_level(table: &GluingTable, m: usize) -> Result<LevelGraph> {
    table.validate()?;
    let (n, b) = (table.n_tiles, table.boundary_size);
    let words = n
        .checked_pow(m as u32)
        .filter(|w| w.saturating_mul(b) <= MAX_ADDRESSES)
        .ok_or_else(|| Error::domain(format!("level {m} is too large for N={n}, B={b}")))?;
    let count = words * b;
    let bnd = boundary_addresses(table, m);

    let mut uf = UnionFind::new(count);
    for d in 1..=m {
        let tail = m - d;
        let tail_words = n.pow(tail as u32);
        for prefix in 0..n.pow((d - 1) as u32) {
            for &((i, a), (j, c)) in &table.glue_pairs {
                let (wa, pa) = bnd[tail][a];
                let (wc, pc) = bnd[tail][c];
                let x = ((prefix * n + i) * tail_words + wa) * b + pa;
                let y = ((prefix * n + j) * tail_words + wc) * b + pc;
                uf.union(x, y);
            }
        }
    }

    let mut class_of = vec![usize::MAX; count];
    let mut canonical = Vec::new();
    for x in 0..count {
        let r = uf.find(x);
        if r == x {
            class_of[x] = canonical.len();
            canonical.push(x);
        } else {
            class_of[x] = class_of[r];
        }
    }

    let mut cells = Vec::with_capacity(words);
    let mut edges = Vec::with_capacity(words * table.level0_edges.len());
    for w in 0..words {
        let vertices: Vec<usize> = (0..b).map(|p| class_of[w * b + p]).collect();
        let mut sorted = vertices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != b {
            return Err(Error::Structural(format!(
                "gluing merges boundary points of a single tile (word {w})"
            )));
        }
        for (e, &(p, q)) in table.level0_edges.iter().enumerate() {
            edges.push(Edge {
                a: vertices[p],
                b: vertices[q],
                word: w,
                base: e,
            });
        }
        cells.push(Cell { word: w, vertices });
    }
    let boundary = bnd[m].iter().map(|&(w, p)| class_of[w * b + p]).collect();

    Ok(LevelGraph {
        level: m,
        n_tiles: n,
        boundary_size: b,
        edges,
        cells,
        boundary,
        class_of,
        canonical,
        lift: table.boundary_lift.clone(),
    })
}

impl LevelGraph {
    pub fn vertex_count(&self) -> usize {
        self.canonical.len()
    }

    /// The table's `boundary_lift`, kept for the level embedding.
    pub fn boundary_lift(&self) -> &[(usize, usize)] {
        &self.lift
    }

    /// Number of level-0 edges copied into each cell.
    pub fn edges_per_cell(&self) -> usize {
        self.edges.len() / self.cells.len()
    }

    pub fn address_count(&self) -> usize {
        self.class_of.len()
    }

    /// Number of words of length `level`.
    pub fn word_count(&self) -> usize {
        self.class_of.len() / self.boundary_size
    }

    /// Vertex id of the packed address `word * B + point`.
    pub fn vertex_of(&self, word: usize, point: usize) -> usize {
        self.class_of[word * self.boundary_size + point]
    }

    pub fn vertex_of_address(&self, address: usize) -> usize {
        self.class_of[address]
    }

    /// Lexicographically smallest packed address of vertex `id`.
    pub fn canonical_address(&self, id: usize) -> usize {
        self.canonical[id]
    }

    /// Letters of a word index, first letter first.
    pub fn letters(&self, word: usize) -> Vec<usize> {
        let mut out = vec![0; self.level];
        let mut w = word;
        for k in (0..self.level).rev() {
            out[k] = w % self.n_tiles;
            w /= self.n_tiles;
        }
        out
    }

    pub fn format_word(&self, word: usize) -> String {
        let sep = if self.n_tiles > 10 { "," } else { "" };
        self.letters(word)
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(sep)
    }

    /// `word.point`, e.g. `120.1`; the empty word prints as `.1`.
    pub fn format_address(&self, address: usize) -> String {
        let (w, p) = (address / self.boundary_size, address % self.boundary_size);
        format!("{}.{}", self.format_word(w), p)
    }

    /// All packed addresses of every vertex.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertex_count()];
        for (x, &c) in self.class_of.iter().enumerate() {
            out[c].push(x);
        }
        out
    }

    pub fn is_boundary(&self, id: usize) -> bool {
        self.boundary.contains(&id)
    }

    /// Ids of vertices not in `V_0`, ascending.
    pub fn interior(&self) -> Vec<usize> {
        let mut mask = vec![true; self.vertex_count()];
        for &v in &self.boundary {
            mask[v] = false;
        }
        (0..self.vertex_count()).filter(|&v| mask[v]).collect()
    }

    fn check_consecutive(&self, coarse: &LevelGraph) -> Result<()> {
        if self.level != coarse.level + 1
            || self.n_tiles != coarse.n_tiles
            || self.boundary_size != coarse.boundary_size
        {
            return Err(Error::domain(format!(
                "expected consecutive levels of one table, got {} and {}",
                coarse.level, self.level
            )));
        }
        Ok(())
    }

    /// `R(v)` for a vertex of this level, as a vertex of the level below.
    pub fn apply_r(&self, coarse: &LevelGraph, v: usize) -> Result<usize> {
        if self.level == 0 {
            return Err(Error::domain("level-0 addresses have no letter to strip"));
        }
        self.check_consecutive(coarse)?;
        let addr = *self
            .canonical
            .get(v)
            .ok_or_else(|| Error::domain(format!("vertex {v} out of range")))?;
        Ok(coarse.class_of[self.strip_first_letter(addr)])
    }

    fn strip_first_letter(&self, addr: usize) -> usize {
        let b = self.boundary_size;
        let tail_words = self.word_count() / self.n_tiles;
        ((addr / b) % tail_words) * b + addr % b
    }

    /// `R` on every vertex of this level.
    pub fn apply_r_map(&self, coarse: &LevelGraph) -> Result<Vec<usize>> {
        (0..self.vertex_count())
            .map(|v| self.apply_r(coarse, v))
            .collect()
    }

    /// Checks that every address of every vertex maps to the same class.
    pub fn apply_r_is_well_defined(&self, coarse: &LevelGraph) -> Result<bool> {
        let map = self.apply_r_map(coarse)?;
        Ok(self
            .class_of
            .iter()
            .enumerate()
            .all(|(x, &c)| coarse.class_of[self.strip_first_letter(x)] == map[c]))
    }

    /// For each coarse vertex, the fine vertices mapped onto it.
    pub fn fibers(&self, coarse: &LevelGraph) -> Result<Vec<Vec<usize>>> {
        let map = self.apply_r_map(coarse)?;
        let mut out = vec![Vec::new(); coarse.vertex_count()];
        for (v, &w) in map.iter().enumerate() {
            out[w].push(v);
        }
        Ok(out)
    }

    /// Local degree of `R` at each vertex: the number of distinct first
    /// letters among its addresses (2 at glued critical points).
    pub fn branch_multiplicity(&self) -> Vec<usize> {
        let tail_words = self.word_count() / self.n_tiles.max(1);
        self.class_members()
            .iter()
            .map(|members| {
                if self.level == 0 {
                    return 1;
                }
                let mut firsts: Vec<usize> = members
                    .iter()
                    .map(|x| x / self.boundary_size / tail_words)
                    .collect();
                firsts.sort_unstable();
                firsts.dedup();
                firsts.len()
            })
            .collect()
    }

    /// Position of each vertex of this level inside `fine` (`V_m ⊂ V_{m+1}`).
    pub fn embedding_into(&self, fine: &LevelGraph) -> Result<Vec<usize>> {
        fine.check_consecutive(self)?;
        let b = self.boundary_size;
        Ok(self
            .canonical
            .iter()
            .map(|&addr| {
                let (w, p) = (addr / b, addr % b);
                let (t, a) = self.lift[p];
                fine.class_of[(w * self.n_tiles + t) * b + a]
            })
            .collect())
    }

    /// Vertex-to-vertex adjacency with edge indices.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.vertex_count()];
        for (k, e) in self.edges.iter().enumerate() {
            adj[e.a].push((e.b, k));
            adj[e.b].push((e.a, k));
        }
        adj
    }
}

/// `u ∘ R`: a function on the coarse level pulled back to `fine`.
pub fn pullback<T: Clone>(fine: &LevelGraph, coarse: &LevelGraph, u: &[T]) -> Result<Vec<T>> {
    if u.len() != coarse.vertex_count() {
        return Err(Error::domain(
            "function length does not match the coarse level",
        ));
    }
    Ok(fine
        .apply_r_map(coarse)?
        .into_iter()
        .map(|w| u[w].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sg() -> GluingTable {
        GluingTable::sg_dynamical_gluing()
    }

    #[test]
    fn sg_table_is_valid() {
        sg().validate().unwrap();
    }

    #[test]
    fn level_counts() {
        let t = sg();
        let expected = [(3, 3, 1), (6, 9, 3), (15, 27, 9)];
        for (m, (v, e, c)) in expected.into_iter().enumerate() {
            let g = build_level(&t, m).unwrap();
            assert_eq!(
                (g.vertex_count(), g.edges.len(), g.cells.len()),
                (v, e, c),
                "m={m}"
            );
        }
        for m in 0..=6 {
            let g = build_level(&t, m).unwrap();
            assert_eq!(g.vertex_count(), (3usize.pow(m as u32 + 1) + 3) / 2);
            assert_eq!(g.edges.len(), 3usize.pow(m as u32 + 1));
        }
    }

    #[test]
    fn level_one_structure() {
        let g = build_level(&sg(), 1).unwrap();
        // canonical ids follow lexicographic order of the smallest address
        let addrs: Vec<String> = (0..g.vertex_count())
            .map(|v| g.format_address(g.canonical_address(v)))
            .collect();
        assert_eq!(addrs, vec!["0.0", "0.1", "0.2", "1.0", "1.2", "2.1"]);
        assert_eq!(g.boundary, vec![0, 4, 5]);
        assert_eq!(g.vertex_of(1, 1), g.vertex_of(0, 1));
        assert_eq!(g.vertex_of(2, 0), g.vertex_of(1, 0));
    }

    #[test]
    fn apply_r_strips_letters() {
        let t = sg();
        let g0 = build_level(&t, 0).unwrap();
        let g1 = build_level(&t, 1).unwrap();
        // q1 at level 1 maps to q2
        assert_eq!(g1.apply_r(&g0, g1.boundary[1]).unwrap(), g0.boundary[2]);
        assert_eq!(g1.apply_r(&g0, g1.boundary[2]).unwrap(), g0.boundary[1]);
        assert_eq!(g1.apply_r(&g0, g1.boundary[0]).unwrap(), g0.boundary[0]);
        // glued pair (0,q1) ~ (1,q1) maps to q1
        assert_eq!(g1.apply_r(&g0, g1.vertex_of(0, 1)).unwrap(), 1);
        assert!(g0.apply_r(&g0, 0).is_err());
        for m in 1..=3 {
            let a = build_level(&t, m - 1).unwrap();
            let b = build_level(&t, m).unwrap();
            assert!(b.apply_r_is_well_defined(&a).unwrap());
        }
    }

    #[test]
    fn boundary_dynamics_agree_with_apply_r() {
        let t = sg();
        for m in 1..=4 {
            let a = build_level(&t, m - 1).unwrap();
            let b = build_level(&t, m).unwrap();
            for v in 0..3 {
                assert_eq!(
                    b.apply_r(&a, b.boundary[v]).unwrap(),
                    a.boundary[t.boundary_dynamics[v]]
                );
            }
        }
    }

    #[test]
    fn embedding_preserves_boundary() {
        let t = sg();
        for m in 0..4 {
            let a = build_level(&t, m).unwrap();
            let b = build_level(&t, m + 1).unwrap();
            let emb = a.embedding_into(&b).unwrap();
            let mut sorted = emb.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), a.vertex_count());
            for v in 0..3 {
                assert_eq!(emb[a.boundary[v]], b.boundary[v]);
            }
        }
    }

    #[test]
    fn pullback_of_indicator() {
        let t = sg();
        let g0 = build_level(&t, 0).unwrap();
        let g1 = build_level(&t, 1).unwrap();
        let u = vec![1, 0, 0];
        let pulled = pullback(&g1, &g0, &u).unwrap();
        let ones: Vec<usize> = (0..6).filter(|&v| pulled[v] == 1).collect();
        // q0 and the midpoint opposite q0 (the critical point c0)
        assert_eq!(ones, vec![g1.boundary[0], g1.vertex_of(1, 0)]);
        assert_eq!(pullback(&g1, &g0, &[7, 7, 7]).unwrap(), vec![7; 6]);
    }

    #[test]
    fn each_edge_has_n_preimage_edges() {
        let t = sg();
        for m in 0..=4 {
            let coarse = build_level(&t, m).unwrap();
            let fine = build_level(&t, m + 1).unwrap();
            let map = fine.apply_r_map(&coarse).unwrap();
            let key = |a: usize, b: usize| (a.min(b), a.max(b));
            let mut counts = std::collections::HashMap::new();
            for e in &coarse.edges {
                counts.insert(key(e.a, e.b), 0usize);
            }
            for e in &fine.edges {
                let k = key(map[e.a], map[e.b]);
                *counts.get_mut(&k).expect("image is an edge") += 1;
            }
            assert!(counts.values().all(|&c| c == 3));
        }
    }

    #[test]
    fn branch_multiplicity_marks_critical_points() {
        let g1 = build_level(&sg(), 1).unwrap();
        let mult = g1.branch_multiplicity();
        let doubles = mult.iter().filter(|&&k| k == 2).count();
        assert_eq!(doubles, 3);
        for &v in &g1.boundary {
            assert_eq!(mult[v], 1);
        }
    }

    #[test]
    fn invalid_tables() {
        let mut t = sg();
        t.glue_pairs.push(((0, 1), (1, 1)));
        assert!(matches!(t.validate(), Err(Error::Structural(_))));

        let mut t = sg();
        t.glue_pairs[0] = ((0, 1), (1, 2));
        assert!(t.validate().is_err());

        let mut t = sg();
        t.boundary_dynamics = vec![0, 1, 2];
        assert!(t.validate().is_err());

        // glue the two ends of tile 0 together through tile 1
        let t = GluingTable {
            n_tiles: 2,
            boundary_size: 2,
            glue_pairs: vec![((0, 0), (1, 0)), ((0, 1), (1, 1))],
            boundary_lift: vec![],
            boundary_dynamics: vec![],
            level0_edges: vec![(0, 1)],
        };
        assert!(build_level(&t, 1).is_err());
    }

    #[test]
    fn json_field_names() {
        let s = serde_json::to_string(&sg()).unwrap();
        assert!(s.contains(r#""N":3"#) && s.contains(r#""B":3"#));
        assert!(s.contains(r#""glue_pairs":[[[0,1],[1,1]],[[0,2],[2,2]],[[1,0],[2,0]]]"#));
        let back: GluingTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, sg());
    }
}
