//! Vietoris–Rips persistence (H0 and H1) of attention dissimilarities.
//!
//! The filtration is the full 2-skeleton of the Rips complex on
//! `d_ij = 1 − sym(a_ij, a_ji)`. Edges are ordered by `(weight, i, j)` and
//! triangles by `(diameter, i, j, k)`. H1 comes from a Z/2 reduction of the
//! triangle boundary matrix; H0 comes from union-find over the edges, where
//! edges that appeared as H1 pivots are cleared (they are known positive and
//! cannot merge components).

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dumpio::{AttentionMatrix, HeadIndex, ModelDump};
use crate::error::{Error, Result};
use crate::exec::par_map;

/// Largest point count for which the 2-skeleton is materialized.
pub const MAX_POINTS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    #[default]
    Max,
    Min,
    Mean,
}

impl Symmetrization {
    fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            Symmetrization::Max => x.max(y),
            Symmetrization::Min => x.min(y),
            Symmetrization::Mean => 0.5 * (x + y),
        }
    }
}

/// Symmetric dissimilarity matrix with zero diagonal, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::Shape {
                what: "distance matrix".into(),
                expected: n * n,
                found: d.len(),
            });
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::InvalidArgument(format!("d[{i}][{i}] must be 0")));
            }
            for j in 0..n {
                let x = d[i * n + j];
                if !(0.0..=1.0 + 1e-9).contains(&x) {
                    return Err(Error::InvalidArgument(format!("d[{i}][{j}] = {x} outside [0, 1]")));
                }
                if x != d[j * n + i] {
                    return Err(Error::InvalidArgument(format!("d is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, d })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let x = f(i, j);
                d[i * n + j] = x;
                d[j * n + i] = x;
            }
        }
        Self::new(n, d)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

/// `d_ij = 1 − max(a_ij, a_ji)` off the diagonal.
pub fn attention_to_distance(a: &AttentionMatrix) -> DistanceMatrix {
    attention_to_distance_with(a, Symmetrization::Max)
}

pub fn attention_to_distance_with(a: &AttentionMatrix, sym: Symmetrization) -> DistanceMatrix {
    let n = a.n();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let x = (1.0 - sym.apply(a.get(i, j), a.get(j, i))).clamp(0.0, 1.0);
            d[i * n + j] = x;
            d[j * n + i] = x;
        }
    }
    DistanceMatrix { n, d }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub birth: f64,
    /// `f64::INFINITY` for the essential H0 class.
    pub death: f64,
}

impl Pair {
    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_finite(&self) -> bool {
        self.death.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    /// `n − 1` finite pairs (MST edge weights) plus one infinite pair.
    pub dim0: Vec<Pair>,
    /// Finite H1 pairs with positive persistence.
    pub dim1: Vec<Pair>,
}

impl PersistenceDiagram {
    /// `{dim, birth, death}` triples; the essential class has `death: null`.
    pub fn to_json(&self) -> Value {
        let triple = |dim: usize, p: &Pair| {
            json!({
                "dim": dim,
                "birth": p.birth,
                "death": if p.death.is_finite() { json!(p.death) } else { Value::Null },
            })
        };
        Value::Array(
            self.dim0
                .iter()
                .map(|p| triple(0, p))
                .chain(self.dim1.iter().map(|p| triple(1, p)))
                .collect(),
        )
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // Keep the smaller root so tie handling is reproducible.
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Symmetric difference of two sorted index lists.
fn xor_sorted(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

/// Rips persistence in dimensions 0 and 1.
pub fn rips_persistence(d: &DistanceMatrix) -> Result<PersistenceDiagram> {
    let n = d.n();
    if n > MAX_POINTS {
        return Err(Error::TooLarge(format!(
            "{n} points exceeds the Rips bound of {MAX_POINTS}"
        )));
    }
    if n == 0 {
        return Ok(PersistenceDiagram::default());
    }

    // Edges in filtration order; rank[i][j] is an edge's position in it.
    let mut edges: Vec<(f64, u32, u32)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push((d.get(i, j), i as u32, j as u32));
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut rank = vec![0u32; n * n];
    for (r, &(_, i, j)) in edges.iter().enumerate() {
        rank[i as usize * n + j as usize] = r as u32;
        rank[j as usize * n + i as usize] = r as u32;
    }

    let mut triangles: Vec<(f64, [u32; 3])> = Vec::with_capacity(n * (n - 1) * n.saturating_sub(2) / 6);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let w = d.get(i, j).max(d.get(i, k)).max(d.get(j, k));
                let mut col = [
                    rank[i * n + j],
                    rank[i * n + k],
                    rank[j * n + k],
                ];
                col.sort_unstable();
                triangles.push((w, col));
            }
        }
    }
    // Lexicographic vertex order is the generation order, so a stable sort
    // on the diameter alone realizes (diameter, i, j, k).
    triangles.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut pivot_owner: Vec<Option<u32>> = vec![None; edges.len()];
    let mut reduced: Vec<Vec<u32>> = Vec::with_capacity(triangles.len());
    let mut dim1 = Vec::new();
    let mut scratch = Vec::new();
    for (t, &(w, col)) in triangles.iter().enumerate() {
        let mut column = col.to_vec();
        while let Some(&low) = column.last() {
            match pivot_owner[low as usize] {
                Some(other) => {
                    xor_sorted(&column, &reduced[other as usize], &mut scratch);
                    std::mem::swap(&mut column, &mut scratch);
                }
                None => break,
            }
        }
        if let Some(&low) = column.last() {
            pivot_owner[low as usize] = Some(t as u32);
            let birth = edges[low as usize].0;
            if w > birth {
                dim1.push(Pair { birth, death: w });
            }
        }
        reduced.push(column);
    }

    let mut uf = UnionFind::new(n);
    let mut dim0 = Vec::with_capacity(n);
    for (r, &(w, i, j)) in edges.iter().enumerate() {
        if pivot_owner[r].is_some() {
            continue;
        }
        if uf.union(i as usize, j as usize) {
            dim0.push(Pair { birth: 0.0, death: w });
        }
    }
    let components = (0..n).filter(|&v| uf.find(v) == v).count();
    dim0.extend((0..components).map(|_| Pair {
        birth: 0.0,
        death: f64::INFINITY,
    }));
    Ok(PersistenceDiagram { dim0, dim1 })
}

/// `(b0, b1)`: pairs alive at `t`, i.e. `birth ≤ t < death`.
pub fn betti_at(diag: &PersistenceDiagram, t: f64) -> (usize, usize) {
    let alive = |p: &&Pair| p.birth <= t && t < p.death;
    (diag.dim0.iter().filter(alive).count(), diag.dim1.iter().filter(alive).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    /// Ascending filtration values for the Betti curves.
    pub thresholds: Vec<f64>,
    /// Persistence above which a feature counts as significant.
    pub epsilon: f64,
    pub symmetrization: Symmetrization,
    /// Filtration value at which the classifier reads Betti₀.
    pub operating_point: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            thresholds: (0..=20).map(|i| i as f64 * 0.05).collect(),
            epsilon: 0.01,
            symmetrization: Symmetrization::Max,
            operating_point: 0.5,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("topology thresholds must be strictly ascending".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument("topology epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyLayer {
    pub layer: usize,
    /// Mean Betti₀ at each configured threshold.
    pub betti0_at: Vec<f64>,
    pub betti1_at: Vec<f64>,
    pub betti0_operating: f64,
    /// Mean persistence of finite H0 pairs.
    pub mean_dim0_persistence: f64,
    /// Mean persistence of H1 pairs (0 for heads without any).
    pub mean_dim1_persistence: f64,
    /// Mean count of finite H0 pairs with persistence > ε.
    pub dim0_significant: f64,
    /// Mean count of H1 pairs with persistence > ε.
    pub dim1_significant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub thresholds: Vec<f64>,
    pub epsilon: f64,
    pub operating_point: f64,
    pub layers: Vec<TopologyLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadDiagram {
    pub index: HeadIndex,
    pub diagram: PersistenceDiagram,
}

fn mean_or_zero(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        0.0
    } else {
        s / c as f64
    }
}

/// Persistence diagrams for every (sample, layer, head), in head-index order.
pub fn head_diagrams(dump: &ModelDump, cfg: &TopologyConfig) -> Result<Vec<HeadDiagram>> {
    let idx = dump.head_indices();
    let diagrams = par_map(&idx, |&i| {
        let d = attention_to_distance_with(&dump.attention(i), cfg.symmetrization);
        rips_persistence(&d)
    });
    idx.into_iter()
        .zip(diagrams)
        .map(|(index, diagram)| Ok(HeadDiagram { index, diagram: diagram? }))
        .collect()
}

/// Aggregate head diagrams into per-layer means over heads and samples.
pub fn summarize_diagrams(diagrams: &[HeadDiagram], num_layers: usize, cfg: &TopologyConfig) -> TopologySummary {
    let layers = (0..num_layers)
        .map(|layer| {
            let group: Vec<&PersistenceDiagram> = diagrams
                .iter()
                .filter(|h| h.index.layer == layer)
                .map(|h| &h.diagram)
                .collect();
            let count = group.len().max(1) as f64;
            let curve = |t: f64, dim: usize| {
                group
                    .iter()
                    .map(|g| {
                        let (b0, b1) = betti_at(g, t);
                        (if dim == 0 { b0 } else { b1 }) as f64
                    })
                    .sum::<f64>()
                    / count
            };
            let eps = cfg.epsilon;
            TopologyLayer {
                layer,
                betti0_at: cfg.thresholds.iter().map(|&t| curve(t, 0)).collect(),
                betti1_at: cfg.thresholds.iter().map(|&t| curve(t, 1)).collect(),
                betti0_operating: curve(cfg.operating_point, 0),
                mean_dim0_persistence: mean_or_zero(group.iter().map(|g| {
                    mean_or_zero(g.dim0.iter().filter(|p| p.is_finite()).map(Pair::persistence))
                })),
                mean_dim1_persistence: mean_or_zero(
                    group.iter().map(|g| mean_or_zero(g.dim1.iter().map(Pair::persistence))),
                ),
                dim0_significant: group
                    .iter()
                    .map(|g| g.dim0.iter().filter(|p| p.is_finite() && p.persistence() > eps).count() as f64)
                    .sum::<f64>()
                    / count,
                dim1_significant: group
                    .iter()
                    .map(|g| g.dim1.iter().filter(|p| p.persistence() > eps).count() as f64)
                    .sum::<f64>()
                    / count,
            }
        })
        .collect();
    TopologySummary {
        thresholds: cfg.thresholds.clone(),
        epsilon: cfg.epsilon,
        operating_point: cfg.operating_point,
        layers,
    }
}

pub fn summarize_topology(dump: &ModelDump, cfg: &TopologyConfig) -> Result<TopologySummary> {
    cfg.validate()?;
    let diagrams = head_diagrams(dump, cfg)?;
    Ok(summarize_diagrams(&diagrams, dump.num_layers(), cfg))
}

/// JSON document with one diagram per (sample, layer, head).
pub fn diagrams_json(dump: &ModelDump, diagrams: &[HeadDiagram]) -> Value {
    Value::Array(
        diagrams
            .iter()
            .map(|h| {
                json!({
                    "sample": dump.samples[h.index.sample].id,
                    "layer": h.index.layer,
                    "head": h.index.head,
                    "pairs": h.diagram.to_json(),
                })
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn square() -> DistanceMatrix {
        // Cycle 0-1-2-3 with sides 0.3, diagonals 0.5.
        DistanceMatrix::from_fn(4, |i, j| if (j - i) % 2 == 1 { 0.3 } else { 0.5 }).unwrap()
    }

    #[test]
    fn symmetric_attention_gives_one_minus_a() {
        let a = AttentionMatrix::from_rows(
            &[vec![0.5, 0.3, 0.2], vec![0.3, 0.4, 0.3], vec![0.2, 0.3, 0.5]],
            false,
        )
        .unwrap();
        let d = attention_to_distance(&a);
        assert_abs_diff_eq!(d.get(0, 1), 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(d.get(0, 2), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(d.get(1, 2), 0.7, epsilon = 1e-15);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn causal_distance_uses_defined_direction() {
        let a = AttentionMatrix::from_rows(
            &[vec![1.0, 0.0, 0.0], vec![0.6, 0.4, 0.0], vec![0.1, 0.7, 0.2]],
            true,
        )
        .unwrap();
        let d = attention_to_distance(&a);
        assert_abs_diff_eq!(d.get(0, 1), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(d.get(0, 2), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(d.get(1, 2), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn identity_attention_is_maximally_far() {
        let d = attention_to_distance(&AttentionMatrix::identity(5, false));
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(d.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn square_has_one_cycle() {
        let diag = rips_persistence(&square()).unwrap();
        assert_eq!(diag.dim1, vec![Pair { birth: 0.3, death: 0.5 }]);
        assert_eq!(diag.dim0.len(), 4);
        assert_eq!(diag.dim0.iter().filter(|p| !p.is_finite()).count(), 1);
        assert_eq!(betti_at(&diag, 0.4), (1, 1));
        assert_eq!(betti_at(&diag, 0.0), (4, 0));
        assert_eq!(betti_at(&diag, 1.0), (1, 0));
    }

    #[test]
    fn equal_distances_single_scale() {
        let d = DistanceMatrix::from_fn(6, |_, _| 1.0).unwrap();
        let diag = rips_persistence(&d).unwrap();
        let finite: Vec<_> = diag.dim0.iter().filter(|p| p.is_finite()).collect();
        assert_eq!(finite.len(), 5);
        assert!(finite.iter().all(|p| p.death == 1.0));
        assert!(diag.dim1.is_empty());
    }

    #[test]
    fn six_cycle_born_at_adjacent_scale() {
        let d = DistanceMatrix::from_fn(6, |i, j| if j - i == 1 || j - i == 5 { 0.2 } else { 1.0 }).unwrap();
        let diag = rips_persistence(&d).unwrap();
        assert_eq!(diag.dim1, vec![Pair { birth: 0.2, death: 1.0 }]);
    }

    #[test]
    fn too_many_points_rejected() {
        let n = MAX_POINTS + 1;
        let d = DistanceMatrix::from_fn(n, |_, _| 0.5).unwrap();
        assert!(matches!(rips_persistence(&d), Err(Error::TooLarge(_))));
    }

    #[test]
    fn diagram_json_marks_essential_class() {
        let v = rips_persistence(&square()).unwrap().to_json();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 5);
        assert_eq!(arr.iter().filter(|p| p["death"].is_null()).count(), 1);
    }

    #[test]
    fn invalid_distance_rejected() {
        assert!(DistanceMatrix::new(2, vec![0.0, 0.5, 0.4, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![0.1, 0.5, 0.5, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![0.0, 1.5, 1.5, 0.0]).is_err());
    }

    fn arb_distance(max_n: usize) -> impl Strategy<Value = DistanceMatrix> {
        (2..=max_n).prop_flat_map(|n| {
            prop::collection::vec(0u8..=20, n * (n - 1) / 2).prop_map(move |v| {
                let mut it = v.into_iter();
                let mut d = vec![0.0; n * n];
                for i in 0..n {
                    for j in i + 1..n {
                        let x = f64::from(it.next().unwrap()) / 20.0;
                        d[i * n + j] = x;
                        d[j * n + i] = x;
                    }
                }
                DistanceMatrix::new(n, d).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn betti0_non_increasing(d in arb_distance(9)) {
            let diag = rips_persistence(&d).unwrap();
            let mut prev = usize::MAX;
            for k in 0..=40 {
                let (b0, _) = betti_at(&diag, k as f64 / 40.0);
                prop_assert!(b0 <= prev);
                prev = b0;
            }
            prop_assert_eq!(betti_at(&diag, 1.0).0, 1);
            prop_assert_eq!(diag.dim0.len(), d.n());
        }

        #[test]
        fn pairs_are_ordered(d in arb_distance(9)) {
            let diag = rips_persistence(&d).unwrap();
            for p in diag.dim0.iter().chain(&diag.dim1) {
                prop_assert!(p.death >= p.birth);
            }
            for p in &diag.dim1 {
                prop_assert!(p.persistence() > 0.0);
            }
        }

        #[test]
        fn relabeling_preserves_diagram(d in arb_distance(8), seed in any::<u64>()) {
            let n = d.n();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let p = DistanceMatrix::from_fn(n, |i, j| d.get(perm[i], perm[j])).unwrap();
            let key = |diag: PersistenceDiagram| {
                let mut a: Vec<(f64, f64)> = diag.dim0.iter().map(|p| (p.birth, p.death)).collect();
                let mut b: Vec<(f64, f64)> = diag.dim1.iter().map(|p| (p.birth, p.death)).collect();
                a.sort_by(|x, y| x.partial_cmp(y).unwrap());
                b.sort_by(|x, y| x.partial_cmp(y).unwrap());
                (a, b)
            };
            prop_assert_eq!(key(rips_persistence(&d).unwrap()), key(rips_persistence(&p).unwrap()));
        }
    }
}
