//! Long-range random graph on a lattice window and the feelings map on its edges.
//!
//! Nearest neighbours are always linked. Any other pair `{x, y}` is linked
//! independently with probability `min(1, C / d(x, y)^γ)`. Each unordered pair
//! draws its own keyed variate, so a graph is a pure function of
//! `(window, C, γ, seed)` regardless of the order pairs are visited in.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Site, Window};
use crate::rng::{Purpose, RandomnessPlan};

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 9.0;

/// Parameters of the edge law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeParams {
    pub c: f64,
    pub gamma: f64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl EdgeParams {
    pub fn new(c: f64, gamma: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::param(
                "C",
                format!("must be a finite non-negative number, got {c}"),
            ));
        }
        if !(gamma.is_finite() && gamma >= 3.0) {
            return Err(Error::param(
                "gamma",
                format!("must be at least 3, got {gamma}"),
            ));
        }
        Ok(Self { c, gamma })
    }

    /// Inclusion probability for a pair at lattice distance `d ≥ 1`.
    pub fn probability_at(&self, d: u32) -> f64 {
        assert!(d >= 1, "edge probability needs two distinct sites");
        if d == 1 {
            1.0
        } else {
            (self.c / (d as f64).powf(self.gamma)).min(1.0)
        }
    }
}

/// Probability that `x` and `y` are linked.
///
/// Panics if `x == y`.
pub fn edge_probability(window: &Window, x: Site, y: Site, params: EdgeParams) -> f64 {
    assert!(x != y, "edge probability of a site with itself");
    params.probability_at(window.distance(x, y))
}

/// Sampled graph: sorted adjacency lists over the window's dense site indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    window: Window,
    params: EdgeParams,
    seed: u64,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an explicit edge list, validating the structural
    /// invariants (nearest-neighbour completeness, no loops, in-range sites).
    pub fn from_edges(
        window: Window,
        params: EdgeParams,
        seed: u64,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let n = window.num_sites();
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invariant(format!(
                    "edge ({a}, {b}) leaves the window"
                )));
            }
            if a == b {
                return Err(Error::invariant(format!("self-loop at {}", window.site(a))));
            }
            if !window.is_interior_index(a) && !window.is_interior_index(b) {
                return Err(Error::invariant(format!(
                    "edge {} - {} joins two frame sites",
                    window.site(a),
                    window.site(b)
                )));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            let before = list.len();
            list.dedup();
            if list.len() != before {
                return Err(Error::invariant("duplicate edge"));
            }
        }
        let g = Self {
            window,
            params,
            seed,
            adjacency,
        };
        g.check_nearest_neighbours()?;
        Ok(g)
    }

    fn check_nearest_neighbours(&self) -> Result<()> {
        for (a, b) in nearest_neighbour_pairs(&self.window) {
            if !self.linked(a, b) {
                return Err(Error::invariant(format!(
                    "nearest neighbours {} and {} are not linked",
                    self.window.site(a),
                    self.window.site(b)
                )));
            }
        }
        Ok(())
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn params(&self) -> EdgeParams {
        self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn neighbours(&self, x: usize) -> &[usize] {
        &self.adjacency[x]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.adjacency[x].len()
    }

    pub fn linked(&self, x: usize, y: usize) -> bool {
        self.adjacency[x].binary_search(&y).is_ok()
    }

    /// Unordered edges `(a, b)` with `a < b`, in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Adds one edge; used to build test fixtures.
    pub fn insert_edge(&mut self, a: usize, b: usize) -> Result<()> {
        let n = self.window.num_sites();
        if a >= n || b >= n || a == b {
            return Err(Error::invariant(format!("cannot link {a} and {b}")));
        }
        for (x, y) in [(a, b), (b, a)] {
            if let Err(pos) = self.adjacency[x].binary_search(&y) {
                self.adjacency[x].insert(pos, y);
            }
        }
        Ok(())
    }
}

/// All unordered nearest-neighbour pairs with at least one interior endpoint.
fn nearest_neighbour_pairs(window: &Window) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in window.interior_indices() {
        for (d1, d2) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if let Some(b) = window.offset(a, d1, d2) {
                if b != a && (b > a || !window.is_interior_index(b)) {
                    out.push((a.min(b), a.max(b)));
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Samples the edge set. Pairs joining two frame sites are never sampled:
/// frozen sites do not interact with each other.
pub fn sample_graph(window: &Window, params: EdgeParams, plan: RandomnessPlan) -> Graph {
    let n = window.num_sites();
    let max_d = 2 * window.extent() as u32 + 2;
    let table: Vec<f64> = (0..=max_d)
        .map(|d| {
            if d == 0 {
                0.0
            } else {
                params.probability_at(d)
            }
        })
        .collect();
    let keys: Vec<u64> = (0..n).map(|i| window.key(i)).collect();
    let interior: Vec<bool> = (0..n).map(|i| window.is_interior_index(i)).collect();

    let upper: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut row = Vec::new();
            for b in a + 1..n {
                if !interior[a] && !interior[b] {
                    continue;
                }
                let d = window.distance_idx(a, b);
                let p = table[d as usize];
                if p >= 1.0 {
                    row.push(b);
                } else if p > 0.0 {
                    let (ka, kb) = if keys[a] <= keys[b] {
                        (keys[a], keys[b])
                    } else {
                        (keys[b], keys[a])
                    };
                    if plan.uniform(Purpose::Edge, ka, kb, 0) < p {
                        row.push(b);
                    }
                }
            }
            row
        })
        .collect();

    let mut adjacency = vec![Vec::new(); n];
    for (a, row) in upper.into_iter().enumerate() {
        for b in row {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    Graph {
        window: window.clone(),
        params,
        seed: plan.master_seed(),
        adjacency,
    }
}

/// Feelings `j(x, y) ∈ {−1, +1}` on ordered pairs of linked sites, stored
/// parallel to the graph's adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeelingMap {
    symmetric: bool,
    out: Vec<Vec<i8>>,
}

impl FeelingMap {
    /// Builds the map from a closure over ordered linked pairs.
    pub fn from_fn(
        graph: &Graph,
        symmetric: bool,
        mut j: impl FnMut(usize, usize) -> i8,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(graph.window().num_sites());
        for x in 0..graph.window().num_sites() {
            let row: Vec<i8> = graph.neighbours(x).iter().map(|&y| j(x, y)).collect();
            if let Some(bad) = row.iter().find(|v| v.abs() != 1) {
                return Err(Error::invariant(format!(
                    "feeling value {bad} outside {{-1, +1}}"
                )));
            }
            out.push(row);
        }
        let map = Self { symmetric, out };
        if symmetric {
            for (a, b) in graph.edges() {
                if map.get(graph, a, b) != map.get(graph, b, a) {
                    return Err(Error::invariant(format!(
                        "symmetric feelings differ on {} - {}",
                        graph.window().site(a),
                        graph.window().site(b)
                    )));
                }
            }
        }
        Ok(map)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// `j(x, y)`; zero when the pair is not linked.
    pub fn get(&self, graph: &Graph, x: usize, y: usize) -> i8 {
        match graph.neighbours(x).binary_search(&y) {
            Ok(k) => self.out[x][k],
            Err(_) => 0,
        }
    }

    /// Feelings of `x` towards its neighbours, aligned with `graph.neighbours(x)`.
    pub fn row(&self, x: usize) -> &[i8] {
        &self.out[x]
    }
}

/// Fair ±1 feelings. In symmetric mode one variate per unordered edge is
/// copied to both orientations, otherwise each ordered pair draws its own.
pub fn sample_feelings(graph: &Graph, symmetric: bool, plan: RandomnessPlan) -> FeelingMap {
    let w = graph.window();
    let draw = |a: u64, b: u64| plan.spin(Purpose::Feeling, a, b, 0).value() as i8;
    FeelingMap::from_fn(graph, symmetric, |x, y| {
        let (kx, ky) = (w.key(x), w.key(y));
        if symmetric {
            draw(kx.min(ky), kx.max(ky))
        } else {
            draw(kx, ky)
        }
    })
    .expect("sampled feelings are valid by construction")
}

/// Length of the longest edge at `x`.
pub fn rho(graph: &Graph, x: usize) -> u32 {
    let w = graph.window();
    graph
        .neighbours(x)
        .iter()
        .map(|&y| w.distance_idx(x, y))
        .max()
        .unwrap_or(0)
}

/// Window averages of the degree and of `ρ^k`, `k = 1..=5`, over interior sites.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct DegreeStats {
    pub sites: usize,
    pub mean_degree: f64,
    /// `rho_moments[k - 1]` is the empirical mean of `ρ^k`.
    pub rho_moments: [f64; 5],
}

pub fn degree_stats(graph: &Graph) -> DegreeStats {
    let w = graph.window();
    let mut deg = 0.0;
    let mut moments = [0.0; 5];
    let mut n = 0usize;
    for x in w.interior_indices() {
        n += 1;
        deg += graph.degree(x) as f64;
        let r = rho(graph, x) as f64;
        let mut p = 1.0;
        for m in &mut moments {
            p *= r;
            *m += p;
        }
    }
    let n_f = n as f64;
    DegreeStats {
        sites: n,
        mean_degree: deg / n_f,
        rho_moments: moments.map(|m| m / n_f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Frame, Spin};

    fn torus(l: usize) -> Window {
        Window::torus(l).unwrap()
    }

    #[test]
    fn edge_probability_examples() {
        let w = Window::free(64).unwrap();
        let o = Site::new(10, 10);
        assert_eq!(
            edge_probability(&w, o, Site::new(10, 11), EdgeParams::new(0.0, 9.0).unwrap()),
            1.0
        );
        let p2 = edge_probability(&w, o, Site::new(12, 10), EdgeParams::default());
        assert!((p2 - 1.0 / 512.0).abs() < 1e-15);
        let p3 = edge_probability(
            &w,
            o,
            Site::new(11, 12),
            EdgeParams::new(2000.0, 9.0).unwrap(),
        );
        assert!((p3 - 2000.0 / 19683.0).abs() < 1e-12);
        assert!((p3 - 0.10161).abs() < 1e-5);
        let p_big = edge_probability(&w, o, Site::new(11, 11), EdgeParams::new(1e6, 9.0).unwrap());
        assert_eq!(p_big, 1.0);
    }

    #[test]
    #[should_panic]
    fn edge_probability_rejects_identical_sites() {
        let w = torus(4);
        edge_probability(&w, Site::new(1, 1), Site::new(1, 1), EdgeParams::default());
    }

    #[test]
    fn params_validation() {
        assert!(EdgeParams::new(1.0, 2.0).is_err());
        assert!(EdgeParams::new(-1.0, 9.0).is_err());
        assert!(EdgeParams::new(0.0, 3.0).is_ok());
    }

    #[test]
    fn c_zero_gives_lattice() {
        let w = torus(8);
        let g = sample_graph(
            &w,
            EdgeParams::new(0.0, 9.0).unwrap(),
            RandomnessPlan::new(1),
        );
        assert_eq!(g.num_edges(), 2 * 64);
        for x in w.interior_indices() {
            assert_eq!(g.degree(x), 4);
            assert_eq!(rho(&g, x), 1);
        }
        let s = degree_stats(&g);
        assert_eq!(s.mean_degree, 4.0);
        assert_eq!(s.rho_moments, [1.0; 5]);
    }

    #[test]
    fn sampling_is_reproducible_and_symmetric() {
        let w = torus(16);
        let params = EdgeParams::new(50.0, 9.0).unwrap();
        let a = sample_graph(&w, params, RandomnessPlan::new(9));
        let b = sample_graph(&w, params, RandomnessPlan::new(9));
        assert_eq!(a, b);
        let c = sample_graph(&w, params, RandomnessPlan::new(10));
        assert_ne!(a, c);
        for (x, y) in a.edges() {
            assert!(a.linked(y, x));
        }
        assert!(a.num_edges() > 2 * 256);
    }

    #[test]
    fn rho_of_offset_three_four() {
        let w = Window::free(16).unwrap();
        let mut g = sample_graph(
            &w,
            EdgeParams::new(0.0, 9.0).unwrap(),
            RandomnessPlan::new(0),
        );
        let x = w.index(Site::new(5, 5)).unwrap();
        assert_eq!(rho(&g, x), 1);
        g.insert_edge(x, w.index(Site::new(8, 9)).unwrap()).unwrap();
        assert_eq!(rho(&g, x), 7);
    }

    #[test]
    fn feelings_modes() {
        let w = torus(12);
        let g = sample_graph(
            &w,
            EdgeParams::new(20.0, 9.0).unwrap(),
            RandomnessPlan::new(3),
        );
        let sym = sample_feelings(&g, true, RandomnessPlan::new(4));
        let asym = sample_feelings(&g, false, RandomnessPlan::new(4));
        let mut differ = 0;
        let mut total = 0;
        for (a, b) in g.edges() {
            assert_eq!(sym.get(&g, a, b), sym.get(&g, b, a));
            assert!(matches!(asym.get(&g, a, b), -1 | 1));
            total += 1;
            differ += (asym.get(&g, a, b) != asym.get(&g, b, a)) as usize;
        }
        let f = differ as f64 / total as f64;
        let se = (0.25 / total as f64).sqrt();
        assert!((f - 0.5).abs() < 3.0 * se, "fraction {f}, se {se}");
        assert_eq!(sym.get(&g, 0, 0), 0);
    }

    #[test]
    fn pinned_graph_has_no_frame_frame_edges() {
        let frame = Frame::uniform(6, 2, Spin::Plus).unwrap();
        let w = Window::pinned(6, frame).unwrap();
        let g = sample_graph(
            &w,
            EdgeParams::new(500.0, 3.0).unwrap(),
            RandomnessPlan::new(8),
        );
        for (a, b) in g.edges() {
            assert!(w.is_interior_index(a) || w.is_interior_index(b));
        }
        // interior corner (0,0) is linked to frame sites (-1,0) and (0,-1)
        let corner = w.index(Site::new(0, 0)).unwrap();
        assert!(g.linked(corner, w.index(Site::new(-1, 0)).unwrap()));
        assert!(g.linked(corner, w.index(Site::new(0, -1)).unwrap()));
    }

    #[test]
    fn from_edges_rejects_missing_lattice_edge() {
        let w = torus(4);
        let g = sample_graph(
            &w,
            EdgeParams::new(0.0, 9.0).unwrap(),
            RandomnessPlan::new(0),
        );
        let mut edges: Vec<_> = g.edges().collect();
        assert!(Graph::from_edges(w.clone(), g.params(), 0, edges.clone()).is_ok());
        edges.pop();
        assert!(Graph::from_edges(w, g.params(), 0, edges).is_err());
    }
}
