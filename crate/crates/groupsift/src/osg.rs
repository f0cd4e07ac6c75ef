//! Object similarity graph construction.
//!
//! Two objects are connected when they share at least one incoming edge
//! key; the edge weight `c` is the Jaccard similarity of their incoming
//! key sets plus, when labeled users exist, the shared labeled-key count
//! normalized by the global mean positive labeled overlap.

use std::io::Write;

use rayon::prelude::*;

use crate::bipartite::{BipartiteGraph, ObjectId, UserId};
use crate::error::{Error, Result};

/// One undirected similarity edge, endpoints ordered `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OsgEdge {
    pub a: ObjectId,
    pub b: ObjectId,
    /// Shared incoming keys over all users.
    pub overlap: u32,
    /// Shared incoming keys over labeled users only.
    pub labeled_overlap: u32,
    /// Jaccard component, in (0, 1].
    pub s: f64,
    /// Labeled component, >= 0.
    pub s_l: f64,
    /// Total weight, `s + s_l`.
    pub c: f64,
}

/// Weighted undirected similarity graph over the object set.
#[derive(Debug)]
pub struct Osg {
    num_objects: usize,
    edges: Vec<OsgEdge>, // sorted by (a, b)
    adj_start: Vec<usize>,
    adj_nbr: Vec<u32>,
    adj_edge: Vec<u32>,
    adj_c: Vec<f64>,
    mean_labeled_overlap: f64,
}

/// Knobs for [`build_osg`].
#[derive(Debug, Clone)]
pub struct OsgOptions {
    /// Per-user distinct-object guard; users above it abort construction
    /// since pair counting is quadratic in their list length.
    pub hub_guard: usize,
    /// Worker threads for pair emission and sorting. 1 = sequential.
    pub workers: usize,
}

impl Default for OsgOptions {
    fn default() -> Self {
        OsgOptions {
            hub_guard: 10_000,
            workers: 1,
        }
    }
}

/// Raw edge data for assembling an [`Osg`] without a bipartite source,
/// used by fixtures and import tooling.
#[derive(Debug, Clone, Copy)]
pub struct RawOsgEdge {
    pub a: u32,
    pub b: u32,
    pub overlap: u32,
    pub labeled_overlap: u32,
    pub s: f64,
    pub s_l: f64,
}

impl Osg {
    pub fn num_objects(&self) -> usize {
        self.num_objects
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// All edges sorted by `(a, b)`.
    pub fn edges(&self) -> &[OsgEdge] {
        &self.edges
    }

    pub fn mean_labeled_overlap(&self) -> f64 {
        self.mean_labeled_overlap
    }

    pub fn degree(&self, object: ObjectId) -> usize {
        self.adj_start[object.index() + 1] - self.adj_start[object.index()]
    }

    /// Maximum degree over all nodes.
    pub fn max_degree(&self) -> usize {
        (0..self.num_objects)
            .map(|o| self.adj_start[o + 1] - self.adj_start[o])
            .max()
            .unwrap_or(0)
    }

    /// Neighbors of `object` with their edge weights.
    pub fn neighbors(&self, object: ObjectId) -> impl Iterator<Item = (ObjectId, f64)> + '_ {
        let range = self.adj_start[object.index()]..self.adj_start[object.index() + 1];
        self.adj_nbr[range.clone()]
            .iter()
            .zip(&self.adj_c[range])
            .map(|(&n, &c)| (ObjectId(n), c))
    }

    /// Neighbors of `object` with the full edge records.
    pub fn neighbor_edges(
        &self,
        object: ObjectId,
    ) -> impl Iterator<Item = (ObjectId, &OsgEdge)> + '_ {
        let range = self.adj_start[object.index()]..self.adj_start[object.index() + 1];
        self.adj_nbr[range.clone()]
            .iter()
            .zip(&self.adj_edge[range])
            .map(|(&n, &e)| (ObjectId(n), &self.edges[e as usize]))
    }

    pub fn edge_between(&self, a: ObjectId, b: ObjectId) -> Option<&OsgEdge> {
        let (lo, hi) = if a.0 < b.0 { (a.0, b.0) } else { (b.0, a.0) };
        self.edges
            .binary_search_by(|e| (e.a.0, e.b.0).cmp(&(lo, hi)))
            .ok()
            .map(|i| &self.edges[i])
    }

    /// Assembles a graph from precomputed edges. Endpoints may come in
    /// either order; duplicates are rejected.
    pub fn from_raw_edges(
        num_objects: usize,
        raw: impl IntoIterator<Item = RawOsgEdge>,
        mean_labeled_overlap: f64,
    ) -> Result<Osg> {
        let mut edges = Vec::new();
        for r in raw {
            if r.a == r.b {
                return Err(Error::invalid("self-loop in similarity edges"));
            }
            let (a, b) = if r.a < r.b { (r.a, r.b) } else { (r.b, r.a) };
            if a as usize >= num_objects || b as usize >= num_objects {
                return Err(Error::invalid("edge endpoint out of range"));
            }
            if r.overlap == 0 {
                return Err(Error::invalid("similarity edges require overlap >= 1"));
            }
            if !(r.s > 0.0 && r.s <= 1.0) {
                return Err(Error::invalid(format!("s must be in (0, 1], got {}", r.s)));
            }
            if r.s_l < 0.0 {
                return Err(Error::invalid("s_l must be nonnegative"));
            }
            edges.push(OsgEdge {
                a: ObjectId(a),
                b: ObjectId(b),
                overlap: r.overlap,
                labeled_overlap: r.labeled_overlap,
                s: r.s,
                s_l: r.s_l,
                c: r.s + r.s_l,
            });
        }
        edges.sort_unstable_by_key(|e| (e.a.0, e.b.0));
        if edges
            .windows(2)
            .any(|w| (w[0].a, w[0].b) == (w[1].a, w[1].b))
        {
            return Err(Error::invalid("duplicate similarity edge"));
        }
        Ok(assemble(num_objects, edges, mean_labeled_overlap))
    }

    /// Writes the edge list as TSV:
    /// `object_a object_b overlap labeled_overlap s s_l c`, sorted by id
    /// pair, with original object keys.
    pub fn write_tsv(&self, graph: &BipartiteGraph, mut w: impl Write) -> std::io::Result<()> {
        for e in &self.edges {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                graph.object_name(e.a),
                graph.object_name(e.b),
                e.overlap,
                e.labeled_overlap,
                e.s,
                e.s_l,
                e.c
            )?;
        }
        Ok(())
    }
}

fn assemble(num_objects: usize, edges: Vec<OsgEdge>, mean_labeled_overlap: f64) -> Osg {
    let mut deg = vec![0usize; num_objects];
    for e in &edges {
        deg[e.a.index()] += 1;
        deg[e.b.index()] += 1;
    }
    let mut adj_start = vec![0usize; num_objects + 1];
    for o in 0..num_objects {
        adj_start[o + 1] = adj_start[o] + deg[o];
    }
    let mut adj_nbr = vec![0u32; edges.len() * 2];
    let mut adj_edge = vec![0u32; edges.len() * 2];
    let mut adj_c = vec![0f64; edges.len() * 2];
    let mut fill = adj_start.clone();
    for (i, e) in edges.iter().enumerate() {
        let (a, b) = (e.a.index(), e.b.index());
        adj_nbr[fill[a]] = e.b.0;
        adj_edge[fill[a]] = i as u32;
        adj_c[fill[a]] = e.c;
        fill[a] += 1;
        adj_nbr[fill[b]] = e.a.0;
        adj_edge[fill[b]] = i as u32;
        adj_c[fill[b]] = e.c;
        fill[b] += 1;
    }
    Osg {
        num_objects,
        edges,
        adj_start,
        adj_nbr,
        adj_edge,
        adj_c,
        mean_labeled_overlap,
    }
}

/// Key-value pair counting: every ingest key increments the overlap of
/// each object pair in its list, one pass over all keys for the full
/// graph and one restricted to labeled users.
pub fn build_osg(graph: &BipartiteGraph, opts: &OsgOptions) -> Result<Osg> {
    let hub = graph.max_user_degree();
    if hub > opts.hub_guard {
        return Err(Error::invalid(format!(
            "a user touches {} objects (guard {}); prune high-degree objects first",
            hub, opts.hub_guard
        )));
    }

    let keys: Vec<u32> = (0..graph.num_keys() as u32).collect();
    let all_pairs = emit_and_count(graph, &keys, opts.workers)?;

    let labeled_keys: Vec<u32> = keys
        .iter()
        .copied()
        .filter(|&k| graph.is_labeled(UserId(graph.key_user_of(k))))
        .collect();
    let labeled_pairs = if labeled_keys.is_empty() {
        Vec::new()
    } else {
        emit_and_count(graph, &labeled_keys, opts.workers)?
    };

    finish(graph, all_pairs, labeled_pairs)
}

/// Reference construction by direct pairwise set intersection; quadratic
/// in the object count, guarded to small graphs.
pub fn brute_force_osg(graph: &BipartiteGraph) -> Result<Osg> {
    const GUARD: usize = 2_000;
    let m = graph.num_objects();
    if m > GUARD {
        return Err(Error::invalid(format!(
            "brute-force construction limited to {} objects, got {}",
            GUARD, m
        )));
    }
    let mut all = Vec::new();
    let mut labeled = Vec::new();
    for a in 0..m {
        for b in (a + 1)..m {
            let ia = graph.incoming_keys(ObjectId(a as u32));
            let ib = graph.incoming_keys(ObjectId(b as u32));
            let (mut o, mut ol) = (0u32, 0u32);
            let (mut i, mut j) = (0usize, 0usize);
            while i < ia.len() && j < ib.len() {
                match ia[i].cmp(&ib[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        o += 1;
                        if graph.is_labeled(UserId(graph.key_user_of(ia[i]))) {
                            ol += 1;
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
            if o > 0 {
                all.push((pack(a as u32, b as u32), o));
                if ol > 0 {
                    labeled.push((pack(a as u32, b as u32), ol));
                }
            }
        }
    }
    finish(graph, all, labeled)
}

fn pack(a: u32, b: u32) -> u64 {
    ((a as u64) << 32) | b as u64
}

fn unpack(p: u64) -> (u32, u32) {
    ((p >> 32) as u32, p as u32)
}

/// Emits all within-key object pairs for the given keys and counts
/// duplicates by sorting; deterministic for any worker count.
fn emit_and_count(graph: &BipartiteGraph, keys: &[u32], workers: usize) -> Result<Vec<(u64, u32)>> {
    let emit_chunk = |chunk: &[u32]| {
        let mut out = Vec::new();
        for &k in chunk {
            let objs = graph.key_objects(k);
            for i in 0..objs.len() {
                for j in (i + 1)..objs.len() {
                    out.push(pack(objs[i], objs[j]));
                }
            }
        }
        out
    };

    let mut pairs: Vec<u64> = if workers > 1 && keys.len() > 1024 {
        let chunk = keys.len().div_ceil(workers * 8).max(1);
        let mut parts: Vec<Vec<u64>> = Vec::new();
        keys.par_chunks(chunk)
            .map(emit_chunk)
            .collect_into_vec(&mut parts);
        let mut flat = Vec::with_capacity(parts.iter().map(Vec::len).sum());
        for p in parts {
            flat.extend_from_slice(&p);
        }
        flat.par_sort_unstable();
        flat
    } else {
        let mut flat = emit_chunk(keys);
        flat.sort_unstable();
        flat
    };

    let mut counted = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let p = pairs[i];
        let mut j = i + 1;
        while j < pairs.len() && pairs[j] == p {
            j += 1;
        }
        let count: u32 = (j - i)
            .try_into()
            .map_err(|_| Error::Internal("pair overlap exceeds u32".into()))?;
        counted.push((p, count));
        i = j;
    }
    pairs.clear();
    pairs.shrink_to_fit();
    Ok(counted)
}

/// Scores counted pairs into the final edge list. `labeled` must be a
/// subset of `all` in pair-key order.
fn finish(graph: &BipartiteGraph, all: Vec<(u64, u32)>, labeled: Vec<(u64, u32)>) -> Result<Osg> {
    let mean_labeled = if labeled.is_empty() {
        0.0
    } else {
        let total: u64 = labeled.iter().map(|&(_, c)| c as u64).sum();
        total as f64 / labeled.len() as f64
    };

    let mut edges = Vec::with_capacity(all.len());
    let mut li = 0usize;
    for (p, overlap) in all {
        let (a, b) = unpack(p);
        let labeled_overlap = if li < labeled.len() && labeled[li].0 == p {
            let c = labeled[li].1;
            li += 1;
            c
        } else {
            0
        };
        let deg_a = graph.in_degree(ObjectId(a)) as u64;
        let deg_b = graph.in_degree(ObjectId(b)) as u64;
        let union = deg_a + deg_b - overlap as u64;
        let s = overlap as f64 / union as f64;
        let s_l = if mean_labeled > 0.0 {
            labeled_overlap as f64 / mean_labeled
        } else {
            0.0
        };
        edges.push(OsgEdge {
            a: ObjectId(a),
            b: ObjectId(b),
            overlap,
            labeled_overlap,
            s,
            s_l,
            c: s + s_l,
        });
    }
    debug_assert_eq!(li, labeled.len(), "labeled pairs must be a subset");
    Ok(assemble(graph.num_objects(), edges, mean_labeled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bipartite::GraphBuilder;

    fn graph_from(edges: &[(&str, &str)]) -> BipartiteGraph {
        let mut b = GraphBuilder::new(0);
        for (u, m) in edges {
            b.add_edge(u, m, &[]);
        }
        b.build()
    }

    fn build(graph: &BipartiteGraph) -> Osg {
        build_osg(graph, &OsgOptions::default()).unwrap()
    }

    #[test]
    fn three_user_fixture_matches_hand_scores() {
        let g = graph_from(&[
            ("u1", "m1"),
            ("u1", "m2"),
            ("u2", "m1"),
            ("u2", "m2"),
            ("u3", "m2"),
            ("u3", "m3"),
        ]);
        let osg = build(&g);
        assert_eq!(osg.num_edges(), 2);

        let m1 = g.object_id("m1").unwrap();
        let m2 = g.object_id("m2").unwrap();
        let m3 = g.object_id("m3").unwrap();

        let e12 = osg.edge_between(m1, m2).unwrap();
        assert_eq!(e12.overlap, 2);
        assert!((e12.c - 2.0 / 3.0).abs() < 1e-15);

        let e23 = osg.edge_between(m2, m3).unwrap();
        assert_eq!(e23.overlap, 1);
        assert!((e23.c - 1.0 / 3.0).abs() < 1e-15);

        assert!(osg.edge_between(m1, m3).is_none());
    }

    #[test]
    fn identical_incoming_sets_give_unit_weight() {
        let g = graph_from(&[("u1", "a"), ("u1", "b"), ("u2", "a"), ("u2", "b")]);
        let osg = build(&g);
        let e = &osg.edges()[0];
        assert_eq!(e.s, 1.0);
        assert_eq!(e.c, 1.0);
    }

    #[test]
    fn labeled_mean_normalizes_labeled_component() {
        // Pair (a, b) shares 2 labeled users, pair (c, d) shares 4; the
        // mean positive labeled overlap is 3.
        let mut b = GraphBuilder::new(0);
        for u in ["x1", "x2"] {
            b.add_edge(u, "a", &[]);
            b.add_edge(u, "b", &[]);
        }
        for u in ["y1", "y2", "y3", "y4"] {
            b.add_edge(u, "c", &[]);
            b.add_edge(u, "d", &[]);
        }
        let mut g = b.build();
        let all: Vec<_> = (0..g.num_users() as u32)
            .map(crate::bipartite::UserId)
            .collect();
        g.set_labeled_users(all);
        let osg = build(&g);
        assert!((osg.mean_labeled_overlap() - 3.0).abs() < 1e-15);

        let cd = osg
            .edge_between(g.object_id("c").unwrap(), g.object_id("d").unwrap())
            .unwrap();
        assert_eq!(cd.labeled_overlap, 4);
        assert!((cd.s_l - 4.0 / 3.0).abs() < 1e-15);
        assert!((cd.c - (1.0 + 4.0 / 3.0)).abs() < 1e-15);

        let ab = osg
            .edge_between(g.object_id("a").unwrap(), g.object_id("b").unwrap())
            .unwrap();
        assert!((ab.s_l - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unsupervised_mode_has_zero_labeled_component() {
        let g = graph_from(&[("u1", "a"), ("u1", "b")]);
        let osg = build(&g);
        assert_eq!(osg.mean_labeled_overlap(), 0.0);
        assert_eq!(osg.edges()[0].s_l, 0.0);
        assert_eq!(osg.edges()[0].c, osg.edges()[0].s);
    }

    #[test]
    fn attribute_buckets_split_overlap() {
        // Same user in two different buckets contributes two distinct keys.
        let mut b = GraphBuilder::new(1);
        b.add_edge("u1", "a", &[0]);
        b.add_edge("u1", "b", &[0]);
        b.add_edge("u1", "a", &[1]);
        b.add_edge("u1", "b", &[1]);
        let g = b.build();
        let osg = build(&g);
        let e = &osg.edges()[0];
        assert_eq!(e.overlap, 2);
        assert_eq!(e.s, 1.0); // union is also 2+2-2 = 2
    }

    #[test]
    fn hub_guard_triggers() {
        let mut b = GraphBuilder::new(0);
        for j in 0..50 {
            b.add_edge("hub", &format!("m{}", j), &[]);
        }
        let g = b.build();
        let err = build_osg(
            &g,
            &OsgOptions {
                hub_guard: 10,
                workers: 1,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("prune"));
    }

    #[test]
    fn brute_force_guard_and_degenerate_cases() {
        let g = graph_from(&[("u1", "only")]);
        let osg = brute_force_osg(&g).unwrap();
        assert_eq!(osg.num_edges(), 0);
        assert_eq!(osg.num_objects(), 1);
    }

    #[test]
    fn builder_and_brute_force_agree_exactly() {
        // Deterministic pseudo-random graph, compared edge by edge.
        let mut b = GraphBuilder::new(0);
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..600 {
            let u = next() % 60;
            let m = next() % 40;
            b.add_edge(&format!("u{}", u), &format!("m{}", m), &[]);
        }
        let mut g = b.build();
        let labeled: Vec<_> = (0..g.num_users() as u32)
            .filter(|u| u % 3 == 0)
            .map(crate::bipartite::UserId)
            .collect();
        g.set_labeled_users(labeled);

        let fast = build(&g);
        let slow = brute_force_osg(&g).unwrap();
        assert_eq!(fast.num_edges(), slow.num_edges());
        for (x, y) in fast.edges().iter().zip(slow.edges()) {
            assert_eq!(
                (x.a, x.b, x.overlap, x.labeled_overlap),
                (y.a, y.b, y.overlap, y.labeled_overlap)
            );
            assert_eq!(x.s.to_bits(), y.s.to_bits());
            assert_eq!(x.s_l.to_bits(), y.s_l.to_bits());
            assert_eq!(x.c.to_bits(), y.c.to_bits());
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let mut b = GraphBuilder::new(0);
        for i in 0u64..4000 {
            let u = (i * 2654435761) % 300;
            let m = (i * 40503) % 150;
            b.add_edge(&format!("u{}", u), &format!("m{}", m), &[]);
        }
        let g = b.build();
        let one = build_osg(
            &g,
            &OsgOptions {
                hub_guard: 10_000,
                workers: 1,
            },
        )
        .unwrap();
        let four = build_osg(
            &g,
            &OsgOptions {
                hub_guard: 10_000,
                workers: 4,
            },
        )
        .unwrap();
        assert_eq!(one.num_edges(), four.num_edges());
        for (x, y) in one.edges().iter().zip(four.edges()) {
            assert_eq!(x.c.to_bits(), y.c.to_bits());
            assert_eq!(x.overlap, y.overlap);
        }
    }

    #[test]
    fn adding_labeled_users_never_decreases_labeled_overlap() {
        use crate::bipartite::UserId;
        let edges = [
            ("u1", "a"),
            ("u1", "b"),
            ("u2", "a"),
            ("u2", "b"),
            ("u3", "a"),
            ("u3", "b"),
            ("u3", "c"),
            ("u1", "c"),
        ];
        let mut fewer = graph_from(&edges);
        fewer.set_labeled_users([UserId(0)]);
        let mut more = graph_from(&edges);
        more.set_labeled_users([UserId(0), UserId(1), UserId(2)]);
        let osg_fewer = build(&fewer);
        let osg_more = build(&more);
        assert_eq!(osg_fewer.num_edges(), osg_more.num_edges());
        for (x, y) in osg_fewer.edges().iter().zip(osg_more.edges()) {
            assert!(y.labeled_overlap >= x.labeled_overlap);
            assert_eq!(x.overlap, y.overlap);
        }
    }
}
