//! Branch graph of a curve skeleton: endpoints and junction clusters are
//! nodes, runs of two-neighbour voxels between them are edges.

use std::collections::{HashSet, VecDeque};

use crate::topology::Connectivity;
use crate::volume::Geometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum NodeKind {
    Endpoint,
    Junction,
    Isolated,
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub kind: NodeKind,
    pub voxels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct Edge {
    pub a: usize,
    pub b: usize,
    /// Chain voxels strictly between the two nodes.
    pub interior: Vec<usize>,
}

impl Edge {
    pub fn other(&self, n: usize) -> usize {
        if self.a == n {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BranchGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

fn skeleton_neighbours<'a>(
    skel: &'a [bool],
    geom: &'a Geometry,
    v: usize,
) -> impl Iterator<Item = usize> + 'a {
    let c = geom.coords(v);
    Connectivity::TwentySix
        .offsets()
        .iter()
        .filter_map(move |&d| geom.offset(c, d))
        .filter(move |&n| skel[n])
}

impl BranchGraph {
    pub fn build(skel: &[bool], geom: &Geometry) -> Self {
        let len = geom.len();
        let degree: Vec<u8> = (0..len)
            .map(|v| {
                if skel[v] {
                    skeleton_neighbours(skel, geom, v).count() as u8
                } else {
                    0
                }
            })
            .collect();
        let mut node_of: Vec<Option<usize>> = vec![None; len];
        let mut nodes: Vec<Node> = Vec::new();
        for v in 0..len {
            if !skel[v] || node_of[v].is_some() || degree[v] == 2 {
                continue;
            }
            let id = nodes.len();
            let kind = match degree[v] {
                0 => NodeKind::Isolated,
                1 => NodeKind::Endpoint,
                _ => NodeKind::Junction,
            };
            let mut voxels = vec![v];
            node_of[v] = Some(id);
            if kind == NodeKind::Junction {
                // Adjacent junction voxels form one node.
                let mut q = VecDeque::from([v]);
                while let Some(u) = q.pop_front() {
                    for n in skeleton_neighbours(skel, geom, u) {
                        if degree[n] > 2 && node_of[n].is_none() {
                            node_of[n] = Some(id);
                            voxels.push(n);
                            q.push_back(n);
                        }
                    }
                }
            }
            nodes.push(Node { kind, voxels });
        }

        let mut edges = Vec::new();
        let mut visited = vec![false; len];
        let mut direct: HashSet<(usize, usize)> = HashSet::new();
        let mut n = 0;
        loop {
            while n < nodes.len() {
                let members = nodes[n].voxels.clone();
                for &u in &members {
                    for w in skeleton_neighbours(skel, geom, u).collect::<Vec<_>>() {
                        if let Some(m) = node_of[w] {
                            if m != n && direct.insert((n.min(m), n.max(m))) {
                                edges.push(Edge { a: n, b: m, interior: Vec::new() });
                            }
                            continue;
                        }
                        if visited[w] {
                            continue;
                        }
                        let (end, interior) = trace(skel, geom, &node_of, &mut visited, u, w);
                        edges.push(Edge { a: n, b: end.unwrap_or(n), interior });
                    }
                }
                n += 1;
            }
            // Closed loops without any node: promote one voxel and trace again.
            match (0..len).find(|&v| skel[v] && node_of[v].is_none() && !visited[v]) {
                Some(v) => {
                    node_of[v] = Some(nodes.len());
                    visited[v] = true;
                    nodes.push(Node { kind: NodeKind::Junction, voxels: vec![v] });
                }
                None => break,
            }
        }
        BranchGraph { nodes, edges }
    }

    /// Merges junctions joined by a link no longer than the local vessel
    /// radius; thinning often splits one bifurcation into two such nodes.
    pub fn contract_short_links(&mut self, radius: &[f64]) {
        let r = |n: &Node| n.voxels.iter().map(|&v| radius[v]).fold(0.0, f64::max);
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut contracted = vec![false; self.edges.len()];
        for (i, e) in self.edges.iter().enumerate() {
            let (na, nb) = (&self.nodes[e.a], &self.nodes[e.b]);
            if e.a != e.b
                && na.kind == NodeKind::Junction
                && nb.kind == NodeKind::Junction
                && (e.interior.len() + 1) as f64 <= r(na).max(r(nb)) + 1.0
            {
                let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
                if ra != rb {
                    parent[rb] = ra;
                    contracted[i] = true;
                }
            }
        }
        if !contracted.iter().any(|&c| c) {
            return;
        }
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        let mut nodes: Vec<Node> = Vec::new();
        for n in 0..self.nodes.len() {
            let root = find(&mut parent, n);
            if new_id[root] == usize::MAX {
                new_id[root] = nodes.len();
                nodes.push(Node { kind: self.nodes[root].kind, voxels: Vec::new() });
            }
            new_id[n] = new_id[root];
            nodes[new_id[n]].voxels.extend_from_slice(&self.nodes[n].voxels);
        }
        let mut edges = Vec::new();
        for (i, e) in self.edges.drain(..).enumerate() {
            if contracted[i] {
                nodes[new_id[e.a]].voxels.extend(e.interior);
            } else {
                edges.push(Edge { a: new_id[e.a], b: new_id[e.b], interior: e.interior });
            }
        }
        self.nodes = nodes;
        self.edges = edges;
    }

    pub fn incident(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.a == n || e.b == n)
            .map(|(i, _)| i)
    }

    /// Hop distance of every node from `root`; unreachable nodes get `None`.
    pub fn hops_from(&self, root: usize) -> Vec<Option<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        let mut hops = vec![None; self.nodes.len()];
        hops[root] = Some(0);
        let mut q = VecDeque::from([root]);
        while let Some(u) = q.pop_front() {
            let h = hops[u].unwrap();
            for &w in &adj[u] {
                if hops[w].is_none() {
                    hops[w] = Some(h + 1);
                    q.push_back(w);
                }
            }
        }
        hops
    }
}

/// Walks a chain of two-neighbour voxels starting at `first` (entered from
/// `from`) until it reaches a node voxel.
fn trace(
    skel: &[bool],
    geom: &Geometry,
    node_of: &[Option<usize>],
    visited: &mut [bool],
    from: usize,
    first: usize,
) -> (Option<usize>, Vec<usize>) {
    let mut interior = vec![first];
    visited[first] = true;
    let (mut prev, mut cur) = (from, first);
    loop {
        let next = skeleton_neighbours(skel, geom, cur).find(|&n| n != prev && !(visited[n] && node_of[n].is_none()));
        match next {
            Some(n) if node_of[n].is_some() => return (node_of[n], interior),
            Some(n) => {
                visited[n] = true;
                interior.push(n);
                prev = cur;
                cur = n;
            }
            None => return (node_of[from], interior),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(geom: &Geometry, pts: &[[usize; 3]]) -> Vec<bool> {
        let mut m = vec![false; geom.len()];
        for p in pts {
            m[geom.index(p[0], p[1], p[2])] = true;
        }
        m
    }

    #[test]
    fn line_is_one_edge_between_two_endpoints() {
        let geom = Geometry::isotropic([3, 3, 8]);
        let pts: Vec<_> = (0..8).map(|k| [1, 1, k]).collect();
        let g = BranchGraph::build(&mask(&geom, &pts), &geom);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].interior.len(), 6);
    }

    #[test]
    fn y_shape_has_three_edges() {
        let geom = Geometry::isotropic([9, 3, 9]);
        let mut pts: Vec<_> = (0..5).map(|k| [4, 1, k]).collect();
        for s in 1..4 {
            pts.push([4 - s, 1, 4 + s]);
            pts.push([4 + s, 1, 4 + s]);
        }
        let g = BranchGraph::build(&mask(&geom, &pts), &geom);
        assert_eq!(g.edges.len(), 3);
        let ends = g.nodes.iter().filter(|n| n.kind == NodeKind::Endpoint).count();
        assert_eq!(ends, 3);
        let root = g.nodes.iter().position(|n| n.voxels.contains(&geom.index(4, 1, 0))).unwrap();
        let hops = g.hops_from(root);
        assert_eq!(hops.iter().filter(|h| **h == Some(2)).count(), 2);
    }

    #[test]
    fn closed_loop_becomes_self_edge() {
        let geom = Geometry::isotropic([5, 5, 3]);
        let ring = [
            [1, 0], [2, 0], [3, 0], [4, 1], [4, 2], [4, 3],
            [3, 4], [2, 4], [1, 4], [0, 3], [0, 2], [0, 1],
        ];
        let pts: Vec<_> = ring.iter().map(|p| [p[0], p[1], 1]).collect();
        let g = BranchGraph::build(&mask(&geom, &pts), &geom);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].a, g.edges[0].b);
        assert_eq!(g.edges[0].interior.len(), 11);
    }
}
