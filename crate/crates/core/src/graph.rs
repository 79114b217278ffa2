//! Directed multigraphs and maps of graphs.
//!
//! Every hybrid system is indexed by a finite [`Graph`]: nodes carry regions,
//! edges carry reset relations. Hybrid time is indexed by the chain graphs
//! produced by [`Graph::chain`].

use std::fmt;
use std::sync::Arc;

use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("duplicate identifier `{0}`")]
    DuplicateIdentifier(String),
    #[error("edge `{edge}` references unknown node `{node}`")]
    DanglingEndpoint { edge: String, node: String },
    #[error("map is not total: {0}")]
    NotTotal(String),
    #[error("domain mismatch: codomain of the inner map differs from the domain of the outer map")]
    DomainMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Endpoints {
    src: usize,
    tgt: usize,
}

/// A finite directed multigraph with string identifiers.
///
/// Iteration order over nodes and edges is insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    nodes: IndexSet<String>,
    edges: IndexMap<String, Endpoints>,
}

impl Graph {
    pub fn new<N, E>(nodes: N, edges: E) -> Result<Self, GraphError>
    where
        N: IntoIterator,
        N::Item: Into<String>,
        E: IntoIterator<Item = (String, String, String)>,
    {
        let mut node_set = IndexSet::new();
        for node in nodes {
            let node = node.into();
            if !node_set.insert(node.clone()) {
                return Err(GraphError::DuplicateIdentifier(node));
            }
        }
        let mut edge_map = IndexMap::new();
        for (id, src, tgt) in edges {
            let lookup = |n: &String| {
                node_set
                    .get_index_of(n)
                    .ok_or_else(|| GraphError::DanglingEndpoint {
                        edge: id.clone(),
                        node: n.clone(),
                    })
            };
            let endpoints = Endpoints {
                src: lookup(&src)?,
                tgt: lookup(&tgt)?,
            };
            if edge_map.contains_key(&id) {
                return Err(GraphError::DuplicateIdentifier(id));
            }
            edge_map.insert(id, endpoints);
        }
        Ok(Self {
            nodes: node_set,
            edges: edge_map,
        })
    }

    /// Convenience constructor taking string slices.
    pub fn from_strs(nodes: &[&str], edges: &[(&str, &str, &str)]) -> Result<Self, GraphError> {
        Self::new(
            nodes.iter().copied(),
            edges
                .iter()
                .map(|(e, s, t)| (e.to_string(), s.to_string(), t.to_string())),
        )
    }

    /// The chain `0 -0-> 1 -1-> ... -(k-1)-> k`.
    pub fn chain(k: usize) -> Self {
        let nodes: IndexSet<String> = (0..=k).map(|i| i.to_string()).collect();
        let edges = (0..k)
            .map(|i| (i.to_string(), Endpoints { src: i, tgt: i + 1 }))
            .collect();
        Self { nodes, edges }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = &str> {
        self.edges.keys().map(String::as_str)
    }

    pub fn has_node(&self, node: &str) -> bool {
        self.nodes.contains(node)
    }

    pub fn has_edge(&self, edge: &str) -> bool {
        self.edges.contains_key(edge)
    }

    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.nodes.get_index_of(node)
    }

    pub fn edge_index(&self, edge: &str) -> Option<usize> {
        self.edges.get_index_of(edge)
    }

    pub fn src(&self, edge: &str) -> Option<&str> {
        self.edges.get(edge).map(|e| self.nodes[e.src].as_str())
    }

    pub fn tgt(&self, edge: &str) -> Option<&str> {
        self.edges.get(edge).map(|e| self.nodes[e.tgt].as_str())
    }

    /// Edges leaving `node`, in edge order.
    pub fn outgoing<'a>(&'a self, node: &str) -> impl Iterator<Item = &'a str> + 'a {
        let idx = self.node_index(node);
        self.edges
            .iter()
            .filter(move |(_, e)| Some(e.src) == idx)
            .map(|(id, _)| id.as_str())
    }

    /// `(edge, src, tgt)` triples in edge order.
    pub fn edge_triples(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.edges.iter().map(|(id, e)| {
            (
                id.as_str(),
                self.nodes[e.src].as_str(),
                self.nodes[e.tgt].as_str(),
            )
        })
    }

    /// True when between any two distinct nodes there is exactly one
    /// directed path, in exactly one direction. Graphs with a directed cycle
    /// fail. This is the shape required of hybrid time indexing graphs.
    pub fn has_unique_paths(&self) -> bool {
        let n = self.nodes.len();
        let Some(order) = self.topological_order() else {
            return false;
        };
        // paths[i][j]: number of directed paths i -> j, saturated at 2.
        let mut paths = vec![vec![0u8; n]; n];
        for &start in &order {
            paths[start][start] = 1;
        }
        for &u in order.iter().rev() {
            for e in self.edges.values().filter(|e| e.src == u) {
                let v = e.tgt;
                for w in 0..n {
                    let add = paths[v][w];
                    paths[u][w] = (paths[u][w] + add).min(2);
                }
            }
            paths[u][u] = 1;
        }
        (0..n).all(|i| {
            (0..n)
                .filter(|&j| j != i)
                .all(|j| paths[i][j] + paths[j][i] == 1)
        })
    }

    fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for e in self.edges.values() {
            indegree[e.tgt] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = ready.pop() {
            order.push(u);
            for e in self.edges.values().filter(|e| e.src == u) {
                indegree[e.tgt] -= 1;
                if indegree[e.tgt] == 0 {
                    ready.push(e.tgt);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

/// Which commutation equation of a graph map failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphMapViolation {
    pub edge: String,
    pub endpoint: Endpoint,
    /// Image of the endpoint under the node map.
    pub mapped_node: String,
    /// Endpoint of the image edge.
    pub image_endpoint: String,
}

impl fmt::Display for GraphMapViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let which = match self.endpoint {
            Endpoint::Source => "src",
            Endpoint::Target => "tgt",
        };
        write!(
            f,
            "edge `{}`: node map sends {which} to `{}` but the image edge has {which} `{}`",
            self.edge, self.mapped_node, self.image_endpoint
        )
    }
}

/// A map of graphs. Construction checks totality only; use
/// [`GraphMap::validate`] for the commutation equations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphMap {
    dom: Arc<Graph>,
    cod: Arc<Graph>,
    node_map: Vec<usize>,
    edge_map: Vec<usize>,
}

impl GraphMap {
    pub fn new(
        dom: Arc<Graph>,
        cod: Arc<Graph>,
        node_map: &IndexMap<String, String>,
        edge_map: &IndexMap<String, String>,
    ) -> Result<Self, GraphError> {
        let nodes = dom
            .nodes()
            .map(|n| {
                let image = node_map
                    .get(n)
                    .ok_or_else(|| GraphError::NotTotal(format!("node `{n}` is unmapped")))?;
                cod.node_index(image).ok_or_else(|| {
                    GraphError::NotTotal(format!("node `{n}` maps to unknown `{image}`"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let edges = dom
            .edges()
            .map(|e| {
                let image = edge_map
                    .get(e)
                    .ok_or_else(|| GraphError::NotTotal(format!("edge `{e}` is unmapped")))?;
                cod.edge_index(image).ok_or_else(|| {
                    GraphError::NotTotal(format!("edge `{e}` maps to unknown `{image}`"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            dom,
            cod,
            node_map: nodes,
            edge_map: edges,
        })
    }

    /// Map built from closures over identifiers.
    pub fn from_fns(
        dom: Arc<Graph>,
        cod: Arc<Graph>,
        node_fn: impl Fn(&str) -> String,
        edge_fn: impl Fn(&str) -> String,
    ) -> Result<Self, GraphError> {
        let nodes: IndexMap<String, String> =
            dom.nodes().map(|n| (n.to_string(), node_fn(n))).collect();
        let edges: IndexMap<String, String> =
            dom.edges().map(|e| (e.to_string(), edge_fn(e))).collect();
        Self::new(dom, cod, &nodes, &edges)
    }

    pub fn identity(graph: Arc<Graph>) -> Self {
        let node_map = (0..graph.node_count()).collect();
        let edge_map = (0..graph.edge_count()).collect();
        Self {
            dom: graph.clone(),
            cod: graph,
            node_map,
            edge_map,
        }
    }

    pub fn dom(&self) -> &Arc<Graph> {
        &self.dom
    }

    pub fn cod(&self) -> &Arc<Graph> {
        &self.cod
    }

    pub fn node(&self, node: &str) -> Option<&str> {
        let i = self.dom.node_index(node)?;
        Some(self.cod.nodes[self.node_map[i]].as_str())
    }

    pub fn edge(&self, edge: &str) -> Option<&str> {
        let i = self.dom.edge_index(edge)?;
        Some(
            self.cod
                .edges
                .get_index(self.edge_map[i])
                .map(|(k, _)| k.as_str())
                .unwrap(),
        )
    }

    pub fn node_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.dom
            .nodes()
            .zip(self.node_map.iter().map(|&j| self.cod.nodes[j].as_str()))
    }

    pub fn edge_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.dom.edges().zip(
            self.edge_map
                .iter()
                .map(|&j| self.cod.edges.get_index(j).unwrap().0.as_str()),
        )
    }

    /// Violations of `phi(src e) = src(phi e)` and `phi(tgt e) = tgt(phi e)`,
    /// in edge order. Empty means the map is a map of graphs.
    pub fn validate(&self) -> Vec<GraphMapViolation> {
        let mut out = Vec::new();
        for ((id, e), &image) in self.dom.edges.iter().zip(&self.edge_map) {
            let image = &self.cod.edges[image];
            for (endpoint, dn, cn) in [
                (Endpoint::Source, e.src, image.src),
                (Endpoint::Target, e.tgt, image.tgt),
            ] {
                if self.node_map[dn] != cn {
                    out.push(GraphMapViolation {
                        edge: id.clone(),
                        endpoint,
                        mapped_node: self.cod.nodes[self.node_map[dn]].clone(),
                        image_endpoint: self.cod.nodes[cn].clone(),
                    });
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: &GraphMap, inner: &GraphMap) -> Result<GraphMap, GraphError> {
        if !(Arc::ptr_eq(&inner.cod, &outer.dom) || *inner.cod == *outer.dom) {
            return Err(GraphError::DomainMismatch);
        }
        Ok(GraphMap {
            dom: inner.dom.clone(),
            cod: outer.cod.clone(),
            node_map: inner.node_map.iter().map(|&j| outer.node_map[j]).collect(),
            edge_map: inner.edge_map.iter().map(|&j| outer.edge_map[j]).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loop_graph() -> Arc<Graph> {
        Arc::new(Graph::from_strs(&["*"], &[("gamma", "*", "*")]).unwrap())
    }

    #[test]
    fn one_node_one_loop() {
        let g = loop_graph();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.src("gamma"), Some("*"));
        assert_eq!(g.tgt("gamma"), Some("*"));
        assert_eq!(g.outgoing("*").collect::<Vec<_>>(), vec!["gamma"]);
    }

    #[test]
    fn edgeless_graph() {
        let g = Graph::from_strs(&["a"], &[]).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
    }

    #[test]
    fn dangling_endpoint() {
        let err = Graph::from_strs(&["a"], &[("e", "a", "b")]).unwrap_err();
        assert_eq!(
            err,
            GraphError::DanglingEndpoint {
                edge: "e".into(),
                node: "b".into()
            }
        );
    }

    #[test]
    fn duplicate_identifiers() {
        assert!(matches!(
            Graph::from_strs(&["a", "a"], &[]),
            Err(GraphError::DuplicateIdentifier(_))
        ));
        assert!(matches!(
            Graph::from_strs(&["a"], &[("e", "a", "a"), ("e", "a", "a")]),
            Err(GraphError::DuplicateIdentifier(_))
        ));
    }

    #[test]
    fn chain_shapes() {
        let c0 = Graph::chain(0);
        assert_eq!((c0.node_count(), c0.edge_count()), (1, 0));
        let c2 = Graph::chain(2);
        assert_eq!(
            c2.edge_triples().collect::<Vec<_>>(),
            vec![("0", "0", "1"), ("1", "1", "2")]
        );
        let c5 = Arc::new(Graph::chain(5));
        assert_eq!((c5.node_count(), c5.edge_count()), (6, 5));
        assert!(GraphMap::identity(c5).is_valid());
    }

    #[test]
    fn chain_to_loop_is_valid() {
        let chain = Arc::new(Graph::chain(1));
        let f =
            GraphMap::from_fns(chain, loop_graph(), |_| "*".into(), |_| "gamma".into()).unwrap();
        assert!(f.is_valid());
    }

    #[test]
    fn forced_target_mismatch() {
        let chain = Arc::new(Graph::chain(1));
        let cod = Arc::new(Graph::from_strs(&["a", "b"], &[("f", "a", "b")]).unwrap());
        let f = GraphMap::from_fns(chain, cod, |_| "a".into(), |_| "f".into()).unwrap();
        let v = f.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].endpoint, Endpoint::Target);
        assert_eq!(v[0].edge, "0");
    }

    #[test]
    fn composite_equals_direct_map() {
        let chain = Arc::new(Graph::chain(2));
        let lp = loop_graph();
        let direct = GraphMap::from_fns(
            chain.clone(),
            lp.clone(),
            |_| "*".into(),
            |_| "gamma".into(),
        )
        .unwrap();
        let id = GraphMap::identity(lp);
        let composed = GraphMap::compose(&id, &direct).unwrap();
        assert_eq!(composed, direct);
        assert_eq!(
            GraphMap::compose(&direct, &GraphMap::identity(chain)).unwrap(),
            direct
        );
    }

    #[test]
    fn compose_rejects_mismatch() {
        let a = Arc::new(Graph::chain(1));
        let b = Arc::new(Graph::chain(2));
        assert_eq!(
            GraphMap::compose(&GraphMap::identity(a), &GraphMap::identity(b)),
            Err(GraphError::DomainMismatch)
        );
    }

    #[test]
    fn unique_paths() {
        assert!(Graph::chain(0).has_unique_paths());
        assert!(Graph::chain(4).has_unique_paths());
        assert!(!loop_graph().has_unique_paths());
        let fork = Graph::from_strs(&["a", "b", "c"], &[("x", "a", "b"), ("y", "a", "c")]).unwrap();
        assert!(!fork.has_unique_paths());
        let parallel = Graph::from_strs(&["a", "b"], &[("x", "a", "b"), ("y", "a", "b")]).unwrap();
        assert!(!parallel.has_unique_paths());
    }
}
