//! Morphisms of hybrid phase spaces and of hybrid systems: a graph map with
//! a smooth map per node, verified on relations (edge inclusion) and on
//! vector fields (intertwining).

use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::defaults::CONTAINMENT_TOL;
use crate::graph::{GraphError, GraphMap};
use crate::map::{check_ds_morphism, MapError, SmoothMap};
use crate::region::{GridSpec, Point};
use crate::relation::RelationError;
use crate::system::{HybridPhaseSpace, HybridSystem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MorphismError {
    #[error("structural mismatch: {0}")]
    StructuralMismatch(String),
    #[error("morphisms do not compose: {0}")]
    DomainMismatch(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Relation(#[from] RelationError),
}

/// How much a verdict proves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    /// Finite relations and affine maps: every condition was checked on all
    /// the data, residuals are at roundoff scale.
    Exact,
    /// Conditions were checked on sample grids only.
    Sampled,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Exact => "EXACT",
            Tier::Sampled => "SAMPLED",
        })
    }
}

/// Image of one source edge relation checked against the target relation.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCheck {
    pub edge: String,
    pub image: String,
    pub exact: bool,
    pub pairs_checked: usize,
    /// Source pairs `(y, x)` whose image `(alpha(y), alpha(x))` is missing
    /// from the target relation, with that image.
    pub counterexamples: Vec<((Point, Point), (Point, Point))>,
}

/// Per-node checks: the component map lands in its codomain and, for
/// system morphisms, intertwines the vector fields.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCheck {
    pub node: String,
    pub image: String,
    pub samples: usize,
    /// Grid points mapped outside the target region.
    pub outside: Vec<Point>,
    /// Largest intertwining residual; `None` for phase-space morphisms.
    pub max_residual: Option<f64>,
    pub residual_violations: Vec<(Point, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphismReport {
    pub tier: Tier,
    pub edges: Vec<EdgeCheck>,
    pub nodes: Vec<NodeCheck>,
}

impl MorphismReport {
    pub fn is_verified(&self) -> bool {
        self.edges.iter().all(|e| e.counterexamples.is_empty())
            && self
                .nodes
                .iter()
                .all(|n| n.outside.is_empty() && n.residual_violations.is_empty())
    }

    pub fn max_residual(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| n.max_residual)
            .fold(0.0, f64::max)
    }
}

/// A morphism of hybrid phase spaces.
#[derive(Debug, Clone)]
pub struct HyPhMorphism {
    source: Arc<HybridPhaseSpace>,
    target: Arc<HybridPhaseSpace>,
    phi: GraphMap,
    alpha: IndexMap<String, SmoothMap>,
}

fn same_phase(a: &Arc<HybridPhaseSpace>, b: &Arc<HybridPhaseSpace>) -> bool {
    Arc::ptr_eq(a, b) || a.same_as(b)
}

impl HyPhMorphism {
    /// Check the structural invariants: `phi` goes between the two graphs
    /// and is a graph map, `alpha` is total with the right signatures.
    pub fn new(
        source: Arc<HybridPhaseSpace>,
        target: Arc<HybridPhaseSpace>,
        phi: GraphMap,
        mut alpha: IndexMap<String, SmoothMap>,
    ) -> Result<Self, MorphismError> {
        if **phi.dom() != **source.graph() || **phi.cod() != **target.graph() {
            return Err(MorphismError::StructuralMismatch(
                "graph map does not go between the two graphs".into(),
            ));
        }
        if let Some(v) = phi.validate().first() {
            return Err(MorphismError::StructuralMismatch(format!(
                "not a graph map: {v}"
            )));
        }
        if let Some(extra) = alpha.keys().find(|k| !source.graph().has_node(k)) {
            return Err(MorphismError::StructuralMismatch(format!(
                "alpha given for unknown node `{extra}`"
            )));
        }
        let mut ordered = IndexMap::new();
        for node in source.graph().nodes() {
            let map = alpha.shift_remove(node).ok_or_else(|| {
                MorphismError::StructuralMismatch(format!("no alpha for node `{node}`"))
            })?;
            let image = phi.node(node).expect("total graph map");
            let (dom, cod) = (source.region(node).unwrap(), target.region(image).unwrap());
            if !map.dom().approx_eq(dom, CONTAINMENT_TOL)
                || !map.cod().approx_eq(cod, CONTAINMENT_TOL)
            {
                return Err(MorphismError::StructuralMismatch(format!(
                    "alpha at `{node}` goes {} -> {}, expected {dom} -> {cod}",
                    map.dom(),
                    map.cod()
                )));
            }
            ordered.insert(node.to_string(), map);
        }
        Ok(Self {
            source,
            target,
            phi,
            alpha: ordered,
        })
    }

    pub fn identity(space: Arc<HybridPhaseSpace>) -> Self {
        let phi = GraphMap::identity(space.graph().clone());
        let alpha = space
            .regions()
            .map(|(n, r)| (n.to_string(), SmoothMap::identity(r.clone())))
            .collect();
        Self {
            source: space.clone(),
            target: space,
            phi,
            alpha,
        }
    }

    pub fn source(&self) -> &Arc<HybridPhaseSpace> {
        &self.source
    }

    pub fn target(&self) -> &Arc<HybridPhaseSpace> {
        &self.target
    }

    pub fn phi(&self) -> &GraphMap {
        &self.phi
    }

    pub fn alpha(&self, node: &str) -> Option<&SmoothMap> {
        self.alpha.get(node)
    }

    pub fn alphas(&self) -> impl Iterator<Item = (&str, &SmoothMap)> {
        self.alpha.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn tier(&self) -> Tier {
        if self.source.is_finite() && self.alpha.values().all(SmoothMap::is_affine) {
            Tier::Exact
        } else {
            Tier::Sampled
        }
    }

    /// Verify edge inclusion on every source edge and codomain containment
    /// of every alpha on the standard grid.
    pub fn verify(&self, tol: f64) -> Result<MorphismReport, MorphismError> {
        self.verify_with(GridSpec::default(), tol)
    }

    pub fn verify_with(&self, grid: GridSpec, tol: f64) -> Result<MorphismReport, MorphismError> {
        let mut edges = Vec::new();
        for (edge, a1, a2) in self.source.graph().edge_triples() {
            let rel = self.source.relation(edge).unwrap();
            let image = self.phi.edge(edge).unwrap();
            let target_rel = self.target.relation(image).unwrap();
            let (alpha1, alpha2) = (&self.alpha[a1], &self.alpha[a2]);
            let pairs = rel.enumerate_pairs(grid, CONTAINMENT_TOL);
            let mut counterexamples = Vec::new();
            for (y, x) in &pairs {
                let mapped = (alpha2.eval_raw(y)?, alpha1.eval_raw(x)?);
                if !target_rel.contains_pair(&mapped.0, &mapped.1, tol) {
                    counterexamples.push(((y.clone(), x.clone()), mapped));
                }
            }
            edges.push(EdgeCheck {
                edge: edge.to_string(),
                image: image.to_string(),
                exact: rel.is_finite(),
                pairs_checked: pairs.len(),
                counterexamples,
            });
        }
        let mut nodes = Vec::new();
        for (node, map) in &self.alpha {
            let samples = map.dom().grid(grid);
            let mut outside = Vec::new();
            for x in &samples {
                let y = map.eval_raw(x)?;
                if !map.cod().contains_unchecked(&y, tol) {
                    outside.push(x.clone());
                }
            }
            nodes.push(NodeCheck {
                node: node.clone(),
                image: self.phi.node(node).unwrap().to_string(),
                samples: samples.len(),
                outside,
                max_residual: None,
                residual_violations: Vec::new(),
            });
        }
        Ok(MorphismReport {
            tier: self.tier(),
            edges,
            nodes,
        })
    }

    /// `n ∘ m`: graph maps compose, and at each node `a` the component is
    /// `beta_{phi(a)} ∘ alpha_a`.
    pub fn compose(n: &HyPhMorphism, m: &HyPhMorphism) -> Result<HyPhMorphism, MorphismError> {
        if !same_phase(&m.target, &n.source) {
            return Err(MorphismError::DomainMismatch(
                "target of the first differs from source of the second".into(),
            ));
        }
        let phi = GraphMap::compose(&n.phi, &m.phi)?;
        let mut alpha = IndexMap::new();
        for (node, inner) in &m.alpha {
            let outer = &n.alpha[m.phi.node(node).unwrap()];
            alpha.insert(node.clone(), SmoothMap::compose(outer, inner)?);
        }
        Ok(HyPhMorphism {
            source: m.source.clone(),
            target: n.target.clone(),
            phi,
            alpha,
        })
    }
}

/// A morphism of hybrid systems: a phase-space morphism whose components
/// intertwine the vector fields.
#[derive(Debug, Clone)]
pub struct HDSMorphism {
    source: Arc<HybridSystem>,
    target: Arc<HybridSystem>,
    base: HyPhMorphism,
}

impl HDSMorphism {
    pub fn new(
        source: Arc<HybridSystem>,
        target: Arc<HybridSystem>,
        base: HyPhMorphism,
    ) -> Result<Self, MorphismError> {
        if !same_phase(source.phase_space(), &base.source)
            || !same_phase(target.phase_space(), &base.target)
        {
            return Err(MorphismError::StructuralMismatch(
                "base morphism does not connect the underlying phase spaces".into(),
            ));
        }
        Ok(Self {
            source,
            target,
            base,
        })
    }

    pub fn identity(system: Arc<HybridSystem>) -> Self {
        let base = HyPhMorphism::identity(system.phase_space().clone());
        Self {
            source: system.clone(),
            target: system,
            base,
        }
    }

    pub fn source(&self) -> &Arc<HybridSystem> {
        &self.source
    }

    pub fn target(&self) -> &Arc<HybridSystem> {
        &self.target
    }

    pub fn base(&self) -> &HyPhMorphism {
        &self.base
    }

    /// Base verification plus the intertwining check at every node on the
    /// node's standard grid.
    pub fn verify(&self, tol: f64) -> Result<MorphismReport, MorphismError> {
        self.verify_with(GridSpec::default(), tol)
    }

    pub fn verify_with(&self, grid: GridSpec, tol: f64) -> Result<MorphismReport, MorphismError> {
        let mut report = self.base.verify_with(grid, tol)?;
        let mut affine = true;
        for check in &mut report.nodes {
            let map = &self.base.alpha[&check.node];
            let (x, y) = (
                self.source.field(&check.node).unwrap(),
                self.target.field(&check.image).unwrap(),
            );
            affine &= x.is_affine() && y.is_affine();
            let ds = check_ds_morphism(map, x, y, &map.dom().grid(grid), tol)?;
            check.max_residual = Some(ds.max_residual);
            check.residual_violations = ds.violations;
        }
        if !affine {
            report.tier = Tier::Sampled;
        }
        Ok(report)
    }

    pub fn compose(n: &HDSMorphism, m: &HDSMorphism) -> Result<HDSMorphism, MorphismError> {
        if !(Arc::ptr_eq(&m.target, &n.source) || m.target.same_as(&n.source)) {
            return Err(MorphismError::DomainMismatch(
                "target of the first differs from source of the second".into(),
            ));
        }
        let base = HyPhMorphism::compose(&n.base, &m.base)?;
        Ok(HDSMorphism {
            source: m.source.clone(),
            target: n.target.clone(),
            base,
        })
    }
}
