//! Hybrid phase spaces (graphs labelled by regions and relations), hybrid
//! systems (phase space plus a vector field per node), and hybrid time
//! systems (chains of abutting intervals with unit clocks).

use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::defaults::CONTAINMENT_TOL;
use crate::field::VectorField;
use crate::graph::Graph;
use crate::region::{GridSpec, Region};
use crate::relation::Relation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("node `{0}` has no region")]
    MissingRegion(String),
    #[error("edge `{0}` has no relation")]
    MissingRelation(String),
    #[error("node `{0}` has no vector field")]
    MissingField(String),
    #[error("`{0}` is not part of the graph")]
    UnknownIdentifier(String),
    #[error("field on node `{0}` lives on a different region than the node")]
    FieldRegion(String),
    #[error("times are not nondecreasing at index {0}")]
    NotNondecreasing(usize),
    #[error("a time system needs at least one time")]
    NoTimes,
}

/// One problem found by [`HybridPhaseSpace::validate`] or [`HybridSystem::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Node or edge identifier.
    pub at: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.at, self.message)
    }
}

/// A graph with a region on every node and a relation on every edge
/// `a -> b`, the relation going from the region of `a` to the region of `b`.
#[derive(Debug, Clone)]
pub struct HybridPhaseSpace {
    graph: Arc<Graph>,
    regions: IndexMap<String, Region>,
    relations: IndexMap<String, Relation>,
}

impl HybridPhaseSpace {
    /// Assemble a phase space. The labelling must be total; the
    /// region/relation compatibility is checked by [`validate`](Self::validate).
    pub fn new(
        graph: Arc<Graph>,
        mut regions: IndexMap<String, Region>,
        mut relations: IndexMap<String, Relation>,
    ) -> Result<Self, SystemError> {
        if let Some(extra) = regions.keys().find(|k| !graph.has_node(k)) {
            return Err(SystemError::UnknownIdentifier(extra.clone()));
        }
        if let Some(extra) = relations.keys().find(|k| !graph.has_edge(k)) {
            return Err(SystemError::UnknownIdentifier(extra.clone()));
        }
        let mut ordered_regions = IndexMap::new();
        for n in graph.nodes() {
            let r = regions
                .shift_remove(n)
                .ok_or_else(|| SystemError::MissingRegion(n.to_string()))?;
            ordered_regions.insert(n.to_string(), r);
        }
        let mut ordered_relations = IndexMap::new();
        for e in graph.edges() {
            let r = relations
                .shift_remove(e)
                .ok_or_else(|| SystemError::MissingRelation(e.to_string()))?;
            ordered_relations.insert(e.to_string(), r);
        }
        Ok(Self {
            graph,
            regions: ordered_regions,
            relations: ordered_relations,
        })
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn region(&self, node: &str) -> Option<&Region> {
        self.regions.get(node)
    }

    pub fn relation(&self, edge: &str) -> Option<&Relation> {
        self.relations.get(edge)
    }

    pub fn regions(&self) -> impl Iterator<Item = (&str, &Region)> {
        self.regions.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, &Relation)> {
        self.relations.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// True when every relation is given by finitely many pairs.
    pub fn is_finite(&self) -> bool {
        self.relations.values().all(Relation::is_finite)
    }

    /// Empty iff every edge relation goes between the regions of its
    /// endpoints and its pairs/guards lie inside those regions.
    pub fn validate(&self, tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        for (edge, src, tgt) in self.graph.edge_triples() {
            let rel = &self.relations[edge];
            let mut push = |message: String| {
                out.push(Violation {
                    at: edge.to_string(),
                    message,
                })
            };
            if !rel.source().approx_eq(&self.regions[src], CONTAINMENT_TOL) {
                push(format!(
                    "relation source {} differs from region {} of `{src}`",
                    rel.source(),
                    self.regions[src]
                ));
            }
            if !rel.target().approx_eq(&self.regions[tgt], CONTAINMENT_TOL) {
                push(format!(
                    "relation target {} differs from region {} of `{tgt}`",
                    rel.target(),
                    self.regions[tgt]
                ));
            }
            for message in rel.validate(tol) {
                push(message);
            }
        }
        out
    }

    /// Same graph and regions, with relations equal structurally.
    pub fn same_as(&self, other: &HybridPhaseSpace) -> bool {
        *self.graph == *other.graph
            && self.regions == other.regions
            && self
                .relations
                .iter()
                .zip(&other.relations)
                .all(|((_, a), (_, b))| a.same_as(b))
    }
}

/// A hybrid phase space with a vector field on each node's region.
#[derive(Debug, Clone)]
pub struct HybridSystem {
    phase: Arc<HybridPhaseSpace>,
    fields: IndexMap<String, VectorField>,
}

impl HybridSystem {
    pub fn new(
        phase: Arc<HybridPhaseSpace>,
        mut fields: IndexMap<String, VectorField>,
    ) -> Result<Self, SystemError> {
        if let Some(extra) = fields.keys().find(|k| !phase.graph.has_node(k)) {
            return Err(SystemError::UnknownIdentifier(extra.clone()));
        }
        let mut ordered = IndexMap::new();
        for n in phase.graph.nodes() {
            let f = fields
                .shift_remove(n)
                .ok_or_else(|| SystemError::MissingField(n.to_string()))?;
            if f.region() != &phase.regions[n] {
                return Err(SystemError::FieldRegion(n.to_string()));
            }
            ordered.insert(n.to_string(), f);
        }
        Ok(Self {
            phase,
            fields: ordered,
        })
    }

    /// Forget the vector fields.
    pub fn phase_space(&self) -> &Arc<HybridPhaseSpace> {
        &self.phase
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.phase.graph
    }

    pub fn region(&self, node: &str) -> Option<&Region> {
        self.phase.region(node)
    }

    pub fn relation(&self, edge: &str) -> Option<&Relation> {
        self.phase.relation(edge)
    }

    pub fn field(&self, node: &str) -> Option<&VectorField> {
        self.fields.get(node)
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &VectorField)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Phase-space violations plus grid points where a field fails to
    /// evaluate finitely.
    pub fn validate(&self, tol: f64) -> Vec<Violation> {
        let mut out = self.phase.validate(tol);
        for (node, field) in &self.fields {
            let bad = field.grid_violations(GridSpec::default());
            if let Some(first) = bad.first() {
                out.push(Violation {
                    at: node.clone(),
                    message: format!(
                        "field is not finite at {} grid point(s), e.g. {first:?}",
                        bad.len()
                    ),
                });
            }
        }
        out
    }

    pub fn same_as(&self, other: &HybridSystem) -> bool {
        (Arc::ptr_eq(&self.phase, &other.phase) || self.phase.same_as(&other.phase))
            && self.fields == other.fields
    }
}

/// The hybrid analogue of an interval with `d/dt`: the chain graph with
/// node `i` carrying `[t_{i-1}, t_i]` (where `t_{-1}` is `t_minus`), edge
/// `i` carrying `{(t_i, t_i)}`, and the unit clock on every node.
#[derive(Debug, Clone)]
pub struct HybridTimeSystem {
    system: HybridSystem,
    t_minus: f64,
    times: Vec<f64>,
}

impl HybridTimeSystem {
    pub fn new(t_minus: f64, times: Vec<f64>) -> Result<Self, SystemError> {
        if times.is_empty() {
            return Err(SystemError::NoTimes);
        }
        let mut prev = t_minus;
        for (i, &t) in times.iter().enumerate() {
            if !(prev <= t) {
                return Err(SystemError::NotNondecreasing(i));
            }
            prev = t;
        }
        let k = times.len() - 1;
        let graph = Arc::new(Graph::chain(k));
        let interval = |i: usize| {
            let lo = if i == 0 { t_minus } else { times[i - 1] };
            Region::interval(lo, times[i]).expect("nondecreasing times")
        };
        let regions: IndexMap<String, Region> =
            (0..=k).map(|i| (i.to_string(), interval(i))).collect();
        let relations: IndexMap<String, Relation> = (0..k)
            .map(|i| {
                let rel = Relation::finite(
                    interval(i),
                    interval(i + 1),
                    vec![(vec![times[i]], vec![times[i]])],
                )
                .expect("one-dimensional pair");
                (i.to_string(), rel)
            })
            .collect();
        let fields = regions
            .iter()
            .map(|(n, r)| (n.clone(), VectorField::clock(r.clone())))
            .collect();
        let phase = HybridPhaseSpace::new(graph, regions, relations)?;
        let system = HybridSystem::new(Arc::new(phase), fields)?;
        Ok(Self {
            system,
            t_minus,
            times,
        })
    }

    pub fn system(&self) -> &HybridSystem {
        &self.system
    }

    pub fn t_minus(&self) -> f64 {
        self.t_minus
    }

    /// `t_0..t_k`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of jumps `k`.
    pub fn jumps(&self) -> usize {
        self.times.len() - 1
    }

    /// `[t_{i-1}, t_i]`.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 {
            self.t_minus
        } else {
            self.times[i - 1]
        };
        (lo, self.times[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::SmoothMap;

    fn sawtooth_phase(pair: (f64, f64)) -> HybridPhaseSpace {
        let graph = Arc::new(Graph::from_strs(&["*"], &[("gamma", "*", "*")]).unwrap());
        let r = Region::unit(1);
        let rel =
            Relation::finite(r.clone(), r.clone(), vec![(vec![pair.0], vec![pair.1])]).unwrap();
        HybridPhaseSpace::new(
            graph,
            [("*".to_string(), r)].into(),
            [("gamma".to_string(), rel)].into(),
        )
        .unwrap()
    }

    #[test]
    fn reset_example_is_valid() {
        assert!(sawtooth_phase((0.0, 1.0)).validate(1e-9).is_empty());
    }

    #[test]
    fn edgeless_space_is_valid() {
        let graph = Arc::new(Graph::from_strs(&["a"], &[]).unwrap());
        let h = HybridPhaseSpace::new(
            graph,
            [("a".to_string(), Region::unit(3))].into(),
            IndexMap::new(),
        )
        .unwrap();
        assert!(h.validate(1e-9).is_empty());
    }

    #[test]
    fn pair_outside_region() {
        let v = sawtooth_phase((2.0, 1.0)).validate(1e-9);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].at, "gamma");
    }

    #[test]
    fn signature_mismatch_is_reported() {
        let graph = Arc::new(Graph::from_strs(&["a", "b"], &[("e", "a", "b")]).unwrap());
        let rel = Relation::empty(Region::unit(1), Region::unit(1));
        let h = HybridPhaseSpace::new(
            graph,
            [
                ("a".to_string(), Region::unit(1)),
                ("b".to_string(), Region::unit(2)),
            ]
            .into(),
            [("e".to_string(), rel)].into(),
        )
        .unwrap();
        assert_eq!(h.validate(1e-9).len(), 1);
    }

    #[test]
    fn labelling_must_be_total() {
        let graph = Arc::new(Graph::from_strs(&["a"], &[("e", "a", "a")]).unwrap());
        assert_eq!(
            HybridPhaseSpace::new(graph.clone(), IndexMap::new(), IndexMap::new()).unwrap_err(),
            SystemError::MissingRegion("a".into())
        );
        assert_eq!(
            HybridPhaseSpace::new(
                graph,
                [("a".to_string(), Region::unit(1))].into(),
                IndexMap::new()
            )
            .unwrap_err(),
            SystemError::MissingRelation("e".into())
        );
    }

    #[test]
    fn time_system_from_integer_times() {
        let ts = HybridTimeSystem::new(0.0, vec![1.0, 2.0, 3.0]).unwrap();
        let sys = ts.system();
        assert_eq!(
            sys.region("0").unwrap(),
            &Region::interval(0.0, 1.0).unwrap()
        );
        assert_eq!(
            sys.region("1").unwrap(),
            &Region::interval(1.0, 2.0).unwrap()
        );
        assert_eq!(
            sys.region("2").unwrap(),
            &Region::interval(2.0, 3.0).unwrap()
        );
        assert_eq!(
            sys.relation("0").unwrap().pairs().unwrap(),
            &[(vec![1.0], vec![1.0])]
        );
        assert_eq!(
            sys.relation("1").unwrap().pairs().unwrap(),
            &[(vec![2.0], vec![2.0])]
        );
        assert!(sys.validate(1e-12).is_empty());
        assert!(sys.graph().has_unique_paths());
        for (_, f) in sys.fields() {
            assert_eq!(f.eval_raw(&[0.0]).unwrap(), vec![1.0]);
        }
        // Abutment: the jump point is the right end of one interval and the left end of the next.
        for i in 0..ts.jumps() {
            let (y, x) = &sys.relation(&i.to_string()).unwrap().pairs().unwrap()[0];
            assert_eq!(x[0], sys.region(&i.to_string()).unwrap().bounds()[0].1);
            assert_eq!(
                y[0],
                sys.region(&(i + 1).to_string()).unwrap().bounds()[0].0
            );
        }
    }

    #[test]
    fn degenerate_time_system() {
        let ts = HybridTimeSystem::new(5.0, vec![5.0]).unwrap();
        assert_eq!(
            ts.system().region("0").unwrap(),
            &Region::interval(5.0, 5.0).unwrap()
        );
        assert_eq!(ts.jumps(), 0);
    }

    #[test]
    fn decreasing_times_rejected() {
        assert_eq!(
            HybridTimeSystem::new(0.0, vec![2.0, 1.0]).unwrap_err(),
            SystemError::NotNondecreasing(1)
        );
        assert_eq!(
            HybridTimeSystem::new(3.0, vec![2.0]).unwrap_err(),
            SystemError::NotNondecreasing(0)
        );
        assert_eq!(
            HybridTimeSystem::new(0.0, vec![]).unwrap_err(),
            SystemError::NoTimes
        );
    }

    #[test]
    fn forgetting_fields() {
        let phase = Arc::new(sawtooth_phase((0.0, 1.0)));
        let field = VectorField::parse(Region::unit(1), &["1"]).unwrap();
        let sys = HybridSystem::new(phase.clone(), [("*".to_string(), field)].into()).unwrap();
        assert!(Arc::ptr_eq(sys.phase_space(), &phase));
        assert!(sys.phase_space().same_as(&phase));
        let ts = HybridTimeSystem::new(0.0, vec![1.0, 2.0]).unwrap();
        assert!(ts.system().phase_space().is_finite());
    }

    #[test]
    fn field_region_must_match() {
        let phase = Arc::new(sawtooth_phase((0.0, 1.0)));
        let field = VectorField::parse(Region::unit(2), &["1", "1"]).unwrap();
        assert_eq!(
            HybridSystem::new(phase, [("*".to_string(), field)].into()).unwrap_err(),
            SystemError::FieldRegion("*".into())
        );
        let _ = SmoothMap::identity(Region::unit(1));
    }
}
