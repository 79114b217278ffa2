//! JSON spec files for systems and morphisms (`"format": "hybrid-cat/1"`).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hycat_core::{
    Expr, Graph, GraphMap, HDSMorphism, HyPhMorphism, HybridPhaseSpace, HybridSystem, Point,
    Region, Relation, RelationBody, SmoothMap, VectorField,
};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "hybrid-cat/1";

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("unsupported format `{0}`, expected `{FORMAT}`")]
    Format(String),
    #[error("{at}: {message}")]
    Invalid { at: String, message: String },
}

fn invalid(at: impl Into<String>, message: impl ToString) -> SpecError {
    SpecError::Invalid {
        at: at.into(),
        message: message.to_string(),
    }
}

/// A number given either as a JSON number or as a constant expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Value(f64),
    Text(String),
}

impl Num {
    pub fn value(&self, at: &str) -> Result<f64, SpecError> {
        match self {
            Num::Value(v) => Ok(*v),
            Num::Text(s) => {
                let e = Expr::parse(s, 0).map_err(|e| invalid(at, format!("`{s}`: {e}")))?;
                e.eval(&[]).map_err(|e| invalid(at, format!("`{s}`: {e}")))
            }
        }
    }
}

/// An expression given as a string, or a JSON number for a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExprText {
    Value(f64),
    Text(String),
}

impl ExprText {
    fn parse(&self, dim: usize, at: &str) -> Result<Expr, SpecError> {
        match self {
            ExprText::Value(v) => Ok(Expr::Const(*v)),
            ExprText::Text(s) => {
                Expr::parse(s, dim).map_err(|e| invalid(at, format!("`{s}`: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub id: String,
    pub src: String,
    pub tgt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: Vec<String>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
}

/// Exactly one of `finite` or `guard` + `reset`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    /// Pairs `[y, x]`: target point first, source point second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finite: Option<Vec<[Vec<Num>; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<Vec<[Num; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset: Option<Vec<ExprText>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub graph: GraphSpec,
    pub regions: IndexMap<String, Vec<[Num; 2]>>,
    pub fields: IndexMap<String, Vec<ExprText>>,
    #[serde(default)]
    pub relations: IndexMap<String, RelationSpec>,
}

fn region_of(bounds: &[[Num; 2]], at: &str) -> Result<Region, SpecError> {
    let b = bounds
        .iter()
        .map(|[lo, hi]| Ok((lo.value(at)?, hi.value(at)?)))
        .collect::<Result<Vec<_>, SpecError>>()?;
    Region::new(b).map_err(|e| invalid(at, e))
}

fn point_of(p: &[Num], at: &str) -> Result<Point, SpecError> {
    p.iter().map(|v| v.value(at)).collect()
}

fn bounds_spec(r: &Region) -> Vec<[Num; 2]> {
    r.bounds()
        .iter()
        .map(|&(lo, hi)| [Num::Value(lo), Num::Value(hi)])
        .collect()
}

fn exprs_spec(es: &[Expr]) -> Vec<ExprText> {
    es.iter()
        .map(|e| match e {
            Expr::Const(v) => ExprText::Value(*v),
            e => ExprText::Text(e.to_string()),
        })
        .collect()
}

fn check_format(f: &str) -> Result<(), SpecError> {
    if f == FORMAT {
        Ok(())
    } else {
        Err(SpecError::Format(f.to_string()))
    }
}

impl SystemSpec {
    pub fn build(&self) -> Result<HybridSystem, SpecError> {
        check_format(&self.format)?;
        let graph = Graph::new(
            self.graph.nodes.iter().cloned(),
            self.graph
                .edges
                .iter()
                .map(|e| (e.id.clone(), e.src.clone(), e.tgt.clone())),
        )
        .map_err(|e| invalid("graph", e))?;
        let mut regions = IndexMap::new();
        for (node, bounds) in &self.regions {
            regions.insert(node.clone(), region_of(bounds, &format!("regions.{node}"))?);
        }
        let mut relations = IndexMap::new();
        for (edge, rel) in &self.relations {
            let at = format!("relations.{edge}");
            let (src, tgt) = match (graph.src(edge), graph.tgt(edge)) {
                (Some(s), Some(t)) => (s, t),
                _ => return Err(invalid(at, "unknown edge")),
            };
            let (source, target) = match (regions.get(src), regions.get(tgt)) {
                (Some(s), Some(t)) => (Region::clone(s), Region::clone(t)),
                _ => return Err(invalid(at, "an endpoint has no region")),
            };
            let built = match (&rel.finite, &rel.guard, &rel.reset) {
                (Some(pairs), None, None) => {
                    let pairs = pairs
                        .iter()
                        .map(|[y, x]| Ok((point_of(y, &at)?, point_of(x, &at)?)))
                        .collect::<Result<Vec<_>, SpecError>>()?;
                    Relation::finite(source, target, pairs)
                }
                (None, Some(guard), Some(reset)) => {
                    let guard = region_of(guard, &at)?;
                    let comps = reset
                        .iter()
                        .map(|e| e.parse(source.dim(), &at))
                        .collect::<Result<Vec<_>, _>>()?;
                    let map = SmoothMap::new(guard.clone(), target.clone(), comps)
                        .map_err(|e| invalid(&at, e))?;
                    Relation::guard_reset(source, target, guard, map)
                }
                _ => {
                    return Err(invalid(
                        at,
                        "give either `finite` or both `guard` and `reset`",
                    ))
                }
            }
            .map_err(|e| invalid(&at, e))?;
            relations.insert(edge.clone(), built);
        }
        let mut fields = IndexMap::new();
        for (node, comps) in &self.fields {
            let at = format!("fields.{node}");
            let region = regions
                .get(node)
                .ok_or_else(|| invalid(&at, "node has no region"))?
                .clone();
            let comps = comps
                .iter()
                .map(|e| e.parse(region.dim(), &at))
                .collect::<Result<Vec<_>, _>>()?;
            fields.insert(
                node.clone(),
                VectorField::new(region, comps).map_err(|e| invalid(&at, e))?,
            );
        }
        let phase = HybridPhaseSpace::new(Arc::new(graph), regions, relations)
            .map_err(|e| invalid("system", e))?;
        HybridSystem::new(Arc::new(phase), fields).map_err(|e| invalid("system", e))
    }

    /// The spec describing `system`. Fails on relations given by predicates.
    pub fn from_system(system: &HybridSystem) -> Result<Self, SpecError> {
        let graph = system.graph();
        let relations = system
            .phase_space()
            .relations()
            .map(|(edge, rel)| {
                let spec = match rel.body() {
                    RelationBody::Finite(pairs) => RelationSpec {
                        finite: Some(
                            pairs
                                .iter()
                                .map(|(y, x)| {
                                    [
                                        y.iter().copied().map(Num::Value).collect(),
                                        x.iter().copied().map(Num::Value).collect(),
                                    ]
                                })
                                .collect(),
                        ),
                        ..Default::default()
                    },
                    RelationBody::GuardReset { guard, reset } => RelationSpec {
                        guard: Some(bounds_spec(guard)),
                        reset: Some(exprs_spec(reset.components())),
                        ..Default::default()
                    },
                    RelationBody::Predicate(_) => {
                        return Err(invalid(
                            format!("relations.{edge}"),
                            "predicate relations cannot be written out",
                        ))
                    }
                };
                Ok((edge.to_string(), spec))
            })
            .collect::<Result<IndexMap<_, _>, SpecError>>()?;
        Ok(Self {
            format: FORMAT.into(),
            description: None,
            graph: GraphSpec {
                nodes: graph.nodes().map(String::from).collect(),
                edges: graph
                    .edge_triples()
                    .map(|(id, src, tgt)| EdgeSpec {
                        id: id.into(),
                        src: src.into(),
                        tgt: tgt.into(),
                    })
                    .collect(),
            },
            regions: system
                .phase_space()
                .regions()
                .map(|(n, r)| (n.to_string(), bounds_spec(r)))
                .collect(),
            fields: system
                .fields()
                .map(|(n, f)| (n.to_string(), exprs_spec(f.components())))
                .collect(),
            relations,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphismSpec {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// System spec paths, relative to the morphism file.
    pub source: PathBuf,
    pub target: PathBuf,
    pub node_map: IndexMap<String, String>,
    #[serde(default)]
    pub edge_map: IndexMap<String, String>,
    /// Component expressions per source node, in the source node's coordinates.
    pub alpha: IndexMap<String, Vec<ExprText>>,
}

/// A loaded morphism file.
#[derive(Debug, Clone)]
pub struct LoadedMorphism {
    pub spec: MorphismSpec,
    pub source_path: PathBuf,
    pub target_path: PathBuf,
    pub morphism: HDSMorphism,
}

impl MorphismSpec {
    /// Build against already loaded systems.
    pub fn build(
        &self,
        source: Arc<HybridSystem>,
        target: Arc<HybridSystem>,
    ) -> Result<HDSMorphism, SpecError> {
        check_format(&self.format)?;
        let phi = GraphMap::new(
            source.graph().clone(),
            target.graph().clone(),
            &self.node_map,
            &self.edge_map,
        )
        .map_err(|e| invalid("node_map/edge_map", e))?;
        let mut alpha = IndexMap::new();
        for (node, comps) in &self.alpha {
            let at = format!("alpha.{node}");
            let dom = source
                .region(node)
                .ok_or_else(|| invalid(&at, "unknown source node"))?
                .clone();
            let cod = target.region(phi.node(node).unwrap()).unwrap().clone();
            let comps = comps
                .iter()
                .map(|e| e.parse(dom.dim(), &at))
                .collect::<Result<Vec<_>, _>>()?;
            alpha.insert(
                node.clone(),
                SmoothMap::new(dom, cod, comps).map_err(|e| invalid(&at, e))?,
            );
        }
        let base = HyPhMorphism::new(
            source.phase_space().clone(),
            target.phase_space().clone(),
            phi,
            alpha,
        )
        .map_err(|e| invalid("morphism", e))?;
        HDSMorphism::new(source, target, base).map_err(|e| invalid("morphism", e))
    }

    pub fn from_morphism(m: &HyPhMorphism, source: PathBuf, target: PathBuf) -> Self {
        Self {
            format: FORMAT.into(),
            description: None,
            source,
            target,
            node_map: m
                .phi()
                .node_pairs()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            edge_map: m
                .phi()
                .edge_pairs()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            alpha: m
                .alphas()
                .map(|(n, f)| (n.to_string(), exprs_spec(f.components())))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

fn read(path: &Path) -> Result<String, SpecError> {
    fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_system_spec(path: &Path) -> Result<SystemSpec, SpecError> {
    serde_json::from_str(&read(path)?).map_err(|source| SpecError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_system(path: &Path) -> Result<HybridSystem, SpecError> {
    load_system_spec(path)?.build()
}

pub fn load_morphism(path: &Path) -> Result<LoadedMorphism, SpecError> {
    let spec: MorphismSpec =
        serde_json::from_str(&read(path)?).map_err(|source| SpecError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    check_format(&spec.format)?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let (source_path, target_path) = (dir.join(&spec.source), dir.join(&spec.target));
    let source = Arc::new(load_system(&source_path)?);
    let target = if source_path == target_path {
        source.clone()
    } else {
        Arc::new(load_system(&target_path)?)
    };
    let morphism = spec.build(source, target)?;
    Ok(LoadedMorphism {
        spec,
        source_path,
        target_path,
        morphism,
    })
}
