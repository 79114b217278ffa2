//! Executions: morphisms from a hybrid time system into a hybrid system.
//! Validation, simulation with guard detection and branching, pushforward
//! along system morphisms, and CSV trajectories.

use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::defaults::{BISECTION_REL, CONTAINMENT_TOL, FLOW_DT_FLOOR, FLOW_SUBSTEPS, RESIDUAL_TOL};
use crate::field::{rk4_step, step_time, Curve, CurveError, VectorField};
use crate::graph::{Endpoint, Graph, GraphError, GraphMap};
use crate::map::MapError;
use crate::morphism::HDSMorphism;
use crate::region::{dist_inf, Point, Region};
use crate::system::{HybridSystem, HybridTimeSystem, SystemError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecutionError {
    #[error("structural mismatch: {0}")]
    StructuralMismatch(String),
    #[error("execution is not over the morphism's source system: {0}")]
    SourceMismatch(String),
    #[error("initial point {point:?} is outside the region {region} of node `{node}`")]
    OutOfDomain {
        node: String,
        point: Point,
        region: Region,
    },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid arguments: {0}")]
    InvalidArgument(String),
    #[error("script choice {index} does not match any option: {message}")]
    InvalidChoice { index: usize, message: String },
    #[error("bad trajectory CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// An execution: a time system, a graph map from its chain into the
/// system graph (the discrete states and edges), and one curve per chain
/// node spanning that node's interval.
#[derive(Debug, Clone)]
pub struct Execution {
    time: HybridTimeSystem,
    phi: GraphMap,
    curves: Vec<Curve>,
}

impl Execution {
    pub fn new(
        time: HybridTimeSystem,
        phi: GraphMap,
        curves: Vec<Curve>,
    ) -> Result<Self, ExecutionError> {
        if **phi.dom() != **time.system().graph() {
            return Err(ExecutionError::StructuralMismatch(
                "graph map does not start at the time chain".into(),
            ));
        }
        if curves.len() != time.times().len() {
            return Err(ExecutionError::StructuralMismatch(format!(
                "{} curves for {} chain nodes",
                curves.len(),
                time.times().len()
            )));
        }
        for (i, c) in curves.iter().enumerate() {
            let (lo, hi) = time.interval(i);
            if c.t0() != lo || c.t1() != hi {
                return Err(ExecutionError::StructuralMismatch(format!(
                    "curve {i} spans [{}, {}], its interval is [{lo}, {hi}]",
                    c.t0(),
                    c.t1()
                )));
            }
        }
        Ok(Self { time, phi, curves })
    }

    /// Build from consecutive segments `(node, curve)` and the edges taken
    /// between them. Times are read off the curves, which must abut.
    pub fn from_segments(
        graph: Arc<Graph>,
        segments: Vec<(String, Curve)>,
        edges: Vec<String>,
    ) -> Result<Self, ExecutionError> {
        if segments.is_empty() || edges.len() + 1 != segments.len() {
            return Err(ExecutionError::StructuralMismatch(format!(
                "{} segments with {} edges",
                segments.len(),
                edges.len()
            )));
        }
        for (i, w) in segments.windows(2).enumerate() {
            if w[0].1.t1() != w[1].1.t0() {
                return Err(ExecutionError::StructuralMismatch(format!(
                    "segment {} ends at {} but segment {} starts at {}",
                    i,
                    w[0].1.t1(),
                    i + 1,
                    w[1].1.t0()
                )));
            }
        }
        let t_minus = segments[0].1.t0();
        let times: Vec<f64> = segments.iter().map(|(_, c)| c.t1()).collect();
        let time = HybridTimeSystem::new(t_minus, times)?;
        let node_map: IndexMap<String, String> = segments
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (i.to_string(), n.clone()))
            .collect();
        let edge_map: IndexMap<String, String> = edges
            .into_iter()
            .enumerate()
            .map(|(i, e)| (i.to_string(), e))
            .collect();
        let phi = GraphMap::new(time.system().graph().clone(), graph, &node_map, &edge_map)?;
        let curves = segments.into_iter().map(|(_, c)| c).collect();
        Self::new(time, phi, curves)
    }

    pub fn time_system(&self) -> &HybridTimeSystem {
        &self.time
    }

    pub fn phi(&self) -> &GraphMap {
        &self.phi
    }

    /// The graph of the system the execution runs in.
    pub fn graph(&self) -> &Arc<Graph> {
        self.phi.cod()
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn segment_count(&self) -> usize {
        self.curves.len()
    }

    /// Discrete state of each segment.
    pub fn nodes(&self) -> Vec<&str> {
        (0..self.curves.len())
            .map(|i| self.phi.node(&i.to_string()).unwrap())
            .collect()
    }

    /// Edge taken at each jump.
    pub fn edges(&self) -> Vec<&str> {
        (0..self.curves.len() - 1)
            .map(|i| self.phi.edge(&i.to_string()).unwrap())
            .collect()
    }

    /// `t_0 .. t_{k-1}`.
    pub fn jump_times(&self) -> &[f64] {
        let times = self.time.times();
        &times[..times.len() - 1]
    }

    /// Check the execution clauses against `system`:
    /// 1. times nondecreasing;
    /// 2. each edge ends at the next segment's node;
    /// 3. each edge starts at its segment's node;
    /// 4. each curve lies in its region and follows the node's field;
    /// 5. consecutive endpoints are related by the edge relation.
    pub fn validate(
        &self,
        system: &HybridSystem,
        tol: f64,
    ) -> Result<ExecutionReport, ExecutionError> {
        if **self.graph() != **system.graph() {
            return Err(ExecutionError::StructuralMismatch(
                "execution runs in a different graph".into(),
            ));
        }
        let mut report = ExecutionReport::default();
        let mut prev = self.time.t_minus();
        for (i, &t) in self.time.times().iter().enumerate() {
            if !(prev <= t) {
                report.push(1, format!("time {i}"), format!("t = {t} precedes {prev}"));
            }
            prev = t;
        }
        for v in self.phi.validate() {
            let clause = match v.endpoint {
                Endpoint::Target => 2,
                Endpoint::Source => 3,
            };
            report.push(clause, format!("edge {}", v.edge), v.to_string());
        }
        for (i, (curve, node)) in self.curves.iter().zip(self.nodes()).enumerate() {
            let at = format!("segment {i}");
            let region = system.region(node).unwrap();
            if !curve.region().approx_eq(region, CONTAINMENT_TOL) {
                report.push(
                    4,
                    at.clone(),
                    format!(
                        "curve lives in {}, node `{node}` has {region}",
                        curve.region()
                    ),
                );
            }
            let outside: Vec<f64> = curve
                .samples()
                .iter()
                .filter(|(_, p)| !region.contains_unchecked(p, tol))
                .map(|(t, _)| *t)
                .collect();
            if let Some(t) = outside.first() {
                report.push(
                    4,
                    at.clone(),
                    format!(
                        "{} sample(s) outside {region}, first at t = {t}",
                        outside.len()
                    ),
                );
            }
            match flow_residual(curve, system.field(node).unwrap()) {
                Ok((r, t)) => {
                    report.max_flow_residual = report.max_flow_residual.max(r);
                    if r > tol {
                        report.push(
                            4,
                            at,
                            format!("flow residual {r:.3e} near t = {t} exceeds {tol:e}"),
                        );
                    }
                }
                Err(e) => report.push(4, at, format!("field evaluation failed: {e}")),
            }
        }
        for i in 0..self.curves.len() - 1 {
            let edge = self.phi.edge(&i.to_string()).unwrap();
            let (y, x) = (self.curves[i + 1].start(), self.curves[i].end());
            let rel = system.relation(edge).unwrap();
            if !rel.contains_pair(y, x, tol) {
                report.push(
                    5,
                    format!("edge {i}"),
                    format!("({y:?}, {x:?}) is not in the relation of `{edge}`"),
                );
            }
        }
        Ok(report)
    }

    /// Push the execution forward along a system morphism: compose the
    /// graph maps and map every curve sample through the node's component.
    pub fn pushforward(&self, m: &HDSMorphism) -> Result<Execution, ExecutionError> {
        let source = m.source();
        if **self.graph() != **source.graph() {
            return Err(ExecutionError::SourceMismatch("graphs differ".into()));
        }
        let mut curves = Vec::with_capacity(self.curves.len());
        for (i, (curve, node)) in self.curves.iter().zip(self.nodes()).enumerate() {
            if !curve
                .region()
                .approx_eq(source.region(node).unwrap(), CONTAINMENT_TOL)
            {
                return Err(ExecutionError::SourceMismatch(format!(
                    "segment {i} lives in {}, node `{node}` of the source has {}",
                    curve.region(),
                    source.region(node).unwrap()
                )));
            }
            let alpha = m.base().alpha(node).unwrap();
            curves.push(curve.map_points(alpha.cod().clone(), |x| alpha.eval_raw(x))?);
        }
        let phi = GraphMap::compose(m.base().phi(), &self.phi)?;
        Ok(Execution {
            time: self.time.clone(),
            phi,
            curves,
        })
    }

    /// Largest samplewise distance to `other`, or `None` when the two differ
    /// in times, states or sample layout.
    pub fn distance(&self, other: &Execution) -> Option<f64> {
        if self.time.times() != other.time.times()
            || self.time.t_minus() != other.time.t_minus()
            || self.nodes() != other.nodes()
            || self.edges() != other.edges()
        {
            return None;
        }
        let mut d: f64 = 0.0;
        for (a, b) in self.curves.iter().zip(&other.curves) {
            if a.samples().len() != b.samples().len() {
                return None;
            }
            for ((ta, pa), (tb, pb)) in a.samples().iter().zip(b.samples()) {
                if ta != tb || pa.len() != pb.len() {
                    return None;
                }
                d = d.max(dist_inf(pa, pb));
            }
        }
        Some(d)
    }

    /// One row per curve sample, ordered by segment then time.
    pub fn trajectory(&self) -> Vec<TrajectoryRow> {
        let nodes = self.nodes();
        self.curves
            .iter()
            .enumerate()
            .flat_map(|(i, c)| {
                let node = nodes[i];
                c.samples().iter().map(move |(t, x)| TrajectoryRow {
                    t: *t,
                    segment: i,
                    node: node.to_string(),
                    x: x.clone(),
                })
            })
            .collect()
    }

    /// Trajectory as CSV with header `t,segment,node,x1..xn`; floats carry
    /// 17 significant digits.
    pub fn to_csv(&self) -> String {
        let dim = self
            .curves
            .iter()
            .map(|c| c.region().dim())
            .max()
            .unwrap_or(0);
        let mut w = csv::WriterBuilder::new()
            .flexible(true)
            .from_writer(Vec::new());
        let mut header = vec!["t".to_string(), "segment".into(), "node".into()];
        header.extend((1..=dim).map(|i| format!("x{i}")));
        w.write_record(&header).expect("write to memory");
        for row in self.trajectory() {
            let mut rec = vec![fmt_float(row.t), row.segment.to_string(), row.node];
            rec.extend(row.x.iter().map(|&v| fmt_float(v)));
            w.write_record(&rec).expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 csv")
    }

    /// Read a trajectory CSV produced by [`to_csv`](Self::to_csv). The
    /// edge at each jump is the first edge between the two states whose
    /// relation contains the jump pair within `tol`, falling back to the
    /// first edge between them, then to the first edge out of the earlier
    /// state.
    pub fn from_csv(
        text: &str,
        system: &HybridSystem,
        tol: f64,
    ) -> Result<Execution, ExecutionError> {
        let bad = |m: String| ExecutionError::Csv(m);
        let mut r = csv::ReaderBuilder::new()
            .flexible(true)
            .from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.len() < 3 || &header[0] != "t" || &header[1] != "segment" || &header[2] != "node"
        {
            return Err(bad("header must start with t,segment,node".into()));
        }
        let mut segments: Vec<(String, Vec<(f64, Point)>)> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let at = |m: &str| bad(format!("row {}: {m}", line + 1));
            if rec.len() < 3 {
                return Err(at("too few fields"));
            }
            let t: f64 = rec[0].trim().parse().map_err(|_| at("bad time"))?;
            let seg: usize = rec[1].trim().parse().map_err(|_| at("bad segment index"))?;
            let node = rec[2].to_string();
            let region = system
                .region(&node)
                .ok_or_else(|| ExecutionError::UnknownNode(node.clone()))?;
            let x = (3..3 + region.dim())
                .map(|j| rec.get(j).and_then(|s| s.trim().parse::<f64>().ok()))
                .collect::<Option<Point>>()
                .ok_or_else(|| at("missing or bad coordinate"))?;
            if rec
                .iter()
                .skip(3 + region.dim())
                .any(|s| !s.trim().is_empty())
            {
                return Err(at("too many coordinates"));
            }
            match segments.len() {
                n if seg + 1 == n => {
                    if segments[n - 1].0 != node {
                        return Err(at("node changes within a segment"));
                    }
                    segments[n - 1].1.push((t, x));
                }
                n if seg == n => segments.push((node, vec![(t, x)])),
                _ => return Err(at("segment indices must be consecutive")),
            }
        }
        if segments.is_empty() {
            return Err(bad("no rows".into()));
        }
        let graph = system.graph();
        let curves = segments
            .into_iter()
            .map(|(node, samples)| {
                let region = system.region(&node).unwrap().clone();
                Ok((node, Curve::new(region, samples)?))
            })
            .collect::<Result<Vec<_>, ExecutionError>>()?;
        let mut edges = Vec::new();
        for w in curves.windows(2) {
            let ((a, ca), (b, cb)) = (&w[0], &w[1]);
            let between: Vec<&str> = graph
                .outgoing(a)
                .filter(|e| graph.tgt(e) == Some(b.as_str()))
                .collect();
            let pick = between
                .iter()
                .find(|e| {
                    system
                        .relation(e)
                        .unwrap()
                        .contains_pair(cb.start(), ca.end(), tol)
                })
                .or(between.first())
                .copied()
                .or_else(|| graph.outgoing(a).next())
                .ok_or_else(|| {
                    ExecutionError::StructuralMismatch(format!("node `{a}` has no outgoing edge"))
                })?;
            edges.push(pick.to_string());
        }
        Execution::from_segments(graph.clone(), curves, edges)
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Max over consecutive samples of the one-step flow defect: the distance
/// from the next sample to a reference integration started at the
/// previous one, divided by the time gap. Returns the residual and the
/// time where it is largest.
fn flow_residual(curve: &Curve, field: &VectorField) -> Result<(f64, f64), MapError> {
    let mut worst = (0.0, curve.t0());
    for w in curve.samples().windows(2) {
        let ((t0, x0), (t1, x1)) = (&w[0], &w[1]);
        let dt = t1 - t0;
        let mut x = x0.clone();
        for _ in 0..FLOW_SUBSTEPS {
            x = rk4_step(field, &x, dt / FLOW_SUBSTEPS as f64)?;
        }
        let r = dist_inf(&x, x1) / dt.max(FLOW_DT_FLOOR);
        if r > worst.0 {
            worst = (r, *t0);
        }
    }
    Ok(worst)
}

/// One failed clause of the execution definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionViolation {
    pub clause: u8,
    pub at: String,
    pub message: String,
}

impl fmt::Display for ExecutionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "clause {} at {}: {}", self.clause, self.at, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecutionReport {
    pub violations: Vec<ExecutionViolation>,
    pub max_flow_residual: f64,
}

impl ExecutionReport {
    fn push(&mut self, clause: u8, at: String, message: String) {
        self.violations.push(ExecutionViolation {
            clause,
            at,
            message,
        });
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn clause(&self, clause: u8) -> impl Iterator<Item = &ExecutionViolation> {
        self.violations.iter().filter(move |v| v.clause == clause)
    }
}

/// A single row of an exported trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub segment: usize,
    pub node: String,
    pub x: Point,
}

/// A choice made at a choice point when following a script.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptChoice {
    /// Jump along `edge`, to `target` or to the first related point.
    Jump { edge: String, target: Option<Point> },
    /// Keep flowing inside the guard.
    Continue,
}

/// How choice points are resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Jump at the first guard entry, along the first enabled edge, to the
    /// first related point.
    FirstGuard,
    /// Explore every jump and the option to keep flowing, depth first.
    Exhaustive,
    /// Follow the given choices in order.
    Script(Vec<ScriptChoice>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub node: String,
    pub x0: Point,
    pub t_minus: f64,
    pub horizon: f64,
    pub step: f64,
    pub policy: Policy,
    pub max_jumps: usize,
    pub max_branches: usize,
}

impl SimulateOptions {
    pub fn new(node: impl Into<String>, x0: Point, t_minus: f64, horizon: f64, step: f64) -> Self {
        Self {
            node: node.into(),
            x0,
            t_minus,
            horizon,
            step,
            policy: Policy::FirstGuard,
            max_jumps: 1000,
            max_branches: 64,
        }
    }

    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationStatus {
    /// Reached the horizon.
    Completed,
    /// Stopped at a choice point after `max_jumps` jumps.
    Truncated,
    /// The flow left the region with no jump enabled.
    Blocked,
    /// A choice point was reached after the script ran out.
    ScriptExhausted,
}

impl fmt::Display for SimulationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimulationStatus::Completed => "COMPLETED",
            SimulationStatus::Truncated => "TRUNCATED",
            SimulationStatus::Blocked => "BLOCKED",
            SimulationStatus::ScriptExhausted => "SCRIPT_EXHAUSTED",
        })
    }
}

/// One simulated branch.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub execution: Execution,
    pub status: SimulationStatus,
    /// Index of the option taken at each choice point.
    pub choices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum Choice {
    Jump { edge: String, target: Point },
    Continue,
}

enum Stop {
    Horizon,
    Blocked,
    Choice(Vec<Choice>),
}

#[derive(Debug, Clone)]
struct Branch {
    segments: Vec<(String, Curve)>,
    edges: Vec<String>,
    node: String,
    samples: Vec<(f64, Point)>,
    anchor: f64,
    k: usize,
    continuing: bool,
    jumps: usize,
    choices: Vec<usize>,
}

impl Branch {
    fn last(&self) -> &(f64, Point) {
        self.samples.last().unwrap()
    }

    /// Append a sample, overwriting the last one when time did not advance.
    fn push(&mut self, t: f64, x: Point) {
        let last = self.samples.last_mut().unwrap();
        if t > last.0 {
            self.samples.push((t, x));
        } else {
            last.1 = x;
        }
    }

    fn finish(
        mut self,
        system: &HybridSystem,
        status: SimulationStatus,
    ) -> Result<Simulation, ExecutionError> {
        let region = system.region(&self.node).unwrap().clone();
        let curve = Curve::new(region, std::mem::take(&mut self.samples))?;
        self.segments.push((self.node, curve));
        let execution =
            Execution::from_segments(system.graph().clone(), self.segments, self.edges)?;
        Ok(Simulation {
            execution,
            status,
            choices: self.choices,
        })
    }

    fn apply(
        &mut self,
        system: &HybridSystem,
        index: usize,
        choice: Choice,
    ) -> Result<(), ExecutionError> {
        self.choices.push(index);
        let t = self.last().0;
        match choice {
            Choice::Jump { edge, target } => {
                let region = system.region(&self.node).unwrap().clone();
                let curve = Curve::new(region, std::mem::take(&mut self.samples))?;
                let next = system.graph().tgt(&edge).unwrap().to_string();
                self.segments
                    .push((std::mem::replace(&mut self.node, next), curve));
                self.edges.push(edge);
                self.samples = vec![(t, target)];
                self.jumps += 1;
                self.continuing = false;
            }
            Choice::Continue => self.continuing = true,
        }
        self.anchor = t;
        self.k = 0;
        Ok(())
    }
}

/// Jump options at `x`: every outgoing edge in order, with each related
/// point in order.
fn jump_options(system: &HybridSystem, node: &str, x: &[f64]) -> Vec<Choice> {
    let graph = system.graph();
    graph
        .outgoing(node)
        .flat_map(|e| {
            system
                .relation(e)
                .unwrap()
                .related_unchecked(x, CONTAINMENT_TOL)
                .into_iter()
                .map(move |y| Choice::Jump {
                    edge: e.to_string(),
                    target: y,
                })
        })
        .collect()
}

/// Bisect on `[lo, hi]` between a `false` end and a `true` end of `pred`
/// until the bracket is below `res`. Returns the final bracket.
fn bisect(mut lo: f64, mut hi: f64, res: f64, pred: impl Fn(f64) -> bool) -> (f64, f64) {
    while hi - lo > res {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// Integrate the current segment until the horizon, a choice point, or the
/// flow leaving the region.
fn advance(branch: &mut Branch, system: &HybridSystem, opts: &SimulateOptions) -> Stop {
    let field = system.field(&branch.node).unwrap();
    let region = system.region(&branch.node).unwrap();
    let node = branch.node.clone();
    let options = |x: &[f64]| jump_options(system, &node, x);
    let with_continue = |mut v: Vec<Choice>| {
        v.push(Choice::Continue);
        v
    };
    {
        let (t, x) = branch.last();
        if !branch.continuing && *t < opts.horizon {
            let here = options(x);
            if !here.is_empty() {
                return Stop::Choice(with_continue(here));
            }
        }
    }
    loop {
        let (t, x) = branch.last().clone();
        if t >= opts.horizon {
            return Stop::Horizon;
        }
        branch.k += 1;
        let t_next = step_time(branch.anchor, opts.horizon, opts.step, branch.k);
        let h = t_next - t;
        let res = BISECTION_REL * h;
        let flow = |s: f64| rk4_step(field, &x, s).ok();
        let Some(x_next) = flow(h) else {
            return Stop::Blocked;
        };
        if !region.contains_unchecked(&x_next, 0.0) {
            let inside = |s: f64| flow(s).is_some_and(|p| region.contains_unchecked(&p, 0.0));
            let (s_in, _) = bisect(0.0, h, res, |s| !inside(s));
            if branch.continuing && s_in <= res {
                return Stop::Blocked;
            }
            let x_in = flow(s_in).unwrap_or_else(|| x.clone());
            let here = options(&x_in);
            if here.is_empty() {
                branch.push(t + s_in, x_in);
                return Stop::Blocked;
            }
            if branch.continuing {
                branch.push(t + s_in, x_in);
                return Stop::Choice(with_continue(here));
            }
            let (_, s_e) = bisect(0.0, s_in, res, |s| {
                flow(s).is_some_and(|p| !options(&p).is_empty())
            });
            let x_e = flow(s_e).unwrap_or(x_in);
            let here = options(&x_e);
            branch.push(t + s_e, x_e);
            return Stop::Choice(with_continue(here));
        }
        let next_options = options(&x_next);
        if next_options.is_empty() {
            branch.push(t_next, x_next);
            branch.continuing = false;
            continue;
        }
        if branch.continuing {
            branch.push(t_next, x_next);
            if t_next < opts.horizon {
                return Stop::Choice(with_continue(next_options));
            }
            return Stop::Horizon;
        }
        let (_, s_e) = bisect(0.0, h, res, |s| {
            flow(s).is_some_and(|p| !options(&p).is_empty())
        });
        let (t_e, x_e) = if s_e >= h {
            (t_next, x_next)
        } else {
            (t + s_e, flow(s_e).unwrap())
        };
        let here = options(&x_e);
        branch.push(t_e, x_e);
        if t_e < opts.horizon {
            return Stop::Choice(with_continue(here));
        }
        return Stop::Horizon;
    }
}

fn match_script(
    index: usize,
    choice: &ScriptChoice,
    options: &[Choice],
) -> Result<usize, ExecutionError> {
    let found = match choice {
        ScriptChoice::Continue => options.iter().position(|o| *o == Choice::Continue),
        ScriptChoice::Jump { edge, target } => options.iter().position(|o| match o {
            Choice::Jump { edge: e, target: y } => {
                e == edge
                    && target
                        .as_ref()
                        .is_none_or(|p| p.len() == y.len() && dist_inf(p, y) <= RESIDUAL_TOL)
            }
            Choice::Continue => false,
        }),
    };
    found.ok_or_else(|| {
        let available: Vec<String> = options
            .iter()
            .map(|o| match o {
                Choice::Jump { edge, target } => format!("jump {edge} -> {target:?}"),
                Choice::Continue => "continue".into(),
            })
            .collect();
        ExecutionError::InvalidChoice {
            index,
            message: format!("{choice:?}; available: {}", available.join(", ")),
        }
    })
}

/// Simulate `system` from `(opts.node, opts.x0)` at time `opts.t_minus` up
/// to `opts.horizon`. Branches come back in lexicographic order of their
/// choice sequences.
pub fn simulate(
    system: &HybridSystem,
    opts: &SimulateOptions,
) -> Result<Vec<Simulation>, ExecutionError> {
    let region = system
        .region(&opts.node)
        .ok_or_else(|| ExecutionError::UnknownNode(opts.node.clone()))?;
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(ExecutionError::InvalidArgument(format!(
            "step must be positive, got {}",
            opts.step
        )));
    }
    if !(opts.t_minus.is_finite() && opts.horizon.is_finite() && opts.t_minus <= opts.horizon) {
        return Err(ExecutionError::InvalidArgument(format!(
            "need a finite horizon {} at or after the start {}",
            opts.horizon, opts.t_minus
        )));
    }
    if opts.max_branches == 0 {
        return Err(ExecutionError::InvalidArgument(
            "max_branches must be at least 1".into(),
        ));
    }
    if !region.contains(&opts.x0, CONTAINMENT_TOL).unwrap_or(false) {
        return Err(ExecutionError::OutOfDomain {
            node: opts.node.clone(),
            point: opts.x0.clone(),
            region: region.clone(),
        });
    }
    let root = Branch {
        segments: Vec::new(),
        edges: Vec::new(),
        node: opts.node.clone(),
        samples: vec![(opts.t_minus, opts.x0.clone())],
        anchor: opts.t_minus,
        k: 0,
        continuing: false,
        jumps: 0,
        choices: Vec::new(),
    };
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(mut branch) = stack.pop() {
        if out.len() >= opts.max_branches {
            break;
        }
        loop {
            let options = match advance(&mut branch, system, opts) {
                Stop::Horizon => {
                    out.push(branch.finish(system, SimulationStatus::Completed)?);
                    break;
                }
                Stop::Blocked => {
                    out.push(branch.finish(system, SimulationStatus::Blocked)?);
                    break;
                }
                Stop::Choice(options) => options,
            };
            if branch.jumps >= opts.max_jumps {
                out.push(branch.finish(system, SimulationStatus::Truncated)?);
                break;
            }
            match &opts.policy {
                Policy::FirstGuard => {
                    let first = options.into_iter().next().unwrap();
                    branch.apply(system, 0, first)?;
                }
                Policy::Script(script) => {
                    let index = branch.choices.len();
                    let Some(choice) = script.get(index) else {
                        out.push(branch.finish(system, SimulationStatus::ScriptExhausted)?);
                        break;
                    };
                    let pick = match_script(index, choice, &options)?;
                    branch.apply(system, pick, options[pick].clone())?;
                }
                Policy::Exhaustive => {
                    for (i, o) in options.into_iter().enumerate().rev() {
                        let mut child = branch.clone();
                        child.apply(system, i, o)?;
                        stack.push(child);
                    }
                    break;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::Relation;
    use crate::system::HybridPhaseSpace;

    fn sawtooth() -> HybridSystem {
        let graph = Arc::new(Graph::from_strs(&["*"], &[("gamma", "*", "*")]).unwrap());
        let r = Region::unit(1);
        let rel = Relation::finite(r.clone(), r.clone(), vec![(vec![0.0], vec![1.0])]).unwrap();
        let phase = HybridPhaseSpace::new(
            graph,
            [("*".into(), r.clone())].into(),
            [("gamma".into(), rel)].into(),
        )
        .unwrap();
        let field = VectorField::parse(r, &["1"]).unwrap();
        HybridSystem::new(Arc::new(phase), [("*".into(), field)].into()).unwrap()
    }

    fn analytic(k: usize, shift_last: f64) -> Execution {
        let sys = sawtooth();
        let segments = (0..=k)
            .map(|i| {
                let s = if i == k { shift_last } else { 0.0 };
                let c = Curve::from_fn(Region::unit(1), i as f64, (i + 1) as f64, 100, |t| {
                    vec![t - i as f64 + s]
                });
                ("*".to_string(), c.unwrap())
            })
            .collect();
        Execution::from_segments(sys.graph().clone(), segments, vec!["gamma".into(); k]).unwrap()
    }

    #[test]
    fn analytic_sawtooth_is_valid() {
        let report = analytic(2, 0.0).validate(&sawtooth(), 1e-6).unwrap();
        assert!(report.is_valid(), "{:?}", report.violations);
        assert!(report.max_flow_residual < 1e-9);
    }

    #[test]
    fn shifted_segment_breaks_the_jump() {
        let report = analytic(2, 0.1).validate(&sawtooth(), 1e-6).unwrap();
        let jumps: Vec<_> = report.clause(5).collect();
        assert_eq!(jumps.len(), 1);
        assert_eq!(jumps[0].at, "edge 1");
    }

    #[test]
    fn zero_jump_execution() {
        let sys = sawtooth();
        let curve =
            crate::field::integrate(sys.field("*").unwrap(), &[0.2], 0.0, 0.5, 1e-2).unwrap();
        let e = Execution::from_segments(sys.graph().clone(), vec![("*".into(), curve)], vec![])
            .unwrap();
        assert!(e.validate(&sys, 1e-6).unwrap().is_valid());
    }

    #[test]
    fn simulated_sawtooth() {
        let sys = sawtooth();
        let runs = simulate(&sys, &SimulateOptions::new("*", vec![0.0], 0.0, 3.5, 1e-3)).unwrap();
        assert_eq!(runs.len(), 1);
        let e = &runs[0].execution;
        assert_eq!(runs[0].status, SimulationStatus::Completed);
        assert_eq!(e.segment_count(), 4);
        for (t, want) in e.jump_times().iter().zip([1.0, 2.0, 3.0]) {
            assert!((t - want).abs() < 1e-8, "{t}");
        }
        assert!(e.validate(&sys, 1e-6).unwrap().is_valid());
    }

    #[test]
    fn point_execution_at_horizon() {
        let sys = sawtooth();
        let runs = simulate(&sys, &SimulateOptions::new("*", vec![0.3], 1.0, 1.0, 1e-3)).unwrap();
        assert_eq!(runs[0].execution.trajectory().len(), 1);
        assert_eq!(runs[0].status, SimulationStatus::Completed);
    }

    #[test]
    fn blocked_without_guard() {
        let graph = Arc::new(Graph::from_strs(&["a"], &[]).unwrap());
        let phase = HybridPhaseSpace::new(
            graph,
            [("a".into(), Region::unit(1))].into(),
            IndexMap::new(),
        )
        .unwrap();
        let field = VectorField::parse(Region::unit(1), &["1"]).unwrap();
        let sys = HybridSystem::new(Arc::new(phase), [("a".into(), field)].into()).unwrap();
        let runs = simulate(&sys, &SimulateOptions::new("a", vec![0.5], 0.0, 2.0, 1e-2)).unwrap();
        assert_eq!(runs[0].status, SimulationStatus::Blocked);
        let e = &runs[0].execution;
        assert!((e.curves()[0].t1() - 0.5).abs() < 1e-9);
        assert!(e.validate(&sys, 1e-6).unwrap().is_valid());
    }

    #[test]
    fn out_of_domain_start() {
        let err = simulate(
            &sawtooth(),
            &SimulateOptions::new("*", vec![5.0], 0.0, 1.0, 1e-3),
        )
        .unwrap_err();
        assert!(matches!(err, ExecutionError::OutOfDomain { .. }));
    }

    #[test]
    fn max_jumps_truncates() {
        let mut opts = SimulateOptions::new("*", vec![0.0], 0.0, 3.5, 1e-3);
        opts.max_jumps = 2;
        let runs = simulate(&sawtooth(), &opts).unwrap();
        assert_eq!(runs[0].status, SimulationStatus::Truncated);
        assert_eq!(runs[0].execution.jump_times().len(), 2);
    }

    #[test]
    fn exhaustive_branches_are_ordered_and_valid() {
        let sys = sawtooth();
        let mut opts =
            SimulateOptions::new("*", vec![0.5], 0.0, 2.2, 1e-2).with_policy(Policy::Exhaustive);
        opts.max_branches = 10;
        let runs = simulate(&sys, &opts).unwrap();
        assert!(!runs.is_empty() && runs.len() <= 10);
        assert!(runs.windows(2).all(|w| w[0].choices < w[1].choices));
        for r in &runs {
            assert!(r.execution.validate(&sys, 1e-6).unwrap().is_valid());
        }
        assert!(runs.iter().any(|r| r.status == SimulationStatus::Blocked));
    }

    #[test]
    fn script_choices() {
        let sys = sawtooth();
        let script = vec![ScriptChoice::Jump {
            edge: "gamma".into(),
            target: Some(vec![0.0]),
        }];
        let opts = SimulateOptions::new("*", vec![0.0], 0.0, 1.5, 1e-3)
            .with_policy(Policy::Script(script));
        let runs = simulate(&sys, &opts).unwrap();
        assert_eq!(runs[0].status, SimulationStatus::Completed);
        assert_eq!(runs[0].execution.segment_count(), 2);
        let bad = vec![ScriptChoice::Jump {
            edge: "nope".into(),
            target: None,
        }];
        let opts =
            SimulateOptions::new("*", vec![0.0], 0.0, 1.5, 1e-3).with_policy(Policy::Script(bad));
        assert!(matches!(
            simulate(&sys, &opts),
            Err(ExecutionError::InvalidChoice { index: 0, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let sys = sawtooth();
        let e = analytic(2, 0.0);
        let text = e.to_csv();
        assert!(text.starts_with("t,segment,node,x1\n"));
        let back = Execution::from_csv(&text, &sys, 1e-6).unwrap();
        assert_eq!(back.distance(&e), Some(0.0));
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn trajectory_rows_show_the_resets() {
        let rows = analytic(2, 0.0).trajectory();
        let at_one: Vec<_> = rows.iter().filter(|r| r.t == 1.0).collect();
        assert_eq!(at_one.len(), 2);
        assert_eq!((at_one[0].x[0], at_one[1].x[0]), (1.0, 0.0));
    }

    #[test]
    fn pushforward_along_identity() {
        let sys = Arc::new(sawtooth());
        let e = analytic(2, 0.0);
        let pushed = e.pushforward(&HDSMorphism::identity(sys.clone())).unwrap();
        assert_eq!(pushed.distance(&e), Some(0.0));
        assert!(pushed.validate(&sys, 1e-6).unwrap().is_valid());
    }
}
