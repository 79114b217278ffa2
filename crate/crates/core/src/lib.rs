//! Hybrid dynamical systems as labelled graphs: phase spaces, systems,
//! morphisms between them, and executions as morphisms out of time systems.

pub mod defaults;
pub mod execution;
pub mod expr;
pub mod field;
pub mod graph;
pub mod map;
pub mod morphism;
pub mod region;
pub mod relation;
pub mod system;

pub use execution::{
    simulate, Execution, ExecutionError, ExecutionReport, Policy, ScriptChoice, SimulateOptions,
    Simulation, SimulationStatus, TrajectoryRow,
};
pub use expr::{EvalError, Expr, ParseError};
pub use field::{integrate, Curve, CurveError, IntegrateError, VectorField};
pub use graph::{Graph, GraphError, GraphMap};
pub use map::{check_ds_morphism, DsReport, Jacobian, MapError, SmoothMap};
pub use morphism::{HDSMorphism, HyPhMorphism, MorphismError, MorphismReport, Tier};
pub use region::{GridSpec, Point, Region, RegionError};
pub use relation::{Guard, Relation, RelationBody, RelationError, SubrelationReport};
pub use system::{HybridPhaseSpace, HybridSystem, HybridTimeSystem, SystemError, Violation};
