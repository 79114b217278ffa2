//! Set-theoretic relations `R ⊂ Y × X` between regions, read as generalized
//! maps from the source `X` to the target `Y`. Pairs are always written
//! `(y, x)`: target first.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::defaults::{CONTAINMENT_TOL, WITNESS_CAP};
use crate::map::{MapError, SmoothMap};
use crate::region::{dist_inf, GridSpec, Point, Region};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelationError {
    #[error("region mismatch: {0}")]
    RegionMismatch(String),
    #[error("point {point:?} lies outside the source region {region}")]
    OutOfDomain { point: Point, region: Region },
    #[error("pair {index}: expected dimensions ({ty}, {tx}), got ({gy}, {gx})")]
    PairDimension {
        index: usize,
        ty: usize,
        tx: usize,
        gy: usize,
        gx: usize,
    },
    #[error(transparent)]
    Map(#[from] MapError),
}

type MemberFn = dyn Fn(&[f64], &[f64], f64) -> bool + Send + Sync;
type WitnessFn = dyn Fn(&[f64], f64) -> Vec<Point> + Send + Sync;

/// A relation given by a membership test plus a witness generator.
///
/// `witnesses(x, tol)` returns candidate targets related to `x`; `support`
/// is the finite sample of the guard used wherever the relation must be
/// enumerated.
#[derive(Clone)]
pub struct Predicate {
    member: Arc<MemberFn>,
    witnesses: Arc<WitnessFn>,
    support: Vec<Point>,
}

impl Predicate {
    pub fn new(
        member: impl Fn(&[f64], &[f64], f64) -> bool + Send + Sync + 'static,
        witnesses: impl Fn(&[f64], f64) -> Vec<Point> + Send + Sync + 'static,
        support: Vec<Point>,
    ) -> Self {
        Self {
            member: Arc::new(member),
            witnesses: Arc::new(witnesses),
            support,
        }
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Predicate")
            .field("support", &self.support.len())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum RelationBody {
    /// Explicit `(y, x)` pairs.
    Finite(Vec<(Point, Point)>),
    /// `{(reset(x), x) : x ∈ guard}`.
    GuardReset {
        guard: Region,
        reset: SmoothMap,
    },
    Predicate(Predicate),
}

/// The projection of a relation to its source, in the body's native form.
#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    Box(Region),
    Points(Vec<Point>),
    Sampled(Vec<Point>),
}

impl Guard {
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Guard::Box(r) => r.dim() == x.len() && r.contains_unchecked(x, tol),
            Guard::Points(ps) | Guard::Sampled(ps) => ps.iter().any(|p| dist_inf(p, x) <= tol),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Guard::Points(p) | Guard::Sampled(p) if p.is_empty())
    }

    /// Finite sample: the points themselves, or the box grid.
    pub fn samples(&self, grid: GridSpec) -> Vec<Point> {
        match self {
            Guard::Box(r) => r.grid(grid),
            Guard::Points(ps) | Guard::Sampled(ps) => ps.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Relation {
    source: Region,
    target: Region,
    body: RelationBody,
}

impl Relation {
    /// Finite relation. Pair dimensions are checked here; containment of the
    /// pairs in the regions is reported by [`Relation::validate`].
    pub fn finite(
        source: Region,
        target: Region,
        pairs: Vec<(Point, Point)>,
    ) -> Result<Self, RelationError> {
        for (index, (y, x)) in pairs.iter().enumerate() {
            if y.len() != target.dim() || x.len() != source.dim() {
                return Err(RelationError::PairDimension {
                    index,
                    ty: target.dim(),
                    tx: source.dim(),
                    gy: y.len(),
                    gx: x.len(),
                });
            }
        }
        Ok(Self {
            source,
            target,
            body: RelationBody::Finite(pairs),
        })
    }

    pub fn empty(source: Region, target: Region) -> Self {
        Self {
            source,
            target,
            body: RelationBody::Finite(Vec::new()),
        }
    }

    pub fn guard_reset(
        source: Region,
        target: Region,
        guard: Region,
        reset: SmoothMap,
    ) -> Result<Self, RelationError> {
        if guard.dim() != source.dim() {
            return Err(RelationError::RegionMismatch(format!(
                "guard {guard} has a different dimension than source {source}"
            )));
        }
        if !reset.dom().approx_eq(&guard, CONTAINMENT_TOL) {
            return Err(RelationError::RegionMismatch(format!(
                "reset domain {} differs from guard {guard}",
                reset.dom()
            )));
        }
        if !reset.cod().approx_eq(&target, CONTAINMENT_TOL) {
            return Err(RelationError::RegionMismatch(format!(
                "reset codomain {} differs from target {target}",
                reset.cod()
            )));
        }
        Ok(Self {
            source,
            target,
            body: RelationBody::GuardReset { guard, reset },
        })
    }

    pub fn predicate(source: Region, target: Region, predicate: Predicate) -> Self {
        Self {
            source,
            target,
            body: RelationBody::Predicate(predicate),
        }
    }

    /// `graph(f) = {(f(x), x)}`.
    pub fn graph_of(f: &SmoothMap) -> Self {
        Self {
            source: f.dom().clone(),
            target: f.cod().clone(),
            body: RelationBody::GuardReset {
                guard: f.dom().clone(),
                reset: f.clone(),
            },
        }
    }

    pub fn source(&self) -> &Region {
        &self.source
    }

    pub fn target(&self) -> &Region {
        &self.target
    }

    pub fn body(&self) -> &RelationBody {
        &self.body
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.body, RelationBody::Finite(_))
    }

    pub fn pairs(&self) -> Option<&[(Point, Point)]> {
        match &self.body {
            RelationBody::Finite(p) => Some(p),
            _ => None,
        }
    }

    /// The domain (guard) of the relation.
    pub fn domain(&self) -> Guard {
        match &self.body {
            RelationBody::Finite(pairs) => {
                let mut xs: Vec<Point> = Vec::new();
                for (_, x) in pairs {
                    if !xs.contains(x) {
                        xs.push(x.clone());
                    }
                }
                Guard::Points(xs)
            }
            RelationBody::GuardReset { guard, .. } => Guard::Box(guard.clone()),
            RelationBody::Predicate(p) => Guard::Sampled(p.support.clone()),
        }
    }

    /// All `y` with `(y, x) ∈ R` up to `tol`. Errors when `x` is outside the
    /// source region.
    pub fn related(&self, x: &[f64], tol: f64) -> Result<Vec<Point>, RelationError> {
        if !self.source.contains(x, tol).map_err(MapError::from)? {
            return Err(RelationError::OutOfDomain {
                point: x.to_vec(),
                region: self.source.clone(),
            });
        }
        Ok(self.related_unchecked(x, tol))
    }

    pub(crate) fn related_unchecked(&self, x: &[f64], tol: f64) -> Vec<Point> {
        match &self.body {
            RelationBody::Finite(pairs) => pairs
                .iter()
                .filter(|(_, px)| dist_inf(px, x) <= tol)
                .map(|(y, _)| y.clone())
                .collect(),
            RelationBody::GuardReset { guard, reset } => {
                if guard.contains_unchecked(x, tol) {
                    // Clamp into the guard so that tolerance-level overshoot
                    // does not fail the reset's own domain check.
                    let clamped: Point = x
                        .iter()
                        .zip(guard.bounds())
                        .map(|(v, &(lo, hi))| v.clamp(lo, hi))
                        .collect();
                    reset
                        .eval_raw(&clamped)
                        .map(|y| vec![y])
                        .unwrap_or_default()
                } else {
                    Vec::new()
                }
            }
            RelationBody::Predicate(p) => (p.witnesses)(x, tol)
                .into_iter()
                .filter(|y| (p.member)(y, x, tol))
                .take(WITNESS_CAP)
                .collect(),
        }
    }

    /// `(y, x) ∈ R` up to `tol` (max norm).
    pub fn contains_pair(&self, y: &[f64], x: &[f64], tol: f64) -> bool {
        if y.len() != self.target.dim() || x.len() != self.source.dim() {
            return false;
        }
        match &self.body {
            RelationBody::Finite(pairs) => pairs
                .iter()
                .any(|(py, px)| dist_inf(px, x) <= tol && dist_inf(py, y) <= tol),
            RelationBody::GuardReset { .. } => self
                .related_unchecked(x, tol)
                .iter()
                .any(|r| dist_inf(r, y) <= tol),
            RelationBody::Predicate(p) => (p.member)(y, x, tol),
        }
    }

    /// Pairs of the relation to enumerate when checking inclusions: all pairs
    /// for finite bodies, guard samples with their targets otherwise.
    pub fn enumerate_pairs(&self, grid: GridSpec, tol: f64) -> Vec<(Point, Point)> {
        match &self.body {
            RelationBody::Finite(pairs) => pairs.clone(),
            _ => self
                .domain()
                .samples(grid)
                .into_iter()
                .flat_map(|x| {
                    self.related_unchecked(&x, tol)
                        .into_iter()
                        .map(move |y| (y, x.clone()))
                })
                .collect(),
        }
    }

    /// Containment problems: pairs or guards outside the regions, resets
    /// leaving the target on the guard grid.
    pub fn validate(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        match &self.body {
            RelationBody::Finite(pairs) => {
                for (i, (y, x)) in pairs.iter().enumerate() {
                    if !self.source.contains_unchecked(x, tol) {
                        out.push(format!(
                            "pair {i}: source point {x:?} outside {}",
                            self.source
                        ));
                    }
                    if !self.target.contains_unchecked(y, tol) {
                        out.push(format!(
                            "pair {i}: target point {y:?} outside {}",
                            self.target
                        ));
                    }
                }
            }
            RelationBody::GuardReset { guard, reset } => {
                if !guard.is_subbox_of(&self.source, tol) {
                    out.push(format!("guard {guard} is not contained in {}", self.source));
                }
                for (x, err) in reset
                    .grid_violations(GridSpec::default(), tol)
                    .into_iter()
                    .take(5)
                {
                    out.push(format!("reset at {x:?}: {err}"));
                }
            }
            RelationBody::Predicate(p) => {
                for x in p
                    .support
                    .iter()
                    .filter(|x| !self.source.contains_unchecked(x, tol))
                {
                    out.push(format!("support point {x:?} outside {}", self.source));
                }
            }
        }
        out
    }

    /// Structural equality; predicate bodies compare by identity.
    pub fn same_as(&self, other: &Relation) -> bool {
        self.source == other.source
            && self.target == other.target
            && match (&self.body, &other.body) {
                (RelationBody::Finite(a), RelationBody::Finite(b)) => a == b,
                (
                    RelationBody::GuardReset {
                        guard: g1,
                        reset: r1,
                    },
                    RelationBody::GuardReset {
                        guard: g2,
                        reset: r2,
                    },
                ) => g1 == g2 && r1 == r2,
                (RelationBody::Predicate(a), RelationBody::Predicate(b)) => {
                    Arc::ptr_eq(&a.member, &b.member)
                }
                _ => false,
            }
    }

    /// `S ∘ R` for `R ⊂ Y × X` (self is `S ⊂ Z × Y`).
    pub fn compose(s: &Relation, r: &Relation, tol: f64) -> Result<Relation, RelationError> {
        if !r.target.approx_eq(&s.source, tol.max(CONTAINMENT_TOL)) {
            return Err(RelationError::RegionMismatch(format!(
                "target {} of the inner relation differs from source {} of the outer",
                r.target, s.source
            )));
        }
        let (source, target) = (r.source.clone(), s.target.clone());
        match (&s.body, &r.body) {
            (RelationBody::Finite(sp), RelationBody::Finite(rp)) => {
                let mut pairs: Vec<(Point, Point)> = Vec::new();
                for (y_r, x) in rp {
                    for (z, y_s) in sp {
                        if dist_inf(y_r, y_s) <= tol {
                            let pair = (z.clone(), x.clone());
                            if !pairs.contains(&pair) {
                                pairs.push(pair);
                            }
                        }
                    }
                }
                Ok(Relation {
                    source,
                    target,
                    body: RelationBody::Finite(pairs),
                })
            }
            (
                RelationBody::GuardReset {
                    guard: guard_s,
                    reset: reset_s,
                },
                RelationBody::GuardReset {
                    guard: guard_r,
                    reset: reset_r,
                },
            ) => {
                let closes = guard_r.standard_grid().iter().all(|x| {
                    reset_r
                        .eval_raw(x)
                        .is_ok_and(|y| guard_s.contains_unchecked(&y, tol))
                });
                if closes {
                    let outer = SmoothMap::new(
                        guard_s.clone(),
                        reset_s.cod().clone(),
                        reset_s.components().to_vec(),
                    )?;
                    let inner = SmoothMap::new(
                        guard_r.clone(),
                        guard_s.clone(),
                        reset_r.components().to_vec(),
                    )?;
                    let reset = SmoothMap::compose(&outer, &inner)?;
                    Ok(Relation {
                        source,
                        target,
                        body: RelationBody::GuardReset {
                            guard: guard_r.clone(),
                            reset,
                        },
                    })
                } else {
                    Ok(Self::witness_composite(s, r, tol))
                }
            }
            _ => Ok(Self::witness_composite(s, r, tol)),
        }
    }

    /// `S ∘ R` as a predicate: `(z, x)` is related when some middle witness
    /// drawn from `R` at `x` is related to `z` by `S`.
    fn witness_composite(s: &Relation, r: &Relation, tol: f64) -> Relation {
        let support: Vec<Point> = r
            .domain()
            .samples(GridSpec::default())
            .into_iter()
            .filter(|x| {
                r.related_unchecked(x, tol)
                    .iter()
                    .any(|y| !s.related_unchecked(y, tol).is_empty())
            })
            .collect();
        let (s1, r1) = (s.clone(), r.clone());
        let (s2, r2) = (s.clone(), r.clone());
        let member = move |z: &[f64], x: &[f64], tol: f64| {
            r1.related_unchecked(x, tol)
                .iter()
                .any(|y| s1.contains_pair(z, y, tol))
        };
        let witnesses = move |x: &[f64], tol: f64| {
            let mut out: Vec<Point> = Vec::new();
            for y in r2.related_unchecked(x, tol) {
                for z in s2.related_unchecked(&y, tol) {
                    if !out.contains(&z) {
                        out.push(z);
                    }
                }
            }
            out
        };
        Relation {
            source: r.source.clone(),
            target: s.target.clone(),
            body: RelationBody::Predicate(Predicate::new(member, witnesses, support)),
        }
    }

    /// Check `R ⊆ S` (self is `R`). Exact for finite `R`; sampled on the guard
    /// grid otherwise.
    pub fn is_subrelation(
        &self,
        s: &Relation,
        tol: f64,
    ) -> Result<SubrelationReport, RelationError> {
        if !self.source.approx_eq(&s.source, CONTAINMENT_TOL)
            || !self.target.approx_eq(&s.target, CONTAINMENT_TOL)
        {
            return Err(RelationError::RegionMismatch(format!(
                "signatures differ: {} -> {} vs {} -> {}",
                self.source, self.target, s.source, s.target
            )));
        }
        let pairs = self.enumerate_pairs(GridSpec::default(), tol);
        let counterexamples = pairs
            .iter()
            .filter(|(y, x)| !s.contains_pair(y, x, tol))
            .cloned()
            .collect();
        Ok(SubrelationReport {
            exact: self.is_finite(),
            pairs_checked: pairs.len(),
            counterexamples,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubrelationReport {
    /// True when every pair of the left relation was checked.
    pub exact: bool,
    pub pairs_checked: usize,
    pub counterexamples: Vec<(Point, Point)>,
}

impl SubrelationReport {
    pub fn holds(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Region {
        Region::unit(1)
    }

    fn reset_relation() -> Relation {
        Relation::finite(unit(), unit(), vec![(vec![0.0], vec![1.0])]).unwrap()
    }

    #[test]
    fn graph_of_identity() {
        let r = Relation::graph_of(&SmoothMap::identity(unit()));
        assert_eq!(r.related(&[0.3], 1e-9).unwrap(), vec![vec![0.3]]);
        assert_eq!(r.domain(), Guard::Box(unit()));
        assert!(r.contains_pair(&[0.3], &[0.3], 1e-9));
        assert!(!r.contains_pair(&[0.31], &[0.3], 1e-9));
    }

    #[test]
    fn graph_of_constant_on_endpoint() {
        let f = SmoothMap::constant(Region::point(&[1.0]).unwrap(), unit(), &[0.0]).unwrap();
        let r = Relation::graph_of(&f);
        assert_eq!(r.related(&[1.0], 1e-9).unwrap(), vec![vec![0.0]]);
        assert!(r.contains_pair(&[0.0], &[1.0], 1e-9));
        let sub = reset_relation().is_subrelation(
            &Relation::guard_reset(
                Region::point(&[1.0]).unwrap(),
                unit(),
                Region::point(&[1.0]).unwrap(),
                f.clone(),
            )
            .unwrap(),
            1e-9,
        );
        assert!(sub.is_err(), "different sources are a region mismatch");
    }

    #[test]
    fn graph_of_diagonal() {
        let f = SmoothMap::parse(unit(), Region::unit(2), &["x1", "x1"]).unwrap();
        assert!(Relation::graph_of(&f).contains_pair(&[0.5, 0.5], &[0.5], 1e-9));
    }

    #[test]
    fn finite_composition() {
        let r = Relation::finite(unit(), unit(), vec![(vec![0.2], vec![0.1])]).unwrap();
        let s = Relation::finite(unit(), unit(), vec![(vec![0.3], vec![0.2])]).unwrap();
        let c = Relation::compose(&s, &r, 1e-9).unwrap();
        assert_eq!(c.pairs().unwrap(), &[(vec![0.3], vec![0.1])]);

        let s_miss = Relation::finite(unit(), unit(), vec![(vec![0.3], vec![0.25])]).unwrap();
        assert!(Relation::compose(&s_miss, &r, 1e-9)
            .unwrap()
            .pairs()
            .unwrap()
            .is_empty());
    }

    #[test]
    fn compose_region_mismatch() {
        let r = Relation::empty(unit(), Region::unit(2));
        let s = Relation::empty(unit(), unit());
        assert!(matches!(
            Relation::compose(&s, &r, 1e-9),
            Err(RelationError::RegionMismatch(_))
        ));
    }

    #[test]
    fn guard_reset_composition_closes() {
        let f = SmoothMap::parse(unit(), unit(), &["0.5 * x1"]).unwrap();
        let g = SmoothMap::parse(unit(), Region::interval(0.0, 3.0).unwrap(), &["x1 + 2"]).unwrap();
        let c = Relation::compose(&Relation::graph_of(&g), &Relation::graph_of(&f), 1e-9).unwrap();
        assert!(matches!(c.body(), RelationBody::GuardReset { .. }));
        assert!((c.related(&[0.5], 1e-9).unwrap()[0][0] - 2.25).abs() < 1e-12);
    }

    #[test]
    fn guard_reset_composition_falls_back_to_predicate() {
        // f's image [0, 1] is not inside g's guard [0.5, 1].
        let f = SmoothMap::identity(unit());
        let guard = Region::interval(0.5, 1.0).unwrap();
        let g = SmoothMap::parse(guard.clone(), unit(), &["1 - x1"]).unwrap();
        let gr = Relation::guard_reset(unit(), unit(), guard, g).unwrap();
        let c = Relation::compose(&gr, &Relation::graph_of(&f), 1e-9).unwrap();
        assert!(matches!(c.body(), RelationBody::Predicate(_)));
        assert_eq!(c.related(&[0.75], 1e-9).unwrap(), vec![vec![0.25]]);
        assert!(c.related(&[0.25], 1e-9).unwrap().is_empty());
        assert!(c.contains_pair(&[0.25], &[0.75], 1e-9));
        match c.domain() {
            Guard::Sampled(xs) => {
                assert_eq!(xs.len(), 9);
                assert!(xs.iter().all(|x| x[0] >= 0.5));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mixed_composition() {
        let r = reset_relation();
        let g = SmoothMap::parse(unit(), Region::unit(2), &["x1", "1 - x1"]).unwrap();
        let c = Relation::compose(&Relation::graph_of(&g), &r, 1e-9).unwrap();
        assert_eq!(c.related(&[1.0], 1e-9).unwrap(), vec![vec![0.0, 1.0]]);
        assert_eq!(c.domain(), Guard::Sampled(vec![vec![1.0]]));
    }

    #[test]
    fn domains() {
        assert_eq!(reset_relation().domain(), Guard::Points(vec![vec![1.0]]));
        assert!(Relation::empty(unit(), unit()).domain().is_empty());
    }

    #[test]
    fn related_cases() {
        let r = reset_relation();
        assert_eq!(r.related(&[1.0], 1e-9).unwrap(), vec![vec![0.0]]);
        assert!(r.related(&[0.5], 1e-9).unwrap().is_empty());
        assert!(matches!(
            r.related(&[2.0], 1e-9),
            Err(RelationError::OutOfDomain { .. })
        ));
        let guard = Region::point(&[1.0]).unwrap();
        let gr = Relation::guard_reset(
            unit(),
            unit(),
            guard.clone(),
            SmoothMap::parse(guard, unit(), &["x1"]).unwrap(),
        )
        .unwrap();
        assert_eq!(gr.related(&[1.0], 1e-9).unwrap(), vec![vec![1.0]]);
        assert!(gr.related(&[0.9], 1e-9).unwrap().is_empty());
    }

    #[test]
    fn subrelations() {
        let r = reset_relation();
        assert!(r.is_subrelation(&r, 1e-9).unwrap().holds());
        let bigger = Relation::finite(
            unit(),
            unit(),
            vec![(vec![0.0], vec![1.0]), (vec![0.5], vec![1.0])],
        )
        .unwrap();
        assert!(r.is_subrelation(&bigger, 1e-9).unwrap().holds());
        let other = Relation::finite(unit(), unit(), vec![(vec![0.5], vec![1.0])]).unwrap();
        let rep = other.is_subrelation(&r, 1e-9).unwrap();
        assert_eq!(rep.counterexamples, vec![(vec![0.5], vec![1.0])]);
        assert!(rep.exact);
        let g = Relation::graph_of(&SmoothMap::identity(unit()));
        let rep = g.is_subrelation(&g, 1e-9).unwrap();
        assert!(rep.holds() && !rep.exact && rep.pairs_checked == 17);
    }

    #[test]
    fn validation_flags_out_of_region_pairs() {
        let bad = Relation::finite(unit(), unit(), vec![(vec![2.0], vec![1.0])]).unwrap();
        assert_eq!(bad.validate(1e-9).len(), 1);
        assert!(reset_relation().validate(1e-9).is_empty());
        assert!(matches!(
            Relation::finite(unit(), unit(), vec![(vec![0.0, 1.0], vec![1.0])]),
            Err(RelationError::PairDimension { .. })
        ));
    }

    #[test]
    fn partial_function_extraction() {
        let r = Relation::finite(
            unit(),
            unit(),
            vec![
                (vec![0.0], vec![1.0]),
                (vec![0.5], vec![0.25]),
                (vec![0.7], vec![0.75]),
            ],
        )
        .unwrap();
        for x in r.domain().samples(GridSpec::default()) {
            assert_eq!(r.related(&x, 1e-9).unwrap().len(), 1);
        }
    }
}
