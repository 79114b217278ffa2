//! Expression-defined smooth maps between regions, their numerical
//! differentials, and the check that a map intertwines two vector fields.

use std::fmt;

use thiserror::Error;

use crate::defaults::{CONTAINMENT_TOL, JACOBIAN_STEP};
use crate::expr::{EvalError, Expr, ParseError};
use crate::field::VectorField;
use crate::region::{dist_inf, GridSpec, Point, Region, RegionError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("point {point:?} lies outside the domain {region}")]
    OutOfDomain { point: Point, region: Region },
    #[error("image {image:?} lies outside the codomain {region}")]
    OutOfCodomain { image: Point, region: Region },
    #[error("non-finite value at {point:?}")]
    NonFiniteValue { point: Point },
    #[error("expected {expected} components, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error("component {component} uses x{arity}, but the domain has dimension {dim}")]
    ArityMismatch {
        component: usize,
        arity: usize,
        dim: usize,
    },
    #[error("region mismatch: {0}")]
    RegionMismatch(String),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Dense row-major matrix returned by [`SmoothMap::jacobian`].
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub(crate) fn eval_components(components: &[Expr], x: &[f64]) -> Result<Point, MapError> {
    components
        .iter()
        .map(|e| {
            e.eval(x).map_err(|err| match err {
                EvalError::NonFinite | EvalError::Unbound { .. } => {
                    MapError::NonFiniteValue { point: x.to_vec() }
                }
            })
        })
        .collect()
}

pub(crate) fn check_components(
    components: &[Expr],
    expected: usize,
    dim: usize,
) -> Result<(), MapError> {
    if components.len() != expected {
        return Err(MapError::ComponentCount {
            expected,
            got: components.len(),
        });
    }
    for (component, e) in components.iter().enumerate() {
        if e.arity() > dim {
            return Err(MapError::ArityMismatch {
                component,
                arity: e.arity(),
                dim,
            });
        }
    }
    Ok(())
}

/// A map `dom -> cod` given by one expression per codomain coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothMap {
    dom: Region,
    cod: Region,
    components: Vec<Expr>,
}

impl SmoothMap {
    pub fn new(dom: Region, cod: Region, components: Vec<Expr>) -> Result<Self, MapError> {
        check_components(&components, cod.dim(), dom.dim())?;
        Ok(Self {
            dom,
            cod,
            components,
        })
    }

    pub fn parse(dom: Region, cod: Region, components: &[&str]) -> Result<Self, MapError> {
        let exprs = components
            .iter()
            .map(|s| Expr::parse(s, dom.dim()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(dom, cod, exprs)
    }

    pub fn identity(region: Region) -> Self {
        let components = (0..region.dim()).map(Expr::Var).collect();
        Self {
            dom: region.clone(),
            cod: region,
            components,
        }
    }

    /// The map sending every point to `value`.
    pub fn constant(dom: Region, cod: Region, value: &[f64]) -> Result<Self, MapError> {
        Self::new(dom, cod, value.iter().map(|&v| Expr::Const(v)).collect())
    }

    pub fn dom(&self) -> &Region {
        &self.dom
    }

    pub fn cod(&self) -> &Region {
        &self.cod
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn is_affine(&self) -> bool {
        self.components.iter().all(Expr::is_affine)
    }

    /// Evaluate with the default containment tolerance.
    pub fn eval(&self, x: &[f64]) -> Result<Point, MapError> {
        self.eval_tol(x, CONTAINMENT_TOL)
    }

    pub fn eval_tol(&self, x: &[f64], tol: f64) -> Result<Point, MapError> {
        if !self.dom.contains(x, tol)? {
            return Err(MapError::OutOfDomain {
                point: x.to_vec(),
                region: self.dom.clone(),
            });
        }
        let y = eval_components(&self.components, x)?;
        if !self.cod.contains_unchecked(&y, tol) {
            return Err(MapError::OutOfCodomain {
                image: y,
                region: self.cod.clone(),
            });
        }
        Ok(y)
    }

    /// Evaluate without domain or codomain checks.
    pub fn eval_raw(&self, x: &[f64]) -> Result<Point, MapError> {
        eval_components(&self.components, x)
    }

    /// Grid points where evaluation fails or leaves the codomain.
    pub fn grid_violations(&self, grid: GridSpec, tol: f64) -> Vec<(Point, MapError)> {
        self.dom
            .grid(grid)
            .into_iter()
            .filter_map(|x| self.eval_tol(&x, tol).err().map(|e| (x, e)))
            .collect()
    }

    /// `outer ∘ inner`, by substituting the inner components into the outer
    /// expressions.
    pub fn compose(outer: &SmoothMap, inner: &SmoothMap) -> Result<SmoothMap, MapError> {
        if !inner.cod.approx_eq(&outer.dom, CONTAINMENT_TOL) {
            return Err(MapError::RegionMismatch(format!(
                "inner codomain {} differs from outer domain {}",
                inner.cod, outer.dom
            )));
        }
        let components = outer
            .components
            .iter()
            .map(|e| e.substitute(&inner.components))
            .collect();
        Ok(SmoothMap {
            dom: inner.dom.clone(),
            cod: outer.cod.clone(),
            components,
        })
    }

    /// Finite-difference Jacobian (`cod.dim x dom.dim`) at `x`.
    ///
    /// Central differences where `x ± h e_i` stays in the domain, one-sided
    /// differences against the boundary, zero columns on degenerate axes.
    pub fn jacobian(&self, x: &[f64], h: f64) -> Result<Jacobian, MapError> {
        if !self.dom.contains(x, CONTAINMENT_TOL)? {
            return Err(MapError::OutOfDomain {
                point: x.to_vec(),
                region: self.dom.clone(),
            });
        }
        let rows = self.cod.dim();
        let cols = self.dom.dim();
        let mut data = vec![0.0; rows * cols];
        let f0 = self.eval_raw(x)?;
        for axis in 0..cols {
            if self.dom.is_degenerate_axis(axis) {
                continue;
            }
            let (lo, hi) = self.dom.bounds()[axis];
            let xi = x[axis].clamp(lo, hi);
            let shifted = |d: f64| {
                let mut p = x.to_vec();
                p[axis] = xi + d;
                p
            };
            let column: Vec<f64> = if xi - h >= lo && xi + h <= hi {
                let fp = self.eval_raw(&shifted(h))?;
                let fm = self.eval_raw(&shifted(-h))?;
                fp.iter()
                    .zip(&fm)
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect()
            } else {
                // One-sided toward the wider side; shrink the step on thin axes.
                let (dir, room) = if hi - xi >= xi - lo {
                    (1.0, hi - xi)
                } else {
                    (-1.0, xi - lo)
                };
                let step = h.min(room);
                let fs = self.eval_raw(&shifted(dir * step))?;
                let base = if xi == x[axis] {
                    f0.clone()
                } else {
                    self.eval_raw(&shifted(0.0))?
                };
                fs.iter()
                    .zip(&base)
                    .map(|(a, b)| (a - b) / (dir * step))
                    .collect()
            };
            for (r, v) in column.into_iter().enumerate() {
                data[r * cols + axis] = v;
            }
        }
        Ok(Jacobian { rows, cols, data })
    }
}

impl fmt::Display for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}: (", self.dom, self.cod)?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

/// Outcome of checking `Tf ∘ X = X' ∘ f` at sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct DsReport {
    pub samples: usize,
    pub max_residual: f64,
    /// Points whose residual exceeds the tolerance, with the residual.
    pub violations: Vec<(Point, f64)>,
}

impl DsReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compare `jacobian(f, x) · X(x)` against `X'(f(x))` in the max norm at each
/// sample.
pub fn check_ds_morphism(
    f: &SmoothMap,
    source: &VectorField,
    target: &VectorField,
    samples: &[Point],
    tol: f64,
) -> Result<DsReport, MapError> {
    if !f.dom().approx_eq(source.region(), CONTAINMENT_TOL) {
        return Err(MapError::RegionMismatch(format!(
            "map domain {} differs from field region {}",
            f.dom(),
            source.region()
        )));
    }
    if !f.cod().approx_eq(target.region(), CONTAINMENT_TOL) {
        return Err(MapError::RegionMismatch(format!(
            "map codomain {} differs from field region {}",
            f.cod(),
            target.region()
        )));
    }
    let mut report = DsReport {
        samples: samples.len(),
        max_residual: 0.0,
        violations: Vec::new(),
    };
    for x in samples {
        let pushed = f.jacobian(x, JACOBIAN_STEP)?.apply(&source.eval_raw(x)?);
        let image = f.eval_raw(x)?;
        let expected = target.eval_raw(&image)?;
        let r = dist_inf(&pushed, &expected);
        report.max_residual = report.max_residual.max(r);
        if r > tol {
            report.violations.push((x.clone(), r));
        }
    }
    Ok(report)
}
