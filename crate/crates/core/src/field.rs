//! Vector fields on regions, sampled curves, and the fixed-step RK4
//! integrator that produces integral curves.

use thiserror::Error;

use crate::defaults::CONTAINMENT_TOL;
use crate::expr::Expr;
use crate::map::{check_components, eval_components, MapError};
use crate::region::{GridSpec, Point, Region};

/// A section of the tangent bundle of a box: one expression per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    region: Region,
    components: Vec<Expr>,
}

impl VectorField {
    pub fn new(region: Region, components: Vec<Expr>) -> Result<Self, MapError> {
        check_components(&components, region.dim(), region.dim())?;
        Ok(Self { region, components })
    }

    pub fn parse(region: Region, components: &[&str]) -> Result<Self, MapError> {
        let exprs = components
            .iter()
            .map(|s| Expr::parse(s, region.dim()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(region, exprs)
    }

    /// The clock `d/dt` on an interval.
    pub fn clock(interval: Region) -> Self {
        let components = vec![Expr::Const(1.0); interval.dim()];
        Self {
            region: interval,
            components,
        }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn is_affine(&self) -> bool {
        self.components.iter().all(Expr::is_affine)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Point, MapError> {
        if !self.region.contains(x, CONTAINMENT_TOL)? {
            return Err(MapError::OutOfDomain {
                point: x.to_vec(),
                region: self.region.clone(),
            });
        }
        self.eval_raw(x)
    }

    /// Evaluate off the region as well; used for intermediate integrator stages.
    pub fn eval_raw(&self, x: &[f64]) -> Result<Point, MapError> {
        eval_components(&self.components, x)
    }

    /// Grid points where some component fails to evaluate finitely.
    pub fn grid_violations(&self, grid: GridSpec) -> Vec<Point> {
        self.region
            .grid(grid)
            .into_iter()
            .filter(|x| self.eval_raw(x).is_err())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("a curve needs at least one sample")]
    Empty,
    #[error("sample times must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("sample {index} has {got} coordinates, region has {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        got: usize,
    },
}

/// Time-stamped samples of a curve in a region. The span is
/// `[first sample time, last sample time]`; one sample is a point curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    region: Region,
    samples: Vec<(f64, Point)>,
}

impl Curve {
    pub fn new(region: Region, samples: Vec<(f64, Point)>) -> Result<Self, CurveError> {
        if samples.is_empty() {
            return Err(CurveError::Empty);
        }
        for (index, (_, p)) in samples.iter().enumerate() {
            if p.len() != region.dim() {
                return Err(CurveError::Dimension {
                    index,
                    expected: region.dim(),
                    got: p.len(),
                });
            }
        }
        if let Some(i) = samples.windows(2).position(|w| !(w[0].0 < w[1].0)) {
            return Err(CurveError::NotIncreasing(i + 1));
        }
        Ok(Self { region, samples })
    }

    pub fn point(region: Region, t: f64, x: Point) -> Result<Self, CurveError> {
        Self::new(region, vec![(t, x)])
    }

    /// Sample `f` at `n + 1` equispaced times over `[t0, t1]` (one sample if `t0 == t1`).
    pub fn from_fn(
        region: Region,
        t0: f64,
        t1: f64,
        n: usize,
        f: impl Fn(f64) -> Point,
    ) -> Result<Self, CurveError> {
        let samples = if t0 == t1 || n == 0 {
            vec![(t0, f(t0))]
        } else {
            (0..=n)
                .map(|k| {
                    let t = if k == n {
                        t1
                    } else {
                        t0 + (t1 - t0) * k as f64 / n as f64
                    };
                    (t, f(t))
                })
                .collect()
        };
        Self::new(region, samples)
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn samples(&self) -> &[(f64, Point)] {
        &self.samples
    }

    pub fn t0(&self) -> f64 {
        self.samples[0].0
    }

    pub fn t1(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    pub fn start(&self) -> &[f64] {
        &self.samples[0].1
    }

    pub fn end(&self) -> &[f64] {
        &self.samples[self.samples.len() - 1].1
    }

    pub fn is_point(&self) -> bool {
        self.samples.len() == 1
    }

    /// Samples farther than `tol` outside the region.
    pub fn containment_violations(&self, tol: f64) -> Vec<(f64, Point)> {
        self.samples
            .iter()
            .filter(|(_, p)| !self.region.contains_unchecked(p, tol))
            .cloned()
            .collect()
    }

    /// Samples with `t <= t_end`.
    pub fn restrict(&self, t_end: f64) -> Option<Curve> {
        let samples: Vec<_> = self
            .samples
            .iter()
            .filter(|(t, _)| *t <= t_end)
            .cloned()
            .collect();
        Curve::new(self.region.clone(), samples).ok()
    }

    /// Apply `f` to every sample, landing in `region`.
    pub fn map_points<E>(
        &self,
        region: Region,
        f: impl Fn(&[f64]) -> Result<Point, E>,
    ) -> Result<Curve, E> {
        let samples = self
            .samples
            .iter()
            .map(|(t, p)| f(p).map(|q| (*t, q)))
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Curve { region, samples })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("flow left the region near t = {time} at {point:?}")]
    LeftRegion { time: f64, point: Point },
    #[error("non-finite value near t = {time}")]
    NonFiniteValue { time: f64 },
    #[error("initial point {0:?} is outside the region")]
    OutOfDomain(Point),
    #[error("invalid arguments: {0}")]
    InvalidArgument(String),
}

/// One classical RK4 step of size `h`.
pub fn rk4_step(field: &VectorField, x: &[f64], h: f64) -> Result<Point, MapError> {
    let axpy = |a: &[f64], k: &[f64], s: f64| -> Point {
        a.iter().zip(k).map(|(a, k)| a + s * k).collect()
    };
    let k1 = field.eval_raw(x)?;
    let k2 = field.eval_raw(&axpy(x, &k1, h / 2.0))?;
    let k3 = field.eval_raw(&axpy(x, &k2, h / 2.0))?;
    let k4 = field.eval_raw(&axpy(x, &k3, h))?;
    let point: Point = (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if point.iter().all(|v| v.is_finite()) {
        Ok(point)
    } else {
        Err(MapError::NonFiniteValue { point: x.to_vec() })
    }
}

/// Step times from `t0` to `t1`: `t0 + k*step`, with the last step
/// shortened to land on `t1`.
pub(crate) fn step_time(t0: f64, t1: f64, step: f64, k: usize) -> f64 {
    let t = t0 + step * k as f64;
    if t >= t1 - 1e-12 * step.max(1e-300) {
        t1
    } else {
        t
    }
}

/// Integrate `field` from `x0` over `[t0, t1]` with fixed step RK4.
pub fn integrate(
    field: &VectorField,
    x0: &[f64],
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<Curve, IntegrateError> {
    integrate_tol(field, x0, t0, t1, step, CONTAINMENT_TOL)
}

pub fn integrate_tol(
    field: &VectorField,
    x0: &[f64],
    t0: f64,
    t1: f64,
    step: f64,
    tol: f64,
) -> Result<Curve, IntegrateError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(IntegrateError::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    if !(t0 <= t1) {
        return Err(IntegrateError::InvalidArgument(format!(
            "need t0 <= t1, got [{t0}, {t1}]"
        )));
    }
    let region = field.region().clone();
    match region.contains(x0, tol) {
        Ok(true) => {}
        _ => return Err(IntegrateError::OutOfDomain(x0.to_vec())),
    }
    let mut samples = vec![(t0, x0.to_vec())];
    let mut t = t0;
    let mut x = x0.to_vec();
    let mut k = 0;
    while t < t1 {
        k += 1;
        let t_next = step_time(t0, t1, step, k);
        let x_next = rk4_step(field, &x, t_next - t)
            .map_err(|_| IntegrateError::NonFiniteValue { time: t })?;
        if !region.contains_unchecked(&x_next, tol) {
            let time = exit_estimate(&region, t, &x, t_next, &x_next);
            return Err(IntegrateError::LeftRegion {
                time,
                point: x_next,
            });
        }
        samples.push((t_next, x_next.clone()));
        t = t_next;
        x = x_next;
    }
    Ok(Curve { region, samples })
}

/// Linear interpolation of the first boundary crossing between two samples.
fn exit_estimate(region: &Region, t: f64, x: &[f64], t_next: f64, x_next: &[f64]) -> f64 {
    let mut frac: f64 = 1.0;
    for (i, &(lo, hi)) in region.bounds().iter().enumerate() {
        let (a, b) = (x[i], x_next[i]);
        for bound in [lo, hi] {
            let crosses = (a - bound) * (b - bound) < 0.0
                || (b < lo && bound == lo)
                || (b > hi && bound == hi);
            if crosses && a != b {
                frac = frac.min(((bound - a) / (b - a)).clamp(0.0, 1.0));
            }
        }
    }
    t + frac * (t_next - t)
}
