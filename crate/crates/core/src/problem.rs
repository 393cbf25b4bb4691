//! Problem instance: grids, cost weights, control bounds, potential, source,
//! initial state and tracking targets.

use crate::dynamics::TimeGrid;
use crate::error::{Error, Result};
use crate::field::{ComplexField, Potential, SpatialGrid};
use crate::scalar::Real;

/// Box constraint `lower <= u(t) <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bounds<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Real> Bounds<T> {
    pub fn new(lower: T, upper: T) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::InvalidProblem(format!(
                "control bounds [{lower}, {upper}] must satisfy lower < upper"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    pub fn contains(&self, u: T) -> bool {
        u >= self.lower && u <= self.upper
    }

    pub fn clamp(&self, u: T) -> T {
        u.max(self.lower).min(self.upper)
    }
}

/// Right-hand side `f` of the state equation.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceTerm<T> {
    Zero,
    Static(ComplexField<T>),
    /// One field per time interval, sampled at the interval midpoint.
    PerInterval(Vec<ComplexField<T>>),
}

impl<T: Real> SourceTerm<T> {
    /// Source on interval `k`, `None` when identically zero.
    pub fn at_interval(&self, k: usize) -> Option<&ComplexField<T>> {
        match self {
            SourceTerm::Zero => None,
            SourceTerm::Static(f) => Some(f),
            SourceTerm::PerInterval(fs) => fs.get(k),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SourceTerm::Zero)
    }

    pub(crate) fn validate(&self, grid: &SpatialGrid<T>, n_t: usize, what: &str) -> Result<()> {
        match self {
            SourceTerm::Zero => Ok(()),
            SourceTerm::Static(f) => grid.ensure_same(f.grid(), what),
            SourceTerm::PerInterval(fs) => {
                if fs.len() != n_t {
                    return Err(Error::dim(format!(
                        "{what}: {} interval samples for {n_t} time steps",
                        fs.len()
                    )));
                }
                fs.iter().try_for_each(|f| grid.ensure_same(f.grid(), what))
            }
        }
    }

    /// `L1(0, T; L2)` norm under midpoint quadrature.
    pub fn l1_norm(&self, time: &TimeGrid<T>) -> T {
        (0..time.n_t())
            .map(|k| self.at_interval(k).map_or(T::zero(), |f| f.norm()))
            .sum::<T>()
            * time.dt()
    }
}

/// Desired running state `Psi_d`.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetTerm<T> {
    Static(ComplexField<T>),
    /// One field per time node `t_k`, `k = 0..=n_t`.
    Nodes(Vec<ComplexField<T>>),
}

impl<T: Real> TargetTerm<T> {
    pub fn at_node(&self, k: usize) -> &ComplexField<T> {
        match self {
            TargetTerm::Static(f) => f,
            TargetTerm::Nodes(fs) => &fs[k],
        }
    }

    /// Average of the two node values bounding interval `k`.
    pub fn at_interval(&self, k: usize) -> ComplexField<T> {
        match self {
            TargetTerm::Static(f) => f.clone(),
            TargetTerm::Nodes(fs) => ComplexField::midpoint(&fs[k], &fs[k + 1]),
        }
    }

    pub(crate) fn validate(&self, grid: &SpatialGrid<T>, n_t: usize) -> Result<()> {
        match self {
            TargetTerm::Static(f) => grid.ensure_same(f.grid(), "psi_d"),
            TargetTerm::Nodes(fs) => {
                if fs.len() != n_t + 1 {
                    return Err(Error::dim(format!(
                        "psi_d: {} node samples for {} time nodes",
                        fs.len(),
                        n_t + 1
                    )));
                }
                fs.iter().try_for_each(|f| grid.ensure_same(f.grid(), "psi_d"))
            }
        }
    }
}

/// Full instance of the tracking problem
///
/// ```text
/// min  int_0^T (alpha1 u + alpha2/2 u^2) dt + 1/2 int_0^T ||Psi - Psi_d||^2 dt
///      + 1/2 ||Psi(T) - Psi_dT||^2
/// s.t. dPsi/dt = i Lap Psi - i u b2 Psi + f,  Psi(0) = Psi_0,
///      lower <= u <= upper.
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec<T> {
    pub grid: SpatialGrid<T>,
    pub time: TimeGrid<T>,
    pub alpha1: T,
    pub alpha2: T,
    pub bounds: Bounds<T>,
    pub potential: Potential<T>,
    pub source: SourceTerm<T>,
    pub psi0: ComplexField<T>,
    pub psi_d: TargetTerm<T>,
    pub psi_dt: ComplexField<T>,
}

impl<T: Real> ProblemSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha1.is_finite() {
            return Err(Error::InvalidProblem("alpha1 must be finite".into()));
        }
        if !(self.alpha2 >= T::zero()) || !self.alpha2.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "alpha2 = {} must be finite and nonnegative",
                self.alpha2
            )));
        }
        Bounds::new(self.bounds.lower, self.bounds.upper)?;
        self.grid.ensure_same(self.potential.grid(), "potential")?;
        self.grid.ensure_same(self.psi0.grid(), "psi0")?;
        self.grid.ensure_same(self.psi_dt.grid(), "psi_dT")?;
        if !self.psi0.is_finite() || self.psi0.norm_sqr() == T::zero() {
            return Err(Error::InvalidProblem("psi0 must be finite and nonzero".into()));
        }
        self.source.validate(&self.grid, self.time.n_t(), "source")?;
        self.psi_d.validate(&self.grid, self.time.n_t())
    }

    pub fn dt(&self) -> T {
        self.time.dt()
    }

    pub fn n_t(&self) -> usize {
        self.time.n_t()
    }

    /// `Psi - Psi_d` averaged over interval `k`, given the two node states.
    pub(crate) fn tracking_residual_mid(
        &self,
        k: usize,
        psi_mid: &ComplexField<T>,
    ) -> ComplexField<T> {
        psi_mid - &self.psi_d.at_interval(k)
    }
}
