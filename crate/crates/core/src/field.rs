//! Spatial discretization of a bounded interval with homogeneous Dirichlet
//! boundary values, complex field arithmetic and the operators built from
//! the control potential `b2`.
//!
//! Only interior nodes are stored: the boundary values are identically zero
//! and are eliminated from every stencil. The discrete `L2` pairing is the
//! rectangle rule over interior nodes,
//!
//! ```text
//! <x, y> = h * sum_j x_j * conj(y_j)
//! ```
//!
//! linear in the first argument and antilinear in the second.
//!
//! Sign conventions: the state equation is written as
//! `dPsi/dt = i Lap Psi - i u b2 Psi + f`, i.e. `dPsi/dt + A Psi = u B2 Psi + f`
//! with `A = -i Lap` and `B2 = -i b2`. The first commutator is
//! `M1 = [A, B2]`, which for the Laplacian equals
//! `M1 y = -2 b2' y' - y b2''`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cplx, imag_unit, Cplx, Real};

/// Uniform grid on `(x_lo, x_hi)` with `n_x` steps and `n_x - 1` interior nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid<T> {
    x_lo: T,
    x_hi: T,
    n_x: usize,
}

impl<T: Real> SpatialGrid<T> {
    pub fn new(x_lo: T, x_hi: T, n_x: usize) -> Result<Self> {
        if !(x_lo.is_finite() && x_hi.is_finite()) || x_hi <= x_lo {
            return Err(Error::InvalidProblem(format!(
                "spatial domain ({x_lo}, {x_hi}) must be a finite nonempty interval"
            )));
        }
        if n_x < 3 {
            return Err(Error::InvalidProblem(format!(
                "n_x = {n_x}: at least 3 spatial steps are required"
            )));
        }
        Ok(Self { x_lo, x_hi, n_x })
    }

    /// Grid on the unit interval `(0, 1)`.
    pub fn unit(n_x: usize) -> Result<Self> {
        Self::new(T::zero(), T::one(), n_x)
    }

    pub fn x_lo(&self) -> T {
        self.x_lo
    }

    pub fn x_hi(&self) -> T {
        self.x_hi
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    /// Mesh width `h`.
    pub fn step(&self) -> T {
        (self.x_hi - self.x_lo) / T::count(self.n_x)
    }

    /// Number of interior nodes, `n_x - 1`.
    pub fn len(&self) -> usize {
        self.n_x - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of interior node `j` (zero-based), i.e. `x_lo + (j + 1) h`.
    pub fn node(&self, j: usize) -> T {
        self.x_lo + T::count(j + 1) * self.step()
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    /// Same interval with `factor` times as many steps. Every node of `self`
    /// is a node of the refined grid.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.x_lo, self.x_hi, self.n_x * factor)
    }

    pub(crate) fn ensure_same(&self, other: &Self, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "{what}: grids differ ({} vs {} steps on ({}, {}) vs ({}, {}))",
                self.n_x, other.n_x, self.x_lo, self.x_hi, other.x_lo, other.x_hi
            )))
        }
    }
}

/// Complex values on the interior nodes of a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField<T> {
    grid: SpatialGrid<T>,
    values: Vec<Cplx<T>>,
}

impl<T: Real> ComplexField<T> {
    pub fn new(grid: SpatialGrid<T>, values: Vec<Cplx<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::dim(format!(
                "field has {} values, grid has {} interior nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Divergence("non-finite field value".into()));
        }
        Ok(Self { grid, values })
    }

    /// Wraps values without validation; callers guarantee the length.
    pub(crate) fn from_vec(grid: SpatialGrid<T>, values: Vec<Cplx<T>>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: SpatialGrid<T>) -> Self {
        Self::from_vec(grid, vec![Complex::new(T::zero(), T::zero()); grid.len()])
    }

    /// Samples `f` at the interior nodes.
    pub fn from_fn(grid: SpatialGrid<T>, f: impl Fn(T) -> Cplx<T>) -> Self {
        Self::from_vec(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn from_real(grid: SpatialGrid<T>, re: &[T]) -> Result<Self> {
        Self::new(grid, re.iter().map(|&r| cplx(r, T::zero())).collect())
    }

    pub fn grid(&self) -> &SpatialGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[Cplx<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Cplx<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Cplx<T>> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `||x||^2 = <x, x>`.
    pub fn norm_sqr(&self) -> T {
        self.grid.step() * self.values.iter().map(|z| z.norm_sqr()).sum::<T>()
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    pub fn scale(&self, a: Cplx<T>) -> Self {
        Self::from_vec(self.grid, self.values.iter().map(|&z| z * a).collect())
    }

    pub fn scale_real(&self, a: T) -> Self {
        Self::from_vec(self.grid, self.values.iter().map(|&z| z * a).collect())
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: Cplx<T>, x: &Self) {
        assert_eq!(self.grid, x.grid, "axpy on fields from different grids");
        for (s, &xv) in self.values.iter_mut().zip(&x.values) {
            *s = *s + a * xv;
        }
    }

    /// Pointwise product with real samples.
    pub fn mul_real(&self, w: &[T]) -> Self {
        assert_eq!(w.len(), self.len());
        Self::from_vec(
            self.grid,
            self.values.iter().zip(w).map(|(&z, &r)| z * r).collect(),
        )
    }

    /// `(a + b) / 2`, the interval-midpoint value of two node values.
    pub fn midpoint(a: &Self, b: &Self) -> Self {
        assert_eq!(a.grid, b.grid);
        let half = T::lit(0.5);
        Self::from_vec(
            a.grid,
            a.values
                .iter()
                .zip(&b.values)
                .map(|(&x, &y)| (x + y) * half)
                .collect(),
        )
    }

    /// Inner product without the grid check.
    pub(crate) fn dot(&self, other: &Self) -> Cplx<T> {
        debug_assert_eq!(self.grid, other.grid);
        let s = self
            .values
            .iter()
            .zip(&other.values)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (&x, &y)| {
                acc + x * y.conj()
            });
        s * self.grid.step()
    }
}

macro_rules! field_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl<'a, T: Real> $trait<&'a ComplexField<T>> for &'a ComplexField<T> {
            type Output = ComplexField<T>;
            fn $method(self, rhs: &'a ComplexField<T>) -> ComplexField<T> {
                assert_eq!(self.grid, rhs.grid, "field arithmetic across grids");
                ComplexField::from_vec(
                    self.grid,
                    self.values.iter().zip(&rhs.values).map(|(&a, &b)| a $op b).collect(),
                )
            }
        }
        impl<T: Real> $trait<ComplexField<T>> for ComplexField<T> {
            type Output = ComplexField<T>;
            fn $method(self, rhs: ComplexField<T>) -> ComplexField<T> {
                (&self).$method(&rhs)
            }
        }
    };
}

field_binop!(Add, add, +);
field_binop!(Sub, sub, -);

impl<T: Real> AddAssign<&ComplexField<T>> for ComplexField<T> {
    fn add_assign(&mut self, rhs: &ComplexField<T>) {
        self.axpy(Complex::new(T::one(), T::zero()), rhs);
    }
}

impl<T: Real> SubAssign<&ComplexField<T>> for ComplexField<T> {
    fn sub_assign(&mut self, rhs: &ComplexField<T>) {
        self.axpy(Complex::new(-T::one(), T::zero()), rhs);
    }
}

impl<T: Real> Mul<Cplx<T>> for &ComplexField<T> {
    type Output = ComplexField<T>;
    fn mul(self, a: Cplx<T>) -> ComplexField<T> {
        self.scale(a)
    }
}

impl<T: Real> Neg for &ComplexField<T> {
    type Output = ComplexField<T>;
    fn neg(self) -> ComplexField<T> {
        self.scale_real(-T::one())
    }
}

/// Discrete `L2(Omega; C)` pairing `h * sum x_j conj(y_j)`.
pub fn inner<T: Real>(x: &ComplexField<T>, y: &ComplexField<T>) -> Result<Cplx<T>> {
    x.grid.ensure_same(&y.grid, "inner")?;
    Ok(x.dot(y))
}

/// Three-point Dirichlet Laplacian `(x_{j-1} - 2 x_j + x_{j+1}) / h^2`.
pub fn apply_laplacian<T: Real>(x: &ComplexField<T>) -> ComplexField<T> {
    let h = x.grid.step();
    let inv_h2 = T::one() / (h * h);
    let n = x.len();
    let v = &x.values;
    let zero = Complex::new(T::zero(), T::zero());
    let out = (0..n)
        .map(|j| {
            let left = if j > 0 { v[j - 1] } else { zero };
            let right = if j + 1 < n { v[j + 1] } else { zero };
            (left - v[j] * T::lit(2.0) + right) * inv_h2
        })
        .collect();
    ComplexField::from_vec(x.grid, out)
}

/// Central difference `(x_{j+1} - x_{j-1}) / (2h)` with zero ghost values.
pub fn central_difference<T: Real>(x: &ComplexField<T>) -> ComplexField<T> {
    let inv_2h = T::one() / (T::lit(2.0) * x.grid.step());
    let n = x.len();
    let v = &x.values;
    let zero = Complex::new(T::zero(), T::zero());
    let out = (0..n)
        .map(|j| {
            let left = if j > 0 { v[j - 1] } else { zero };
            let right = if j + 1 < n { v[j + 1] } else { zero };
            (right - left) * inv_2h
        })
        .collect();
    ComplexField::from_vec(x.grid, out)
}

/// Which discretization of the commutators `M1 = [A, B2]` and `[M1, B2]`
/// to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommutatorModel {
    /// Exact commutators of the assembled discrete operators. With this
    /// choice the Goh transform of the semi-discrete system is exact, so the
    /// Goh identity gap vanishes as the time step goes to zero at any fixed
    /// spatial grid.
    #[default]
    Discrete,
    /// Closed forms `-2 b2' y' - y b2''` and `2 i |b2'|^2 y` sampled with
    /// central differences; consistent with `Discrete` to `O(h^2)`.
    ClosedForm,
}

/// Real tridiagonal matrix acting on complex vectors.
///
/// Row `j` reads `lower[j] * x[j-1] + diag[j] * x[j] + upper[j] * x[j+1]`;
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> RealTridiagonal<T> {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|j| {
                let mut acc = x[j] * self.diag[j];
                if j > 0 {
                    acc = acc + x[j - 1] * self.lower[j];
                }
                if j + 1 < n {
                    acc = acc + x[j + 1] * self.upper[j];
                }
                acc
            })
            .collect()
    }

    /// Applies the (conjugate) transpose; the entries are real.
    pub fn apply_transpose(&self, x: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|j| {
                let mut acc = x[j] * self.diag[j];
                if j > 0 {
                    acc = acc + x[j - 1] * self.upper[j - 1];
                }
                if j + 1 < n {
                    acc = acc + x[j + 1] * self.lower[j + 1];
                }
                acc
            })
            .collect()
    }
}

/// Samples of the control potential `b2` and its first two derivatives on
/// the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential<T> {
    grid: SpatialGrid<T>,
    b2: Vec<T>,
    grad_b2: Vec<T>,
    lap_b2: Vec<T>,
}

impl<T: Real> Potential<T> {
    /// Builds the potential from closed-form `b2`, `b2'` and `b2''`.
    pub fn from_fns(
        grid: SpatialGrid<T>,
        b2: impl Fn(T) -> T,
        grad: impl Fn(T) -> T,
        lap: impl Fn(T) -> T,
    ) -> Self {
        let xs = grid.nodes();
        Self {
            grid,
            b2: xs.iter().map(|&x| b2(x)).collect(),
            grad_b2: xs.iter().map(|&x| grad(x)).collect(),
            lap_b2: xs.iter().map(|&x| lap(x)).collect(),
        }
    }

    /// Builds the potential from interior samples; derivatives by central
    /// differences with `b2 = 0` on the boundary.
    pub fn from_samples(grid: SpatialGrid<T>, b2: Vec<T>) -> Result<Self> {
        if b2.len() != grid.len() {
            return Err(Error::dim(format!(
                "potential has {} samples, grid has {} interior nodes",
                b2.len(),
                grid.len()
            )));
        }
        if b2.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidProblem("non-finite potential sample".into()));
        }
        let h = grid.step();
        let n = b2.len();
        let at = |j: isize| -> T {
            if j < 0 || j as usize >= n {
                T::zero()
            } else {
                b2[j as usize]
            }
        };
        let grad_b2 = (0..n as isize)
            .map(|j| (at(j + 1) - at(j - 1)) / (T::lit(2.0) * h))
            .collect();
        let lap_b2 = (0..n as isize)
            .map(|j| (at(j - 1) - T::lit(2.0) * at(j) + at(j + 1)) / (h * h))
            .collect();
        Ok(Self {
            grid,
            b2,
            grad_b2,
            lap_b2,
        })
    }

    pub fn zero(grid: SpatialGrid<T>) -> Self {
        let n = grid.len();
        Self {
            grid,
            b2: vec![T::zero(); n],
            grad_b2: vec![T::zero(); n],
            lap_b2: vec![T::zero(); n],
        }
    }

    pub fn grid(&self) -> &SpatialGrid<T> {
        &self.grid
    }

    pub fn b2(&self) -> &[T] {
        &self.b2
    }

    pub fn grad_b2(&self) -> &[T] {
        &self.grad_b2
    }

    pub fn lap_b2(&self) -> &[T] {
        &self.lap_b2
    }

    pub fn max_abs(&self) -> T {
        self.b2.iter().fold(T::zero(), |m, b| m.max(b.abs()))
    }

    fn check(&self, x: &ComplexField<T>) -> Result<()> {
        self.grid.ensure_same(&x.grid, "potential")
    }

    /// Real multiplication `b2 * x`.
    pub fn apply_b2(&self, x: &ComplexField<T>) -> Result<ComplexField<T>> {
        self.check(x)?;
        Ok(x.mul_real(&self.b2))
    }

    /// `B2 x = -i b2 x`.
    pub fn apply_b2hat(&self, x: &ComplexField<T>) -> Result<ComplexField<T>> {
        self.check(x)?;
        let mi = -imag_unit::<T>();
        Ok(ComplexField::from_vec(
            x.grid,
            x.values
                .iter()
                .zip(&self.b2)
                .map(|(&z, &b)| mi * z * b)
                .collect(),
        ))
    }

    /// Closed-form `M1 x = -2 b2' Dx - b2'' x` with central differences `D`.
    pub fn apply_m1(&self, x: &ComplexField<T>) -> Result<ComplexField<T>> {
        self.check(x)?;
        let dx = central_difference(x);
        let two = T::lit(2.0);
        Ok(ComplexField::from_vec(
            x.grid,
            (0..x.len())
                .map(|j| -(dx.values[j] * (two * self.grad_b2[j])) - x.values[j] * self.lap_b2[j])
                .collect(),
        ))
    }

    /// Closed-form `[M1, B2] x = 2 i |b2'|^2 x`.
    pub fn apply_m1_b2_commutator(&self, x: &ComplexField<T>) -> Result<ComplexField<T>> {
        self.check(x)?;
        let two_i = imag_unit::<T>() * T::lit(2.0);
        Ok(ComplexField::from_vec(
            x.grid,
            x.values
                .iter()
                .zip(&self.grad_b2)
                .map(|(&z, &g)| two_i * z * (g * g))
                .collect(),
        ))
    }

    /// Exact discrete commutator `[A_h, B2] x = -(Lap_h(b2 x) - b2 Lap_h x)`.
    pub fn apply_m1_discrete(&self, x: &ComplexField<T>) -> Result<ComplexField<T>> {
        self.check(x)?;
        Ok(ComplexField::from_vec(
            x.grid,
            self.m1_matrix(CommutatorModel::Discrete).apply(&x.values),
        ))
    }

    /// Exact discrete `[M1_h, B2] x`, a tridiagonal operator whose limit is
    /// `2 i |b2'|^2 x`.
    pub fn apply_m1_b2_commutator_discrete(
        &self,
        x: &ComplexField<T>,
    ) -> Result<ComplexField<T>> {
        let m1b = self.apply_m1_discrete(&self.apply_b2hat(x)?)?;
        let bm1 = self.apply_b2hat(&self.apply_m1_discrete(x)?)?;
        Ok(&m1b - &bm1)
    }

    /// `M1` under the selected model.
    pub fn m1(&self, model: CommutatorModel, x: &ComplexField<T>) -> Result<ComplexField<T>> {
        match model {
            CommutatorModel::Discrete => self.apply_m1_discrete(x),
            CommutatorModel::ClosedForm => self.apply_m1(x),
        }
    }

    /// `M1^* p`, the conjugate transpose of the assembled `M1` matrix.
    pub fn m1_adjoint(&self, model: CommutatorModel, p: &ComplexField<T>) -> Result<ComplexField<T>> {
        self.check(p)?;
        Ok(ComplexField::from_vec(
            p.grid,
            self.m1_matrix(model).apply_transpose(&p.values),
        ))
    }

    /// `[M1, B2]` under the selected model.
    pub fn m1_b2_commutator(
        &self,
        model: CommutatorModel,
        x: &ComplexField<T>,
    ) -> Result<ComplexField<T>> {
        match model {
            CommutatorModel::Discrete => self.apply_m1_b2_commutator_discrete(x),
            CommutatorModel::ClosedForm => self.apply_m1_b2_commutator(x),
        }
    }

    /// Assembled real tridiagonal matrix of `M1`.
    pub fn m1_matrix(&self, model: CommutatorModel) -> RealTridiagonal<T> {
        let n = self.b2.len();
        let h = self.grid.step();
        match model {
            CommutatorModel::Discrete => {
                let inv_h2 = T::one() / (h * h);
                let b = &self.b2;
                let lower = (0..n)
                    .map(|j| if j > 0 { -(b[j - 1] - b[j]) * inv_h2 } else { T::zero() })
                    .collect();
                let upper = (0..n)
                    .map(|j| if j + 1 < n { -(b[j + 1] - b[j]) * inv_h2 } else { T::zero() })
                    .collect();
                RealTridiagonal {
                    lower,
                    diag: vec![T::zero(); n],
                    upper,
                }
            }
            CommutatorModel::ClosedForm => {
                let inv_h = T::one() / h;
                RealTridiagonal {
                    lower: self.grad_b2.iter().map(|&g| g * inv_h).collect(),
                    diag: self.lap_b2.iter().map(|&l| -l).collect(),
                    upper: self.grad_b2.iter().map(|&g| -g * inv_h).collect(),
                }
            }
        }
    }
}

/// Normalized first Dirichlet eigenvector of the discrete Laplacian,
/// `sin(pi (x - x_lo) / L)` scaled to unit discrete norm.
pub fn ground_state<T: Real>(grid: SpatialGrid<T>) -> ComplexField<T> {
    dirichlet_mode(grid, 1)
}

/// Normalized `k`-th Dirichlet eigenvector of the discrete Laplacian.
pub fn dirichlet_mode<T: Real>(grid: SpatialGrid<T>, k: usize) -> ComplexField<T> {
    let len = grid.x_hi() - grid.x_lo();
    let kk = T::count(k);
    let f = ComplexField::from_fn(grid, |x| {
        cplx((kk * T::PI() * (x - grid.x_lo()) / len).sin(), T::zero())
    });
    let nrm = f.norm();
    f.scale_real(T::one() / nrm)
}

/// Eigenvalue of the discrete Laplacian for mode `k`:
/// `-(4 / h^2) sin^2(k pi h / (2 L))`.
pub fn dirichlet_eigenvalue<T: Real>(grid: &SpatialGrid<T>, k: usize) -> T {
    let h = grid.step();
    let len = grid.x_hi() - grid.x_lo();
    let s = (T::count(k) * T::PI() * h / (T::lit(2.0) * len)).sin();
    -T::lit(4.0) / (h * h) * s * s
}
