//! Seeded smooth random fields, controls and directions for probes and
//! verification runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::Control;
use crate::field::{dirichlet_mode, ComplexField, SpatialGrid};
use crate::problem::Bounds;
use crate::scalar::{cplx, Real};

/// `sum_m (a_m sin + b_m cos)(m pi s)` with `|a_m|, |b_m| <= 1/m`, sampled at
/// `s = (j + 1/2) / len`.
pub(crate) fn fourier_profile<T: Real>(rng: &mut ChaCha8Rng, len: usize, modes: usize) -> Vec<T> {
    let coeffs: Vec<(f64, f64)> = (1..=modes)
        .map(|m| {
            let decay = 1.0 / m as f64;
            (
                rng.random_range(-1.0..1.0) * decay,
                rng.random_range(-1.0..1.0) * decay,
            )
        })
        .collect();
    (0..len)
        .map(|j| {
            let s = (j as f64 + 0.5) / len as f64;
            let val: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    let arg = (i + 1) as f64 * std::f64::consts::PI * s;
                    a * arg.sin() + b * arg.cos()
                })
                .sum();
            T::lit(val)
        })
        .collect()
}

/// Unit-norm combination of the first eight Dirichlet modes with random
/// complex coefficients decaying like `1/m`.
pub fn smooth_field<T: Real>(grid: SpatialGrid<T>, seed: u64) -> ComplexField<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = 8.min(grid.len());
    let mut f = ComplexField::zeros(grid);
    for m in 1..=modes {
        let c = cplx(
            T::lit(rng.random_range(-1.0..1.0) / m as f64),
            T::lit(rng.random_range(-1.0..1.0) / m as f64),
        );
        f.axpy(c, &dirichlet_mode(grid, m));
    }
    let n = f.norm();
    if n > T::zero() {
        f.scale_real(T::one() / n)
    } else {
        dirichlet_mode(grid, 1)
    }
}

/// Smooth control strictly inside the box: values in the middle 80%.
pub fn smooth_control<T: Real>(n_t: usize, bounds: &Bounds<T>, seed: u64) -> Control<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = fourier_profile::<T>(&mut rng, n_t, 6);
    let peak = p.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let scale = if peak > T::zero() { T::one() / peak } else { T::zero() };
    let mid = (bounds.lower + bounds.upper) * T::lit(0.5);
    let half = bounds.width() * T::lit(0.4);
    Control::new(p.into_iter().map(|x| mid + half * x * scale).collect())
}

/// Smooth direction with `max |v| = 1`.
pub fn smooth_direction<T: Real>(n_t: usize, seed: u64) -> Control<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = fourier_profile::<T>(&mut rng, n_t, 6);
    let peak = p.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let scale = if peak > T::zero() { T::one() / peak } else { T::zero() };
    Control::new(p.into_iter().map(|x| x * scale).collect())
}
