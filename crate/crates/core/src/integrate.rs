use nalgebra::{allocator::Allocator, DefaultAllocator, Dim, OVector};

/// Classical four-stage Runge–Kutta step for an autonomous right-hand side.
pub fn rk4<D, F>(x: &OVector<f64, D>, dt: f64, f: F) -> OVector<f64, D>
where
    D: Dim,
    DefaultAllocator: Allocator<D>,
    F: Fn(&OVector<f64, D>) -> OVector<f64, D>,
{
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (0.5 * dt)));
    let k3 = f(&(x + &k2 * (0.5 * dt)));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}
