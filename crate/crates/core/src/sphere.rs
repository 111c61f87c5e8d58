//! Unit-sphere helpers shared by the simulator and the reconstruction.

use core::f64::consts::PI;

use nalgebra::Vector3;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

pub type Vec3 = Vector3<f64>;

/// Draws a direction uniformly distributed on the unit sphere.
///
/// Uses Archimedes' hat-box theorem: the height is uniform on `[-1, 1]` and
/// the azimuth uniform on `[0, 2π)`.
pub fn uniform_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi: f64 = 2.0 * PI * rng.random::<f64>();
    let rho = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(rho * phi.cos(), rho * phi.sin(), z)
}

/// Angle between two (not necessarily unit) vectors, accurate near 0 and π.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Unit vector from polar angle and azimuth.
pub fn from_spherical(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}
