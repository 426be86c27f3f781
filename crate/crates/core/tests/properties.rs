use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use hnls_core::hypgeo::{geodesic_distance, Dimension, HyperboloidPoint, RadialGrid};
use hnls_core::nls::nonlinear_phase;
use hnls_core::propagator::propagate_spectral;

fn point(r: f64, dir: [f64; 3]) -> HyperboloidPoint {
    HyperboloidPoint::from_polar(r, &dir).unwrap()
}

fn direction() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0..1.0f64).prop_filter("nonzero", |d| d.iter().map(|v| v * v).sum::<f64>() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn distance_is_a_metric(r1 in 0.0..4.0f64, r2 in 0.0..4.0f64, r3 in 0.0..4.0f64,
                            d1 in direction(), d2 in direction(), d3 in direction()) {
        let (a, b, c) = (point(r1, d1), point(r2, d2), point(r3, d3));
        let ab = geodesic_distance(&a, &b).unwrap();
        let ba = geodesic_distance(&b, &a).unwrap();
        let bc = geodesic_distance(&b, &c).unwrap();
        let ac = geodesic_distance(&a, &c).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!(ac <= ab + bc + 1e-7);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn polar_radius_is_distance_from_origin(r in 0.0..8.0f64, d in direction()) {
        let o = HyperboloidPoint::origin(Dimension::new(3).unwrap());
        let dist = geodesic_distance(&o, &point(r, d)).unwrap();
        prop_assert!((dist - r).abs() <= 1e-7 * (1.0 + r));
    }

    #[test]
    fn phase_rotation_keeps_modulus(a in 0.1..5.0f64, p in 1.5..5.0f64, tau in -1.0..1.0f64) {
        let g = Arc::new(RadialGrid::new(Dimension::new(3).unwrap(), 8.0, 64).unwrap());
        let u = g.sample(|r| Complex64::new(a * (-r * r).exp(), 0.3 * a * r * (-r * r).exp()));
        let v = nonlinear_phase(&u, 1.0, p, tau);
        for (x, y) in u.values().iter().zip(v.values()) {
            prop_assert!((x.norm() - y.norm()).abs() <= 1e-13 * (1.0 + x.norm()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn linear_flow_is_unitary_in_three_dimensions(width in 0.3..1.5f64, k in 0.0..2.0f64, t in -1.0..1.0f64) {
        let g = Arc::new(RadialGrid::new(Dimension::new(3).unwrap(), 16.0, 400).unwrap());
        let u0 = g.sample(|r| Complex64::new((k * r).cos() * (-(r / width).powi(2)).exp(), 0.0));
        let u = propagate_spectral(&u0, t).unwrap();
        prop_assert!((u.mass() - u0.mass()).abs() <= 1e-12 * u0.mass());
    }

    // Tabulated transforms conserve mass up to a resolution error that
    // depends on how many cells cover the profile width.
    #[test]
    fn linear_flow_conserves_resolved_mass(width in 1.0..1.5f64, t in -1.0..1.0f64, n in 2usize..7) {
        let g = Arc::new(RadialGrid::new(Dimension::new(n).unwrap(), 16.0, 400).unwrap());
        let u0 = g.sample(|r| Complex64::new((-(r / width).powi(2)).exp(), 0.0));
        let u = propagate_spectral(&u0, t).unwrap();
        prop_assert!((u.mass() - u0.mass()).abs() <= 1e-6 * u0.mass());
    }
}

