//! Closed-form references first: conics, circles, free motion.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use approx::assert_relative_eq;
use hyperorbit::dynamics::{
    circular_oracle, energy_residual, ode_residual, reintegrate_segment, verlet_integrate, FreeParticle,
    KeplerHyperbola, VerletOptions,
};
use hyperorbit::vecops::norm;
use hyperorbit::OrbitError;

#[test]
fn verlet_tracks_the_kepler_conic() {
    let h = KeplerHyperbola::new(1.0, 1.0, 1.0, 0.5).unwrap();
    let field = h.field(2).unwrap().unwrap();
    let (x0, v0) = h.periapsis_state(2);
    let opts = VerletOptions {
        stop_radius: Some(50.0),
        ..VerletOptions::new(1e-3)
    };
    let traj = verlet_integrate(&field, &x0, &v0, (0.0, 1e3), &opts).unwrap();
    assert!(traj.stopped_at_radius);
    for (x, _) in traj.positions.iter().zip(&traj.times).step_by(97) {
        let zeta = x[1].atan2(x[0]);
        assert_relative_eq!(norm(x), h.radius(zeta).unwrap(), max_relative = 1e-5);
    }
    assert!(traj.max_energy_drift < 1e-6);
}

#[test]
fn kepler_asymptote_and_lenz_identity() {
    let h = KeplerHyperbola::new(1.0, 1.0, 1.0, 0.5).unwrap();
    assert_relative_eq!(h.zeta_inf, FRAC_PI_4, max_relative = 1e-14);
    assert_relative_eq!(h.lenz_magnitude, SQRT_2, max_relative = 1e-15);
    assert!(h.lenz_identity_residual() < 1e-12);
    assert!(matches!(h.radius(1.0), Err(OrbitError::Divergence { .. })));
    // heavier and more strongly coupled bodies scatter more
    let strong = KeplerHyperbola::new(1.0, 4.0, 1.0, 0.5).unwrap();
    assert!(strong.scattering_angle() > h.scattering_angle());
}

#[test]
fn circle_solves_the_strong_force_equation() {
    let c = circular_oracle(4.0, 1.0).unwrap();
    assert_eq!((c.radius, c.omega), (1.0, 2.0));
    assert_relative_eq!(c.period(), PI, max_relative = 1e-15);
    let spec = c.field(3).unwrap();
    let seg = c.segment(4001, 1.0, 3).unwrap();
    assert!(energy_residual(&seg, &spec, 1.0).unwrap() < 1e-12);
    // second differences converge at second order
    let coarse = ode_residual(&c.segment(1001, 1.0, 3).unwrap(), &spec).unwrap();
    let fine = ode_residual(&seg, &spec).unwrap();
    assert!(fine < 1e-5);
    assert_relative_eq!(coarse / fine, 16.0, max_relative = 0.01);
}

#[test]
fn circle_radius_formula_other_exponents() {
    for (alpha, energy) in [(3.0, 0.5), (6.0, 2.0)] {
        let c = circular_oracle(alpha, energy).unwrap();
        // attractive V = −r^{−α}: ½r²ω² + V = H and rω² = α r^{−α−1}
        let v = -c.radius.powf(-alpha);
        assert_relative_eq!(0.5 * (c.radius * c.omega).powi(2) + v, energy, max_relative = 1e-13);
        assert_relative_eq!(
            c.radius * c.omega * c.omega,
            -alpha * v / c.radius,
            max_relative = 1e-13
        );
    }
    assert!(circular_oracle(2.0, 1.0).is_err());
    assert!(circular_oracle(4.0, 0.0).is_err());
}

#[test]
fn reintegration_reproduces_the_circle() {
    let c = circular_oracle(4.0, 1.0).unwrap();
    let spec = c.field(2).unwrap();
    let seg = c.segment(801, 1.0, 2).unwrap();
    // the circle is unstable for α > 2, so errors are amplified; check the
    // second-order rate instead of an absolute bound
    let coarse = reintegrate_segment(&seg, &spec, (0.0, c.period()), 2e-4).unwrap();
    let fine = reintegrate_segment(&seg, &spec, (0.0, c.period()), 1e-4).unwrap();
    assert!(fine.relative < 1e-4, "{fine:?}");
    assert_relative_eq!(coarse.relative / fine.relative, 4.0, max_relative = 0.05);
    assert!(fine.energy_drift < 1e-9);
}

#[test]
fn free_motion_is_exact() {
    let f = FreeParticle { dimension: 3 };
    let traj = verlet_integrate(
        &f,
        &[0.0, 1.0, 2.0],
        &[1.0, -1.0, 0.5],
        (0.0, 4.0),
        &VerletOptions::new(0.25),
    )
    .unwrap();
    let (x, v) = traj.final_state();
    assert_eq!(x, &[4.0, -3.0, 4.0]);
    assert_eq!(v, &[1.0, -1.0, 0.5]);
}
