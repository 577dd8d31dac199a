use mfc_core::error::Error;
use mfc_core::plant::{
    control_model_derivative, lateral_forces, lateral_state_matrix, step_control_model,
    step_truth_plant, ActuatorLimits, ControlInput, PlantState, TireModel, TruthPlant,
    VehicleParams,
};
use proptest::prelude::*;

fn no_drag() -> VehicleParams {
    VehicleParams {
        rho_x: 0.0,
        ..VehicleParams::default()
    }
}

#[test]
fn front_force_example() {
    let p = VehicleParams::default();
    let s = PlantState::cruising(20.0, &p);
    let (fyf, fyr) = lateral_forces(&s, 0.01, &p, &TireModel::Linear).unwrap();
    assert!((fyf - 570.0).abs() < 1e-9);
    assert_eq!(fyr, 0.0);
    let (f0, r0) = lateral_forces(&s, 0.0, &p, &TireModel::default()).unwrap();
    assert_eq!((f0, r0), (0.0, 0.0));
}

#[test]
fn singularity_guard_on_slow_states() {
    let p = VehicleParams::default();
    let s = PlantState::cruising(0.2, &p);
    assert!(matches!(
        lateral_forces(&s, 0.0, &p, &TireModel::Linear),
        Err(Error::Singularity { .. })
    ));
}

#[test]
fn straight_coasting_is_an_equilibrium() {
    let p = no_drag();
    let s0 = PlantState::cruising(18.0, &p);
    let mut s = s0;
    for _ in 0..400 {
        s = step_truth_plant(
            &s,
            &ControlInput::default(),
            &p,
            &TireModel::default(),
            0.005,
        )
        .unwrap();
    }
    assert!((s.vx - 18.0).abs() < 1e-9);
    assert_eq!(s.y, 0.0);
    assert!((s.x - 36.0).abs() < 1e-9);
}

#[test]
fn rk4_observed_order() {
    let p = VehicleParams::default();
    let s0 = PlantState {
        vx: 15.0,
        vy: 0.3,
        psi_dot: 0.2,
        ..PlantState::cruising(15.0, &p)
    };
    let u = ControlInput {
        torque: 400.0,
        steer: 0.04,
    };
    let integrate = |n: usize| {
        let dt = 1.0 / n as f64;
        let mut s = s0;
        for _ in 0..n {
            s = step_control_model(&s, &u, &p, dt).unwrap();
        }
        s
    };
    let reference = integrate(4096);
    let err = |n: usize| {
        let s = integrate(n);
        [
            s.vx - reference.vx,
            s.vy - reference.vy,
            s.psi_dot - reference.psi_dot,
            s.y - reference.y,
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let order = (err(8) / err(16)).log2();
    assert!(order >= 3.5, "observed order {order}");
}

#[test]
fn steady_state_yaw_rate_matches_linear_formula() {
    let p = no_drag();
    let (vx, delta) = (15.0, 0.01);
    let u = ControlInput {
        torque: 0.0,
        steer: delta,
    };
    let mut s = PlantState::cruising(vx, &p);
    for _ in 0..3000 {
        s = step_control_model(&s, &u, &p, 0.005).unwrap();
    }
    let l = p.lf + p.lr;
    let v = s.vx;
    let k = p.m * v * v * (p.lr * p.cr - p.lf * p.cf) / (l * p.cf * p.cr);
    let expected = v * delta / (l + k);
    assert!(
        (s.psi_dot - expected).abs() / expected < 1e-3,
        "{} vs {}",
        s.psi_dot,
        expected
    );
}

#[test]
fn constant_torque_speed_ramp() {
    let p = no_drag();
    let torque = 600.0;
    let mut s = PlantState::cruising(10.0, &p);
    let u = ControlInput { torque, steer: 0.0 };
    for _ in 0..400 {
        s = step_control_model(&s, &u, &p, 0.005).unwrap();
    }
    let expected = 10.0 + torque / (p.m * p.r) * 2.0;
    assert!((s.vx - expected).abs() < 1e-9);
}

#[test]
fn truth_plant_reduces_to_control_model() {
    let p = VehicleParams {
        ir: 0.0,
        rho_x: 0.0,
        ..VehicleParams::default()
    };
    let u = ControlInput {
        torque: -300.0,
        steer: 0.03,
    };
    let mut a = PlantState {
        vy: 0.2,
        psi_dot: 0.1,
        ..PlantState::cruising(20.0, &p)
    };
    let mut b = a;
    let truth = TruthPlant {
        max_substep: 0.005,
        ..TruthPlant::new(p, TireModel::Linear)
    };
    for _ in 0..200 {
        a = truth.step(&a, &u, 0.005).unwrap();
        b = step_control_model(&b, &u, &p, 0.005).unwrap();
    }
    for (x, y) in [
        (a.vx, b.vx),
        (a.vy, b.vy),
        (a.psi_dot, b.psi_dot),
        (a.x, b.x),
        (a.y, b.y),
    ] {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
}

#[test]
fn saturating_tire_departs_from_linear_at_large_slip() {
    let p = VehicleParams::default();
    let s = PlantState::cruising(20.0, &p);
    let (lin, _) = lateral_forces(&s, 0.15, &p, &TireModel::Linear).unwrap();
    let (sat, _) = lateral_forces(&s, 0.15, &p, &TireModel::default()).unwrap();
    assert!((lin - sat) / lin > 0.05, "linear {lin}, saturating {sat}");
}

#[test]
fn lateral_motion_decays_without_inputs() {
    let p = no_drag();
    let vx = 20.0;
    let a = lateral_state_matrix(vx, &p);
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    assert!(
        tr < 0.0 && det > 0.0,
        "lateral subsystem not stable at {vx} m/s"
    );

    // the quadratic Lyapunov function of the linear subsystem decreases
    // monotonically; the Euclidean norm may transiently grow
    let mut s = PlantState {
        vy: 0.5,
        psi_dot: -0.2,
        ..PlantState::cruising(vx, &p)
    };
    let energy = |s: &PlantState| 0.5 * p.m * s.vy * s.vy + 0.5 * p.iz * s.psi_dot * s.psi_dot;
    let start = energy(&s);
    let mut prev_norm = f64::INFINITY;
    for k in 0..2000 {
        s = step_control_model(&s, &ControlInput::default(), &p, 0.005).unwrap();
        let n = s.vy.hypot(s.psi_dot);
        if k % 200 == 0 {
            assert!(n < prev_norm);
            prev_norm = n;
        }
    }
    assert!(energy(&s) < 1e-6 * start);
}

#[test]
fn non_finite_and_bad_step_rejected() {
    let p = VehicleParams::default();
    let s = PlantState {
        vy: f64::NAN,
        ..PlantState::cruising(10.0, &p)
    };
    assert!(step_control_model(&s, &ControlInput::default(), &p, 0.005).is_err());
    let ok = PlantState::cruising(10.0, &p);
    assert!(step_control_model(&ok, &ControlInput::default(), &p, 0.0).is_err());
    assert!(TruthPlant::default()
        .step(&ok, &ControlInput::default(), -1.0)
        .is_err());
}

#[test]
fn actuator_clamp_flags() {
    let lim = ActuatorLimits::default();
    let (u, sat) = lim.clamp(ControlInput {
        torque: 5000.0,
        steer: -0.1,
    });
    assert_eq!(u.torque, 2000.0);
    assert_eq!(u.steer, -0.1);
    assert!(sat.torque && !sat.steer);
}

#[test]
fn vehicle_params_reject_bad_values() {
    assert!(VehicleParams {
        mu: 0.0,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(VehicleParams {
        mu: 1.2,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(VehicleParams {
        m: -1.0,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(VehicleParams {
        ir: 0.0,
        rho_x: 0.0,
        ..Default::default()
    }
    .validate()
    .is_ok());
}

proptest! {
    #[test]
    fn lateral_force_monotone_in_adhesion(
        slip in -0.3f64..0.3,
        mu_lo in 0.1f64..1.0,
        dmu in 0.0f64..0.5,
    ) {
        let p = VehicleParams::default();
        let (fz, _) = p.axle_loads();
        let mu_hi = (mu_lo + dmu).min(1.0);
        for tire in [TireModel::Linear, TireModel::default()] {
            let lo = tire.force(slip, p.cf, mu_lo, fz).abs();
            let hi = tire.force(slip, p.cf, mu_hi, fz).abs();
            prop_assert!(hi >= lo);
        }
    }

    #[test]
    fn tire_force_is_odd_and_bounded(slip in -1.0f64..1.0, mu in 0.1f64..1.0) {
        let p = VehicleParams::default();
        let (fz, _) = p.axle_loads();
        let tire = TireModel::default();
        prop_assert_eq!(tire.force(-slip, p.cf, mu, fz), -tire.force(slip, p.cf, mu, fz));
        prop_assert!(tire.force(slip, p.cf, mu, fz).abs() <= tire.peak(mu, fz).unwrap());
    }

    #[test]
    fn kinematics_follow_heading(psi in -3.1f64..3.1, vx in 1.0f64..30.0, vy in -1.0f64..1.0) {
        let p = VehicleParams::default();
        let s = PlantState { vx, vy, psi, ..PlantState::cruising(vx, &p) };
        let d = control_model_derivative(&s, &ControlInput::default(), &p).unwrap();
        prop_assert!((d[4].hypot(d[5]) - vx.hypot(vy)).abs() < 1e-9);
    }
}
