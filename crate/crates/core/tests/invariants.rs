use nalgebra::DMatrix;
use proptest::prelude::*;

use qmetro::analytics::{closed_form, compare_steady};
use qmetro::dynamics::{
    build_liouvillian, evolve, real_expm, real_generator, steady_state, Liouvillian, TimeGrid,
};
use qmetro::estimation::SteadyDerivativeMethod;
use qmetro::linalg::{self, kron, max_abs, ComplexMatrix, C64};
use qmetro::model::{decay_rates, total_hamiltonian};
use qmetro::state::{bloch_from_density, density_from_bloch, trace_distance};
use qmetro::{BlochVector, DensityMatrix, InteractionKind, SystemParams};

fn matrix_from(n: usize, raw: &[f64]) -> ComplexMatrix {
    DMatrix::from_fn(n, n, |i, j| {
        C64::new(raw[2 * (i * n + j)], raw[2 * (i * n + j) + 1])
    })
}

// G G^dagger / tr is full rank with probability one.
fn density(n: usize) -> impl Strategy<Value = DensityMatrix> {
    prop::collection::vec(-1.0f64..1.0, 2 * n * n).prop_filter_map("degenerate draw", move |raw| {
        let g = matrix_from(n, &raw);
        let rho = &g * g.adjoint();
        let tr = linalg::trace(&rho).re;
        if tr < 1e-6 {
            return None;
        }
        DensityMatrix::new(linalg::hermitian_part(&rho.unscale(tr))).ok()
    })
}

fn any_matrix(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec(-1.0f64..1.0, 2 * n * n).prop_map(move |raw| matrix_from(n, &raw))
}

fn kind() -> impl Strategy<Value = InteractionKind> {
    prop::sample::select(InteractionKind::ALL.to_vec())
}

fn params() -> impl Strategy<Value = SystemParams> {
    (kind(), 0.0f64..0.1, 0.3f64..1.5, 0.01f64..0.2, 0.05f64..3.0).prop_map(
        |(kind, g, wa, gamma, t)| SystemParams {
            omega_a: wa,
            gamma,
            temperature: t,
            ..SystemParams::reference(kind, g)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn trace_distance_is_a_metric(a in density(4), b in density(4), c in density(4)) {
        let ab = trace_distance(&a, &b).unwrap();
        let ba = trace_distance(&b, &a).unwrap();
        let bc = trace_distance(&b, &c).unwrap();
        let ac = trace_distance(&a, &c).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!(trace_distance(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn partial_traces_recover_product_factors(p in density(2), a in density(2)) {
        let joint = p.tensor(&a);
        prop_assert!(max_abs(&(joint.partial_trace_ancilla().unwrap().matrix() - p.matrix())) < 1e-12);
        prop_assert!(max_abs(&(joint.partial_trace_probe().unwrap().matrix() - a.matrix())) < 1e-12);
    }

    #[test]
    fn bloch_round_trip(rho in density(2)) {
        let r = bloch_from_density(&rho).unwrap();
        prop_assert!(r.norm() <= 1.0 + 1e-12);
        let back = density_from_bloch(&r).unwrap();
        prop_assert!(max_abs(&(back.matrix() - rho.matrix())) < 1e-12);
        prop_assert!((rho.purity() - 0.5 * (1.0 + r.norm_sqr())).abs() < 1e-12);
    }

    #[test]
    fn kron_is_associative_and_multiplicative(
        a in any_matrix(2), b in any_matrix(2), c in any_matrix(2), d in any_matrix(2)
    ) {
        let left = kron(&kron(&a, &b), &c);
        let right = kron(&a, &kron(&b, &c));
        prop_assert!(max_abs(&(left - right)) < 1e-12);
        let mixed = kron(&a, &b) * kron(&c, &d);
        prop_assert!(max_abs(&(mixed - kron(&(&a * &c), &(&b * &d)))) < 1e-12);
    }

    #[test]
    fn rates_obey_detailed_balance(p in params()) {
        let (down, up) = decay_rates(&p);
        prop_assert!(up >= 0.0 && down > up);
        prop_assert!((down - up - p.gamma).abs() < 1e-14);
        let ratio = (-p.omega_a / p.temperature).exp();
        prop_assert!((up / down - ratio).abs() < 1e-12 * ratio.max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagators_compose(p in params(), t1 in 0.0f64..50.0, t2 in 0.0f64..50.0) {
        let r = real_generator(&build_liouvillian(&p).unwrap()).unwrap();
        let composed = real_expm(&r, t1) * real_expm(&r, t2);
        prop_assert!((composed - real_expm(&r, t1 + t2)).amax() < 1e-10);
    }

    #[test]
    fn evolution_stays_physical(p in params(), rho0 in density(4)) {
        let l = build_liouvillian(&p).unwrap();
        let traj = evolve(&l, &rho0, &TimeGrid::linear(200.0, 41).unwrap()).unwrap();
        for rho in traj.states() {
            prop_assert!((linalg::trace(rho.matrix()).re - 1.0).abs() < 1e-10);
            prop_assert!(rho.eigenvalues().iter().all(|&e| e > -1e-8));
        }
    }

    #[test]
    fn bathless_evolution_is_unitary(p in params(), rho0 in density(4)) {
        let l = Liouvillian::from_parts(&total_hamiltonian(&p), 0.0, 0.0).unwrap();
        let traj = evolve(&l, &rho0, &TimeGrid::linear(100.0, 11).unwrap()).unwrap();
        for rho in traj.states() {
            prop_assert!((rho.purity() - rho0.purity()).abs() < 1e-9);
        }
    }

    #[test]
    fn long_evolution_reaches_the_steady_state(
        g in 0.02f64..0.1, wa in 0.5f64..1.0, t in 0.2f64..2.0, rho0 in density(4)
    ) {
        let p = SystemParams { omega_a: wa, temperature: t, ..SystemParams::reference(InteractionKind::XX, g) };
        let l = build_liouvillian(&p).unwrap();
        let ss = steady_state(&l).unwrap();
        prop_assert!(max_abs(&l.apply(ss.matrix())) < 1e-10);
        let horizon = 40.0 / l.spectral_gap();
        let traj = evolve(&l, &rho0, &TimeGrid::linear(horizon, 2).unwrap()).unwrap();
        prop_assert!(trace_distance(&traj.states()[1], &ss).unwrap() < 1e-8);
    }

    #[test]
    fn closed_form_matches_the_numerical_steady_state(
        g in 0.02f64..0.1, wa in 0.5f64..1.0, t in 0.2f64..2.0
    ) {
        let p = SystemParams { omega_a: wa, temperature: t, ..SystemParams::reference(InteractionKind::XX, g) };
        let cmp = compare_steady(&p, SteadyDerivativeMethod::LinearResponse).unwrap();
        prop_assert!((cmp.closed.delta_p - cmp.delta_p_numeric).abs() < 1e-10);
        prop_assert!(cmp.max_relative_error() < 1e-6);
        closed_form(&p).unwrap().validate().unwrap();
    }

    #[test]
    fn bloch_vectors_of_pure_states_are_unit(theta in 0.0f64..std::f64::consts::PI, phi in 0.0f64..6.3) {
        let r = BlochVector::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()).unwrap();
        let rho = density_from_bloch(&r).unwrap();
        prop_assert!((rho.purity() - 1.0).abs() < 1e-12);
    }
}
