use dqnn_core::channels::{random_channel, random_density_hs, random_pure, rng_from_seed, Rng};
use dqnn_core::cost::{evaluate, gradient_term, CostKind, GradMode, GradRequest, GradTerm};
use dqnn_core::network::{Architecture, Network};
use dqnn_core::tensor::{eigvalsh, trace_product_re, C64};
use rand::Rng as _;

const SYMMETRIC: [CostKind; 7] = [
    CostKind::Hs,
    CostKind::Trace,
    CostKind::F1,
    CostKind::D1,
    CostKind::F2,
    CostKind::D2,
    CostKind::Qcb,
];

#[test]
fn symmetric_costs_and_asymmetric_relative_entropy() {
    let mut rng = rng_from_seed(1);
    let mut max_asymmetry: f64 = 0.0;
    for _ in 0..50 {
        let a = random_density_hs(3, &mut rng);
        let b = random_density_hs(3, &mut rng);
        for kind in SYMMETRIC {
            let ab = evaluate(kind, &a, &b).unwrap();
            let ba = evaluate(kind, &b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-9, "{kind}: {ab} vs {ba}");
        }
        let ab = evaluate(CostKind::Qre, &a, &b).unwrap();
        let ba = evaluate(CostKind::Qre, &b, &a).unwrap();
        max_asymmetry = max_asymmetry.max((ab - ba).abs());
    }
    assert!(max_asymmetry > 1e-6);
}

#[test]
fn cost_ranges() {
    let mut rng = rng_from_seed(2);
    let slack = 1e-10;
    for k in 0..200 {
        let d = 2 + k % 3;
        let a = if k % 4 == 0 { random_pure(d, &mut rng) } else { random_density_hs(d, &mut rng) };
        let b = random_density_hs(d, &mut rng);
        let in_unit = |kind| {
            let v = evaluate(kind, &a, &b).unwrap();
            v >= -slack && v <= 1.0 + slack
        };
        assert!(in_unit(CostKind::Trace));
        assert!(in_unit(CostKind::F1));
        assert!(in_unit(CostKind::F2));
        assert!(in_unit(CostKind::Qcb));
        let d1 = evaluate(CostKind::D1, &a, &b).unwrap();
        assert!(d1 >= -slack && d1 <= 2f64.sqrt() + slack);
        assert!(evaluate(CostKind::Qre, &b, &a).unwrap() >= -slack);
    }
}

#[test]
fn data_processing_inequality() {
    let mut rng = rng_from_seed(3);
    let slack = 1e-9;
    for k in 0..200 {
        let (d_in, d_out) = [(2, 2), (2, 3), (3, 2)][k % 3];
        let rho = random_density_hs(d_in, &mut rng);
        let sigma = random_density_hs(d_in, &mut rng);
        let ch = random_channel(d_in, d_out, &mut rng).unwrap();
        let (er, es) = (ch.apply(&rho).unwrap(), ch.apply(&sigma).unwrap());
        let before = |kind| evaluate(kind, &rho, &sigma).unwrap();
        let after = |kind| evaluate(kind, &er, &es).unwrap();
        assert!(after(CostKind::Trace) <= before(CostKind::Trace) + slack, "trace {k}");
        assert!(after(CostKind::F1) >= before(CostKind::F1) - slack, "f1 {k}");
        assert!(after(CostKind::Qcb) >= before(CostKind::Qcb) - slack, "qcb {k}");
        assert!(after(CostKind::Qre) <= before(CostKind::Qre) + slack, "qre {k}");
    }
}

#[test]
fn fidelities_reduce_to_transition_probability() {
    let mut rng = rng_from_seed(4);
    for _ in 0..50 {
        let rho = random_density_hs(3, &mut rng);
        let psi = random_pure(3, &mut rng);
        let overlap = trace_product_re(&rho, &psi);
        assert!((evaluate(CostKind::F1, &rho, &psi).unwrap() - overlap).abs() < 1e-10);
        assert!((evaluate(CostKind::F1, &psi, &rho).unwrap() - overlap).abs() < 1e-10);
        assert!((evaluate(CostKind::F2, &rho, &psi).unwrap() - overlap).abs() < 1e-10);
    }
}

fn close(analytic: f64, fd: f64) -> bool {
    (analytic - fd).abs() <= (1e-5 * fd.abs()).max(1e-8)
}

fn random_net(rng: &mut Rng) -> Network {
    let net = Network::new(Architecture::minimal_extended(2));
    let flat: Vec<f64> = (0..net.param_count()).map(|_| rng.random_range(-3.0..3.0)).collect();
    net.with_flat_params(&flat).unwrap()
}

/// Analytic gradient terms against central differences in parameter space,
/// with the cost composed with the network map.
#[test]
fn analytic_gradients_match_network_finite_differences() {
    let eps = 1e-6;
    for kind in CostKind::ALL.into_iter().filter(|k| k.has_analytic_gradient()) {
        let mut rng = rng_from_seed(100 + kind as u64);
        for instance in 0..50 {
            let net = random_net(&mut rng);
            let target_channel = random_channel(2, 2, &mut rng).unwrap();
            let rho = random_density_hs(2, &mut rng);
            let tar = target_channel.apply(&rho).unwrap();
            let (out, douts) = net.output_with_gradients(&rho).unwrap();
            let flat = net.flat_params();
            for (k, drho) in douts.iter().enumerate() {
                let req = GradRequest { rho_tar: &tar, rho_out: &out, drho, mode: GradMode::Analytic };
                let GradTerm::Value(a) = gradient_term(kind, &req).unwrap() else { panic!("unexpected skip") };
                let mut plus = flat.clone();
                plus[k] += eps;
                let mut minus = flat.clone();
                minus[k] -= eps;
                let cp = evaluate(kind, &tar, &net.with_flat_params(&plus).unwrap().apply(&rho).unwrap()).unwrap();
                let cm = evaluate(kind, &tar, &net.with_flat_params(&minus).unwrap().apply(&rho).unwrap()).unwrap();
                let fd = (cp - cm) / (2.0 * eps);
                assert!(close(a, fd), "{kind} instance {instance} param {k}: {a} vs {fd}");
            }
        }
    }
}

#[test]
fn state_space_finite_differences_cover_hypothesis_testing_costs() {
    let mut rng = rng_from_seed(7);
    for kind in [CostKind::Qcb, CostKind::Qre] {
        let net = random_net(&mut rng);
        let rho = random_density_hs(2, &mut rng);
        let tar = random_channel(2, 2, &mut rng).unwrap().apply(&rho).unwrap();
        let (out, douts) = net.output_with_gradients(&rho).unwrap();
        let eps = 1e-6;
        let flat = net.flat_params();
        for (k, drho) in douts.iter().enumerate().step_by(3) {
            let req = GradRequest {
                rho_tar: &tar,
                rho_out: &out,
                drho,
                mode: GradMode::FiniteDifference { eps: 1e-6 },
            };
            let GradTerm::Value(a) = gradient_term(kind, &req).unwrap() else { panic!() };
            let mut plus = flat.clone();
            plus[k] += eps;
            let mut minus = flat.clone();
            minus[k] -= eps;
            let cp = evaluate(kind, &tar, &net.with_flat_params(&plus).unwrap().apply(&rho).unwrap()).unwrap();
            let cm = evaluate(kind, &tar, &net.with_flat_params(&minus).unwrap().apply(&rho).unwrap()).unwrap();
            let fd = (cp - cm) / (2.0 * eps);
            assert!((a - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "{kind} {k}: {a} vs {fd}");
        }
    }
}

#[test]
fn choi_state_gradients_match_finite_differences() {
    let mut rng = rng_from_seed(8);
    let h = 1e-4;
    for kind in CostKind::ALL.into_iter().filter(|k| k.has_analytic_gradient()) {
        for _ in 0..5 {
            // square-root costs have unbounded curvature near rank-deficient
            // Choi states, where no difference quotient is a usable oracle
            let net = loop {
                let net = random_net(&mut rng);
                if eigvalsh(&net.choi_state()).unwrap().min() > 1e-3 {
                    break net;
                }
            };
            let j_tar = random_channel(2, 2, &mut rng).unwrap().choi();
            let (j, dj) = net.choi_with_gradients();
            let flat = net.flat_params();
            for (k, d) in dj.iter().enumerate() {
                let req = GradRequest { rho_tar: &j_tar, rho_out: &j, drho: d, mode: GradMode::Analytic };
                let GradTerm::Value(a) = gradient_term(kind, &req).unwrap() else { panic!() };
                let at = |h: f64| {
                    let mut p = flat.clone();
                    p[k] += h;
                    evaluate(kind, &j_tar, &net.with_flat_params(&p).unwrap().choi_state()).unwrap()
                };
                let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
                assert!(close(a, fd), "{kind} {k}: {a} vs {fd}");
            }
        }
    }
}

#[test]
fn drho_scaling_is_linear() {
    let mut rng = rng_from_seed(9);
    let net = random_net(&mut rng);
    let rho = random_density_hs(2, &mut rng);
    let tar = random_density_hs(2, &mut rng);
    let (out, douts) = net.output_with_gradients(&rho).unwrap();
    for kind in CostKind::ALL.into_iter().filter(|k| k.has_analytic_gradient()) {
        let d = &douts[3];
        let scaled = d * C64::new(2.5, 0.0);
        let g = |m| match gradient_term(kind, &GradRequest { rho_tar: &tar, rho_out: &out, drho: m, mode: GradMode::Analytic }).unwrap() {
            GradTerm::Value(v) => v,
            GradTerm::Skip => panic!(),
        };
        assert!((g(&scaled) - 2.5 * g(d)).abs() < 1e-12);
    }
}
