//! Oracle checks for the noising/generation dynamics: analytic OU moments,
//! scalar moment recursions of the discrete schemes, and closed-form
//! potential flows.

mod common;

use mfglab::autodiff::{Activation, MlpParams};
use mfglab::dynamics::{
    cnf_integrate, flow_integrate_batch, ou_perturb, probability_flow_simulate,
    reverse_sde_simulate, AnalyticNoisedScore, ConstantPotential, FlowDirection, FlowQuadrature,
    OdeMethod, QuadraticPotential, SdeSpec, SimOptions, ZeroScore,
};
use mfglab::targets::{ParticleEnsemble, TargetDistribution};
use ndarray::{array, Array2};

#[test]
fn perturb_at_time_zero_is_identity() {
    let spec = SdeSpec::ou(2, 3.0);
    let batch = TargetDistribution::Checkerboard.sample(100, 1).unwrap();
    let out = ou_perturb(&spec, &batch, 0.0, 99).unwrap();
    assert_eq!(out.states, batch.states);
}

#[test]
fn perturb_rejects_times_outside_horizon() {
    let spec = SdeSpec::ou(2, 3.0);
    let batch = TargetDistribution::standard_normal(2).sample(10, 1).unwrap();
    assert!(ou_perturb(&spec, &batch, -0.1, 0).is_err());
    assert!(ou_perturb(&spec, &batch, 3.1, 0).is_err());
}

#[test]
fn long_time_marginal_is_standard_normal() {
    let spec = SdeSpec::ou(2, 25.0);
    let zeros = ParticleEnsemble::new(Array2::zeros((100_000, 2)), 0.0, 0, "origin").unwrap();
    let out = ou_perturb(&spec, &zeros, 20.0, 5).unwrap();
    let m = out.sample_mean();
    let c = out.sample_covariance();
    for v in m.iter() {
        assert!(v.abs() < 0.02, "mean {v}");
    }
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((c[[i, j]] - want).abs() < 0.03);
        }
    }
}

#[test]
fn gaussian_initial_law_follows_analytic_ou_moments() {
    let spec = SdeSpec::ou(2, 3.0);
    let target = TargetDistribution::isotropic_gaussian(array![1.0, -2.0], 0.5).unwrap();
    let batch = target.sample(100_000, 3).unwrap();
    for s in [0.5, 1.5, 3.0] {
        let out = ou_perturb(&spec, &batch, s, 11).unwrap();
        let scale = (-s / 2.0f64).exp();
        let var = 0.5 * (-s as f64).exp() + 1.0 - (-s as f64).exp();
        let m = out.sample_mean();
        assert!((m[0] - scale).abs() < 0.03, "s={s}: mean {}", m[0]);
        assert!((m[1] + 2.0 * scale).abs() < 0.03);
        let c = out.sample_covariance();
        assert!((c[[0, 0]] - var).abs() < 0.03, "s={s}: var {}", c[[0, 0]]);
        assert!((c[[1, 1]] - var).abs() < 0.03);
    }
}

#[test]
fn ou_semigroup_property_in_law() {
    let spec = SdeSpec::ou(2, 3.0);
    let target = TargetDistribution::isotropic_gaussian(array![1.5, 0.0], 2.0).unwrap();
    let batch = target.sample(100_000, 21).unwrap();
    let (s1, s2) = (0.7, 1.1);
    let direct = ou_perturb(&spec, &batch, s1 + s2, 40).unwrap();
    // two-stage: perturb to s1, then treat the result as initial data and
    // push it another s2 (fresh noise stream)
    let stage1 = ou_perturb(&spec, &batch, s1, 41).unwrap();
    let stage1 = ParticleEnsemble::new(stage1.states, 0.0, 41, "restart").unwrap();
    let two_stage = ou_perturb(&spec, &stage1, s2, 42).unwrap();
    let (m1, m2) = (direct.sample_mean(), two_stage.sample_mean());
    let (c1, c2) = (direct.sample_covariance(), two_stage.sample_covariance());
    for i in 0..2 {
        assert!((m1[i] - m2[i]).abs() < 0.03, "mean[{i}]");
        for j in 0..2 {
            assert!((c1[[i, j]] - c2[[i, j]]).abs() < 0.04, "cov[{i},{j}]");
        }
    }
}

#[test]
fn reverse_sde_with_analytic_score_recovers_target_covariance() {
    let spec = SdeSpec::ou(2, 3.0);
    let target = TargetDistribution::isotropic_gaussian(array![0.0, 0.0], 0.25).unwrap();
    let score = AnalyticNoisedScore {
        target: &target,
        spec: &spec,
    };
    let out = reverse_sde_simulate(&spec, &score, 20_000, 0.001, 7, None, &SimOptions::default())
        .unwrap();
    let c = out.ensemble.sample_covariance();
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 0.25 } else { 0.0 };
            assert!(
                (c[[i, j]] - want).abs() < 0.02,
                "cov[{i},{j}] = {}",
                c[[i, j]]
            );
        }
    }
    let m = out.ensemble.sample_mean();
    assert!(m.iter().all(|v| v.abs() < 0.02), "{m:?}");
}

#[test]
fn zero_score_variance_matches_em_moment_recursion() {
    // dX = (X/2) dt + dW from N(0, I): the EM chain has the exact variance
    // recursion v' = v (1 + dt/2)^2 + dt
    let spec = SdeSpec::ou(1, 2.0);
    let dt = 0.01;
    let n = 200_000;
    let out = reverse_sde_simulate(
        &spec,
        &ZeroScore(1),
        n,
        dt,
        13,
        None,
        &SimOptions::default(),
    )
    .unwrap();
    let mut v = 1.0;
    for _ in 0..spec.steps_for(dt).unwrap() {
        v = v * (1.0 + dt / 2.0) * (1.0 + dt / 2.0) + dt;
    }
    let c = out.ensemble.sample_covariance()[[0, 0]];
    // CLT noise of a sample variance at n draws is ~ v sqrt(2/n)
    let tol = 5.0 * v * (2.0 / n as f64).sqrt();
    assert!((c - v).abs() < tol, "sample var {c} vs recursion {v}");
}

#[test]
fn reverse_sde_single_particle_is_bitwise_reproducible() {
    let spec = SdeSpec::ou(2, 1.0);
    let target = TargetDistribution::standard_normal(2);
    let score = AnalyticNoisedScore {
        target: &target,
        spec: &spec,
    };
    let a = reverse_sde_simulate(&spec, &score, 1, 0.01, 77, None, &SimOptions::default()).unwrap();
    let b = reverse_sde_simulate(&spec, &score, 1, 0.01, 77, None, &SimOptions::default()).unwrap();
    assert_eq!(a.ensemble.states, b.ensemble.states);
}

#[test]
fn per_particle_streams_are_partition_independent() {
    // the first particles of an n=4 run coincide with an n=2 run
    let spec = SdeSpec::ou(2, 1.0);
    let big = reverse_sde_simulate(
        &spec,
        &ZeroScore(2),
        4,
        0.01,
        5,
        None,
        &SimOptions::default(),
    )
    .unwrap();
    let small = reverse_sde_simulate(
        &spec,
        &ZeroScore(2),
        2,
        0.01,
        5,
        None,
        &SimOptions::default(),
    )
    .unwrap();
    for i in 0..2 {
        assert_eq!(big.ensemble.states.row(i), small.ensemble.states.row(i));
    }
}

#[test]
fn probability_flow_matches_target_moments() {
    let spec = SdeSpec::ou(2, 3.0);
    let target = TargetDistribution::isotropic_gaussian(array![0.0, 0.0], 0.25).unwrap();
    let score = AnalyticNoisedScore {
        target: &target,
        spec: &spec,
    };
    let out =
        probability_flow_simulate(&spec, &score, 20_000, 0.01, 3, OdeMethod::Rk4, None).unwrap();
    let c = out.sample_covariance();
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 0.25 } else { 0.0 };
            assert!((c[[i, j]] - want).abs() < 0.02, "cov[{i},{j}]");
        }
    }
}

#[test]
fn probability_flow_zero_score_is_exponential_growth() {
    // dx = (x/2) dt in generation time: x(T) = x(0) e^{T/2}
    let spec = SdeSpec::ou(1, 2.0);
    let init = TargetDistribution::standard_normal(1);
    let start = init.sample(50, 123).unwrap(); // same draw the simulator makes internally? no: compare against closed form instead
    let _ = start;
    let out = probability_flow_simulate(&spec, &ZeroScore(1), 50, 0.01, 9, OdeMethod::Rk4, None)
        .unwrap();
    // recover the initial draws by integrating the closed form backwards
    let back = out.states.mapv(|v| v * (-1.0f64).exp());
    // and forward again
    let fwd = back.mapv(|v| v * (1.0f64).exp());
    for (a, b) in out.states.iter().zip(fwd.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    // direct check against a separately-seeded single trajectory
    let one = probability_flow_simulate(&spec, &ZeroScore(1), 1, 0.001, 31, OdeMethod::Rk4, None)
        .unwrap();
    let x0 = {
        // reproduce the initial draw from the same stream
        use rand::distributions::Distribution;
        let mut rng = mfglab::dynamics::particle_rng(31, 0);
        let v: f64 = rand_distr::StandardNormal.sample(&mut rng);
        v
    };
    let want = x0 * (1.0f64).exp();
    let got = one.states[[0, 0]];
    assert!(
        (got - want).abs() < 1e-8 * want.abs().max(1.0),
        "{got} vs {want}"
    );
}

#[test]
fn probability_flow_is_deterministic() {
    let spec = SdeSpec::ou(2, 1.0);
    let target = TargetDistribution::standard_normal(2);
    let score = AnalyticNoisedScore {
        target: &target,
        spec: &spec,
    };
    let a = probability_flow_simulate(&spec, &score, 100, 0.01, 55, OdeMethod::Rk4, None).unwrap();
    let b = probability_flow_simulate(&spec, &score, 100, 0.01, 55, OdeMethod::Rk4, None).unwrap();
    assert_eq!(a.states, b.states);
}

#[test]
fn quadratic_potential_flow_matches_closed_form() {
    // U = |x|^2/2: v = -x, div v = -d; over [0, T] the accumulated
    // divergence integral is exactly -d T and x(T) = x0 e^{-T}
    let pot = QuadraticPotential { dim: 2, scale: 1.0 };
    let x0 = array![1.0, -0.5];
    let horizon = 1.0;
    let (end, div) = cnf_integrate(&pot, x0.view(), FlowDirection::Forward, 1e-3, horizon).unwrap();
    assert!((div - (-2.0 * horizon)).abs() < 1e-3, "div integral {div}");
    for i in 0..2 {
        let want = x0[i] * (-horizon as f64).exp();
        assert!((end[i] - want).abs() < 1e-9, "endpoint {} vs {want}", end[i]);
    }
}

#[test]
fn forward_reverse_roundtrip_with_matched_steps() {
    let net = MlpParams::new_random(&[3, 16, 16, 1], Activation::Gelu, 2024).unwrap();
    let x0 = array![0.8, -1.1];
    let (mid, div_fwd) = cnf_integrate(&net, x0.view(), FlowDirection::Forward, 0.01, 1.0).unwrap();
    let (back, div_rev) = cnf_integrate(&net, mid.view(), FlowDirection::Reverse, 0.01, 1.0).unwrap();
    let err = (&back - &x0).iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err <= 1e-6, "roundtrip error {err}");
    // the divergence integral retraces with opposite sign
    assert!((div_fwd + div_rev).abs() < 1e-6, "{div_fwd} vs {div_rev}");
}

#[test]
fn constant_potential_flow_is_identity() {
    let pot = ConstantPotential(2);
    let x0 = array![0.3, 0.4];
    let (end, div) = cnf_integrate(&pot, x0.view(), FlowDirection::Forward, 0.1, 2.0).unwrap();
    assert_eq!(end, x0);
    assert_eq!(div, 0.0);
}

#[test]
fn flow_quadrature_accumulates_kinetic_and_hjb_closed_forms() {
    // U = |x|^2/2 along x(t) = x0 e^{-t}:
    //   int 1/2 |grad U|^2 dt = |x0|^2 (1 - e^{-2T}) / 4
    //   int |dU/dt - 1/2 |grad U|^2| dt = same value (dU/dt = 0)
    let pot = QuadraticPotential { dim: 2, scale: 1.0 };
    let x0 = array![[1.2, -0.3]];
    let horizon: f64 = 1.5;
    let quad = FlowQuadrature {
        divergence: true,
        kinetic: true,
        hjb: true,
        trajectory: false,
    };
    let out = flow_integrate_batch(&pot, &x0, 0.0, horizon, 600, &quad).unwrap();
    let r2 = 1.2f64 * 1.2 + 0.3 * 0.3;
    let want = r2 * (1.0 - (-2.0 * horizon).exp()) / 4.0;
    assert!((out.kinetic_integral[0] - want).abs() < 1e-6);
    assert!((out.hjb_integral[0] - want).abs() < 1e-6);
    assert!((out.div_integral[0] + 2.0 * horizon).abs() < 1e-9);
}

#[test]
fn prob_flow_and_reverse_sde_agree_in_law() {
    let spec = SdeSpec::ou(2, 3.0);
    let target = TargetDistribution::isotropic_gaussian(array![0.5, -0.5], 0.5).unwrap();
    let score = AnalyticNoisedScore {
        target: &target,
        spec: &spec,
    };
    let sde = reverse_sde_simulate(&spec, &score, 20_000, 0.001, 1, None, &SimOptions::default())
        .unwrap()
        .ensemble;
    let ode =
        probability_flow_simulate(&spec, &score, 20_000, 0.01, 2, OdeMethod::Rk4, None).unwrap();
    let (ms, mo) = (sde.sample_mean(), ode.sample_mean());
    let (cs, co) = (sde.sample_covariance(), ode.sample_covariance());
    for i in 0..2 {
        assert!((ms[i] - mo[i]).abs() < 0.03, "mean[{i}]: {} vs {}", ms[i], mo[i]);
        for j in 0..2 {
            assert!((cs[[i, j]] - co[[i, j]]).abs() < 0.03, "cov[{i},{j}]");
        }
    }
}
