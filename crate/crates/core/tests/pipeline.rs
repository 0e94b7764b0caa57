use hermite_fpf::density::{GaussianMixture, ParticleEnsemble};
use hermite_fpf::experiments::rmse;
use hermite_fpf::filter::{fpf_run, FilterConfig, GainMethod};
use hermite_fpf::gain::{constant_gain, exact_gain_on_grid, HermiteGalerkin, ObservationFn};
use hermite_fpf::quadrature::QuadratureRule;
use hermite_fpf::sde::{simulate_truth, SdeModel};

fn bistable_truth(t_final: f64, seed: u64) -> hermite_fpf::sde::TruthRun {
    simulate_truth(&SdeModel::bistable(0.4, 0.4).unwrap(), 0.1, 0.01, t_final, seed).unwrap()
}

#[test]
fn every_method_tracks_better_than_ignoring_the_observations() {
    let seeds = 0..6u64;
    let truths: Vec<_> = seeds.clone().map(|s| bistable_truth(20.0, s)).collect();
    let zero_error: f64 = truths
        .iter()
        .map(|t| rmse(&t.states, &vec![0.0; t.len()]).unwrap())
        .sum();
    for method in GainMethod::ALL {
        let err: f64 = truths
            .iter()
            .zip(seeds.clone())
            .map(|(t, s)| {
                let cfg = FilterConfig::bistable_benchmark(20.0, method, s).unwrap();
                let out = fpf_run(&cfg, t).unwrap();
                assert_eq!(out.estimates.len(), t.len());
                assert!(out.estimates.iter().all(|x| x.is_finite()));
                rmse(&t.states, &out.estimates).unwrap()
            })
            .sum();
        assert!(err < 0.8 * zero_error, "{}: {err} vs {zero_error}", method.name());
    }
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let truth = bistable_truth(3.0, 4);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let mut cfg = FilterConfig::bistable_benchmark(3.0, GainMethod::HermiteGalerkin, 4).unwrap();
                cfg.particles = 64;
                fpf_run(&cfg, &truth).unwrap().estimates
            })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn galerkin_gain_recovers_the_linear_gain_of_a_gaussian() {
    // For h(x) = x and X ~ N(m, v) the exact gain is the constant v.
    let var = 0.5;
    let mix = GaussianMixture::gaussian(0.2, var).unwrap();
    let ens = mix.sample(4000, 12).unwrap();
    let h = ObservationFn::identity();
    let eps = mix.amise_bandwidth_constant() * 4000f64.powf(-0.2);
    let gain = HermiteGalerkin::new(10, eps).solve(&ens, &h).unwrap();
    for x in [-0.3, 0.2, 0.6] {
        assert!((gain.eval(x) - var).abs() < 0.1 * var, "K({x}) = {}", gain.eval(x));
    }
    assert!((constant_gain(&ens, &h) - var).abs() < 0.05 * var);

    let quad = QuadratureRule::default();
    let exact = exact_gain_on_grid(|x| mix.eval(x), &h, 0.2, &[-1.0, 0.2, 1.4], &quad).unwrap();
    for k in exact {
        assert!((k - var).abs() < 1e-10);
    }
}

#[test]
fn filter_reproduces_a_fixed_initial_ensemble_without_noise() {
    let model = SdeModel::new("still", |_| 0.0, |_| 1.0, ObservationFn::constant(1.0), 0.0, 0.0).unwrap();
    let truth = simulate_truth(&model, 0.0, 0.01, 0.5, 0).unwrap();
    let init = vec![-1.0, -0.25, 0.5, 2.0];
    let mut cfg = FilterConfig::bistable_benchmark(0.5, GainMethod::HermiteGalerkin, 0).unwrap();
    cfg.model = model;
    cfg.particles = init.len();
    cfg.init = hermite_fpf::filter::InitialDistribution::Particles(init.clone());
    cfg.store_ensembles = true;
    let out = fpf_run(&cfg, &truth).unwrap();
    let last: &ParticleEnsemble = out.ensembles.as_ref().unwrap().last().unwrap();
    for (a, b) in last.positions().iter().zip(&init) {
        assert!((a - b).abs() < 1e-12);
    }
}
