//! Kept in its own test binary so that no concurrent test distorts the timings.

use std::time::Instant;

use nested_smc::jitter::JitterConfig;
use nested_smc::nested::{nested_init, nested_step};
use nested_smc::oracle::{LinearGaussian, LinearGaussianSpec};
use nested_smc::{StateSpaceModel, StreamKey};

fn time_steps(n: usize, m: usize) -> f64 {
    let model = LinearGaussian::new(LinearGaussianSpec::default()).unwrap();
    let (_, ys) = model.simulate(0.8, 16, &mut StreamKey::new(51).rng());
    let jitter = JitterConfig::rate_faithful(n, 1.0, model.default_jitter_cov(), model.param_box().clone()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let mut state = nested_init(&model, n, m, StreamKey::new(52)).unwrap();
        // first step warms caches and allocator
        state = nested_step(&state, &model, &jitter, &ys[0], StreamKey::new(53)).unwrap().state;
        let start = Instant::now();
        for y in &ys[1..] {
            state = nested_step(&state, &model, &jitter, y, StreamKey::new(53)).unwrap().state;
        }
        start.elapsed().as_secs_f64()
    })
}

#[test]
fn step_cost_scales_with_n_times_m() {
    let small = (0..3).map(|_| time_steps(100, 100)).fold(f64::INFINITY, f64::min);
    let large = (0..3).map(|_| time_steps(200, 200)).fold(f64::INFINITY, f64::min);
    let ratio = large / small;
    assert!((2.0..=6.0).contains(&ratio), "time ratio {ratio}");
}
