use nalgebra::{DMatrix, DVector};
use optlab::plrf::*;
use optlab::rng::SeededRng;
use optlab::{Algorithm, OptimizerConfig, ScheduleSpec};
use proptest::prelude::*;

fn sgd(lr: f64) -> OptimizerConfig {
    let mut cfg = OptimizerConfig::preset(Algorithm::Sgd, lr, 100.0);
    cfg.weight_decay = ScheduleSpec::constant(0.0);
    cfg
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

fn solve_interpolant(p: &PlrfProblem) -> Vec<f64> {
    let w = DMatrix::from_row_slice(p.hidden_dim, p.d, p.w());
    let b = DVector::from_column_slice(p.b());
    w.lu().solve(&b).unwrap().as_slice().to_vec()
}

#[test]
fn w_entries_have_declared_variance() {
    let p = PlrfProblem::build(512, 2048, 1.0, 1.0, 11).unwrap();
    let n = p.w().len() as f64;
    let mean = p.w().iter().sum::<f64>() / n;
    let var = p.w().iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
    assert!((var * 512.0 - 1.0).abs() < 0.05, "var {var}");
}

#[test]
fn coordinate_variances_follow_power_law() {
    let p = PlrfProblem::build(2, 16, 1.25, 0.5, 3).unwrap();
    let mut rng = SeededRng::new(9);
    let batch = p.sample_batch(100_000, &mut rng);
    for j in [1usize, 4, 16] {
        let var = batch.x.chunks(16).map(|x| x[j - 1].powi(2)).sum::<f64>() / 100_000.0;
        let want = (j as f64).powf(-2.5);
        assert!((var / want - 1.0).abs() < 0.05, "j={j}: {var} vs {want}");
        assert!((p.eigenvalue(j) / want - 1.0).abs() < 1e-14);
    }
    let n = batch.y.len() as f64;
    let mean = batch.y.iter().sum::<f64>() / n;
    let sd = (batch.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 4.0 * sd / n.sqrt());
}

#[test]
fn eigenvalue_proxy_strictly_decreasing() {
    let p = PlrfProblem::build(3, 50, 0.7, 0.5, 1).unwrap();
    for j in 1..50 {
        assert!(p.eigenvalue(j + 1) < p.eigenvalue(j));
    }
}

#[test]
fn interpolating_solution_has_zero_gradient_and_risk() {
    let p = PlrfProblem::build(12, 12, 1.0, 0.6, 4).unwrap();
    let theta = solve_interpolant(&p);
    let mut rng = SeededRng::new(2);
    let batch = p.sample_batch(8, &mut rng);
    let g = p.stochastic_grad(&theta, &batch).unwrap();
    assert!(g.iter().all(|x| x.abs() < 1e-9), "{g:?}");
    assert!(p.population_risk(&theta) < 1e-20);
    assert!(p.population_grad(&theta).iter().all(|x| x.abs() < 1e-10));
}

#[test]
fn shape_mismatch_is_rejected() {
    let p = PlrfProblem::build(3, 6, 1.0, 1.0, 1).unwrap();
    let mut rng = SeededRng::new(1);
    let batch = p.sample_batch(2, &mut rng);
    assert!(matches!(
        p.stochastic_grad(&[0.0; 2], &batch),
        Err(PlrfError::ShapeMismatch {
            expected: 3,
            got: 2
        })
    ));
}

#[test]
fn finite_difference_gradient_on_random_instances() {
    let h = 1e-5;
    for trial in 0..100u64 {
        let mut rng = SeededRng::new(1000 + trial);
        let d = 1 + rng.below(12);
        let v = d + rng.below(24);
        let p = PlrfProblem::build(d, v, 0.5 + rng.uniform(), rng.uniform(), trial).unwrap();
        let theta: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let batch = p.sample_batch(1 + rng.below(6), &mut rng);
        let g = p.stochastic_grad(&theta, &batch).unwrap();
        let fd: Vec<f64> = (0..d)
            .map(|k| {
                let mut a = theta.clone();
                let mut b = theta.clone();
                a[k] += h;
                b[k] -= h;
                (p.batch_loss(&a, &batch).unwrap() - p.batch_loss(&b, &batch).unwrap()) / (2.0 * h)
            })
            .collect();
        assert!(rel(&fd, &g) <= 1e-5, "trial {trial}: {}", rel(&fd, &g));

        let u: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let plus: Vec<f64> = theta.iter().zip(&u).map(|(t, u)| t + h * u).collect();
        let minus: Vec<f64> = theta.iter().zip(&u).map(|(t, u)| t - h * u).collect();
        let dir = (p.batch_loss(&plus, &batch).unwrap() - p.batch_loss(&minus, &batch).unwrap())
            / (2.0 * h);
        let want: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!(
            (dir - want).abs() <= 1e-6 * want.abs().max(1e-3),
            "trial {trial}"
        );
    }
}

#[test]
fn stochastic_gradient_concentrates_on_population_gradient() {
    let p = PlrfProblem::build(6, 18, 1.0, 0.5, 8).unwrap();
    let theta = vec![0.3; 6];
    let exact = p.population_grad(&theta);
    let mut rng = SeededRng::new(5);
    let mut gap = |b: usize| {
        (0..20)
            .map(|_| {
                rel(
                    &p.stochastic_grad(&theta, &p.sample_batch(b, &mut rng))
                        .unwrap(),
                    &exact,
                )
            })
            .sum::<f64>()
            / 20.0
    };
    let small = gap(100);
    let large = gap(10_000);
    let ratio = small / large;
    assert!(large < small);
    assert!((5.0..20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn monte_carlo_loss_matches_closed_form_risk() {
    let p = PlrfProblem::build(4, 12, 1.0, 0.5, 21).unwrap();
    let theta = vec![0.2, -0.1, 0.4, 0.05];
    let mut rng = SeededRng::new(77);
    let n = 1_000_000;
    let mut x = vec![0.0; 12];
    let mut feat = vec![0.0; 4];
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = ((j + 1) as f64).powf(-1.0) * rng.normal();
        }
        let y: f64 = x.iter().zip(p.b()).map(|(a, b)| a * b).sum();
        p.features(&x, &mut feat);
        let r: f64 = feat.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() - y;
        let l = 0.5 * r * r;
        sum += l;
        sq += l * l;
    }
    let mean = sum / n as f64;
    let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    let exact = p.population_risk(&theta);
    assert!(
        (mean - exact).abs() < 3.0 * se,
        "{mean} vs {exact} (se {se})"
    );
}

#[test]
fn zipf_probabilities_sum_to_one() {
    for (m, zeta) in [(1, 1.0), (7, 0.0), (1000, 1.0), (50, 2.3)] {
        let base = PlrfProblem::build(2, 4, 1.0, 1.0, 0).unwrap();
        let moe = MoePlrfProblem::new(base, m, zeta).unwrap();
        assert!((moe.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn uniform_routing_when_zeta_is_zero() {
    let base = PlrfProblem::build(2, 4, 1.0, 1.0, 0).unwrap();
    let moe = MoePlrfProblem::new(base, 4, 0.0).unwrap();
    let mut rng = SeededRng::new(3);
    let n = 200_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[moe.route(&mut rng)] += 1;
    }
    let sd = (n as f64 * 0.25 * 0.75).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 / 4.0).abs() < 4.0 * sd, "{counts:?}");
    }
}

#[test]
fn experts_hit_per_step_matches_expectation() {
    let base = PlrfProblem::build(2, 6, 1.0, 1.0, 0).unwrap();
    let moe = MoePlrfProblem::new(base, 100, 1.0).unwrap();
    let mut data = SeededRng::new(1);
    let mut route = SeededRng::new(2);
    let theta = vec![0.0; 200];
    let mut grad = vec![0.0; 200];
    let steps = 10_000;
    let hits: Vec<f64> = (0..steps)
        .map(|_| {
            let counts = moe.routed_grad(&theta, 10, &mut data, &mut route, &mut grad);
            for (i, c) in counts.iter().enumerate() {
                if *c == 0 {
                    assert!(grad[2 * i..2 * i + 2].iter().all(|g| *g == 0.0));
                }
            }
            counts.iter().filter(|&&c| c > 0).count() as f64
        })
        .collect();
    let mean = hits.iter().sum::<f64>() / steps as f64;
    let var = hits.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / steps as f64;
    let want = moe.expected_experts_hit(10);
    assert!(
        (mean - want).abs() < 4.0 * (var / steps as f64).sqrt(),
        "{mean} vs {want}"
    );
}

#[test]
fn single_expert_reproduces_plrf_bit_identically() {
    let base = PlrfProblem::build(8, 24, 1.25, 0.75, 5).unwrap();
    let moe = MoePlrfProblem::new(base.clone(), 1, 1.0).unwrap();
    let opts = TrainOptions {
        steps: 300,
        batch: 4,
        cadence: Cadence::Every(10),
        seed: 17,
    };
    for alg in [Algorithm::ADana, Algorithm::DanaStarMk4, Algorithm::AdamW] {
        let cfg = OptimizerConfig::preset(alg, 1e-2, 300.0);
        let a = run_training(&base, &cfg, &opts).unwrap();
        let b = run_training(&moe, &cfg, &opts).unwrap();
        assert_eq!(a.theta, b.theta);
        let ra: Vec<u64> = a.points.iter().map(|p| p.risk.to_bits()).collect();
        let rb: Vec<u64> = b.points.iter().map(|p| p.risk.to_bits()).collect();
        assert_eq!(ra, rb);
    }
}

#[test]
fn zero_steps_records_only_initial_risk() {
    let p = PlrfProblem::build(3, 4, 1.0, 0.5, 1).unwrap();
    let opts = TrainOptions {
        steps: 0,
        batch: 1,
        cadence: Cadence::Every(1),
        seed: 0,
    };
    let r = run_training(&p, &sgd(0.1), &opts).unwrap();
    assert_eq!(r.points.len(), 1);
    assert_eq!(r.points[0].risk, p.population_risk(&[0.0; 3]));
    assert_eq!(r.samples(), 0);
}

#[test]
fn sgd_on_one_dimensional_quadratic_decreases_monotonically() {
    let p = PlrfProblem::build(1, 1, 1.0, 1.0, 2).unwrap();
    let opts = TrainOptions {
        steps: 200,
        batch: 1,
        cadence: Cadence::Every(1),
        seed: 3,
    };
    let w2 = p.w()[0] * p.w()[0];
    let r = run_training(&p, &sgd(0.05 / w2), &opts).unwrap();
    for pair in r.points.windows(2) {
        assert!(pair[1].risk <= pair[0].risk);
    }
    assert!(r.final_risk() < 1e-6 * r.initial_risk());
}

#[test]
fn samples_consumed_equal_steps_times_batch() {
    let p = PlrfProblem::build(5, 15, 1.0, 0.5, 2).unwrap();
    let opts = TrainOptions {
        steps: 777,
        batch: 3,
        cadence: Cadence::LogSpaced(15),
        seed: 3,
    };
    let r = run_training(
        &p,
        &OptimizerConfig::preset(Algorithm::ADana, 1e-3, 777.0),
        &opts,
    )
    .unwrap();
    assert_eq!(r.samples(), 777 * 3);
    assert_eq!(r.points.last().unwrap().iteration, 777);
    assert!(r.points.windows(2).all(|w| w[0].iteration < w[1].iteration));
    for pt in &r.points {
        assert_eq!(pt.samples, pt.iteration * 3);
    }
}

#[test]
fn runaway_sgd_is_flagged_diverged() {
    let p = PlrfProblem::build(4, 12, 1.0, 0.5, 2).unwrap();
    let opts = TrainOptions {
        steps: 10_000,
        batch: 1,
        cadence: Cadence::Every(5),
        seed: 3,
    };
    let r = run_training(&p, &sgd(50.0), &opts).unwrap();
    assert!(r.diverged);
    assert!(r.final_risk().is_infinite());
    assert!(r.points.last().unwrap().iteration < 10_000);
}

#[test]
fn training_is_deterministic() {
    let p = PlrfProblem::build(6, 18, 1.0, 0.5, 2).unwrap();
    let opts = TrainOptions {
        steps: 500,
        batch: 2,
        cadence: Cadence::Every(50),
        seed: 8,
    };
    let cfg = OptimizerConfig::preset(Algorithm::DanaStar, 1e-3, 500.0);
    let a = run_training(&p, &cfg, &opts).unwrap();
    let b = run_training(&p, &cfg, &opts).unwrap();
    assert_eq!(a.theta, b.theta);
}

#[test]
fn cadence_iterations() {
    assert_eq!(Cadence::Every(3).iterations(10), vec![3, 6, 9, 10]);
    assert_eq!(Cadence::Every(5).iterations(10), vec![5, 10]);
    assert!(Cadence::Every(1).iterations(0).is_empty());
    let log = Cadence::LogSpaced(5).iterations(10_000);
    assert_eq!(log, vec![1, 10, 100, 1000, 10_000]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn risk_is_nonnegative(seed in 0u64..1000, d in 1usize..8, extra in 0usize..8,
                           theta in prop::collection::vec(-10.0f64..10.0, 8)) {
        let p = PlrfProblem::build(d, d + extra, 1.0, 0.5, seed).unwrap();
        prop_assert!(p.population_risk(&theta[..d]) >= 0.0);
    }

    #[test]
    fn risk_vanishes_only_at_interpolant(seed in 0u64..1000, d in 1usize..6, shift in 0.01f64..1.0) {
        let p = PlrfProblem::build(d, d, 1.0, 0.5, seed).unwrap();
        let mut theta = solve_interpolant(&p);
        prop_assert!(p.population_risk(&theta) < 1e-18);
        theta[0] += shift;
        prop_assert!(p.population_risk(&theta) > 0.0);
    }
}
