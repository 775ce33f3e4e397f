use super::*;
use crate::autodiff::{finite_difference_gradient, max_relative_error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn bind(tape: &mut Tape<f64>, scores: &[f64], table: &[f64], dim: usize) -> (Var, Var) {
    let s = tape.param_vector(scores.to_vec()).unwrap();
    let e = tape.param(Shape::matrix(scores.len(), dim), table.to_vec()).unwrap();
    (s, e)
}

fn soft(scores: &[f64], alpha: f64, table: &[f64], dim: usize) -> Vec<f64> {
    let mut tape = Tape::new();
    let (s, e) = bind(&mut tape, scores, table, dim);
    let out = soft_argmax_embedding(&mut tape, s, Temperature::new(alpha).unwrap(), e).unwrap();
    tape.value(out).to_vec()
}

/// Direct evaluation of Σ_y e(y) exp(α s_y) / Σ exp(α s_y'), without
/// max-subtraction.
fn soft_oracle(scores: &[f64], alpha: f64, table: &[f64], dim: usize) -> Vec<f64> {
    let z: f64 = scores.iter().map(|s| (alpha * s).exp()).sum();
    let mut out = vec![0.0; dim];
    for (y, s) in scores.iter().enumerate() {
        let w = (alpha * s).exp() / z;
        for k in 0..dim {
            out[k] += w * table[y * dim + k];
        }
    }
    out
}

#[test]
fn hard_argmax_examples() {
    let mut tape = Tape::new();
    let (s, e) = bind(&mut tape, &[0.1, 0.9, 0.3], &identity(3), 3);
    let (emb, idx) = hard_argmax_embedding(&mut tape, s, e).unwrap();
    assert_eq!(idx, 1);
    assert_eq!(tape.value(emb), &[0.0, 1.0, 0.0]);

    let (s, e) = bind(&mut tape, &[0.5, 0.5], &identity(2), 2);
    let (emb, idx) = hard_argmax_embedding(&mut tape, s, e).unwrap();
    assert_eq!(idx, 0);
    assert_eq!(tape.value(emb), &[1.0, 0.0]);
}

#[test]
fn hard_argmax_agrees_with_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let s: Vec<f64> = (0..7).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut best = 0;
        for i in 1..s.len() {
            if s[i] > s[best] {
                best = i;
            }
        }
        assert_eq!(hard_argmax(&s).unwrap(), best);
    }
}

#[test]
fn hard_argmax_rejects_empty_and_blocks_score_gradient() {
    assert!(matches!(hard_argmax::<f64>(&[]), Err(Error::Empty(_))));
    let mut tape = Tape::new();
    let (s, e) = bind(&mut tape, &[0.1, 0.9], &[1.0, 2.0, 3.0, 4.0], 2);
    let (emb, _) = hard_argmax_embedding(&mut tape, s, e).unwrap();
    let root = tape.sum(emb).unwrap();
    let g = tape.backward(root).unwrap();
    assert_eq!(g.get(s), &[0.0, 0.0]);
    assert_eq!(g.get(e), &[0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn soft_argmax_two_word_example() {
    let out = soft(&[2.0, 1.0], 1.0, &identity(2), 2);
    // e²/(e²+e) = 1/(1+e⁻¹)
    let w0 = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((out[0] - w0).abs() < 1e-15 && (out[1] - (1.0 - w0)).abs() < 1e-15);
    assert!((out[0] - 0.7311).abs() < 1e-4 && (out[1] - 0.2689).abs() < 1e-4);
}

#[test]
fn soft_argmax_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let v = 6;
        let d = 3;
        let s: Vec<f64> = (0..v).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let e: Vec<f64> = (0..v * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let alpha = rng.gen_range(0.1..5.0);
        let got = soft(&s, alpha, &e, d);
        let want = soft_oracle(&s, alpha, &e, d);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}

#[test]
fn soft_argmax_small_alpha_averages_rows() {
    let table = [1.0, 2.0, 3.0, 4.0, 5.0, 9.0];
    let out = soft(&[3.0, -1.0, 0.5], 1e-12, &table, 2);
    assert!((out[0] - 3.0).abs() < 1e-9 && (out[1] - 5.0).abs() < 1e-9);
}

#[test]
fn soft_argmax_large_alpha_selects_argmax_row() {
    let out = soft(&[2.0, 1.0], 50.0, &identity(2), 2);
    assert!((out[0] - 1.0).abs() <= 1e-12 && out[1].abs() <= 1e-12);
    let out = soft(&[2.0, 1.0, -4.0], 1000.0, &identity(3), 3);
    assert!(out.iter().all(|x| x.is_finite()));
}

#[test]
fn soft_argmax_rejects_bad_input() {
    assert!(Temperature::new(0.0f64).is_err());
    assert!(Temperature::new(-1.0f64).is_err());
    assert!(Temperature::new(f64::INFINITY).is_err());
    let mut tape = Tape::new();
    let s = tape.constant_vector(vec![1.0, 2.0]).unwrap();
    let e = tape.constant(Shape::matrix(3, 2), vec![0.0; 6]).unwrap();
    assert!(soft_argmax_embedding(&mut tape, s, Temperature::new(1.0).unwrap(), e).is_err());
}

#[test]
fn convergence_bound_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = 8;
    let d = 4;
    for _ in 0..50 {
        let s: Vec<f64> = (0..v).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e: Vec<f64> = (0..v * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let best = hard_argmax(&s).unwrap();
        let gap = s
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, &x)| s[best] - x)
            .fold(f64::INFINITY, f64::min);
        let e_inf = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for alpha in [1.0, 10.0, 100.0] {
            let out = soft(&s, alpha, &e, d);
            let dist = (0..d).map(|k| (out[k] - e[best * d + k]).abs()).fold(0.0, f64::max);
            let bound = 2.0 * e_inf * (v as f64 - 1.0) * (-alpha * gap).exp();
            assert!(dist <= bound + 1e-15, "α={alpha}: {dist} > {bound}");
        }
    }
}

#[test]
fn soft_argmax_is_continuous_across_a_flip_while_hard_jumps() {
    let table = [1.0, 0.0, 0.0, 1.0];
    let eval = |x: f64, alpha: Option<f64>| -> f64 {
        let scores = [x, 0.0];
        match alpha {
            Some(a) => soft(&scores, a, &table, 2)[0],
            None => {
                let mut tape = Tape::new();
                let (s, e) = bind(&mut tape, &scores, &table, 2);
                let (emb, _) = hard_argmax_embedding(&mut tape, s, e).unwrap();
                tape.value(emb)[0]
            }
        }
    };
    let max_jump = |n: usize, alpha: Option<f64>| -> f64 {
        let (lo, hi) = (-0.37, 0.63);
        let pts: Vec<f64> = (0..n)
            .map(|i| eval(lo + (hi - lo) * i as f64 / (n - 1) as f64, alpha))
            .collect();
        pts.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    };
    for alpha in [1.0, 5.0] {
        let coarse = max_jump(101, Some(alpha));
        let fine = max_jump(1001, Some(alpha));
        assert!(fine * 5.0 <= coarse, "α={alpha}: {coarse} -> {fine}");
    }
    assert_eq!(max_jump(101, None), 1.0);
    assert_eq!(max_jump(1001, None), 1.0);
}

#[test]
fn soft_argmax_gradients_match_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let v = 5;
    let d = 3;
    for _ in 0..20 {
        let s: Vec<f64> = (0..v).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let e: Vec<f64> = (0..v * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let alpha = rng.gen_range(0.5..4.0);
        let run = |theta: &[f64]| -> (f64, Vec<f64>) {
            let mut tape = Tape::new();
            let (sv, ev) = bind(&mut tape, &theta[..v], &theta[v..v + v * d], d);
            let av = tape.param_scalar(theta[v + v * d]);
            let out = soft_argmax_embedding_with(&mut tape, sv, av, ev).unwrap();
            let wv = tape.constant_vector(w.clone()).unwrap();
            let root = tape.dot(out, wv).unwrap();
            let g = tape.backward(root).unwrap();
            let mut grad = g.get(sv).to_vec();
            grad.extend_from_slice(g.get(ev));
            grad.push(g.scalar(av));
            (tape.scalar(root), grad)
        };
        let theta: Vec<f64> = s.iter().chain(&e).copied().chain([alpha]).collect();
        let (_, grad) = run(&theta);
        let numeric = finite_difference_gradient(|t| run(t).0, &theta, 1e-5).unwrap();
        let err = max_relative_error(&grad[..v], &numeric[..v], 1e-8);
        assert!(err <= 1e-5, "score gradient error {err:e}");
        let err = max_relative_error(&grad, &numeric, 1e-8);
        assert!(err <= 1e-5, "full gradient error {err:e}");
    }
}

#[test]
fn gumbel_transform_fixed_points() {
    let u = (-1.0f64).exp();
    assert!(gumbel_transform(u).abs() < 1e-15);
    let u = (-std::f64::consts::E).exp();
    assert!((gumbel_transform(u) + 1.0).abs() < 1e-15);
}

#[test]
fn gumbel_uniforms_are_clamped_and_recorded() {
    let g = GumbelSample::from_uniforms(vec![0.0f64, 1.0, 0.5]).unwrap();
    assert!(g.noise().iter().all(|x| x.is_finite()));
    assert!(g.uniforms().iter().all(|&u| u > 0.0 && u < 1.0));
    for (&u, &n) in g.uniforms().iter().zip(g.noise()) {
        assert_eq!(n, -(-u.ln()).ln());
    }
    assert!(gumbel_noise::<f64, _>(&mut ChaCha8Rng::seed_from_u64(0), 0).is_err());
}

#[test]
fn gumbel_mean_is_euler_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g: GumbelSample<f64> = gumbel_noise(&mut rng, 100_000).unwrap();
    let mean = g.noise().iter().sum::<f64>() / g.len() as f64;
    assert!((mean - EULER_GAMMA).abs() < 0.02, "mean {mean}");
}

#[test]
fn zero_noise_soft_sample_equals_soft_argmax() {
    let s = [0.3, -1.2, 2.0, 0.7];
    let e: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut tape = Tape::new();
    let (sv, ev) = bind(&mut tape, &s, &e, 3);
    let t = Temperature::new(2.5).unwrap();
    let a = soft_argmax_embedding(&mut tape, sv, t, ev).unwrap();
    let b = soft_sample_embedding(&mut tape, sv, t, &GumbelSample::zeros(4), ev).unwrap();
    assert_eq!(tape.value(a), tape.value(b));
}

#[test]
fn soft_sample_fixed_noise_example() {
    let g = GumbelSample {
        noise: vec![0.3665, 0.0],
        uniforms: vec![0.5, (-1.0f64).exp()],
    };
    let mut tape = Tape::new();
    let (sv, ev) = bind(&mut tape, &[1.0, 1.0], &identity(2), 2);
    let out = soft_sample_embedding(&mut tape, sv, Temperature::new(1.0).unwrap(), &g, ev).unwrap();
    let z = 1.3665f64.exp() + 1.0f64.exp();
    assert!((tape.value(out)[0] - 1.3665f64.exp() / z).abs() < 1e-15);
    assert!((tape.value(out)[1] - 1.0f64.exp() / z).abs() < 1e-15);
}

#[test]
fn soft_sample_treats_noise_as_constant_and_checks_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g: GumbelSample<f64> = gumbel_noise(&mut rng, 3).unwrap();
    let mut tape = Tape::new();
    let (sv, ev) = bind(&mut tape, &[0.2, 0.1, -0.4], &identity(3), 3);
    let out = soft_sample_embedding(&mut tape, sv, Temperature::new(3.0).unwrap(), &g, ev).unwrap();
    let w = tape.constant_vector(vec![1.0, -2.0, 0.5]).unwrap();
    let root = tape.dot(out, w).unwrap();
    let grads = tape.backward(root).unwrap();
    assert!(grads.get(sv).iter().any(|&x| x != 0.0));

    let short: GumbelSample<f64> = gumbel_noise(&mut rng, 2).unwrap();
    let mut tape = Tape::new();
    let (sv, ev) = bind(&mut tape, &[0.2, 0.1, -0.4], &identity(3), 3);
    let err = soft_sample_embedding(&mut tape, sv, Temperature::new(3.0).unwrap(), &short, ev);
    assert!(matches!(err, Err(Error::ShapeMismatch { .. })));
}

#[test]
fn gumbel_max_reproduces_softmax_frequencies() {
    let scores: Vec<f64> = (0..10).map(|i| ((i * 7 % 10) as f64 - 4.5) * 0.3).collect();
    let probs = crate::autodiff::softmax(&scores);
    let table = identity(10);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = 100_000;
    let mut counts = [0usize; 10];
    let alpha = Temperature::new(100.0).unwrap();
    for _ in 0..draws {
        let g: GumbelSample<f64> = gumbel_noise(&mut rng, 10).unwrap();
        let perturbed: Vec<f64> = scores.iter().zip(g.noise()).map(|(s, n)| s + n).collect();
        counts[hard_argmax(&perturbed).unwrap()] += 1;
        if counts.iter().sum::<usize>() <= 200 {
            // At α = 100 the soft sample is essentially the one-hot of the draw.
            let mut tape = Tape::new();
            let (sv, ev) = bind(&mut tape, &scores, &table, 10);
            let out = soft_sample_embedding(&mut tape, sv, alpha, &g, ev).unwrap();
            let soft_idx = hard_argmax(tape.value(out)).unwrap();
            assert_eq!(soft_idx, hard_argmax(&perturbed).unwrap());
        }
    }
    let dev = counts
        .iter()
        .zip(&probs)
        .map(|(&c, &p)| (c as f64 / draws as f64 - p).abs())
        .fold(0.0, f64::max);
    assert!(dev <= 0.01, "max deviation {dev}");
}

#[test]
fn mixing_examples() {
    let mut tape = Tape::<f64>::new();
    let gold = tape.constant_vector(vec![1.0]).unwrap();
    let model = tape.constant_vector(vec![2.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        assert_eq!(
            mix_step_input(gold, model, 1.0, &mut rng).unwrap(),
            (gold, MixBranch::Gold)
        );
        assert_eq!(
            mix_step_input(gold, model, 0.0, &mut rng).unwrap(),
            (model, MixBranch::Model)
        );
    }
    let golds = (0..10_000)
        .filter(|_| mix_step_input(gold, model, 0.5, &mut rng).unwrap().1 == MixBranch::Gold)
        .count();
    assert!((4800..=5200).contains(&golds), "{golds}");
    assert!(mix_step_input(gold, model, 1.5, &mut rng).is_err());
}

proptest! {
    #[test]
    fn soft_argmax_is_shift_invariant(
        scores in proptest::collection::vec(-3.0f64..3.0, 2..8),
        shift in -50.0f64..50.0,
        alpha in 0.1f64..20.0,
    ) {
        let v = scores.len();
        let table: Vec<f64> = (0..v * 3).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let a = soft(&scores, alpha, &table, 3);
        let b = soft(&shifted, alpha, &table, 3);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}
