use super::*;
use crate::seq2seq::{AttentionMode, ModelConfig, EOS};
use rand::SeedableRng;

fn model(seed: u64) -> Seq2Seq<f64> {
    let config = ModelConfig {
        src_vocab: 6,
        tgt_vocab: 6,
        embed: 4,
        hidden: 4,
        attention: AttentionMode::LearnedAdditive,
        bidirectional: false,
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut m = Seq2Seq::new(config, &mut rng).unwrap();
    let b = m.param_mut("out.b").unwrap();
    b.data.copy_from_slice(&[-1.0, -1.0, 0.0, 0.9, 0.5, 0.2]);
    // large target embeddings make the fed token matter
    for e in &mut m.param_mut("tgt_embed").unwrap().data {
        *e *= 20.0;
    }
    m
}

fn pairs() -> Vec<SequencePair> {
    vec![SequencePair::new(vec![3, 4, 5], vec![4, 3, EOS]).unwrap()]
}

fn alpha(a: f64) -> Temperature<f64> {
    Temperature::new(a).unwrap()
}

#[test]
fn selectors_parse_and_resolve() {
    let s: ParamSelector = "out.b[3]".parse().unwrap();
    assert_eq!(
        s,
        ParamSelector {
            name: "out.b".into(),
            index: 3
        }
    );
    let m = model(0);
    let at = s.resolve(&m).unwrap();
    assert_eq!(m.flat()[at], 0.9);
    for bad in ["out.b", "out.b[x]", "[2]", "out.b[1"] {
        assert!(bad.parse::<ParamSelector>().is_err(), "{bad}");
    }
    assert!("nope[0]".parse::<ParamSelector>().unwrap().resolve(&m).is_err());
    assert!("out.b[6]".parse::<ParamSelector>().unwrap().resolve(&m).is_err());
}

#[test]
fn grid_and_jumps() {
    assert_eq!(grid(0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
    assert!(grid(0.0, 1.0, 2).is_err());
    assert!(grid(1.0, 1.0, 5).is_err());
    assert_eq!(max_adjacent_jump(&[0.0, 1.0, 0.5, 3.0]), 2.5);
    assert_eq!(sup_distance(&[0.0, 1.0], &[0.5, -1.0]), 2.0);
}

#[test]
fn flat_region_gives_flat_curves() {
    // an unused source embedding row leaves every loss unchanged
    let m = model(1);
    let data = pairs();
    let probe = Probe::new(&m, &data, 0.0, 0).unwrap();
    let coord = m.flat_index("src_embed", 2 * 4).unwrap();
    let sweep = probe.sweep(coord, &grid(-1.0, 1.0, 11).unwrap(), &[1.0, 5.0]).unwrap();
    for (_, jump) in sweep.jumps() {
        assert_eq!(jump, 0.0);
    }
}

fn flip_probe(m: &Seq2Seq<f64>, data: &[SequencePair]) -> (usize, Bracket<f64>) {
    let probe = Probe::new(m, data, 0.0, 0).unwrap();
    let coord = m.flat_index("out.b", 4).unwrap();
    let bracket = probe
        .find_flip(coord, 0.0, 2.0, 41, 1e-9)
        .unwrap()
        .expect("a flip in range");
    (coord, bracket)
}

#[test]
fn bisection_brackets_a_decision_change() {
    let m = model(2);
    let data = pairs();
    let (coord, b) = flip_probe(&m, &data);
    assert!(b.width() <= 1e-9);
    let probe = Probe::new(&m, &data, 0.0, 0).unwrap();
    assert_ne!(
        probe.signature(coord, b.lo).unwrap(),
        probe.signature(coord, b.hi).unwrap()
    );
    assert!(probe.bisect_flip(coord, 0.0, 0.0 + 1e-3, 1e-9).is_err());
}

#[test]
fn relaxed_jump_shrinks_under_refinement_but_hard_jump_does_not() {
    let m = model(2);
    let data = pairs();
    let (coord, b) = flip_probe(&m, &data);
    let probe = Probe::new(&m, &data, 0.0, 0).unwrap();
    let (lo, hi) = (b.mid() - 0.5, b.mid() + 0.5);
    let coarse = probe.sweep(coord, &grid(lo, hi, 101).unwrap(), &[1.0, 5.0]).unwrap();
    let fine = probe.sweep(coord, &grid(lo, hi, 1001).unwrap(), &[1.0, 5.0]).unwrap();
    let (hc, hf) = (coarse.jumps()[0].1, fine.jumps()[0].1);
    assert!(hf >= 0.9 * hc, "hard jump {hc} -> {hf}");
    for i in 1..3 {
        let (c, f) = (coarse.jumps()[i].1, fine.jumps()[i].1);
        assert!(c >= 5.0 * f, "{}: {c} -> {f}", coarse.jumps()[i].0);
        assert!(hc > c);
    }
}

#[test]
fn larger_temperature_tracks_hard_curve_more_closely() {
    let m = model(2);
    let data = pairs();
    let (coord, b) = flip_probe(&m, &data);
    let probe = Probe::new(&m, &data, 0.0, 0).unwrap();
    let thetas = grid(b.mid() - 0.5, b.mid() + 0.5, 101).unwrap();
    let sweep = probe.sweep(coord, &thetas, &[1.0, 5.0, 25.0, 125.0]).unwrap();
    let d: Vec<f64> = sweep
        .relaxed
        .iter()
        .map(|(_, c)| sup_distance(c, &sweep.hard))
        .collect();
    for w in d.windows(2) {
        assert!(w[1] <= w[0], "{d:?}");
    }
}

#[test]
fn csv_layout() {
    let m = model(3);
    let data = pairs();
    let probe = Probe::new(&m, &data, 0.0, 0).unwrap();
    let sweep = probe.sweep(0, &grid(-0.1, 0.1, 3).unwrap(), &[1.0, 5.0]).unwrap();
    let csv = sweep.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "theta,loss_hard,loss_alpha_1,loss_alpha_5");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("-0.1,"));
    assert_eq!(lines[2].split(',').count(), 4);
}

#[test]
fn gradcheck_passes_for_smooth_regimes() {
    let m = model(4);
    let data = pairs();
    let probe = Probe::new(&m, &data, 0.0, 3).unwrap();
    for regime in [Regime::RelaxedGreedy, Regime::RelaxedSample] {
        let r = gradcheck(&probe, regime, alpha(2.0), 1e-5).unwrap();
        assert!(r.passes(1e-4), "{regime}: {r:?}");
        assert_eq!(r.parameters, m.num_scalars());
    }
    let ce = Probe::new(&m, &data, 1.0, 3).unwrap();
    assert!(gradcheck(&ce, Regime::Ce, alpha(1.0), 1e-5).unwrap().passes(1e-4));
}

#[test]
fn gradcheck_flags_a_bracketed_flip() {
    let m = model(2);
    let data = pairs();
    let (coord, b) = flip_probe(&m, &data);
    let mut at_flip = m.clone();
    let mut flat = at_flip.flat();
    flat[coord] = b.mid();
    at_flip.set_flat(&flat).unwrap();
    let probe = Probe::new(&at_flip, &data, 0.0, 0).unwrap();
    let r = gradcheck(&probe, Regime::SsHardGreedy, alpha(1.0), 1e-5).unwrap();
    assert!(r.discontinuities.contains(&coord));
    assert!(!r.passes(1e-4));
    // the relaxed objective at the same point is smooth
    assert!(gradcheck(&probe, Regime::RelaxedGreedy, alpha(1.0), 1e-5)
        .unwrap()
        .passes(1e-4));
}

#[test]
fn sampled_gradient_variance_is_reported() {
    let m = model(5);
    let data = pairs();
    let probe = Probe::new(&m, &data, 0.0, 0).unwrap();
    let v = gradient_variance(&probe, Regime::RelaxedSample, alpha(1.0), 200).unwrap();
    println!("relaxed-sample gradient variance over 200 draws: {v:e}");
    assert!(v.is_finite() && v >= 0.0);
    // greedy feeds draw nothing, so their gradient never varies
    let greedy = gradient_variance(&probe, Regime::RelaxedGreedy, alpha(1.0), 3).unwrap();
    assert!(greedy.abs() < 1e-12 * v.max(1e-3), "{greedy:e}");
    assert!(gradient_variance(&probe, Regime::RelaxedSample, alpha(1.0), 1).is_err());
}
