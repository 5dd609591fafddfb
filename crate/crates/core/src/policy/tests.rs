use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::Mat;
use super::*;
use crate::env::NODE_FEATURES;
use crate::geometry::CellCoord;
use crate::grid::{Cell, OccupancyGrid};

fn small() -> PolicyConfig {
    PolicyConfig { d: 16, layers: 2, ff: 16, k: 4 }
}

fn permuted(input: &PolicyInput, perm: &[usize]) -> PolicyInput {
    // perm[old] = new
    let n = input.features.len();
    let mut features = vec![[0.0; NODE_FEATURES]; n];
    for (old, &new) in perm.iter().enumerate() {
        features[new] = input.features[old];
    }
    PolicyInput {
        features,
        edges: input.edges.iter().map(|&(a, b)| (perm[a].min(perm[b]), perm[a].max(perm[b]))).collect(),
        current: perm[input.current],
        candidates: input.candidates.iter().map(|c| c.map(|x| perm[x])).collect(),
    }
}

#[test]
fn single_vertex_is_deterministic() {
    let net = PolicyNet::new(small(), 1).unwrap();
    let input = PolicyInput {
        features: vec![[0.1, -0.2, 0.5, 1.0, -1.0, 0.0]],
        edges: vec![],
        current: 0,
        candidates: vec![Some(0), None, None, None],
    };
    let a = net.encode(&input).unwrap();
    assert_eq!(a, net.encode(&input).unwrap());
    assert!(a.is_finite());
    let out = net.forward(&input).unwrap();
    assert_eq!(out.probs, vec![1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn encoder_is_permutation_equivariant() {
    let net = PolicyNet::new(small(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [3, 7, 12] {
        let s = random_sample(&mut rng, n, 4);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let h = net.encode(&s.input).unwrap();
        let hp = net.encode(&permuted(&s.input, &perm)).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            for (x, y) in h.row(old).iter().zip(hp.row(new)) {
                assert!((x - y).abs() < 1e-5);
            }
        }
        let p = net.forward(&s.input).unwrap().probs;
        let pp = net.forward(&permuted(&s.input, &perm)).unwrap().probs;
        for (x, y) in p.iter().zip(&pp) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn decoder_follows_candidate_order() {
    let net = PolicyNet::new(small(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = Mat::from_vec(6, 16, (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let out = net.decode(&h, 0, &[Some(1), Some(2), None, Some(4)]).unwrap();
    let rev = net.decode(&h, 0, &[Some(4), None, Some(2), Some(1)]).unwrap();
    assert_eq!(out.probs[2], 0.0);
    assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    for (a, b) in [(0, 3), (1, 2), (3, 0)] {
        assert!((out.probs[a] - rev.probs[b]).abs() < 1e-12);
    }
    let mut dup = h.clone();
    let row: Vec<f64> = dup.row(1).to_vec();
    dup.data[2 * 16..3 * 16].copy_from_slice(&row);
    let d = net.decode(&dup, 0, &[Some(1), Some(2), None, None]).unwrap();
    assert!((d.probs[0] - d.probs[1]).abs() < 1e-12);
    assert!(net.decode(&h, 0, &[None, None, None, None]).is_err());
}

#[test]
fn non_finite_features_are_rejected() {
    let net = PolicyNet::new(small(), 1).unwrap();
    let input = PolicyInput {
        features: vec![[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0], [0.0; 6]],
        edges: vec![(0, 1)],
        current: 0,
        candidates: vec![Some(1), None, None, None],
    };
    assert!(matches!(net.forward(&input), Err(Error::NonFinite(_))));
}

#[test]
fn greedy_selection_and_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = |p: Vec<f64>| PolicyOutput { probs: p, value: None };
    assert_eq!(select_action(&out(vec![0.1, 0.7, 0.2]), SelectMode::Greedy, &mut rng), 1);
    assert_eq!(select_action(&out(vec![0.5, 0.5]), SelectMode::Greedy, &mut rng), 0);
}

#[test]
fn sampling_matches_probabilities() {
    let probs = vec![0.1, 0.0, 0.6, 0.3];
    let o = PolicyOutput { probs: probs.clone(), value: None };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[select_action(&o, SelectMode::Sample, &mut rng)] += 1;
    }
    for (c, p) in counts.iter().zip(&probs) {
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sigma.max(1e-9), "{counts:?}");
    }
}

#[test]
fn weights_round_trip_bit_exact() {
    let net = PolicyNet::new(small(), 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    net.save(&path).unwrap();
    let back = PolicyNet::load(&path).unwrap();
    assert_eq!(back.config(), net.config());
    for (a, b) in net.params().iter().flatten().zip(back.params().iter().flatten()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let bytes = std::fs::read(&path).unwrap();
    assert!(PolicyNet::read_from(&mut &bytes[..bytes.len() - 3]).is_err());
    let text = String::from_utf8_lossy(&bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()]).to_string();
    let mut wrong = text.replace("d=16", "d=24").into_bytes();
    wrong.extend_from_slice(&bytes[text.len()..]);
    assert!(matches!(PolicyNet::read_from(&mut wrong.as_slice()), Err(Error::Weights(_))));
    let mut version = text.replace("mrx-policy 1", "mrx-policy 7").into_bytes();
    version.extend_from_slice(&bytes[text.len()..]);
    assert!(matches!(PolicyNet::read_from(&mut version.as_slice()), Err(Error::Weights(_))));
}

#[test]
fn gradients_match_finite_differences() {
    let r = gradcheck(3, 3, GRADCHECK_STEP).unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
    assert!(r.parameters_checked > 1000);
}

#[test]
fn zero_advantage_gives_zero_policy_gradient() {
    let net = PolicyNet::new(small(), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch: Vec<Sample> = (0..10)
        .map(|_| Sample { advantage: 0.0, ..random_sample(&mut rng, 8, 4) })
        .collect();
    let (stats, _) = batch_gradient(&net, &batch, &LossCoefs { value: 0.0, entropy: 0.0 }).unwrap();
    assert!(stats.grad_norm < 1e-6);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let mut net = PolicyNet::new(small(), 4).unwrap();
    let before = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch: Vec<Sample> = (0..5).map(|_| random_sample(&mut rng, 6, 4)).collect();
    let (_, g) = batch_gradient(&net, &batch, &LossCoefs::default()).unwrap();
    Adam::new(0.0).step(&mut net, &g).unwrap();
    assert_eq!(net, before);
}

#[test]
fn batch_gradient_is_reproducible() {
    let net = PolicyNet::new(small(), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch: Vec<Sample> = (0..70).map(|_| random_sample(&mut rng, 5, 4)).collect();
    let a = batch_gradient(&net, &batch, &LossCoefs::default()).unwrap();
    let b = batch_gradient(&net, &batch, &LossCoefs::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rendezvous_minimizes_the_longest_walk() {
    let g = OccupancyGrid::filled(9, 3, 1.0, Cell::Free);
    let c = rendezvous_cell(&g, &[CellCoord::new(0, 1), CellCoord::new(8, 1)]).unwrap();
    assert_eq!(c, CellCoord::new(4, 1));
}

#[test]
fn policy_names_parse() {
    assert_eq!("greedy".parse::<PolicySpec>().unwrap(), PolicySpec::Baseline(BaselineKind::GreedyUtility));
    assert_eq!(
        "pursuit:2.5".parse::<PolicySpec>().unwrap(),
        PolicySpec::Baseline(BaselineKind::Pursuit { threshold: 2.5 })
    );
    assert!("preplanned:0".parse::<PolicySpec>().is_err());
    assert!("sac".parse::<PolicySpec>().is_err());
}
