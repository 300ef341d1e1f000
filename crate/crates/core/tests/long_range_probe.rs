//! Linear probes on the long-range generator: an utterance's label must be
//! invisible in its own features and readable from its partner's.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rba_gcn::data::{generate_synthetic, partner, Conversation, SynthSpec};

type Sample = (Vec<f64>, usize);

fn concat(conv: &Conversation, j: usize) -> Vec<f64> {
    conv.utterances[j].features.concat()
}

/// Multinomial logistic regression by full-batch gradient descent; returns test accuracy.
fn probe(train: &[Sample], test: &[Sample], classes: usize) -> f64 {
    let d = train[0].0.len();
    let mut w = vec![vec![0.0; d + 1]; classes];
    let lr = 0.05;
    for _ in 0..300 {
        let mut grad = vec![vec![0.0; d + 1]; classes];
        for (x, y) in train {
            let p = softmax(&w, x);
            for c in 0..classes {
                let g = p[c] - f64::from(u8::from(c == *y));
                for k in 0..d {
                    grad[c][k] += g * x[k];
                }
                grad[c][d] += g;
            }
        }
        let n = train.len() as f64;
        for c in 0..classes {
            for k in 0..=d {
                w[c][k] -= lr * (grad[c][k] / n + 1e-3 * w[c][k]);
            }
        }
    }
    let correct = test
        .iter()
        .filter(|(x, y)| {
            let p = softmax(&w, x);
            (0..classes).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap() == *y
        })
        .count();
    correct as f64 / test.len() as f64
}

fn softmax(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let z: Vec<f64> = w.iter().map(|wc| wc[d] + wc[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn samples(convs: &[Conversation], delta: usize, from_partner: bool) -> Vec<Sample> {
    convs
        .iter()
        .flat_map(|c| {
            (0..c.len()).map(move |j| {
                let src = if from_partner { partner(j, delta) } else { j };
                (concat(c, src), c.utterances[j].label.unwrap())
            })
        })
        .collect()
}

#[test]
fn label_lives_in_the_partner_only() {
    let spec = SynthSpec::long_range();
    let data = generate_synthetic(&spec, 3).unwrap();
    let (train, test) = data.conversations.split_at(90);
    let chance = 1.0 / spec.classes as f64;

    let own = probe(&samples(train, spec.delta, false), &samples(test, spec.delta, false), spec.classes);
    let mate = probe(&samples(train, spec.delta, true), &samples(test, spec.delta, true), spec.classes);
    assert!(own < chance + 0.1, "own-feature probe {own}");
    assert!(mate > 0.95, "partner-feature probe {mate}");

    // shuffling utterance order destroys the positional pairing
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shuffle = |convs: &[Conversation], rng: &mut ChaCha8Rng| -> Vec<Conversation> {
        convs
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.utterances.shuffle(rng);
                c
            })
            .collect()
    };
    let (tr, te) = (shuffle(train, &mut rng), shuffle(test, &mut rng));
    let shuffled = probe(&samples(&tr, spec.delta, true), &samples(&te, spec.delta, true), spec.classes);
    assert!(shuffled < chance + 0.1, "shuffled partner probe {shuffled}");
}
