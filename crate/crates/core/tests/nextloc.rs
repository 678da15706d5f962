use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdm_core::nextloc::lstm::{forward, loss_and_gradient, LstmParams, State};
use tdm_core::nextloc::{evaluate, EvalOptions, LocationSequence, ModelKind, Resolution, RnnParams};

fn corpus(seqs: Vec<Vec<usize>>) -> Vec<LocationSequence> {
    seqs.into_iter()
        .enumerate()
        .map(|(u, s)| LocationSequence {
            user_id: format!("u{u:03}"),
            resolution: Resolution::Tower,
            tokens: s.into_iter().map(|t| format!("s{t}")).collect(),
        })
        .collect()
}

/// Every user walks the same 4-cycle from a random offset.
fn cycle_corpus(seed: u64) -> Vec<LocationSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    corpus(
        (0..100)
            .map(|_| {
                let start = rng.gen_range(0..4);
                let len = rng.gen_range(5..12);
                (0..len).map(|i| (start + i) % 4).collect()
            })
            .collect(),
    )
}

/// `x_t = (x_{t-2} + 2 x_{t-1}) mod 5`: the previous token alone says
/// nothing about the next one.
fn second_order_corpus(seed: u64) -> Vec<LocationSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    corpus(
        (0..400)
            .map(|_| {
                let (a, b) = loop {
                    let p = (rng.gen_range(0..5), rng.gen_range(0..5));
                    if p != (0, 0) {
                        break p;
                    }
                };
                let mut s = vec![a, b];
                let len = rng.gen_range(12..=20);
                while s.len() < len {
                    s.push((s[s.len() - 2] + 2 * s[s.len() - 1]) % 5);
                }
                s
            })
            .collect(),
    )
}

fn opts() -> EvalOptions {
    EvalOptions {
        seed: 5,
        ..EvalOptions::default()
    }
}

#[test]
fn cycles_are_predicted_perfectly() {
    let eval = evaluate(&cycle_corpus(1), &opts()).unwrap();
    assert_eq!(eval.table.accuracy(ModelKind::Markov), Some(1.0));
    assert_eq!(eval.table.accuracy(ModelKind::Rnn), Some(1.0));
}

#[test]
fn recurrent_model_learns_second_order_rule() {
    let eval = evaluate(&second_order_corpus(2), &opts()).unwrap();
    let naive = eval.table.accuracy(ModelKind::Naive).unwrap();
    let markov = eval.table.accuracy(ModelKind::Markov).unwrap();
    let rnn = eval.table.accuracy(ModelKind::Rnn).unwrap();
    assert!(rnn >= 0.95, "rnn {rnn}");
    assert!(markov <= naive + 0.10, "markov {markov} naive {naive}");
    assert!(rnn > markov);
}

#[test]
fn evaluation_is_deterministic() {
    let c = second_order_corpus(3);
    let o = EvalOptions {
        rnn: RnnParams { epochs: 3, ..opts().rnn },
        ..opts()
    };
    let a = evaluate(&c, &o).unwrap();
    let b = evaluate(&c, &o).unwrap();
    assert_eq!(a.predictions, b.predictions);
    assert_eq!(a.rnn.unwrap().params, b.rnn.unwrap().params);
}

#[test]
fn gradient_check_on_two_token_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // vocabulary of <unk> plus two tokens
    let mut p = LstmParams::init(3, 4, 5, &mut rng);
    for x in &mut p.data {
        *x += rng.gen_range(-0.3..0.3);
    }
    let inputs = [1, 2, 2, 1, 1, 2, 1];
    let targets = [2, 2, 1, 1, 2, 1, 2];
    let (_, g) = loss_and_gradient(&p, &inputs, &targets, &mut State::zeros(5));
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..p.data.len() {
        let mut plus = p.clone();
        plus.data[i] += h;
        let mut minus = p.clone();
        minus.data[i] -= h;
        let num = (loss_and_gradient(&plus, &inputs, &targets, &mut State::zeros(5)).0
            - loss_and_gradient(&minus, &inputs, &targets, &mut State::zeros(5)).0)
            / (2.0 * h);
        worst = worst.max((g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-7));
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");

    for probs in forward(&p, &inputs, &mut State::zeros(5)) {
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
