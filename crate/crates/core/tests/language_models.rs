use docvec::corpus::{synth_corpus, GeneratorSpec, LabeledCorpus};
use docvec::lm::{
    lstm_train, perplexity, rnn_train, LanguageModel, LstmLm, LstmSizes, RnnLm, SequenceObjective,
};
use docvec::numerics::{finite_diff_check, Checkpoint, TrainConfig};
use docvec::word_classes::{brown_cluster, WordClassMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tokens(v: usize, n: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..v as u32)).collect()
}

fn jitter<M: LanguageModel<Scalar = f64>>(model: &mut M, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = model.params_mut();
    for i in 0..store.len() {
        for x in store.tensor_mut(i).data_mut() {
            *x += rng.random_range(-scale..scale);
        }
    }
}

fn synth(seed: u64, docs: usize) -> LabeledCorpus {
    let spec = GeneratorSpec::markov(2, 30, docs, (60, 100), 3, 0.05, seed);
    synth_corpus(&spec, seed).unwrap()
}

#[test]
fn rnn_gradients_match_finite_differences() {
    let map = WordClassMap::round_robin(200, 20).unwrap();
    let mut model = RnnLm::<f64>::new(map, 100, 3).unwrap();
    jitter(&mut model, 0.3, 4);
    let tokens = random_tokens(200, 25, 5);
    let err = finite_diff_check(&mut SequenceObjective(model), &tokens[..], 1e-5, 200, 6).unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn lstm_gradients_match_finite_differences() {
    let map = WordClassMap::round_robin(200, 20).unwrap();
    let mut model = LstmLm::<f64>::new(map, LstmSizes::default(), 3).unwrap();
    jitter(&mut model, 0.3, 4);
    let tokens = random_tokens(200, 25, 5);
    let err = finite_diff_check(&mut SequenceObjective(model), &tokens[..], 1e-5, 240, 6).unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn lstm_bias_groups_match_finite_differences() {
    let map = WordClassMap::round_robin(12, 3).unwrap();
    let sizes = LstmSizes {
        compression: 4,
        sigmoid: 5,
        hidden: 6,
    };
    let mut model = LstmLm::<f64>::new(map, sizes, 8).unwrap();
    jitter(&mut model, 0.5, 9);
    for name in ["P", "W_l", "W_m", "R_m", "K", "Q"] {
        model.params_mut().get_mut(name).unwrap().trainable = false;
    }
    let tokens = random_tokens(12, 30, 10);
    let err = finite_diff_check(&mut SequenceObjective(model), &tokens[..], 1e-5, 300, 11).unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

fn check_normalised<M: LanguageModel>(model: &M, seed: u64) {
    for s in 0..100 {
        let tokens = random_tokens(model.vocab_size(), 8, seed + s);
        for dist in model.next_word_distributions(&tokens).unwrap() {
            let total: f64 = dist.iter().sum();
            assert!((total - 1.0).abs() < 1e-8, "sum {total}");
        }
        let trace = model.trace(&tokens).unwrap();
        for (pc, pw) in trace.class_probs.iter().zip(&trace.word_probs) {
            assert!((pc.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((pw.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn factorised_distributions_are_normalised() {
    let map = WordClassMap::round_robin(40, 7).unwrap();
    let mut rnn = RnnLm::<f64>::new(map.clone(), 16, 1).unwrap();
    jitter(&mut rnn, 1.0, 2);
    check_normalised(&rnn, 100);
    let mut lstm = LstmLm::<f64>::new(map, LstmSizes { compression: 8, sigmoid: 8, hidden: 8 }, 1).unwrap();
    jitter(&mut lstm, 1.0, 2);
    check_normalised(&lstm, 200);
}

fn zero_rnn(v: usize, c: usize, d: usize) -> RnnLm<f64> {
    let mut m = RnnLm::<f64>::new(WordClassMap::round_robin(v, c).unwrap(), d, 0).unwrap();
    let store = m.params_mut();
    for i in 0..store.len() {
        store.tensor_mut(i).data_mut().fill(0.0);
    }
    m
}

#[test]
fn zero_parameters_give_uniform_predictions() {
    let m = zero_rnn(6, 3, 4);
    let trace = m.trace(&[0, 1, 2, 3]).unwrap();
    for pc in &trace.class_probs {
        for p in pc {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }
    let ppl = perplexity(&m, &[0, 5, 2, 3, 1]).unwrap();
    assert!((ppl - 6.0).abs() < 1e-12);
    assert!(perplexity(&m, &[1]).is_err());
}

#[test]
fn hand_set_scalar_rnn() {
    let mut m = RnnLm::<f64>::new(WordClassMap::from_assignment(vec![0, 0]).unwrap(), 1, 0).unwrap();
    let (u0, u1, h, q0, q1, k) = (0.7, -0.4, 1.5, 0.3, -1.2, 2.0);
    let store = m.params_mut();
    store.get_mut("U").unwrap().data_mut().copy_from_slice(&[u0, u1]);
    store.get_mut("H").unwrap().data_mut()[0] = h;
    store.get_mut("Q").unwrap().data_mut().copy_from_slice(&[q0, q1]);
    store.get_mut("K").unwrap().data_mut()[0] = k;

    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let s1 = sig(u0);
    let p1 = (q1 * s1).exp() / ((q0 * s1).exp() + (q1 * s1).exp());
    let s2 = sig(u1 + h * s1);
    let p2 = (q0 * s2).exp() / ((q0 * s2).exp() + (q1 * s2).exp());
    let expected = -(p1.ln() + p2.ln());

    let loss = m.sequence_loss(&[0, 1, 0]).unwrap();
    assert!((loss - expected).abs() < 1e-12);
    let ppl = perplexity(&m, &[0, 1, 0]).unwrap();
    assert!((ppl - (expected / 2.0).exp()).abs() < 1e-12);
}

#[test]
fn hand_set_single_cell_lstm() {
    let map = WordClassMap::from_assignment(vec![0, 0]).unwrap();
    let sizes = LstmSizes {
        compression: 1,
        sigmoid: 1,
        hidden: 1,
    };
    let mut m = LstmLm::<f64>::new(map, sizes, 0).unwrap();
    let vals: &[(&str, &[f64])] = &[
        ("P", &[0.5, -1.0]),
        ("W_l", &[2.0]),
        ("b_l", &[0.1]),
        ("W_m", &[0.3, -0.2, 0.8, 1.1]),
        ("R_m", &[0.4, 0.6, -0.5, 0.9]),
        ("b_mf", &[1.0]),
        ("b_mi", &[-0.3]),
        ("b_mo", &[0.2]),
        ("b_mc", &[0.05]),
        ("K", &[0.7]),
        ("b_c", &[0.0]),
        ("Q", &[1.3, -0.6]),
    ];
    for (name, v) in vals {
        m.params_mut().get_mut(name).unwrap().data_mut().copy_from_slice(v);
    }
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let cell = |word: usize, h: f64, c: f64| {
        let p = [0.5, -1.0][word];
        let l = sig(2.0 * p + 0.1);
        let f = sig(0.3 * l + 0.4 * h + 1.0);
        let i = sig(-0.2 * l + 0.6 * h - 0.3);
        let o = sig(0.8 * l - 0.5 * h + 0.2);
        let g = (1.1 * l + 0.9 * h + 0.05).tanh();
        let c = f * c + i * g;
        (o * c.tanh(), c)
    };
    let p_word = |h: f64, w: usize| {
        let z = [1.3 * h, -0.6 * h];
        z[w].exp() / (z[0].exp() + z[1].exp())
    };
    let (h1, c1) = cell(0, 0.0, 0.0);
    let (h2, _) = cell(1, h1, c1);
    let expected = -(p_word(h1, 1).ln() + p_word(h2, 1).ln());
    let loss = m.sequence_loss(&[0, 1, 1]).unwrap();
    assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
}

#[test]
fn saturated_forget_gate_never_decays() {
    let map = WordClassMap::round_robin(4, 2).unwrap();
    let mut m = LstmLm::<f64>::new(map, LstmSizes { compression: 3, sigmoid: 3, hidden: 3 }, 5).unwrap();
    for name in ["W_m", "R_m"] {
        m.params_mut().get_mut(name).unwrap().data_mut().fill(0.0);
    }
    for (name, v) in [("b_mf", 50.0), ("b_mi", 50.0), ("b_mc", 0.5)] {
        m.params_mut().get_mut(name).unwrap().data_mut().fill(v);
    }
    let cells = m.cell_states(&random_tokens(4, 30, 1)).unwrap();
    for w in cells.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            assert!(b.abs() >= a.abs());
        }
    }
}

#[test]
fn gate_activations_stay_in_range() {
    let map = WordClassMap::round_robin(10, 2).unwrap();
    let mut m = LstmLm::<f64>::new(map, LstmSizes { compression: 4, sigmoid: 4, hidden: 5 }, 5).unwrap();
    jitter(&mut m, 2.0, 6);
    for g in m.gate_activations(&random_tokens(10, 40, 2)).unwrap() {
        let (sig, cand) = g.split_at(15);
        assert!(sig.iter().all(|&x| x > 0.0 && x < 1.0));
        assert!(cand.iter().all(|&x| x > -1.0 && x < 1.0));
    }
}

#[test]
fn out_of_range_tokens_are_rejected() {
    let m = zero_rnn(6, 3, 2);
    assert!(m.sequence_loss(&[0, 6]).is_err());
    assert!(m.trace(&[]).is_err());
}

fn parent_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        ..TrainConfig::default()
    }
}

fn uniform_bar(corpus: &LabeledCorpus) -> f64 {
    corpus.vocabulary().len() as f64
}

#[test]
fn rnn_training_beats_uniform_and_is_deterministic() {
    let corpus = synth(3, 20);
    let map = brown_cluster(&corpus, 8).unwrap();
    let (a, report) = rnn_train::<f32>(&corpus, &parent_config(3), 16, &map).unwrap();
    let ppl = *report.accepted_perplexities().last().unwrap();
    assert!(ppl < uniform_bar(&corpus), "validation ppl {ppl}");
    let (b, _) = rnn_train::<f32>(&corpus, &parent_config(3), 16, &map).unwrap();
    assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());

    let (fresh, report) = rnn_train::<f32>(&corpus, &parent_config(0), 16, &map).unwrap();
    assert!(report.epochs.is_empty());
    let init = RnnLm::<f32>::new(map.clone(), 16, TrainConfig::default().seed).unwrap();
    assert_eq!(fresh.to_checkpoint().to_bytes(), init.to_checkpoint().to_bytes());

    let back = RnnLm::<f32>::from_checkpoint(&Checkpoint::from_bytes(&a.to_checkpoint().to_bytes()).unwrap()).unwrap();
    assert_eq!(back.to_checkpoint().to_bytes(), a.to_checkpoint().to_bytes());
}

#[test]
fn validation_perplexity_of_accepted_epochs_never_rises() {
    let corpus = synth(4, 20);
    let map = brown_cluster(&corpus, 8).unwrap();
    let (_, report) = rnn_train::<f32>(&corpus, &parent_config(6), 12, &map).unwrap();
    let ppl = report.accepted_perplexities();
    assert!(ppl.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn lstm_training_beats_uniform_and_is_deterministic() {
    let corpus = synth(5, 20);
    let map = brown_cluster(&corpus, 8).unwrap();
    let sizes = LstmSizes {
        compression: 16,
        sigmoid: 16,
        hidden: 16,
    };
    let (a, report) = lstm_train::<f32>(&corpus, &parent_config(3), sizes, &map).unwrap();
    let ppl = *report.accepted_perplexities().last().unwrap();
    assert!(ppl < uniform_bar(&corpus), "validation ppl {ppl}");
    let (b, _) = lstm_train::<f32>(&corpus, &parent_config(3), sizes, &map).unwrap();
    assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());

    let (fresh, _) = lstm_train::<f32>(&corpus, &parent_config(0), sizes, &map).unwrap();
    let init = LstmLm::<f32>::new(map.clone(), sizes, TrainConfig::default().seed).unwrap();
    assert_eq!(fresh.to_checkpoint().to_bytes(), init.to_checkpoint().to_bytes());
    assert_eq!(fresh.bias("b_mf").unwrap(), vec![1.0f32; 16].as_slice());
}

#[test]
fn repeated_sentence_is_memorised() {
    let text = "the cat sat on the mat . ".repeat(40);
    let policy = docvec::corpus::TokenPolicy {
        min_count: 1,
        ..Default::default()
    };
    let (corpus, _) = LabeledCorpus::from_texts([("d", "g", text.as_str())], policy).unwrap();
    let map = WordClassMap::round_robin(corpus.vocabulary().len(), 2).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        learning_rate: 0.5,
        ..TrainConfig::default()
    };
    let (model, _) = rnn_train::<f64>(&corpus, &cfg, 16, &map).unwrap();
    let ppl = perplexity(&model, corpus.documents()[0].tokens()).unwrap();
    assert!(ppl < 1.5, "perplexity {ppl}");
}
