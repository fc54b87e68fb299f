use docvec::adaptation::{adapt, concat_features, dv_lstm, dv_rnn, unit_normalize, vec_colmajor, FreezeMask};
use docvec::corpus::{synth_corpus, GeneratorSpec};
use docvec::lm::{lstm_train, rnn_train, LanguageModel, LstmLm, LstmSizes, RnnLm};
use docvec::numerics::TrainConfig;
use docvec::vectors::{DocumentVector, Recipe};
use docvec::word_classes::{brown_cluster, WordClassMap};
use docvec::Error;
use proptest::prelude::*;

fn tiny_sizes() -> LstmSizes {
    LstmSizes {
        compression: 6,
        sigmoid: 5,
        hidden: 4,
    }
}

fn set(model: &mut impl LanguageModel<Scalar = f64>, name: &str, values: &[f64]) {
    let t = model.params_mut().get_mut(name).unwrap();
    t.data_mut().copy_from_slice(values);
}

fn trained_parents() -> (docvec::corpus::LabeledCorpus, RnnLm<f64>, LstmLm<f64>) {
    let spec = GeneratorSpec::markov(2, 20, 10, (60, 90), 3, 0.05, 11);
    let corpus = synth_corpus(&spec, 11).unwrap();
    let map = brown_cluster(&corpus, 5).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        precision: docvec::numerics::Precision::Fp64,
        ..TrainConfig::default()
    };
    let (rnn, _) = rnn_train::<f64>(&corpus, &cfg, 12, &map).unwrap();
    let (lstm, _) = lstm_train::<f64>(&corpus, &cfg, tiny_sizes(), &map).unwrap();
    (corpus, rnn, lstm)
}

fn assert_frozen_identical<M: LanguageModel<Scalar = f64>>(parent: &M, child: &M, unfrozen: &[&str]) {
    for (a, b) in parent.params().iter().zip(child.params().iter()) {
        if unfrozen.contains(&a.name()) {
            continue;
        }
        let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same, "frozen tensor {} changed", a.name());
    }
}

#[test]
fn rnn_mask_leaves_input_and_output_words_untouched() {
    let (corpus, rnn, _) = trained_parents();
    let doc = corpus.documents()[0].tokens();
    let out = adapt(&rnn, doc, &FreezeMask::rnn_default(), &TrainConfig::adaptation()).unwrap();
    assert_frozen_identical(&rnn, &out.model, &["H", "K"]);
    assert_ne!(out.model.recurrent(), rnn.recurrent());
    for name in ["U", "Q"] {
        assert!(out.model.params().get(name).unwrap().shares_storage(rnn.params().get(name).unwrap()));
    }
}

#[test]
fn zero_epochs_return_the_parent() {
    let (corpus, rnn, lstm) = trained_parents();
    let doc = corpus.documents()[3].tokens();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::adaptation()
    };
    let r = adapt(&rnn, doc, &FreezeMask::rnn_default(), &cfg).unwrap();
    assert_eq!(r.model.params(), rnn.params());
    assert_eq!(r.best_epoch, 0);
    assert_eq!(r.adapted_perplexity, r.parent_perplexity);
    let l = adapt(&lstm, doc, &FreezeMask::lstm_default(), &cfg).unwrap();
    assert_eq!(l.model.params(), lstm.params());
}

#[test]
fn lstm_bias_adaptation_lowers_document_perplexity() {
    let (corpus, _, lstm) = trained_parents();
    let doc = corpus.documents()[5].tokens();
    let out = adapt(&lstm, doc, &FreezeMask::lstm_default(), &TrainConfig::adaptation()).unwrap();
    assert!(
        out.adapted_perplexity < out.parent_perplexity,
        "{} !< {}",
        out.adapted_perplexity,
        out.parent_perplexity
    );
    assert!(out.best_epoch >= 1);
    assert_frozen_identical(&lstm, &out.model, &["b_l", "b_mf", "b_mi", "b_mo", "b_mc", "b_c"]);
}

#[test]
fn foreign_tokens_are_a_vocabulary_mismatch() {
    let (_, rnn, _) = trained_parents();
    let v = rnn.vocab_size() as u32;
    let err = adapt(&rnn, &[0, v + 3], &FreezeMask::rnn_default(), &TrainConfig::adaptation()).unwrap_err();
    assert!(matches!(err, Error::VocabularyMismatch(_)), "{err}");
}

#[test]
fn documents_from_one_parent_get_different_vectors() {
    let (corpus, rnn, _) = trained_parents();
    let cfg = TrainConfig::adaptation();
    let vecs: Vec<DocumentVector> = [0, 15]
        .iter()
        .map(|&i| {
            let m = adapt(&rnn, corpus.documents()[i].tokens(), &FreezeMask::rnn_default(), &cfg).unwrap();
            dv_rnn(&m.model, &Recipe::DvRnnHk).unwrap()
        })
        .collect();
    assert_eq!(vecs[0].dim(), 12 * 12 + 5 * 12);
    assert_ne!(vecs[0], vecs[1]);
    let parent = dv_rnn(&rnn, &Recipe::DvRnnH).unwrap();
    assert!(parent.values.iter().all(|v| v.is_finite()));
}

#[test]
fn rnn_vector_dimensions_follow_hidden_and_class_sizes() {
    let map = WordClassMap::round_robin(200, 100).unwrap();
    let rnn = RnnLm::<f32>::new(map, 100, 1).unwrap();
    assert_eq!(dv_rnn(&rnn, &Recipe::DvRnnH).unwrap().dim(), 10000);
    assert_eq!(dv_rnn(&rnn, &Recipe::DvRnnK).unwrap().dim(), 10000);
    assert_eq!(dv_rnn(&rnn, &Recipe::DvRnnHk).unwrap().dim(), 20000);
    assert!(dv_rnn(&rnn, &Recipe::DvLstmDm).is_err());
    let h = dv_rnn(&rnn, &Recipe::DvRnnH).unwrap();
    let z = DocumentVector::new(vec![1.0; 10000], Recipe::Tfidf { n: 5, top_k: 10000 });
    assert_eq!(concat_features(&h, &z).dim(), 20000);
}

#[test]
fn hand_set_lstm_biases() {
    let map = WordClassMap::round_robin(6, 3).unwrap();
    let sizes = LstmSizes {
        compression: 2,
        sigmoid: 2,
        hidden: 3,
    };
    let mut m = LstmLm::<f64>::new(map, sizes, 1).unwrap();
    for name in ["b_l", "b_mf", "b_mi", "b_mo", "b_mc", "b_c"] {
        let n = m.bias(name).unwrap().len();
        set(&mut m, name, &vec![0.0; n]);
    }
    set(&mut m, "b_mf", &[1.0, 0.0, 0.0]);
    set(&mut m, "b_c", &[0.0, 0.0, 2.0]);
    let v = dv_lstm(&m);
    let mut bm = vec![0.0; 12];
    bm[0] = 1.0;
    let mut ba = bm.clone();
    ba.extend([0.0, 0.0]);
    let mut dm = ba.clone();
    dm.extend([0.0, 0.0, 1.0]);
    assert_eq!(v.bm, bm);
    assert_eq!(v.ba, ba);
    assert_eq!(v.bc, vec![0.0, 0.0, 1.0]);
    assert_eq!(v.dm, dm);
}

#[test]
fn lstm_vector_has_two_unit_blocks() {
    let map = WordClassMap::round_robin(600, 500).unwrap();
    let mut m = LstmLm::<f64>::new(map, LstmSizes::default(), 1).unwrap();
    let mut x = 0.1;
    for name in ["b_l", "b_mf", "b_mi", "b_mo", "b_mc", "b_c"] {
        let n = m.bias(name).unwrap().len();
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                x = (x * 7.3 + 0.11) % 1.9 - 0.95;
                x
            })
            .collect();
        set(&mut m, name, &vals);
    }
    let v = dv_lstm(&m);
    assert_eq!(v.dm.len(), 1000);
    assert_eq!(v.bm.len(), 400);
    assert_eq!(v.bc.len(), 500);
    let norm = |s: &[f64]| s.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!((norm(&v.dm[..500]) - 1.0).abs() < 1e-9);
    assert!((norm(&v.dm[500..]) - 1.0).abs() < 1e-9);
    assert!((norm(&v.dm) - 2f64.sqrt()).abs() < 1e-9);
}

fn reshape(v: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut m = vec![0.0; rows * cols];
    for (i, x) in v.iter().enumerate() {
        m[(i % rows) * cols + i / rows] = *x;
    }
    m
}

const ALL_LSTM_GROUPS: [&str; 9] = ["P", "W_l", "b_l", "W_m", "R_m", "b_m", "K", "b_c", "Q"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn colmajor_then_reshape_is_identity(rows in 1usize..7, cols in 1usize..7, seed in 0u64..1000) {
        let data: Vec<f64> = (0..rows * cols).map(|i| (i as f64 + seed as f64).sin()).collect();
        let v = vec_colmajor(&data, rows, cols);
        prop_assert_eq!(reshape(&v, rows, cols), data);
    }

    #[test]
    fn normalised_vectors_have_unit_length(v in proptest::collection::vec(-1e3f64..1e3, 1..50)) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-6);
        let n = unit_normalize(&v);
        prop_assert!((n.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_tensors_survive_any_mask(bits in 1u16..512, doc in proptest::collection::vec(0u32..8, 5..25)) {
        let map = WordClassMap::round_robin(8, 3).unwrap();
        let parent = LstmLm::<f64>::new(map, tiny_sizes(), 2).unwrap();
        let groups: Vec<&str> = ALL_LSTM_GROUPS.iter().enumerate()
            .filter(|(i, _)| bits & (1 << i) != 0).map(|(_, g)| *g).collect();
        let mask = FreezeMask::new(groups.iter().copied()).unwrap();
        let unfrozen: Vec<&str> = mask.tensors(&parent).unwrap().into_iter().collect();
        let cfg = TrainConfig { epochs: 2, learning_rate: 0.5, ..TrainConfig::adaptation() };
        let out = adapt(&parent, &doc, &mask, &cfg).unwrap();
        for (a, b) in parent.params().iter().zip(out.model.params().iter()) {
            if !unfrozen.contains(&a.name()) {
                prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", a.name());
            }
        }
        prop_assert!(out.adapted_perplexity <= out.parent_perplexity);
    }

    #[test]
    fn lstm_vector_ignores_weight_matrices(seed in 0u64..1000, scale in 0.01f64..1.0) {
        let map = WordClassMap::round_robin(8, 3).unwrap();
        let m = LstmLm::<f64>::new(map, tiny_sizes(), seed).unwrap();
        let mut p = m.clone();
        for name in ["P", "W_l", "W_m", "R_m", "K", "Q"] {
            for (i, x) in p.params_mut().get_mut(name).unwrap().data_mut().iter_mut().enumerate() {
                *x += scale * ((i as f64) * 0.37).cos();
            }
        }
        prop_assert_eq!(dv_lstm(&m), dv_lstm(&p));
    }
}
