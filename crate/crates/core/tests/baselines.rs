use docvec::baselines::{pvdm_features, pvdm_grid_search, pvdm_train, PvdmConfig, PvdmGrid, TuningConfig};
use docvec::corpus::{synth_corpus, Document, GeneratorSpec, LabeledCorpus};
use docvec::evaluate::ClassifierConfig;

fn synth() -> LabeledCorpus {
    let spec = GeneratorSpec::markov(2, 25, 20, (60, 100), 3, 0.05, 5);
    synth_corpus(&spec, 5).unwrap()
}

fn small(negatives: usize) -> PvdmConfig {
    PvdmConfig {
        dim: 20,
        window: 3,
        negative_samples: negatives,
        epochs: 10,
        ..PvdmConfig::default()
    }
}

#[test]
fn pvdm_loss_falls_over_epochs() {
    let c = synth();
    let docs: Vec<&Document> = c.documents().iter().collect();
    for negatives in [0, 5] {
        let m = pvdm_train(&docs, &small(negatives)).unwrap();
        let l = &m.epoch_losses;
        assert_eq!(l.len(), 10);
        assert!(l[9] < l[0], "negatives {negatives}: {l:?}");
        let rises = l.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(rises <= 2, "negatives {negatives}: {l:?}");
    }
}

#[test]
fn pvdm_test_vectors_do_not_depend_on_other_test_documents() {
    let c = synth();
    let fit: Vec<usize> = (0..c.len()).filter(|i| i % 4 != 0).collect();
    let cfg = small(5);
    let all = pvdm_features(c.documents(), &fit, &cfg).unwrap();
    let mut shuffled = c.documents().to_vec();
    shuffled.swap(0, 4);
    let again = pvdm_features(&shuffled, &fit, &cfg).unwrap();
    assert_eq!(all[8], again[8]);
    assert_eq!(all[1], again[1]);
}

#[test]
fn default_grid_search_tries_96_configurations() {
    let c = synth();
    let base = PvdmConfig {
        dim: 8,
        epochs: 1,
        ..PvdmConfig::default()
    };
    let tuning = TuningConfig {
        fraction: 0.3,
        ..TuningConfig::default()
    };
    let search = pvdm_grid_search(&c, &base, &PvdmGrid::default(), &tuning, &ClassifierConfig::default()).unwrap();
    assert_eq!(search.evaluated.len(), 96);
    let best = search.evaluated.iter().map(|p| p.fscore).fold(f64::MIN, f64::max);
    assert_eq!(search.best_fscore, best);
    assert!(search.sample.len() >= 6 && search.sample.len() < c.len());
}
