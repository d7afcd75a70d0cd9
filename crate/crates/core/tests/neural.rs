use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pss_core::corpus::Label;
use pss_core::imaging::Binary224;
use pss_core::neural::{EpochPolicy, ImageCnn, ImageCnnConfig, Mode, TextCnn, TextCnnConfig};
use pss_core::pipeline::{train_fusion, FusionMlp, FusionMlpConfig};

fn small_text_config() -> TextCnnConfig {
    TextCnnConfig {
        embed_dim: 6,
        filters: 5,
        dense: 4,
        max_seq_len: 30,
        ..TextCnnConfig::new(20)
    }
}

fn toy_sequences(seed: u64) -> (Vec<Vec<u32>>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seqs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..24 {
        let nd = i % 3 == 0;
        let mut s: Vec<u32> = (0..rng.gen_range(3..12)).map(|_| rng.gen_range(2..22)).collect();
        if nd {
            s.insert(0, 21);
        }
        seqs.push(s);
        labels.push(if nd { Label::NewDocument } else { Label::SameDocument });
    }
    (seqs, labels)
}

#[test]
fn training_ignores_example_order() {
    let (seqs, labels) = toy_sequences(1);
    let cfg = small_text_config();
    let run = |order: &[usize]| {
        let s: Vec<Vec<u32>> = order.iter().map(|&i| seqs[i].clone()).collect();
        let l: Vec<Label> = order.iter().map(|&i| labels[i]).collect();
        let mut m = TextCnn::new(&cfg, 4).unwrap();
        m.train(&s, &l, 0.01, 8, EpochPolicy::default(), 9).unwrap();
        m.network().to_bytes()
    };
    let forward: Vec<usize> = (0..seqs.len()).collect();
    let reversed: Vec<usize> = forward.iter().rev().copied().collect();
    assert_eq!(run(&forward), run(&reversed));
}

#[test]
fn saved_models_predict_identically() {
    let (seqs, labels) = toy_sequences(2);
    let mut m = TextCnn::new(&small_text_config(), 5).unwrap();
    m.train(&seqs, &labels, 0.01, 8, EpochPolicy::Fixed(3), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.pssnn");
    m.save(&path).unwrap();
    let loaded = TextCnn::load(&path).unwrap();
    assert_eq!(m.predict_proba(&seqs).unwrap(), loaded.predict_proba(&seqs).unwrap());
    assert_eq!(
        m.extract_penultimate(&seqs[0]).unwrap(),
        loaded.extract_penultimate(&seqs[0]).unwrap()
    );
}

fn banded_page(nd: bool, rng: &mut ChaCha8Rng) -> Binary224 {
    Binary224::from_fn(|r, c| (nd && r < 30 && c > 20 && c < 200) || rng.gen_bool(0.01))
}

#[test]
fn frozen_backbone_receives_no_gradient() {
    let cfg = ImageCnnConfig {
        channels: vec![2, 3],
        dense: 4,
        ..ImageCnnConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pages: Vec<Binary224> = (0..8).map(|i| banded_page(i % 2 == 0, &mut rng)).collect();
    let refs: Vec<&Binary224> = pages.iter().collect();
    let labels: Vec<Label> = (0..8)
        .map(|i| if i % 2 == 0 { Label::NewDocument } else { Label::SameDocument })
        .collect();
    let mut model = ImageCnn::new(&cfg, 8).unwrap();
    let before = model.network().clone();
    model.train(&refs, &labels, 1e-3, 4, EpochPolicy::Fixed(2), 8).unwrap();
    let k = model.backbone_len();
    for (a, b) in before.layers()[..k].iter().zip(&model.network().layers()[..k]) {
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert!(!pb.trainable);
            assert_eq!(pa.value, pb.value);
            assert!(pb.grad.iter().all(|&g| g == 0.0));
        }
    }
    assert_ne!(before.layers()[k..], model.network().layers()[k..]);
}

#[test]
fn fusion_training_is_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vectors: Vec<Vec<f32>> = (0..40)
        .map(|i| (0..12).map(|j| if j == 0 && i % 4 == 0 { 1.0 } else { rng.gen::<f32>() * 0.1 }).collect())
        .collect();
    let labels: Vec<Label> = (0..40)
        .map(|i| if i % 4 == 0 { Label::NewDocument } else { Label::SameDocument })
        .collect();
    let cfg = FusionMlpConfig { hidden: 8, ..FusionMlpConfig::default() };
    let (a, ha) = train_fusion(&vectors, &labels, &cfg, EpochPolicy::Fixed(5), 6).unwrap();
    let (b, hb) = train_fusion(&vectors, &labels, &cfg, EpochPolicy::Fixed(5), 6).unwrap();
    assert_eq!(a.network().to_bytes(), b.network().to_bytes());
    assert_eq!(ha, hb);
    let fresh = FusionMlp::new(12, &FusionMlpConfig { l2: 0.01, ..cfg.clone() }, 1).unwrap();
    assert!(fresh.network().penalty() > 0.0);
    assert!(fresh.predict_proba(&[vec![0.0; 5]]).is_err());
}

#[test]
fn inference_is_repeatable_with_dropout_present() {
    let (seqs, _) = toy_sequences(6);
    let m = TextCnn::new(&small_text_config(), 2).unwrap();
    let x = vec![m.sequence_tensor(&seqs[0])];
    let net = m.network();
    let a = net.infer(&x, 0, net.len()).unwrap();
    let b = net.infer(&x, 0, net.len()).unwrap();
    assert_eq!(a, b);
    let mut trained = net.clone();
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let t = trained.forward(&x, 0, net.len(), &mut Mode::Train(&mut r)).unwrap();
    assert_eq!(t[0].shape(), a[0].shape());
}
