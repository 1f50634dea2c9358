use std::collections::HashSet;

use snnmeta_core::episodes::{
    augment_rotations, load_corpus, sample_episode, split_classes, ClassCorpus, ClassRecord, Dataset,
};
use snnmeta_core::pixels::PixelGrid;
use snnmeta_core::synth::{glyph_corpus, write_corpus, GlyphStyle};
use snnmeta_core::{SimRng, SnnError};

fn numbered_corpus(n_classes: usize, per_class: usize) -> ClassCorpus {
    ClassCorpus::new(
        (0..n_classes)
            .map(|c| ClassRecord {
                id: format!("class{c:02}"),
                images: (0..per_class)
                    .map(|s| PixelGrid::new(2, 2, vec![c as f32 / n_classes as f32, s as f32 / per_class as f32, 0.0, 1.0]))
                    .collect(),
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn episode_structure_and_disjointness() {
    let corpus = numbered_corpus(12, 6);
    let mut rng = SimRng::seed_from_u64(1);
    for _ in 0..200 {
        let ep = sample_episode(&corpus, 5, 2, 5, &mut rng).unwrap();
        assert_eq!(ep.support.len(), 10);
        assert_eq!(ep.query.len(), 5);
        let classes: HashSet<usize> = ep.classes.iter().copied().collect();
        assert_eq!(classes.len(), 5);
        for label in 0..5 {
            assert_eq!(ep.support.iter().filter(|s| s.label == label).count(), 2);
            assert_eq!(ep.query.iter().filter(|s| s.label == label).count(), 1);
        }
        for shot in ep.support.iter().chain(&ep.query) {
            assert_eq!(shot.sample.class, ep.classes[shot.label]);
        }
        let support: HashSet<_> = ep.support.iter().map(|s| s.sample).collect();
        assert!(ep.query.iter().all(|q| !support.contains(&q.sample)));
    }
}

#[test]
fn class_and_probe_frequencies_are_uniform() {
    let n_classes = 10;
    let corpus = numbered_corpus(n_classes, 4);
    let mut rng = SimRng::seed_from_u64(2);
    let trials = 4000;
    let mut class_hits = vec![0u32; n_classes];
    let mut probe_label = [0u32; 5];
    let mut first_support_label = [0u32; 5];
    for _ in 0..trials {
        let ep = sample_episode(&corpus, 5, 1, 1, &mut rng).unwrap();
        for &c in &ep.classes {
            class_hits[c] += 1;
        }
        probe_label[ep.query[0].label] += 1;
        first_support_label[ep.support[0].label] += 1;
    }
    // each class is picked with probability 1/2 per episode
    let expected = trials as f64 * 0.5;
    let sd = (trials as f64 * 0.25).sqrt();
    for (c, &h) in class_hits.iter().enumerate() {
        assert!((h as f64 - expected).abs() < 4.0 * sd, "class {c}: {h}");
    }
    let expected = trials as f64 / 5.0;
    let sd = (trials as f64 * 0.2 * 0.8).sqrt();
    for l in 0..5 {
        assert!((probe_label[l] as f64 - expected).abs() < 4.0 * sd, "probe label {l}");
        assert!((first_support_label[l] as f64 - expected).abs() < 4.0 * sd, "support order {l}");
    }
}

#[test]
fn episodes_are_reproducible_from_seed() {
    let corpus = numbered_corpus(8, 5);
    let a = sample_episode(&corpus, 4, 2, 3, &mut SimRng::seed_from_u64(99)).unwrap();
    let b = sample_episode(&corpus, 4, 2, 3, &mut SimRng::seed_from_u64(99)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn short_classes_are_named_in_the_error() {
    let mut corpus = numbered_corpus(5, 3);
    corpus.classes[2].images.truncate(1);
    let err = sample_episode(&corpus, 5, 1, 5, &mut SimRng::seed_from_u64(0)).unwrap_err();
    match err {
        SnnError::Sampling(msg) => assert!(msg.contains("class02"), "{msg}"),
        other => panic!("unexpected error {other}"),
    }
    assert!(sample_episode(&numbered_corpus(3, 5), 5, 1, 1, &mut SimRng::seed_from_u64(0)).is_err());
}

#[test]
fn split_is_disjoint_and_complete() {
    let corpus = numbered_corpus(40, 2);
    let (train, test) = split_classes(&corpus, 30, &mut SimRng::seed_from_u64(17)).unwrap();
    assert_eq!((train.len(), test.len()), (30, 10));
    let a: HashSet<&str> = train.ids().into_iter().collect();
    let b: HashSet<&str> = test.ids().into_iter().collect();
    assert!(a.is_disjoint(&b));
    assert_eq!(a.len() + b.len(), 40);
    let (train2, _) = split_classes(&corpus, 30, &mut SimRng::seed_from_u64(17)).unwrap();
    assert_eq!(train.ids(), train2.ids());
}

#[test]
fn rotation_augmentation_quadruples_classes() {
    let corpus = numbered_corpus(3, 2);
    let aug = augment_rotations(&corpus).unwrap();
    assert_eq!(aug.len(), 12);
    assert!(aug.ids().contains(&"class01@rot180"));
    let c = &corpus.classes[0].images[0];
    let r = &aug.classes[3].images[0];
    assert_eq!(r, &c.rotate(1));
    assert_eq!(&c.rotate(4), c);
}

#[test]
fn loads_class_directories_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SimRng::seed_from_u64(3);
    let glyphs = glyph_corpus(3, 4, &GlyphStyle::default(), &mut rng);
    write_corpus(&glyphs, dir.path(), true).unwrap();
    let loaded = load_corpus(Dataset::Omniglot, dir.path(), 28).unwrap();
    assert_eq!(loaded.len(), 3);
    assert_eq!(loaded.n_samples(), 12);
    assert_eq!(loaded.ids(), glyphs.ids());
    // dark-on-light files come back as bright strokes after inversion
    for (a, b) in loaded.classes[0].images.iter().zip(&glyphs.classes[0].images) {
        let err: f32 = a.pixels.iter().zip(&b.pixels).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max);
        assert!(err < 1.0 / 255.0 + 1e-6, "max pixel error {err}");
    }
}

#[test]
fn resizes_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let class = dir.path().join("alphabet").join("char01");
    std::fs::create_dir_all(&class).unwrap();
    PixelGrid::new(4, 4, vec![0.5; 16]).save_png(&class.join("a.png")).unwrap();
    let corpus = load_corpus(Dataset::DoubleMnist, dir.path(), 8).unwrap();
    assert_eq!(corpus.ids(), vec!["alphabet/char01"]);
    let img = &corpus.classes[0].images[0];
    assert_eq!((img.width, img.height), (8, 8));
}

#[test]
fn empty_class_directory_is_an_ingest_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("full")).unwrap();
    PixelGrid::new(2, 2, vec![0.0; 4]).save_png(&dir.path().join("full").join("x.png")).unwrap();
    std::fs::create_dir_all(dir.path().join("empty")).unwrap();
    let err = load_corpus(Dataset::Omniglot, dir.path(), 28).unwrap_err();
    match err {
        SnnError::Ingest { path, .. } => assert!(path.ends_with("empty")),
        other => panic!("unexpected error {other}"),
    }
}
