//! Dataset ingestion, rotation augmentation, class splits and N-way K-shot
//! episode sampling.
//!
//! On-disk layout: `<root>/<class_id>/<sample>.png`. Nested directories are
//! accepted (e.g. `<alphabet>/<character>/`); every directory that directly
//! holds image files is one class, identified by its path relative to root.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Result, SnnError};
use crate::pixels::PixelGrid;
use crate::rng::SimRng;

const IMAGE_EXTENSIONS: &[&str] = &["png", "bmp", "pgm", "ppm", "jpg", "jpeg", "gif", "tif", "tiff"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dataset {
    /// Dark strokes on a light background; inverted on load.
    Omniglot,
    /// Light digits on a dark background.
    DoubleMnist,
}

impl Dataset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "omniglot" => Ok(Self::Omniglot),
            "double_mnist" | "double-mnist" => Ok(Self::DoubleMnist),
            other => Err(SnnError::Config(format!("unknown dataset `{other}` (omniglot | double_mnist)"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Omniglot => "omniglot",
            Self::DoubleMnist => "double_mnist",
        }
    }

    fn inverted(&self) -> bool {
        matches!(self, Self::Omniglot)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassRecord {
    pub id: String,
    pub images: Vec<PixelGrid>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassCorpus {
    pub classes: Vec<ClassRecord>,
}

impl ClassCorpus {
    pub fn new(classes: Vec<ClassRecord>) -> Result<Self> {
        let corpus = Self { classes };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        let mut dims = None;
        for c in &self.classes {
            if c.images.is_empty() {
                return Err(SnnError::Config(format!("class `{}` has no samples", c.id)));
            }
            for img in &c.images {
                let d = (img.width, img.height);
                if *dims.get_or_insert(d) != d {
                    return Err(SnnError::Config(format!(
                        "class `{}` has a {}x{} image, expected {}x{}",
                        c.id,
                        d.0,
                        d.1,
                        dims.unwrap().0,
                        dims.unwrap().1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn n_samples(&self) -> usize {
        self.classes.iter().map(|c| c.images.len()).sum()
    }

    pub fn image(&self, s: SampleRef) -> &PixelGrid {
        &self.classes[s.class].images[s.sample]
    }

    pub fn ids(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.id.as_str()).collect()
    }

    /// Draws a uniformly random sample reference.
    pub fn random_sample(&self, rng: &mut SimRng) -> SampleRef {
        let class = rng.below(self.classes.len());
        let sample = rng.below(self.classes[class].images.len());
        SampleRef { class, sample }
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| SnnError::Ingest {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut entries = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| SnnError::Ingest {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        })?;
        entries.push(entry.path());
    }
    entries.sort();
    Ok(entries)
}

fn collect_classes(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<PathBuf>)>) -> Result<()> {
    let entries = sorted_entries(dir)?;
    let images: Vec<PathBuf> = entries.iter().filter(|p| p.is_file() && is_image(p)).cloned().collect();
    let subdirs: Vec<&PathBuf> = entries.iter().filter(|p| p.is_dir()).collect();
    if !images.is_empty() {
        let id = dir
            .strip_prefix(root)
            .unwrap_or(dir)
            .to_string_lossy()
            .replace('\\', "/");
        out.push((id, images));
    } else if subdirs.is_empty() && dir != root {
        return Err(SnnError::Ingest {
            path: dir.to_path_buf(),
            reason: "class directory contains no images".into(),
        });
    }
    for sub in subdirs {
        collect_classes(root, sub, out)?;
    }
    Ok(())
}

/// Loads one image with the dataset's polarity (strokes bright) at
/// `side x side`.
pub fn load_image(dataset: Dataset, path: &Path, side: usize) -> Result<PixelGrid> {
    let mut img = PixelGrid::load(path)?;
    if dataset.inverted() {
        img = img.invert();
    }
    Ok(img.resize_bilinear(side, side))
}

/// Loads a class-per-directory corpus, resizing every image to
/// `side x side` (bilinear) and inverting Omniglot so strokes are bright.
pub fn load_corpus(dataset: Dataset, root: &Path, side: usize) -> Result<ClassCorpus> {
    if !root.is_dir() {
        return Err(SnnError::Ingest {
            path: root.to_path_buf(),
            reason: "not a directory".into(),
        });
    }
    let mut found = Vec::new();
    collect_classes(root, root, &mut found)?;
    if found.is_empty() {
        return Err(SnnError::Ingest {
            path: root.to_path_buf(),
            reason: "no class directories with images".into(),
        });
    }
    let mut classes = Vec::with_capacity(found.len());
    for (id, paths) in found {
        let mut images = Vec::with_capacity(paths.len());
        for p in paths {
            images.push(load_image(dataset, &p, side)?);
        }
        classes.push(ClassRecord { id, images });
    }
    ClassCorpus::new(classes)
}

/// Every class becomes four classes: rotations by 0, 90, 180 and 270 degrees.
pub fn augment_rotations(corpus: &ClassCorpus) -> Result<ClassCorpus> {
    let mut classes = Vec::with_capacity(corpus.len() * 4);
    for c in &corpus.classes {
        if let Some(img) = c.images.iter().find(|i| !i.is_square()) {
            return Err(SnnError::Config(format!(
                "class `{}` has a non-square {}x{} image; rotation needs square images",
                c.id, img.width, img.height
            )));
        }
    }
    for turns in 0..4 {
        for c in &corpus.classes {
            classes.push(ClassRecord {
                id: if turns == 0 { c.id.clone() } else { format!("{}@rot{}", c.id, turns * 90) },
                images: c.images.iter().map(|i| i.rotate(turns)).collect(),
            });
        }
    }
    Ok(ClassCorpus { classes })
}

/// Random disjoint split into `n_train` training classes and the rest.
/// Both sides keep the corpus order.
pub fn split_classes(corpus: &ClassCorpus, n_train: usize, rng: &mut SimRng) -> Result<(ClassCorpus, ClassCorpus)> {
    if n_train == 0 || n_train >= corpus.len() {
        return Err(SnnError::Config(format!(
            "n_train must be in 1..{}, got {n_train}",
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    rng.shuffle(&mut order);
    let mut is_train = vec![false; corpus.len()];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, flag) in corpus.classes.iter().zip(is_train) {
        if flag {
            train.push(c.clone());
        } else {
            test.push(c.clone());
        }
    }
    Ok((ClassCorpus { classes: train }, ClassCorpus { classes: test }))
}

/// Text manifest recording a split for reproducibility.
pub fn split_manifest(dataset: Dataset, seed: u64, train: &ClassCorpus, test: &ClassCorpus) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# snnmeta class split");
    let _ = writeln!(s, "dataset = {}", dataset.as_str());
    let _ = writeln!(s, "split_seed = {seed}");
    let _ = writeln!(s, "n_train = {}", train.len());
    let _ = writeln!(s, "n_test = {}", test.len());
    for c in &train.classes {
        let _ = writeln!(s, "train {}", c.id);
    }
    for c in &test.classes {
        let _ = writeln!(s, "test {}", c.id);
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SampleRef {
    pub class: usize,
    pub sample: usize,
}

/// A labelled sample; `label` is the episode class index in `0..n_ways`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shot {
    pub sample: SampleRef,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub n_ways: usize,
    pub k_shots: usize,
    /// Corpus class index of each episode class.
    pub classes: Vec<usize>,
    /// Support stream in presentation order.
    pub support: Vec<Shot>,
    pub query: Vec<Shot>,
}

/// Samples `n_ways` distinct classes, `k_shots` support samples per class in
/// one shuffled stream, and `n_query` query samples from the same classes,
/// disjoint from the support. Query labels cycle through a random class order,
/// so `n_query = 1` gives a single probe of a random class.
pub fn sample_episode(
    corpus: &ClassCorpus,
    n_ways: usize,
    k_shots: usize,
    n_query: usize,
    rng: &mut SimRng,
) -> Result<Episode> {
    if n_ways == 0 || k_shots == 0 {
        return Err(SnnError::Sampling("n_ways and k_shots must be >= 1".into()));
    }
    if corpus.len() < n_ways {
        return Err(SnnError::Sampling(format!(
            "corpus has {} classes, episode needs {n_ways}",
            corpus.len()
        )));
    }
    let classes = rng.choose_distinct(corpus.len(), n_ways);
    let mut way_order: Vec<usize> = (0..n_ways).collect();
    rng.shuffle(&mut way_order);
    let mut query_per_way = vec![0usize; n_ways];
    for q in 0..n_query {
        query_per_way[way_order[q % n_ways]] += 1;
    }

    let mut support = Vec::with_capacity(n_ways * k_shots);
    let mut pools: Vec<Vec<usize>> = Vec::with_capacity(n_ways);
    for (label, &class) in classes.iter().enumerate() {
        let available = corpus.classes[class].images.len();
        let need = k_shots + query_per_way[label];
        if available < need {
            return Err(SnnError::Sampling(format!(
                "class `{}` has {available} samples, episode needs {need}",
                corpus.classes[class].id
            )));
        }
        let picks = rng.choose_distinct(available, need);
        for &sample in &picks[..k_shots] {
            support.push(Shot {
                sample: SampleRef { class, sample },
                label,
            });
        }
        pools.push(picks[k_shots..].to_vec());
    }
    rng.shuffle(&mut support);
    let mut query = Vec::with_capacity(n_query);
    for q in 0..n_query {
        let label = way_order[q % n_ways];
        let sample = pools[label].pop().expect("pool sized for its queries");
        query.push(Shot {
            sample: SampleRef { class: classes[label], sample },
            label,
        });
    }
    Ok(Episode {
        n_ways,
        k_shots,
        classes,
        support,
        query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n_classes: usize, per_class: usize) -> ClassCorpus {
        ClassCorpus {
            classes: (0..n_classes)
                .map(|c| ClassRecord {
                    id: format!("c{c:03}"),
                    images: (0..per_class)
                        .map(|s| PixelGrid::new(2, 2, vec![c as f32 / n_classes as f32, s as f32 / per_class as f32, 0.0, 1.0]))
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn episode_shape() {
        let c = corpus(10, 20);
        let ep = sample_episode(&c, 5, 1, 5, &mut SimRng::seed_from_u64(0)).unwrap();
        assert_eq!(ep.support.len(), 5);
        assert_eq!(ep.query.len(), 5);
        let mut cls = ep.classes.clone();
        cls.sort_unstable();
        cls.dedup();
        assert_eq!(cls.len(), 5);
        for s in &ep.support {
            assert!(!ep.query.iter().any(|q| q.sample == s.sample));
        }
        let mut per_way = [0; 5];
        for s in &ep.support {
            per_way[s.label] += 1;
            assert_eq!(ep.classes[s.label], s.sample.class);
        }
        assert_eq!(per_way, [1; 5]);
    }

    #[test]
    fn single_probe() {
        let ep = sample_episode(&corpus(10, 3), 5, 2, 1, &mut SimRng::seed_from_u64(4)).unwrap();
        assert_eq!(ep.support.len(), 10);
        assert_eq!(ep.query.len(), 1);
    }

    #[test]
    fn too_few_samples_names_class() {
        let err = sample_episode(&corpus(5, 1), 5, 1, 5, &mut SimRng::seed_from_u64(0)).unwrap_err();
        assert!(err.to_string().contains("c00"), "{err}");
        assert!(sample_episode(&corpus(3, 5), 5, 1, 1, &mut SimRng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn rotations_quadruple() {
        let c = corpus(3, 4);
        let aug = augment_rotations(&c).unwrap();
        assert_eq!(aug.len(), 12);
        assert!(aug.classes.iter().all(|k| k.images.len() == 4));
        assert_eq!(aug.classes[3 + 1].images[2], c.classes[1].images[2].rotate90());
    }

    #[test]
    fn rotation_rejects_non_square() {
        let c = ClassCorpus {
            classes: vec![ClassRecord { id: "x".into(), images: vec![PixelGrid::zeros(3, 2)] }],
        };
        assert!(augment_rotations(&c).is_err());
    }

    #[test]
    fn split_partitions() {
        let c = corpus(20, 2);
        let (tr, te) = split_classes(&c, 16, &mut SimRng::seed_from_u64(2)).unwrap();
        assert_eq!((tr.len(), te.len()), (16, 4));
        let mut ids: Vec<&str> = tr.ids().into_iter().chain(te.ids()).collect();
        ids.sort_unstable();
        assert_eq!(ids, c.ids());
        assert!(split_classes(&c, 20, &mut SimRng::seed_from_u64(2)).is_err());
        assert!(split_classes(&c, 0, &mut SimRng::seed_from_u64(2)).is_err());
    }
}
