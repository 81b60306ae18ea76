//! Ingestion through camouflage on a corpus written to disk.

use std::collections::HashSet;

use camo_core::backbone::generator_arch;
use camo_core::camouflage::{camouflage, make_soft_mask};
use camo_core::checkpoint::Checkpoint;
use camo_core::corpus::{write_corpus, CorpusConfig};
use camo_core::generator::{GeneratorModel, ParamGenerator};
use camo_core::landmarks::{load_face_record, load_landmarks};
use camo_core::manifest::{DatasetManifest, Label, Split};
use camo_core::metrics::ssim;
use camo_core::params::{CamouflageParams, ParamRanges};
use camo_core::ImageF;

fn corpus(count: usize, size: usize) -> (tempfile::TempDir, DatasetManifest) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CorpusConfig {
        count,
        size,
        ..Default::default()
    };
    write_corpus(dir.path(), &cfg).unwrap();
    let manifest = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
    (dir, manifest)
}

#[test]
fn manifest_loading_is_order_stable_and_split_disjoint() {
    let (_dir, m) = corpus(12, 48);
    let train: Vec<_> = m.select(Split::Train, Label::Real).map(|e| e.image.clone()).collect();
    let test: Vec<_> = m.select(Split::Test, Label::Real).map(|e| e.image.clone()).collect();
    assert_eq!(train.len() + test.len(), 12);
    assert_eq!(test.len(), 3);
    let a: HashSet<_> = train.iter().collect();
    assert!(test.iter().all(|p| !a.contains(p)));
    let again: Vec<_> = m.select(Split::Train, Label::Real).map(|e| e.image.clone()).collect();
    assert_eq!(train, again);
    let mut sorted = train.clone();
    sorted.sort();
    assert_eq!(train, sorted, "manifest order is corpus order");
}

#[test]
fn resized_records_keep_landmarks_inside_their_hull() {
    let (_dir, m) = corpus(4, 96);
    for e in &m.entries {
        let original = load_landmarks(e.landmarks.as_ref().unwrap()).unwrap();
        let rec = load_face_record(&e.image, e.landmarks.as_deref(), Some((64, 64))).unwrap();
        assert_eq!(rec.dims(), (64, 64));
        assert_eq!(rec.landmarks.len(), 68);
        let cov = rec.hull_mask.coverage();
        assert!(cov > 0.05 && cov < 1.0, "coverage {cov}");
        for (p, q) in rec.landmarks.iter().zip(&original) {
            assert!((p.x - ((q.x + 0.5) * 64.0 / 96.0 - 0.5)).abs() < 1e-9);
            let (x, y) = (p.x.round() as usize, p.y.round() as usize);
            let near = (y.saturating_sub(1)..=(y + 1).min(63))
                .any(|yy| (x.saturating_sub(1)..=(x + 1).min(63)).any(|xx| rec.hull_mask.get(yy, xx)));
            assert!(near, "landmark ({}, {}) outside hull", p.x, p.y);
        }
    }
}

#[test]
fn records_without_landmarks_use_the_fallback_ellipse() {
    let (_dir, m) = corpus(1, 64);
    let rec = load_face_record(&m.entries[0].image, None, None).unwrap();
    assert!(rec.landmarks.is_empty());
    let cov = rec.hull_mask.coverage();
    assert!((0.30..=0.45).contains(&cov), "coverage {cov}");
}

#[test]
fn camouflage_of_loaded_records() {
    let (_dir, m) = corpus(4, 64);
    let records = m.load_records(Split::Train, Label::Real, None).unwrap();
    let strong = CamouflageParams::manual(&ParamRanges::default(), 0.0, 0.1, 7, 3.0, 5, 1.0);
    for (i, rec) in records.iter().enumerate() {
        let same = camouflage(rec, &CamouflageParams::identity(), i as u64).unwrap();
        assert_eq!(same, rec.image);

        let out = camouflage(rec, &strong, i as u64).unwrap();
        assert!(ssim(&out, &rec.image).unwrap() < 1.0);
        let soft = make_soft_mask(&rec.hull_mask, 5, 1.0).unwrap();
        let (h, w) = rec.dims();
        for y in 0..h {
            for x in 0..w {
                if soft.weights()[y * w + x] == 0.0 {
                    for c in 0..3 {
                        assert_eq!(out.get(y, x, c), rec.image.get(y, x, c));
                    }
                }
            }
        }
        let stored = out.quantized();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        stored.save_png(&path).unwrap();
        assert_eq!(ImageF::load(&path).unwrap(), stored);
    }
}

#[test]
fn generator_checkpoint_file_reproduces_parameters() {
    let (_dir, m) = corpus(2, 32);
    let records = m.load_records(Split::Train, Label::Real, None).unwrap();
    let ranges = ParamRanges::default();
    let g = GeneratorModel::new(generator_arch(32), ranges.clone(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    g.to_checkpoint("g", "test").save(&path).unwrap();
    let loaded =
        GeneratorModel::from_checkpoint(&Checkpoint::load(&path).unwrap(), Some(&generator_arch(32)), Some(&ranges))
            .unwrap();
    for rec in &records {
        let p = g.generate_params(&rec.image).unwrap();
        assert!(ranges.contains(&p));
        assert_eq!(p, loaded.generate_params(&rec.image).unwrap());
    }
    let narrower = ParamRanges {
        k_gf: vec![1, 3],
        ..ranges
    };
    assert!(GeneratorModel::from_checkpoint(&Checkpoint::load(&path).unwrap(), None, Some(&narrower)).is_err());
}
