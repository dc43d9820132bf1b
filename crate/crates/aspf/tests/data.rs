//! Data pipeline: crop tree walking, split properties, and end-to-end prep.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aspf::data::{
    build_manifest, extract_frames, load_dataset, prep_frames, split_manifest,
    write_rejection_csv, AttackType, CropPolicy, Manifest, SampleRecord, StubDetector,
};
use aspf::img::Image;
use aspf::Error;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("aspf-data-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_crop(root: &Path, subject: u32, attack: AttackType, name: &str, fill: u8) {
    let dir = root
        .join(subject.to_string())
        .join(attack.label().dir_name())
        .join(attack.dir_name());
    std::fs::create_dir_all(&dir).unwrap();
    Image::new(4, 4, 3, vec![fill; 48]).unwrap().write(dir.join(name)).unwrap();
}

#[test]
fn four_image_tree_builds_four_records() {
    let root = scratch("four");
    write_crop(&root, 1, AttackType::Genuine, "v_000000.ppm", 10);
    write_crop(&root, 1, AttackType::Replay, "v_000000.ppm", 20);
    write_crop(&root, 2, AttackType::Genuine, "v_000000.ppm", 30);
    write_crop(&root, 2, AttackType::PaperPrint, "v_000000.ppm", 40);
    let m = build_manifest(&root).unwrap();
    let s = m.summary();
    assert_eq!((s.total, s.real, s.fake), (4, 2, 2));
    assert_eq!(m.subjects(), [1, 2].into_iter().collect());
    let r = &m.records()[0];
    assert_eq!(r.crop_path, "1/fake/replay/v_000000.ppm");
    assert_eq!(r.source_video, "v");
    assert_eq!(r.frame_index, 0);
}

#[test]
fn attack_directory_under_real_is_rejected() {
    let root = scratch("mislabel");
    write_crop(&root, 1, AttackType::Genuine, "v_000000.ppm", 10);
    let bad = root.join("1").join("real").join("mask_full");
    std::fs::create_dir_all(&bad).unwrap();
    Image::new(2, 2, 3, vec![0; 12]).unwrap().write(bad.join("v_000000.ppm")).unwrap();
    let err = build_manifest(&root).unwrap_err();
    assert!(matches!(err, Error::Data { .. }), "{err}");
    assert!(err.to_string().contains("mask_full"), "{err}");
}

#[test]
fn summary_matches_directory_walk() {
    // 37 images spread unevenly; the oracle is an independent filesystem walk
    let root = scratch("walk37");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let attacks = [
        AttackType::Genuine,
        AttackType::MaskCrop,
        AttackType::MaskUpper,
        AttackType::Replay,
    ];
    let mut written = 0;
    while written < 37 {
        let subject = rng.gen_range(1..=4u32);
        let attack = attacks[rng.gen_range(0..attacks.len())];
        write_crop(&root, subject, attack, &format!("cam_{written:06}.ppm"), written as u8);
        written += 1;
    }
    let m = build_manifest(&root).unwrap();

    let mut walked = 0usize;
    let mut stack = vec![root.clone()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                walked += 1;
            }
        }
    }
    assert_eq!(m.len(), 37);
    assert_eq!(m.summary().total, walked);
    let per_subject: usize = m.summary().per_subject.values().sum();
    let per_attack: usize = m.summary().per_attack.values().sum();
    assert_eq!(per_subject, walked);
    assert_eq!(per_attack, walked);
}

#[test]
fn rebuilding_the_same_tree_is_byte_identical() {
    let root = scratch("idempotent");
    write_crop(&root, 3, AttackType::Genuine, "a_000002.ppm", 1);
    write_crop(&root, 3, AttackType::MaskFull, "a_000001.ppm", 2);
    write_crop(&root, 7, AttackType::Replay, "b_000004.ppm", 3);
    let out = scratch("idempotent-out");
    build_manifest(&root).unwrap().write_jsonl(out.join("a.jsonl")).unwrap();
    build_manifest(&root).unwrap().write_jsonl(out.join("b.jsonl")).unwrap();
    let a = std::fs::read(out.join("a.jsonl")).unwrap();
    let b = std::fs::read(out.join("b.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn stray_file_in_layout_is_rejected() {
    let root = scratch("stray");
    write_crop(&root, 1, AttackType::Genuine, "v_000000.ppm", 10);
    std::fs::write(root.join("README.txt"), "notes").unwrap();
    assert!(build_manifest(&root).is_err());
}

#[test]
fn prep_accounts_for_every_frame() {
    // 6 frames; the stub always finds one face, so all 6 become crops
    let frames_dir = scratch("prep-frames");
    for i in 0..6 {
        Image::new(20, 20, 3, vec![i * 30; 1200])
            .unwrap()
            .write(frames_dir.join(format!("f{i:02}.ppm")))
            .unwrap();
    }
    let frames = extract_frames(&frames_dir, 1).unwrap();
    let out_dir = scratch("prep-out");
    let report = prep_frames(
        &frames,
        "cam0",
        &StubDetector,
        CropPolicy::RejectMulti,
        (8, 8),
        &out_dir,
    )
    .unwrap();
    assert_eq!(report.frames_seen, 6);
    assert_eq!(report.frames_seen, report.crops_written + report.rejections.len());
    assert_eq!(report.crops_written, 6);
    let names: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(names.contains(&"cam0_000000.ppm".to_string()), "{names:?}");

    let csv = out_dir.join("rejections.csv");
    write_rejection_csv(&csv, &report.rejections).unwrap();
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), "source,frame_index,reason\n");
}

#[test]
fn prep_to_train_round_trip() {
    // two sources (one per label) -> crops -> manifest -> split -> tensors
    let root = scratch("e2e-crops");
    for (subject, attack, fill) in [
        (1u32, AttackType::Genuine, 220u8),
        (1, AttackType::Replay, 40),
        (2, AttackType::Genuine, 200),
        (2, AttackType::Replay, 60),
    ] {
        let frames_dir = scratch(&format!("e2e-frames-{subject}-{attack}"));
        for i in 0..4 {
            Image::new(16, 16, 3, vec![fill.wrapping_add(i * 3); 768])
                .unwrap()
                .write(frames_dir.join(format!("f{i}.ppm")))
                .unwrap();
        }
        let frames = extract_frames(&frames_dir, 2).unwrap();
        let out_dir = root
            .join(subject.to_string())
            .join(attack.label().dir_name())
            .join(attack.dir_name());
        let report = prep_frames(
            &frames,
            "cam",
            &StubDetector,
            CropPolicy::RejectMulti,
            (8, 8),
            &out_dir,
        )
        .unwrap();
        assert_eq!(report.crops_written, 2);
    }
    let manifest = build_manifest(&root).unwrap();
    assert_eq!(manifest.len(), 8);
    let holdout: BTreeSet<u32> = [2].into_iter().collect();
    let split = split_manifest(&manifest, &holdout, 0.8, 3).unwrap();
    assert_eq!(split.test.len(), 4);
    assert_eq!(split.train.len(), 3);
    assert_eq!(split.val.len(), 1);
    let ds = load_dataset(&split.train, &root, (8, 8)).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.shape(), (8, 8, 3));
}

fn synthetic_manifest(spec: &[(u32, usize)]) -> Manifest {
    let mut records = Vec::new();
    for &(subject, count) in spec {
        for i in 0..count {
            let attack = AttackType::ALL[i % AttackType::ALL.len()];
            records.push(SampleRecord {
                crop_path: format!(
                    "{subject}/{}/{attack}/cam_{i:06}.ppm",
                    attack.label().dir_name()
                ),
                label: attack.label(),
                subject_id: subject,
                attack_type: attack,
                source_video: "cam".to_string(),
                frame_index: i as u64,
            });
        }
    }
    Manifest::from_records(records).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn splits_are_person_disjoint_exact_partitions(
        subject_counts in proptest::collection::btree_map(1u32..=12, 1usize..=20, 2..=8),
        holdout_pick in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let spec: Vec<(u32, usize)> = subject_counts.iter().map(|(&s, &n)| (s, n)).collect();
        let manifest = synthetic_manifest(&spec);
        let subjects: Vec<u32> = manifest.subjects().into_iter().collect();
        // hold out one subject, never all of them
        let holdout: BTreeSet<u32> =
            [subjects[(holdout_pick % subjects.len() as u64) as usize]].into_iter().collect();
        let split = split_manifest(&manifest, &holdout, 0.8, seed).unwrap();

        let train_val: BTreeSet<u32> =
            split.train.subjects().union(&split.val.subjects()).copied().collect();
        prop_assert!(train_val.is_disjoint(&split.test.subjects()));
        prop_assert_eq!(split.test.subjects(), holdout.clone());

        let holdout_count: usize = spec
            .iter()
            .filter(|(s, _)| holdout.contains(s))
            .map(|&(_, n)| n)
            .sum();
        let remainder = manifest.len() - holdout_count;
        prop_assert_eq!(split.test.len(), holdout_count);
        prop_assert_eq!(split.train.len(), (0.8 * remainder as f64).floor() as usize);
        prop_assert_eq!(split.val.len(), remainder - split.train.len());

        // partition: every record lands in exactly one side
        let mut union: Vec<&SampleRecord> = split
            .train
            .records()
            .iter()
            .chain(split.val.records())
            .chain(split.test.records())
            .collect();
        union.sort_by(|a, b| a.crop_path.cmp(&b.crop_path));
        let original: Vec<&SampleRecord> = manifest.records().iter().collect();
        prop_assert_eq!(union, original);
    }
}
