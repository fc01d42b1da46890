use std::path::Path;

use infiris::config::EncoderConfig;
use infiris::encode::{read_code, save_bank, write_code};
use infiris::imagecore::load_image;
use infiris::pipeline::{build_encoder, encode_image, run_in_memory, Segmenter};
use infiris::synth::{generate_corpus, load_annotation};
use infiris::{CorpusConfig, CorpusManifest, EncoderKind, FilterBank, PipelineConfig, PupilPolarity};

fn small(polarity: PupilPolarity) -> PipelineConfig {
    PipelineConfig {
        corpus: CorpusConfig {
            n_subjects: 3,
            samples_per_subject: 4,
            polarity,
            base_seed: 17,
            ..CorpusConfig::default()
        },
        ..PipelineConfig::default()
    }
}

#[test]
fn small_run_separates_genuine_from_impostor() {
    for polarity in [PupilPolarity::BrightPupil, PupilPolarity::DarkPupil] {
        let run = run_in_memory(&small(polarity), Path::new(".")).unwrap();
        assert!(run.failures.is_empty(), "{:?}", run.failures);
        assert_eq!(run.scores.len(), 12 * 11 / 2);
        let r = &run.report;
        assert_eq!((r.genuine_count, r.impostor_count), (18, 48));
        assert!(r.eer.unwrap() <= 0.1, "{polarity:?}: eer {:?}", r.eer);
        assert_eq!(r.ftm_rate, 0.0);
    }
}

#[test]
fn run_is_reproducible() {
    let cfg = small(PupilPolarity::BrightPupil);
    let a = run_in_memory(&cfg, Path::new(".")).unwrap();
    let b = run_in_memory(&cfg, Path::new(".")).unwrap();
    assert_eq!(a.scores, b.scores);
    assert_eq!(
        serde_json::to_string(&a.report).unwrap(),
        serde_json::to_string(&b.report).unwrap()
    );
}

#[test]
fn corpus_on_disk_feeds_the_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(PupilPolarity::BrightPupil);
    let corpus = CorpusConfig {
        n_subjects: 1,
        samples_per_subject: 2,
        ..cfg.corpus.clone()
    };
    generate_corpus(&corpus, dir.path()).unwrap();
    let manifest = CorpusManifest::load(dir.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.entries.len(), 2);
    let segmenter = Segmenter::from_config(&cfg, dir.path()).unwrap();
    let encoder = build_encoder(&cfg.encoder, dir.path()).unwrap();
    for e in &manifest.entries {
        let img = load_image(dir.path().join(&e.image_path)).unwrap();
        let (ann, _) = load_annotation(dir.path().join(&e.annotation_path)).unwrap();
        assert_eq!(ann.occlusion.width(), img.width());
        let (seg, code) = encode_image(&img, &segmenter, &encoder, &cfg).unwrap();
        assert!(seg.iris.center_distance(&ann.iris) < 2.0);
        let path = dir.path().join(format!("{}.ircd", e.sample_id));
        write_code(&path, &code, &e.subject_id, &e.sample_id).unwrap();
        let (back, meta) = read_code(&path).unwrap();
        assert_eq!(back, code);
        assert_eq!(meta.sample_id, e.sample_id);
        assert_eq!(meta.encoder_id, "loggabor1d");
    }
}

#[test]
fn bank_file_drives_the_bank_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let bank = FilterBank::random(3, 4, 7).unwrap();
    save_bank(dir.path().join("bank.txt"), &bank).unwrap();
    let from_file = build_encoder(
        &EncoderConfig {
            kind: EncoderKind::Bank,
            bank_path: Some("bank.txt".into()),
            ..EncoderConfig::default()
        },
        dir.path(),
    )
    .unwrap();
    let mut cfg = small(PupilPolarity::BrightPupil);
    cfg.encoder.kind = EncoderKind::Bank;
    cfg.encoder.random_bank_seed = 3;
    cfg.encoder.random_bank_count = 4;
    cfg.encoder.random_bank_size = 7;
    let drawn = build_encoder(&cfg.encoder, dir.path()).unwrap();
    let img = infiris::synth::render_eye(&cfg.corpus.spec_for(0, 0)).unwrap().0;
    let seg = Segmenter::from_config(&cfg, dir.path()).unwrap();
    let a = encode_image(&img, &seg, &from_file, &cfg).unwrap().1;
    let b = encode_image(&img, &seg, &drawn, &cfg).unwrap().1;
    assert_eq!(a, b);
    assert_eq!(a.rows(), 4 * cfg.normalization.rows);
}
