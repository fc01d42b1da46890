use std::fs;
use std::path::{Path, PathBuf};

use infiris::encode::write_code;
use infiris::error::PathIoError;
use infiris::eval::{write_histogram_csv, write_report, write_roc_csv};
use infiris::imagecore::{load_image, save_image};
use infiris::matching::{leak_filter, read_score_table, write_score_table};
use infiris::pipeline::{build_encoder, encode_image, match_all, run_in_memory, Segmenter};
use infiris::quality::{curate, entry_quality, write_quality_csv};
use infiris::synth::{augment_infant, generate_corpus, load_annotation, mix_seed, save_annotation};
use infiris::{CorpusManifest, EvalReport, EyeAnnotation, PipelineConfig, Result, ScoreSet};
use rayon::prelude::*;
use serde::Serialize;

use crate::index::{CodeEntry, CodeIndex, INDEX_VERSION};
use crate::{Command, CorpusArgs, EncoderArgs, GlobalArgs, MethodArgs};

pub fn run(global: &GlobalArgs, command: Command) -> Result<()> {
    let mut cfg = load_config(global.config.as_deref())?;
    let out = global.out.as_path();
    fs::create_dir_all(out).map_err(|e| PathIoError::new(out, e))?;
    match command {
        Command::Synth { corpus } => {
            apply_corpus(&mut cfg, &corpus, global.seed);
            finish_config(&cfg, out)?;
            generate_corpus(&cfg.corpus, out)?;
        }
        Command::Augment { manifest } => {
            finish_config(&cfg, out)?;
            augment(&cfg, &manifest, global.seed.unwrap_or(cfg.corpus.base_seed), out)?;
        }
        Command::Curate { manifest, threshold } => {
            if let Some(t) = threshold {
                cfg.curation_threshold = t;
            }
            finish_config(&cfg, out)?;
            let m = CorpusManifest::load(&manifest)?;
            let base = parent_dir(&manifest);
            let (mut kept, log) = curate(&m, &base, cfg.curation_threshold, &cfg.quality);
            // Paths are rewritten so the curated manifest works from `out`.
            for e in &mut kept.entries {
                e.image_path = relative_to(&base.join(&e.image_path), out)?;
                e.annotation_path = relative_to(&base.join(&e.annotation_path), out)?;
            }
            kept.save(out.join("manifest.json"))?;
            write_json(&out.join("curation.json"), &log)?;
        }
        Command::Quality { manifest } => {
            finish_config(&cfg, out)?;
            quality(&cfg, &manifest, out)?;
        }
        Command::Segment { manifest, method } => {
            apply_method(&mut cfg, &method);
            finish_config(&cfg, out)?;
            segment_all(&cfg, &manifest, out)?;
        }
        Command::Encode { manifest, method, encoder } => {
            apply_method(&mut cfg, &method);
            apply_encoder(&mut cfg, &encoder);
            finish_config(&cfg, out)?;
            encode_all(&cfg, &manifest, out)?;
        }
        Command::Match { codes } => {
            finish_config(&cfg, out)?;
            let samples = CodeIndex::load(&codes)?.load_samples(&codes)?;
            let rows = match_all(&samples, &cfg.matching)?;
            write_score_table(out.join("scores.csv"), &rows)?;
        }
        Command::Eval { scores, higher_is_genuine } => {
            if higher_is_genuine {
                cfg.lower_is_genuine = false;
            }
            finish_config(&cfg, out)?;
            let rows = read_score_table(&scores)?;
            let report = EvalReport::from_scores(&ScoreSet::from_rows(&rows), cfg.lower_is_genuine, serde_json::to_value(&cfg)?)?;
            write_eval(&report, out)?;
        }
        Command::Leakfilter { synthetic, authentic, threshold } => {
            if let Some(t) = threshold {
                cfg.leak_threshold = t;
            }
            finish_config(&cfg, out)?;
            leakfilter(&cfg, &synthetic, &authentic, out)?;
        }
        Command::Pipeline { corpus, method, encoder } => {
            apply_corpus(&mut cfg, &corpus, global.seed);
            apply_method(&mut cfg, &method);
            apply_encoder(&mut cfg, &encoder);
            finish_config(&cfg, out)?;
            let run = run_in_memory(&cfg, Path::new("."))?;
            write_score_table(out.join("scores.csv"), &run.scores)?;
            write_eval(&run.report, out)?;
            let failures: Vec<Failure> = run
                .failures
                .into_iter()
                .map(|(sample_id, error)| Failure { sample_id, error })
                .collect();
            write_json(&out.join("failures.json"), &failures)?;
        }
    }
    Ok(())
}

/// Loads the configuration file, if any. Relative weight and bank paths in
/// the file are resolved against its directory.
fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let mut cfg = PipelineConfig::load(path)?;
    let dir = parent_dir(path);
    for p in [&mut cfg.nn.weights_path, &mut cfg.encoder.bank_path].into_iter().flatten() {
        if Path::new(p.as_str()).is_relative() {
            *p = dir.join(&*p).to_string_lossy().into_owned();
        }
    }
    Ok(cfg)
}

fn apply_corpus(cfg: &mut PipelineConfig, args: &CorpusArgs, seed: Option<u64>) {
    if let Some(n) = args.subjects {
        cfg.corpus.n_subjects = n;
    }
    if let Some(n) = args.samples {
        cfg.corpus.samples_per_subject = n;
    }
    if let Some(p) = args.polarity {
        cfg.corpus.polarity = p;
    }
    if let Some(s) = seed {
        cfg.corpus.base_seed = s;
    }
}

fn apply_method(cfg: &mut PipelineConfig, args: &MethodArgs) {
    if let Some(m) = args.mode {
        cfg.segmenter = m;
    }
    if let Some(w) = &args.weights {
        cfg.nn.weights_path = Some(w.to_string_lossy().into_owned());
    }
}

fn apply_encoder(cfg: &mut PipelineConfig, args: &EncoderArgs) {
    if let Some(k) = args.encoder {
        cfg.encoder.kind = k;
    }
    if let Some(b) = &args.bank {
        cfg.encoder.bank_path = Some(b.to_string_lossy().into_owned());
    }
}

/// Validates the effective configuration and echoes it to `config.json`.
fn finish_config(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    write_json(&out.join("config.json"), cfg)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| PathIoError::new(path, e))?;
    Ok(())
}

fn write_eval(report: &EvalReport, out: &Path) -> Result<()> {
    write_report(out.join("report.json"), report)?;
    write_histogram_csv(out.join("histogram.csv"), &report.histogram)?;
    write_roc_csv(out.join("roc.csv"), &report.roc)?;
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// `path` expressed relative to directory `dir`.
fn relative_to(path: &Path, dir: &Path) -> Result<String> {
    let abs = |p: &Path| std::path::absolute(p).map_err(|e| PathIoError::new(p, e));
    let (p, d) = (abs(path)?, abs(dir)?);
    let rel = pathdiff::diff_paths(&p, &d).unwrap_or(p);
    Ok(rel.to_string_lossy().into_owned())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| PathIoError::new(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct Failure {
    sample_id: String,
    error: String,
}

#[derive(Serialize)]
struct AugmentRecord {
    sample_id: String,
    rotation_deg: f64,
}

fn augment(cfg: &PipelineConfig, manifest_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let manifest = CorpusManifest::load(manifest_path)?;
    let base = parent_dir(manifest_path);
    let (images, annotations) = (out.join("images"), out.join("annotations"));
    create_dir(&images)?;
    create_dir(&annotations)?;
    let done = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            let img = load_image(base.join(&entry.image_path))?;
            let (ann, _) = load_annotation(base.join(&entry.annotation_path))?;
            let (img, ann, angle) = augment_infant(&img, &ann, mix_seed(seed, i as u64), &cfg.augment);
            let name = Path::new(&entry.image_path)
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("{}.png", entry.sample_id));
            save_image(images.join(&name), &img)?;
            save_annotation(&annotations, &entry.sample_id, &ann, None)?;
            let mut e = entry.clone();
            e.image_path = format!("images/{name}");
            e.annotation_path = format!("annotations/{}.json", entry.sample_id);
            e.quality = None;
            Ok((
                e,
                AugmentRecord {
                    sample_id: entry.sample_id.clone(),
                    rotation_deg: angle,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (entries, records): (Vec<_>, Vec<_>) = done.into_iter().unzip();
    CorpusManifest {
        version: manifest.version,
        entries,
    }
    .save(out.join("manifest.json"))?;
    write_json(&out.join("augment.json"), &records)
}

fn quality(cfg: &PipelineConfig, manifest_path: &Path, out: &Path) -> Result<()> {
    let manifest = CorpusManifest::load(manifest_path)?;
    let base = parent_dir(manifest_path);
    let scored: Vec<_> = manifest
        .entries
        .par_iter()
        .map(|e| (e.sample_id.clone(), entry_quality(&base, e, &cfg.quality)))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (sample_id, q) in scored {
        match q {
            Ok(q) => rows.push((sample_id, q)),
            Err(error) => failures.push(Failure { sample_id, error }),
        }
    }
    write_quality_csv(out.join("quality.csv"), &rows)?;
    write_json(&out.join("quality_failures.json"), &failures)
}

#[derive(Serialize)]
struct SegmentRecord {
    sample_id: String,
    pupil: Option<[f64; 3]>,
    iris: Option<[f64; 3]>,
    confidence: Option<f64>,
    annotation_path: Option<String>,
    error: Option<String>,
}

fn segment_all(cfg: &PipelineConfig, manifest_path: &Path, out: &Path) -> Result<()> {
    let manifest = CorpusManifest::load(manifest_path)?;
    let base = parent_dir(manifest_path);
    let segmenter = Segmenter::from_config(cfg, Path::new("."))?;
    let dir = out.join("segmentation");
    create_dir(&dir)?;
    let records = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let img = load_image(base.join(&entry.image_path))?;
            Ok(match segmenter.segment(&img) {
                Ok(seg) => {
                    save_annotation(&dir, &entry.sample_id, &EyeAnnotation::from_seg(&seg), Some(seg.confidence))?;
                    SegmentRecord {
                        sample_id: entry.sample_id.clone(),
                        pupil: Some(seg.pupil.as_array()),
                        iris: Some(seg.iris.as_array()),
                        confidence: Some(seg.confidence),
                        annotation_path: Some(format!("segmentation/{}.json", entry.sample_id)),
                        error: None,
                    }
                }
                Err(e) => SegmentRecord {
                    sample_id: entry.sample_id.clone(),
                    pupil: None,
                    iris: None,
                    confidence: None,
                    annotation_path: None,
                    error: Some(e.to_string()),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(&out.join("segmentation.json"), &records)
}

fn encode_all(cfg: &PipelineConfig, manifest_path: &Path, out: &Path) -> Result<()> {
    let manifest = CorpusManifest::load(manifest_path)?;
    let base = parent_dir(manifest_path);
    let segmenter = Segmenter::from_config(cfg, Path::new("."))?;
    let encoder = build_encoder(&cfg.encoder, Path::new("."))?;
    let dir = out.join("codes");
    create_dir(&dir)?;
    let entries = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let img = load_image(base.join(&entry.image_path))?;
            let (code_path, error) = match encode_image(&img, &segmenter, &encoder, cfg) {
                Ok((_, code)) => {
                    let name = format!("codes/{}.ircd", entry.sample_id);
                    write_code(out.join(&name), &code, &entry.subject_id, &entry.sample_id)?;
                    (Some(name), None)
                }
                Err(e) => (None, Some(e.to_string())),
            };
            Ok(CodeEntry {
                sample_id: entry.sample_id.clone(),
                subject_id: entry.subject_id.clone(),
                eye_label: entry.eye_label,
                code_path,
                error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let index = CodeIndex {
        version: INDEX_VERSION,
        encoder: cfg.encoder.kind,
        entries,
    };
    write_json(&out.join("codes.json"), &index)
}

#[derive(Serialize)]
struct LeakReport {
    threshold: f64,
    retained: Vec<String>,
    removed: Vec<String>,
    /// Synthetic entries without a code; they cannot be checked and are
    /// not retained.
    uncoded: Vec<String>,
}

fn leakfilter(cfg: &PipelineConfig, synthetic: &Path, authentic: &Path, out: &Path) -> Result<()> {
    let syn = CodeIndex::load(synthetic)?.load_samples(synthetic)?;
    let auth = CodeIndex::load(authentic)?.load_samples(authentic)?;
    let (coded, uncoded): (Vec<_>, Vec<_>) = syn.into_iter().partition(|s| s.code.is_some());
    let syn_codes: Vec<_> = coded.iter().filter_map(|s| s.code.clone()).collect();
    let auth_codes: Vec<_> = auth.into_iter().filter_map(|s| s.code).collect();
    let keep = leak_filter(&syn_codes, &auth_codes, cfg.leak_threshold, &cfg.matching)?;
    let mut retained = Vec::new();
    let mut removed = Vec::new();
    let mut k = keep.iter().peekable();
    for (i, s) in coded.into_iter().enumerate() {
        if k.next_if(|&&j| j == i).is_some() {
            retained.push(s.sample_id);
        } else {
            removed.push(s.sample_id);
        }
    }
    let report = LeakReport {
        threshold: cfg.leak_threshold,
        retained,
        removed,
        uncoded: uncoded.into_iter().map(|s| s.sample_id).collect(),
    };
    write_json(&out.join("leakfilter.json"), &report)
}
