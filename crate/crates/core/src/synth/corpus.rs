use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mix_seed, render_eye, EyeAnnotation, EyeSpec, PupilPolarity, SessionVariation};
use crate::error::{PathIoError, Result};
use crate::imagecore::{load_image, save_image, Circle, GrayImage, MaskImage};
use crate::quality::QualityReport;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EyeLabel {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub subject_id: String,
    pub eye_label: EyeLabel,
    /// Relative to the manifest's directory.
    pub image_path: String,
    /// Relative to the manifest's directory.
    pub annotation_path: String,
    pub spec: EyeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PathIoError::new(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| PathIoError::new(path, e))?;
        Ok(())
    }
}

/// Annotation file layout; `occlusion_path` is relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub pupil: [f64; 3],
    pub iris: [f64; 3],
    pub occlusion_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// Writes `<stem>.json` and `<stem>_mask.png` into `dir`; returns the JSON
/// path.
pub fn save_annotation(
    dir: &Path,
    stem: &str,
    ann: &EyeAnnotation,
    confidence: Option<f64>,
) -> Result<PathBuf> {
    let mask_name = format!("{stem}_mask.png");
    save_image(dir.join(&mask_name), &ann.occlusion.to_gray())?;
    let file = AnnotationFile {
        pupil: ann.pupil.as_array(),
        iris: ann.iris.as_array(),
        occlusion_path: mask_name,
        confidence,
    };
    let path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| PathIoError::new(&path, e))?;
    Ok(path)
}

pub fn load_annotation(path: impl AsRef<Path>) -> Result<(EyeAnnotation, Option<f64>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PathIoError::new(path, e))?;
    let file: AnnotationFile = serde_json::from_str(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mask = MaskImage::from_gray(&load_image(dir.join(&file.occlusion_path))?);
    Ok((
        EyeAnnotation {
            pupil: Circle::from_array(file.pupil),
            iris: Circle::from_array(file.iris),
            occlusion: mask,
        },
        file.confidence,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_subjects: usize,
    pub samples_per_subject: usize,
    pub polarity: PupilPolarity,
    pub base_seed: u64,
    /// `"png"` or `"pgm"`.
    pub image_format: String,
    pub variation: SessionVariation,
    /// Per-sample blur sigma is drawn uniformly from this range.
    pub blur_range: [f64; 2],
    pub highlight_count: u32,
    pub canvas: [usize; 2],
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_subjects: 20,
            samples_per_subject: 10,
            polarity: PupilPolarity::BrightPupil,
            base_seed: 7,
            image_format: "png".into(),
            variation: SessionVariation::default(),
            blur_range: [0.5, 1.5],
            highlight_count: 2,
            canvas: [640, 480],
        }
    }
}

/// One rendered sample before it touches the disk.
#[derive(Debug, Clone)]
pub struct RenderedSample {
    pub sample_id: String,
    pub subject_id: String,
    pub eye_label: EyeLabel,
    pub spec: EyeSpec,
    pub image: GrayImage,
    pub annotation: EyeAnnotation,
}

impl CorpusConfig {
    pub fn identity_seed(&self, subject: usize) -> u64 {
        mix_seed(self.base_seed, subject as u64 + 1)
    }

    /// Spec for sample `sample` of subject `subject`. Subjects share an
    /// identity seed; session seeds are distinct per sample.
    pub fn spec_for(&self, subject: usize, sample: usize) -> EyeSpec {
        let identity_seed = self.identity_seed(subject);
        let session_seed = mix_seed(identity_seed, 1000 + sample as u64);
        let mut id_rng = ChaCha8Rng::seed_from_u64(mix_seed(identity_seed, 0x1D));
        let iris_radius = id_rng.random_range(100.0..118.0);
        let ratio = match self.polarity {
            PupilPolarity::BrightPupil => id_rng.random_range(0.46..0.54),
            PupilPolarity::DarkPupil => id_rng.random_range(0.33..0.41),
        };
        let eyelid = id_rng.random_range(0.08..0.18);
        let mut s_rng = ChaCha8Rng::seed_from_u64(mix_seed(session_seed, 0xB1));
        let [lo, hi] = self.blur_range;
        let blur = if hi > lo { s_rng.random_range(lo..hi) } else { lo };
        EyeSpec {
            identity_seed,
            session_seed,
            polarity: self.polarity,
            iris_radius,
            pupil_to_iris_ratio: ratio,
            eyelid_coverage: eyelid,
            highlight_count: self.highlight_count,
            blur_sigma: blur,
            canvas: self.canvas,
            variation: self.variation.clone(),
        }
    }

    pub fn sample_id(subject: usize, sample: usize) -> String {
        format!("s{subject:03}_{sample:03}")
    }

    pub fn subject_id(subject: usize) -> String {
        format!("subj{subject:03}")
    }

    pub fn eye_label(subject: usize) -> EyeLabel {
        if subject.is_multiple_of(2) {
            EyeLabel::Left
        } else {
            EyeLabel::Right
        }
    }
}

/// Renders the whole corpus in memory, in subject-major order.
pub fn render_corpus(config: &CorpusConfig) -> Result<Vec<RenderedSample>> {
    let jobs: Vec<(usize, usize)> = (0..config.n_subjects)
        .flat_map(|i| (0..config.samples_per_subject).map(move |j| (i, j)))
        .collect();
    jobs.par_iter()
        .map(|&(i, j)| {
            let spec = config.spec_for(i, j);
            let (image, annotation) = render_eye(&spec)?;
            Ok(RenderedSample {
                sample_id: CorpusConfig::sample_id(i, j),
                subject_id: CorpusConfig::subject_id(i),
                eye_label: CorpusConfig::eye_label(i),
                spec,
                image,
                annotation,
            })
        })
        .collect()
}

/// Renders and writes a corpus under `out_dir`: `images/`, `annotations/`
/// and `manifest.json`.
pub fn generate_corpus(config: &CorpusConfig, out_dir: &Path) -> Result<CorpusManifest> {
    let ext = match config.image_format.as_str() {
        "png" | "pgm" => config.image_format.as_str(),
        other => {
            return Err(crate::config::ConfigError::Invalid(format!(
                "image_format must be png or pgm, got {other:?}"
            ))
            .into())
        }
    };
    let images = out_dir.join("images");
    let annotations = out_dir.join("annotations");
    for d in [&images, &annotations] {
        fs::create_dir_all(d).map_err(|e| PathIoError::new(d, e))?;
    }
    let samples = render_corpus(config)?;
    let entries = samples
        .par_iter()
        .map(|s| write_sample(s, &images, &annotations, ext))
        .collect::<Result<Vec<_>>>()?;
    let manifest = CorpusManifest {
        version: MANIFEST_VERSION,
        entries,
    };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

pub(crate) fn write_sample(
    s: &RenderedSample,
    images: &Path,
    annotations: &Path,
    ext: &str,
) -> Result<ManifestEntry> {
    let image_name = format!("{}.{ext}", s.sample_id);
    save_image(images.join(&image_name), &s.image)?;
    save_annotation(annotations, &s.sample_id, &s.annotation, None)?;
    Ok(ManifestEntry {
        sample_id: s.sample_id.clone(),
        subject_id: s.subject_id.clone(),
        eye_label: s.eye_label,
        image_path: format!("images/{image_name}"),
        annotation_path: format!("annotations/{}.json", s.sample_id),
        spec: s.spec.clone(),
        quality: None,
    })
}
