//! On-disk formats: the line-delimited benchmark dataset (with images stored
//! beside it as PNG files) and the line-delimited trend-query ingest file.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{rle_encode, BinaryMask, RasterImage, Rle, WebDocument};
use crate::text;

/// File name of the dataset inside an output directory.
pub const DATASET_FILE: &str = "dataset.jsonl";
/// Directory, relative to the dataset file, holding sample images.
pub const IMAGE_DIR: &str = "images";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    /// Absent from the backbone's knowledge.
    Novel,
    /// Known to the backbone but needing up-to-date context.
    Emerging,
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityType::Novel => "novel",
            EntityType::Emerging => "emerging",
        })
    }
}

impl FromStr for EntityType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "novel" => Ok(EntityType::Novel),
            "emerging" => Ok(EntityType::Emerging),
            other => Err(format!("entity_type must be `novel` or `emerging`, got `{other}`")),
        }
    }
}

/// One benchmark record.
#[derive(Debug, Clone, PartialEq)]
pub struct NestSample {
    pub id: String,
    pub image: RasterImage,
    pub question: String,
    pub answer: String,
    pub mask: BinaryMask,
    pub category: String,
    pub entity_type: EntityType,
    pub collected_at: DateTime<Utc>,
    pub source_url: String,
}

/// A dataset line, exactly as stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub image_path: String,
    pub question: String,
    pub answer: String,
    pub mask_rle: String,
    pub mask_shape: [usize; 2],
    pub category: String,
    pub entity_type: String,
    pub collected_at: DateTime<Utc>,
    pub source_url: String,
}

impl DatasetRecord {
    pub fn from_sample(sample: &NestSample) -> Self {
        let (h, w) = sample.mask.shape();
        Self {
            id: sample.id.clone(),
            image_path: format!("{IMAGE_DIR}/{}.png", sample.id),
            question: sample.question.clone(),
            answer: sample.answer.clone(),
            mask_rle: rle_encode(&sample.mask).to_string(),
            mask_shape: [h, w],
            category: sample.category.clone(),
            entity_type: sample.entity_type.to_string(),
            collected_at: sample.collected_at,
            source_url: sample.source_url.clone(),
        }
    }
}

pub fn read_png(path: &Path) -> Result<RasterImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let id = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    RasterImage::new(id, rgb.width() as usize, rgb.height() as usize, rgb.into_raw())
        .map(|img| img.with_source(path.display().to_string()))
}

pub fn write_png(path: &Path, raster: &RasterImage) -> Result<()> {
    let buffer = image::RgbImage::from_raw(raster.width() as u32, raster.height() as u32, raster.pixels().to_vec())
        .expect("raster buffer matches its dimensions");
    buffer
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Write samples as `<dir>/dataset.jsonl` plus `<dir>/images/<id>.png`.
///
/// The dataset file is written under a temporary name and renamed into place.
pub fn write_dataset(dir: &Path, samples: &[NestSample]) -> Result<PathBuf> {
    let image_dir = dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    for sample in samples {
        let record = DatasetRecord::from_sample(sample);
        write_png(&dir.join(&record.image_path), &sample.image)?;
        serde_json::to_writer(&mut tmp, &record)?;
        tmp.write_all(b"\n").map_err(|e| Error::io(tmp.path(), e))?;
    }
    let path = dir.join(DATASET_FILE);
    tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
    Ok(path)
}

fn invalid(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Validation {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Check one stored record against the format's invariants, without touching
/// its image file. Returns the decoded mask and entity type.
pub fn validate_record(record: &DatasetRecord) -> std::result::Result<(BinaryMask, EntityType), String> {
    for (name, value) in [
        ("id", &record.id),
        ("image_path", &record.image_path),
        ("question", &record.question),
        ("answer", &record.answer),
        ("category", &record.category),
        ("source_url", &record.source_url),
    ] {
        if value.trim().is_empty() {
            return Err(format!("field `{name}` is empty"));
        }
    }
    let entity_type: EntityType = record.entity_type.parse()?;
    let rle: Rle = record.mask_rle.parse().map_err(|e: Error| e.to_string())?;
    if [rle.height, rle.width] != record.mask_shape {
        return Err(format!(
            "mask_shape {:?} disagrees with the mask encoding {}x{}",
            record.mask_shape, rle.height, rle.width
        ));
    }
    let mask = rle.decode().map_err(|e| e.to_string())?;
    if mask.is_empty() {
        return Err("mask is empty".into());
    }
    let answer = text::compact(&record.answer);
    if !answer.is_empty() && text::compact(&record.question).contains(&answer) {
        return Err("question mentions the answer".into());
    }
    Ok((mask, entity_type))
}

/// Load and validate every record; the first invalid one fails the load with
/// its line number. Unreadable image files are i/o errors.
pub fn load_dataset(path: &Path) -> Result<Vec<NestSample>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut ids = BTreeSet::new();
    let mut samples = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(line).map_err(|e| invalid(path, line_no, format!("malformed record: {e}")))?;
        let (mask, entity_type) = validate_record(&record).map_err(|m| invalid(path, line_no, m))?;
        if !ids.insert(record.id.clone()) {
            return Err(invalid(path, line_no, format!("duplicate id `{}`", record.id)));
        }
        let mut image = read_png(&base.join(&record.image_path))?;
        if image.shape() != mask.shape() {
            return Err(invalid(
                path,
                line_no,
                format!("image is {:?} but the mask is {:?}", image.shape(), mask.shape()),
            ));
        }
        image.id = record.id.clone();
        samples.push(NestSample {
            id: record.id,
            image,
            question: record.question,
            answer: record.answer,
            mask,
            category: record.category,
            entity_type,
            collected_at: record.collected_at,
            source_url: record.source_url,
        });
    }
    Ok(samples)
}

/// A trending search term with its news items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendQuery {
    pub term: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub related_terms: Vec<String>,
    #[serde(default)]
    pub news: Vec<WebDocument>,
}

/// Parse the trend ingest format, one record per line.
pub fn parse_trends(content: &str, path: &Path) -> Result<Vec<TrendQuery>> {
    let mut queries = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let query: TrendQuery =
            serde_json::from_str(line).map_err(|e| invalid(path, i + 1, format!("malformed trend record: {e}")))?;
        if query.term.trim().is_empty() {
            return Err(invalid(path, i + 1, "trend term is empty"));
        }
        if query.news.iter().any(|d| d.url.is_empty()) {
            return Err(invalid(path, i + 1, "news item without a url"));
        }
        queries.push(query);
    }
    Ok(queries)
}

pub fn load_trends(path: &Path) -> Result<Vec<TrendQuery>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trends(&content, path)
}

pub fn write_trends(path: &Path, queries: &[TrendQuery]) -> Result<()> {
    let mut out = String::new();
    for q in queries {
        out.push_str(&serde_json::to_string(q)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::BoundingBox;

    fn sample(id: &str) -> NestSample {
        let image = RasterImage::filled(id, 6, 4, [10, 20, 30]).unwrap();
        let mask = BinaryMask::from_box(4, 6, &BoundingBox::new(1, 1, 3, 4).unwrap()).unwrap();
        NestSample {
            id: id.into(),
            image,
            question: "Which robot won the award?".into(),
            answer: "Unitree G1".into(),
            mask,
            category: "robot".into(),
            entity_type: EntityType::Novel,
            collected_at: "2025-03-30T08:00:00Z".parse().unwrap(),
            source_url: "https://news.example/g1".into(),
        }
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let samples = vec![sample("nest-0000"), sample("nest-0001")];
        let path = write_dataset(dir.path(), &samples).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].mask, samples[0].mask);
        assert_eq!(loaded[1].image.pixels(), samples[1].image.pixels());
        assert_eq!(loaded[0].collected_at, samples[0].collected_at);
    }

    #[test]
    fn invalid_lines_report_their_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(dir.path(), &[sample("a"), sample("b")]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace("\"id\":\"b\"", "\"id\":\"a\"");
        std::fs::write(&path, text).unwrap();
        match load_dataset(&path) {
            Err(Error::Validation { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("duplicate"));
            }
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn trends_parse_and_reject() {
        let p = Path::new("trends.jsonl");
        let good = r#"{"term":"Mbappe","category":"athlete","related_terms":[],"news":[{"url":"u","published_at":"2025-03-01T00:00:00Z","snippet":"s"}]}"#;
        let parsed = parse_trends(&format!("{good}\n\n"), p).unwrap();
        assert_eq!(parsed[0].news[0].snippet, "s");
        assert!(matches!(parse_trends("{\"term\":\"\"}", p), Err(Error::Validation { line: 1, .. })));
        assert!(matches!(parse_trends(&format!("{good}\nnope"), p), Err(Error::Validation { line: 2, .. })));
    }
}
