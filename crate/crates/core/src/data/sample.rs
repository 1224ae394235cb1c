use std::fs;
use std::path::{Path, PathBuf};

use super::format::{read_tensor, write_bsg1, Bsg1Array};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One CT slice with its lung and infection labels, each `(1, 1, h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSample {
    pub image: Tensor<f32>,
    pub lung_mask: Tensor<f32>,
    pub infection_mask: Tensor<f32>,
    pub volume_id: String,
    pub has_infection: bool,
}

impl SliceSample {
    pub fn new(
        image: Tensor<f32>,
        lung_mask: Tensor<f32>,
        infection_mask: Tensor<f32>,
        volume_id: impl Into<String>,
    ) -> Result<Self> {
        let s = image.shape();
        if s.n != 1 || s.c != 1 {
            return Err(Error::Shape(format!("slice image must be (1, 1, h, w), got {s}")));
        }
        for (name, m) in [("lung", &lung_mask), ("infection", &infection_mask)] {
            if m.shape() != s {
                return Err(Error::Shape(format!(
                    "{name} mask {} does not match image {s}",
                    m.shape()
                )));
            }
            if let Some(v) = m.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Data(format!("{name} mask value {v} is not 0 or 1")));
            }
        }
        let has_infection = infection_mask.data().contains(&1.0);
        Ok(SliceSample {
            image,
            lung_mask,
            infection_mask,
            volume_id: volume_id.into(),
            has_infection,
        })
    }

    pub fn size(&self) -> (usize, usize) {
        let s = self.image.shape();
        (s.h, s.w)
    }

    /// Infection pixels outside the lung mask; zero for synthetic data, real
    /// labels may disagree.
    pub fn infection_outside_lung(&self) -> usize {
        self.infection_mask
            .data()
            .iter()
            .zip(self.lung_mask.data())
            .filter(|(&i, &l)| i == 1.0 && l == 0.0)
            .count()
    }
}

/// Batched `(images, lung masks, infection masks)` of shape `(n, 1, h, w)`.
pub fn stack_samples(samples: &[&SliceSample]) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
    let pick = |f: fn(&SliceSample) -> &Tensor<f32>| {
        let v: Vec<&Tensor<f32>> = samples.iter().map(|s| f(s)).collect();
        Tensor::stack_batch(&v)
    };
    Ok((
        pick(|s| &s.image)?,
        pick(|s| &s.lung_mask)?,
        pick(|s| &s.infection_mask)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub lung_mask: PathBuf,
    pub infection_mask: PathBuf,
    pub volume_id: String,
    /// 1-based line in the manifest.
    pub line: usize,
}

/// Parses tab-separated `image, lung_mask, infection_mask, volume_id` rows.
/// Relative paths resolve against `base`. Blank lines and `#` comments are
/// skipped.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if fields.len() != 4 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Data(format!(
                "manifest line {line}: expected 4 non-empty tab-separated fields \
                 (image, lung_mask, infection_mask, volume_id), found {}",
                fields.iter().filter(|f| !f.is_empty()).count()
            )));
        }
        let p = |f: &str| base.join(f);
        out.push(ManifestEntry {
            image: p(fields[0]),
            lung_mask: p(fields[1]),
            infection_mask: p(fields[2]),
            volume_id: fields[3].to_owned(),
            line,
        });
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Loads every slice a manifest lists.
pub fn load_dataset(manifest: impl AsRef<Path>) -> Result<Vec<SliceSample>> {
    read_manifest(manifest)?
        .into_iter()
        .map(|e| {
            let sample = SliceSample::new(
                read_tensor(&e.image)?,
                read_tensor(&e.lung_mask)?,
                read_tensor(&e.infection_mask)?,
                e.volume_id.clone(),
            );
            sample.map_err(|err| match err {
                Error::Shape(m) => Error::Shape(format!("{}: {m}", e.image.display())),
                Error::Data(m) => Error::Data(format!("{}: {m}", e.image.display())),
                other => other,
            })
        })
        .collect()
}

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// Writes `slice_XXXX.{image,lung,infection}.bsg1` plus a manifest with
/// relative paths into `dir`, returning the manifest path.
pub fn write_dataset(dir: impl AsRef<Path>, samples: &[SliceSample]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("# image\tlung_mask\tinfection_mask\tvolume_id\n");
    for (i, s) in samples.iter().enumerate() {
        let names = ["image", "lung", "infection"].map(|k| format!("slice_{i:04}.{k}.bsg1"));
        write_bsg1(dir.join(&names[0]), &Bsg1Array::from_tensor(&s.image))?;
        write_bsg1(dir.join(&names[1]), &Bsg1Array::from_mask(&s.lung_mask)?)?;
        write_bsg1(dir.join(&names[2]), &Bsg1Array::from_mask(&s.infection_mask)?)?;
        manifest.push_str(&format!("{}\t{}\t{}\t{}\n", names[0], names[1], names[2], s.volume_id));
    }
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
