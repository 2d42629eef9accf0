use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::PixelImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split {other:?}; expected train or test"
            ))),
        }
    }
}

/// A blurred frame and its sharp counterpart.
#[derive(Clone, Debug)]
pub struct PairedSample {
    pub id: String,
    pub blur: PixelImage,
    pub sharp: PixelImage,
}

impl PairedSample {
    pub fn new(id: impl Into<String>, blur: PixelImage, sharp: PixelImage) -> Result<Self> {
        let id = id.into();
        if !blur.same_shape(&sharp) {
            return Err(Error::Dataset(format!(
                "{id}: blur is {}x{}x{} but sharp is {}x{}x{}",
                blur.height(),
                blur.width(),
                blur.channels(),
                sharp.height(),
                sharp.width(),
                sharp.channels()
            )));
        }
        Ok(Self { id, blur, sharp })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub blur: PathBuf,
    pub sharp: PathBuf,
}

/// Pairs found under `<root>/<split>/<sequence>/{blur,sharp}/`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub split: Split,
    pub entries: Vec<ManifestEntry>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

fn sorted_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        out.push(entry.map_err(|e| Error::io(path, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn image_names(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    Ok(sorted_dir(dir)?
        .into_iter()
        .filter(|p| p.is_file() && is_image(p))
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(str::to_string))
        .collect())
}

pub fn scan_manifest(root: impl AsRef<Path>, split: Split) -> Result<DatasetManifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Dataset(format!(
            "dataset root {} does not exist",
            root.display()
        )));
    }
    let split_dir = root.join(split.as_str());
    let sequences = if split_dir.is_dir() {
        sorted_dir(&split_dir)?
            .into_iter()
            .filter(|p| p.is_dir())
            .collect()
    } else {
        Vec::new()
    };

    let mut entries = Vec::new();
    let mut orphans = Vec::new();
    for seq in sequences {
        let seq_name = seq.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let (blur_dir, sharp_dir) = (seq.join("blur"), seq.join("sharp"));
        let blurs = image_names(&blur_dir)?;
        let sharps = image_names(&sharp_dir)?;
        for name in &blurs {
            if sharps.binary_search(name).is_ok() {
                let stem = Path::new(name)
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or(name);
                entries.push(ManifestEntry {
                    id: format!("{seq_name}/{stem}"),
                    blur: blur_dir.join(name),
                    sharp: sharp_dir.join(name),
                });
            } else {
                orphans.push(blur_dir.join(name));
            }
        }
        for name in &sharps {
            if blurs.binary_search(name).is_err() {
                orphans.push(sharp_dir.join(name));
            }
        }
    }
    if !orphans.is_empty() {
        return Err(Error::Orphans { orphans });
    }
    if entries.is_empty() {
        return Err(Error::Dataset(format!(
            "no blur/sharp pairs under {}",
            split_dir.display()
        )));
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        split,
        entries,
    })
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load_pair(&self, index: usize) -> Result<PairedSample> {
        let e = self
            .entries
            .get(index)
            .ok_or_else(|| Error::Dataset(format!("pair index {index} out of range")))?;
        PairedSample::new(e.id.clone(), PixelImage::load(&e.blur)?, PixelImage::load(&e.sharp)?)
    }

    /// One `id<TAB>blur_path<TAB>sharp_path` line per entry.
    pub fn to_index(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.id, e.blur.display(), e.sharp.display()))
            .collect()
    }

    pub fn write_index(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_index()).map_err(|e| Error::io(path, e))
    }
}
