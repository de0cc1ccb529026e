use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ImagingError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    RealNormal,
    CgAnomaly,
    ConvertedAnomaly,
    PseudorealNormal,
    PseudorealAnomaly,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::RealNormal,
        Domain::CgAnomaly,
        Domain::ConvertedAnomaly,
        Domain::PseudorealNormal,
        Domain::PseudorealAnomaly,
    ];

    /// The only label an image from this domain may carry.
    pub fn label(self) -> Label {
        match self {
            Domain::CgAnomaly | Domain::ConvertedAnomaly | Domain::PseudorealAnomaly => Label::Anomaly,
            Domain::RealNormal | Domain::PseudorealNormal => Label::Normal,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::RealNormal => "real_normal",
            Domain::CgAnomaly => "cg_anomaly",
            Domain::ConvertedAnomaly => "converted_anomaly",
            Domain::PseudorealNormal => "pseudoreal_normal",
            Domain::PseudorealAnomaly => "pseudoreal_anomaly",
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    /// Class index used by the detector: 0 normal, 1 anomaly.
    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Anomaly => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub domain: Domain,
    pub label: Label,
    pub split: Split,
}

impl ManifestEntry {
    /// Entry whose label is derived from the domain.
    pub fn new(image_id: impl Into<String>, domain: Domain, split: Split) -> Self {
        Self {
            image_id: image_id.into(),
            domain,
            label: domain.label(),
            split,
        }
    }
}

/// Typed record set binding image ids to domain, label and split. Serialized
/// as CSV with header `image_id,domain,label,split`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, ImagingError> {
        let m = Self { entries };
        m.validate()?;
        Ok(m)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: ManifestEntry) -> Result<(), ImagingError> {
        if self.entries.iter().any(|e| e.image_id == entry.image_id) {
            return Err(ImagingError::Manifest(format!("duplicate image_id '{}'", entry.image_id)));
        }
        check_label(&entry)?;
        self.entries.push(entry);
        Ok(())
    }

    /// Concatenates manifests, re-validating uniqueness across them.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a DatasetManifest>) -> Result<Self, ImagingError> {
        Self::new(parts.into_iter().flat_map(|m| m.entries.iter().cloned()).collect())
    }

    pub fn filter(&self, pred: impl Fn(&ManifestEntry) -> bool) -> Self {
        Self {
            entries: self.entries.iter().filter(|e| pred(e)).cloned().collect(),
        }
    }

    pub fn take(&self, n: usize) -> Self {
        Self {
            entries: self.entries.iter().take(n).cloned().collect(),
        }
    }

    pub fn count_where(&self, pred: impl Fn(&ManifestEntry) -> bool) -> usize {
        self.entries.iter().filter(|e| pred(e)).count()
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(ImagingError::Manifest(format!("duplicate image_id '{}'", e.image_id)));
            }
            check_label(e)?;
        }
        Ok(())
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, ImagingError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers != csv::StringRecord::from(vec!["image_id", "domain", "label", "split"]) {
            return Err(ImagingError::Manifest(format!("unexpected header {:?}", headers)));
        }
        let entries = rdr
            .deserialize()
            .collect::<Result<Vec<ManifestEntry>, _>>()
            .map_err(csv_err)?;
        Self::new(entries)
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<(), ImagingError> {
        let mut w = csv::Writer::from_writer(writer);
        if self.entries.is_empty() {
            w.write_record(["image_id", "domain", "label", "split"]).map_err(csv_err)?;
        }
        for e in &self.entries {
            w.serialize(e).map_err(csv_err)?;
        }
        w.flush().map_err(|e| ImagingError::Manifest(e.to_string()))
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, ImagingError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ImagingError::MissingFile(path.to_path_buf()),
            _ => ImagingError::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ImagingError> {
        let path = path.as_ref();
        let io_err = |source| ImagingError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        std::fs::write(path, self.to_csv_bytes()).map_err(io_err)
    }
}

fn check_label(e: &ManifestEntry) -> Result<(), ImagingError> {
    if e.label != e.domain.label() {
        return Err(ImagingError::Manifest(format!(
            "'{}' has domain {} but label {:?}",
            e.image_id, e.domain, e.label
        )));
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> ImagingError {
    ImagingError::Manifest(e.to_string())
}
