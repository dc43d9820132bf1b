//! Sample records, manifest construction from a crop tree, and JSONL io.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth class of a crop. `Real` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn dir_name(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// Capture condition of a crop. `Genuine` pairs with `Label::Real`; every
/// other variant is a presentation attack and pairs with `Label::Fake`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackType {
    Genuine,
    MaskCrop,
    MaskFull,
    MaskUpper,
    PaperPrint,
    Replay,
}

impl AttackType {
    pub const ALL: [AttackType; 6] = [
        AttackType::Genuine,
        AttackType::MaskCrop,
        AttackType::MaskFull,
        AttackType::MaskUpper,
        AttackType::PaperPrint,
        AttackType::Replay,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            AttackType::Genuine => "genuine",
            AttackType::MaskCrop => "mask_crop",
            AttackType::MaskFull => "mask_full",
            AttackType::MaskUpper => "mask_upper",
            AttackType::PaperPrint => "paper_print",
            AttackType::Replay => "replay",
        }
    }

    pub fn from_dir_name(name: &str) -> Option<AttackType> {
        AttackType::ALL.iter().copied().find(|a| a.dir_name() == name)
    }

    /// The label this attack type implies.
    pub fn label(self) -> Label {
        match self {
            AttackType::Genuine => Label::Real,
            _ => Label::Fake,
        }
    }
}

impl fmt::Display for AttackType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// One cropped face image with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    /// Path relative to the crops root, forward slashes.
    pub crop_path: String,
    pub label: Label,
    pub subject_id: u32,
    pub attack_type: AttackType,
    pub source_video: String,
    pub frame_index: u64,
}

impl SampleRecord {
    /// label == real ⟺ attack == genuine, and subjects are numbered from 1.
    pub fn validate(&self) -> Result<()> {
        if self.attack_type.label() != self.label {
            return Err(Error::Data {
                detail: format!(
                    "{}: label {} contradicts attack type {}",
                    self.crop_path, self.label, self.attack_type
                ),
            });
        }
        if self.subject_id == 0 {
            return Err(Error::Data {
                detail: format!("{}: subject ids start at 1", self.crop_path),
            });
        }
        Ok(())
    }
}

/// Per-label, per-subject, and per-attack record counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ManifestSummary {
    pub total: usize,
    pub real: usize,
    pub fake: usize,
    pub per_subject: BTreeMap<u32, usize>,
    pub per_attack: BTreeMap<AttackType, usize>,
}

impl fmt::Display for ManifestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} records ({} real, {} fake)", self.total, self.real, self.fake)?;
        for (subject, n) in &self.per_subject {
            writeln!(f, "  subject {subject}: {n}")?;
        }
        for (attack, n) in &self.per_attack {
            writeln!(f, "  {attack}: {n}")?;
        }
        Ok(())
    }
}

/// Path-sorted list of sample records with unique crop paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<SampleRecord>,
}

impl Manifest {
    /// Validates every record, sorts by crop path, and rejects duplicates.
    pub fn from_records(mut records: Vec<SampleRecord>) -> Result<Manifest> {
        for r in &records {
            r.validate()?;
        }
        records.sort_by(|a, b| a.crop_path.cmp(&b.crop_path));
        for pair in records.windows(2) {
            if pair[0].crop_path == pair[1].crop_path {
                return Err(Error::Data {
                    detail: format!("duplicate crop path {}", pair[0].crop_path),
                });
            }
        }
        Ok(Manifest { records })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn subjects(&self) -> BTreeSet<u32> {
        self.records.iter().map(|r| r.subject_id).collect()
    }

    pub fn summary(&self) -> ManifestSummary {
        let mut s = ManifestSummary {
            total: self.records.len(),
            ..ManifestSummary::default()
        };
        for r in &self.records {
            match r.label {
                Label::Real => s.real += 1,
                Label::Fake => s.fake += 1,
            }
            *s.per_subject.entry(r.subject_id).or_insert(0) += 1;
            *s.per_attack.entry(r.attack_type).or_insert(0) += 1;
        }
        s
    }

    /// One JSON object per line, LF terminated.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| Error::Data {
                detail: format!("serializing {}: {e}", r.crop_path),
            })?;
            out.push_str(&line);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let record: SampleRecord = serde_json::from_str(line).map_err(|e| Error::Data {
                detail: format!("{}:{}: {e}", path.display(), lineno + 1),
            })?;
            records.push(record);
        }
        Manifest::from_records(records)
    }
}

/// Splits `stem` into (source_video, frame_index) using the crop naming
/// convention `<source>_<digits>`; a stem without that suffix maps to
/// (stem, 0).
fn parse_stem(stem: &str) -> (String, u64) {
    if let Some((source, digits)) = stem.rsplit_once('_') {
        if !source.is_empty() && !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(index) = digits.parse() {
                return (source.to_string(), index);
            }
        }
    }
    (stem.to_string(), 0)
}

fn dir_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let iter = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in iter {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

fn component_name(path: &Path) -> Result<&str> {
    path.file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Data {
            detail: format!("non-utf8 name under {}", path.display()),
        })
}

/// True for names the walk ignores: editor droppings and hidden files.
fn is_hidden(name: &str) -> bool {
    name.starts_with('.')
}

/// Walks `<root>/<subject_id>/<real|fake>/<attack_type>/<frame>.ppm|pgm` and
/// builds one record per image. Any entry that does not fit the layout is an
/// error; hidden (dot-prefixed) entries are skipped.
pub fn build_manifest(root: impl AsRef<Path>) -> Result<Manifest> {
    let root = root.as_ref();
    let mut records = Vec::new();
    for subject_dir in dir_entries(root)? {
        let name = component_name(&subject_dir)?;
        if is_hidden(name) {
            continue;
        }
        let subject_id: u32 = name.parse().map_err(|_| Error::Data {
            detail: format!("{}: expected a subject id directory", subject_dir.display()),
        })?;
        if subject_id == 0 || !subject_dir.is_dir() {
            return Err(Error::Data {
                detail: format!("{}: expected a subject id directory", subject_dir.display()),
            });
        }
        for label_dir in dir_entries(&subject_dir)? {
            let name = component_name(&label_dir)?;
            if is_hidden(name) {
                continue;
            }
            let label = match name {
                "real" => Label::Real,
                "fake" => Label::Fake,
                other => {
                    return Err(Error::Data {
                        detail: format!(
                            "{}: label directory `{other}`, expected real or fake",
                            label_dir.display()
                        ),
                    })
                }
            };
            for attack_dir in dir_entries(&label_dir)? {
                let name = component_name(&attack_dir)?;
                if is_hidden(name) {
                    continue;
                }
                let attack_type = AttackType::from_dir_name(name).ok_or_else(|| Error::Data {
                    detail: format!("{}: unknown attack type `{name}`", attack_dir.display()),
                })?;
                if attack_type.label() != label {
                    return Err(Error::Data {
                        detail: format!(
                            "{}: attack type {attack_type} cannot sit under {label}/",
                            attack_dir.display()
                        ),
                    });
                }
                for file in dir_entries(&attack_dir)? {
                    let name = component_name(&file)?;
                    if is_hidden(name) {
                        continue;
                    }
                    let (stem, ext) = name.rsplit_once('.').unwrap_or((name, ""));
                    if !(ext.eq_ignore_ascii_case("ppm") || ext.eq_ignore_ascii_case("pgm")) {
                        return Err(Error::Data {
                            detail: format!("{}: expected a .ppm or .pgm crop", file.display()),
                        });
                    }
                    let (source_video, frame_index) = parse_stem(stem);
                    records.push(SampleRecord {
                        crop_path: format!("{subject_id}/{label}/{attack_type}/{name}"),
                        label,
                        subject_id,
                        attack_type,
                        source_video,
                        frame_index,
                    });
                }
            }
        }
    }
    Manifest::from_records(records)
}
