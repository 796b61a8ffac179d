use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use walkdir::WalkDir;

use crate::{Error, Result};

use super::record::{parse_filename, ImageRecord, Magnification, Subtype, TumorClass};

/// Labelled images with a patient index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    records: Vec<ImageRecord>,
    by_patient: BTreeMap<String, Vec<usize>>,
}

impl Manifest {
    pub fn new(records: Vec<ImageRecord>) -> Result<Self> {
        let mut by_patient: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            by_patient.entry(r.patient_id.clone()).or_default().push(i);
        }
        let manifest = Self {
            records,
            by_patient,
        };
        for patient in manifest.by_patient.keys() {
            manifest.patient_class(patient)?;
        }
        Ok(manifest)
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Patient ids in lexicographic order.
    pub fn patients(&self) -> impl Iterator<Item = &str> {
        self.by_patient.keys().map(String::as_str)
    }

    pub fn num_patients(&self) -> usize {
        self.by_patient.len()
    }

    pub fn records_of(&self, patient: &str) -> impl Iterator<Item = &ImageRecord> {
        self.by_patient
            .get(patient)
            .into_iter()
            .flatten()
            .map(move |&i| &self.records[i])
    }

    /// The class shared by every image of `patient`.
    pub fn patient_class(&self, patient: &str) -> Result<TumorClass> {
        let mut classes = self.records_of(patient).map(|r| r.tumor_class);
        let first = classes
            .next()
            .ok_or_else(|| Error::Data(format!("unknown patient `{patient}`")))?;
        if classes.any(|c| c != first) {
            return Err(Error::Data(format!(
                "patient `{patient}` has both benign and malignant images"
            )));
        }
        Ok(first)
    }

    /// Records whose patient is in `patients`, in manifest order.
    pub fn select_patients<'a>(
        &'a self,
        patients: &'a BTreeSet<String>,
    ) -> impl Iterator<Item = &'a ImageRecord> {
        self.records
            .iter()
            .filter(move |r| patients.contains(&r.patient_id))
    }

    /// Images and patients per subtype.
    pub fn counts(&self) -> BTreeMap<Subtype, (usize, usize)> {
        let mut images: BTreeMap<Subtype, usize> = BTreeMap::new();
        let mut patients: BTreeMap<Subtype, BTreeSet<&str>> = BTreeMap::new();
        for r in &self.records {
            *images.entry(r.subtype).or_default() += 1;
            patients.entry(r.subtype).or_default().insert(&r.patient_id);
        }
        images
            .into_iter()
            .map(|(s, n)| (s, (n, patients[&s].len())))
            .collect()
    }
}

/// Reference distribution (images, patients) per subtype of the full dataset,
/// all magnifications included.
pub const TABLE1: [(Subtype, usize, usize); 8] = [
    (Subtype::Adenosis, 444, 4),
    (Subtype::Fibroadenoma, 1014, 10),
    (Subtype::Phyllodes, 453, 3),
    (Subtype::TubularAdenoma, 569, 7),
    (Subtype::Ductal, 3451, 38),
    (Subtype::Lobular, 626, 5),
    (Subtype::Mucinous, 792, 9),
    (Subtype::Papillary, 560, 6),
];

/// Class totals implied by [`TABLE1`] rows: `(images, patients)`.
pub fn table1_class_totals(class: TumorClass) -> (usize, usize) {
    TABLE1
        .iter()
        .filter(|(s, _, _)| s.class() == class)
        .fold((0, 0), |(i, p), &(_, ni, np)| (i + ni, p + np))
}

/// Checks per-subtype image and patient counts against [`TABLE1`].
pub fn verify_table1(manifest: &Manifest) -> Result<()> {
    let counts = manifest.counts();
    let mut problems = Vec::new();
    for (subtype, images, patients) in TABLE1 {
        let (got_i, got_p) = counts.get(&subtype).copied().unwrap_or((0, 0));
        if (got_i, got_p) != (images, patients) {
            problems.push(format!(
                "{subtype}: {got_i} images / {got_p} patients, expected {images} / {patients}"
            ));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Verification(problems.join("; ")))
    }
}

pub fn filter_magnification(manifest: &Manifest, magnification: Magnification) -> Manifest {
    Manifest::new(
        manifest
            .records
            .iter()
            .filter(|r| r.magnification == magnification)
            .cloned()
            .collect(),
    )
    .expect("a subset of a valid manifest is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Fail on file names outside the naming convention instead of skipping them.
    pub strict: bool,
    pub check_files: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            strict: false,
            check_files: true,
        }
    }
}

/// Loads a manifest from a dataset directory tree or a manifest CSV.
pub fn load_manifest(source: &Path, options: LoadOptions) -> Result<Manifest> {
    let meta = std::fs::metadata(source)
        .map_err(|e| Error::Data(format!("cannot read data source {}: {e}", source.display())))?;
    if meta.is_dir() {
        scan_directory(source, options)
    } else {
        read_csv(source, options)
    }
}

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "tif", "tiff", "bmp"];

fn scan_directory(root: &Path, options: LoadOptions) -> Result<Manifest> {
    let mut records = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Data(format!("walking {}: {e}", root.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy();
        let parsed = match parse_filename(&name) {
            Ok(p) => p,
            Err(e) if options.strict => return Err(e),
            Err(e) => {
                let is_image = Path::new(name.as_ref()).extension().is_some_and(|x| {
                    IMAGE_EXTENSIONS.contains(&x.to_string_lossy().to_ascii_lowercase().as_str())
                });
                if is_image {
                    log::warn!("skipping {}: {e}", entry.path().display());
                } else {
                    log::debug!("skipping {}", entry.path().display());
                }
                continue;
            }
        };
        records.push(ImageRecord {
            path: entry.path().to_path_buf(),
            patient_id: parsed.patient_id,
            tumor_class: parsed.tumor_class,
            subtype: parsed.subtype,
            magnification: parsed.magnification,
            seq: parsed.seq,
        });
    }
    Manifest::new(records)
}

/// Relative paths in the CSV resolve against the CSV's directory.
fn read_csv(path: &Path, options: LoadOptions) -> Result<Manifest> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for (line, row) in reader.deserialize::<ImageRecord>().enumerate() {
        let mut record =
            row.map_err(|e| Error::Data(format!("{} row {}: {e}", path.display(), line + 2)))?;
        if record.path.is_relative() {
            record.path = base.join(&record.path);
        }
        if options.check_files && !record.path.is_file() {
            return Err(Error::Data(format!(
                "{}: listed image is missing",
                record.path.display()
            )));
        }
        records.push(record);
    }
    Manifest::new(records)
}

/// Writes the `path,patient_id,class,subtype,magnification,seq` CSV.
pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    if manifest.is_empty() {
        writer.write_record([
            "path",
            "patient_id",
            "class",
            "subtype",
            "magnification",
            "seq",
        ])?;
    }
    for r in &manifest.records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}
