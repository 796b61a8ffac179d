use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Binary label; the class index doubles as the network output index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TumorClass {
    Benign,
    Malignant,
}

impl TumorClass {
    pub const ALL: [TumorClass; 2] = [TumorClass::Benign, TumorClass::Malignant];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TumorClass::Benign => "benign",
            TumorClass::Malignant => "malignant",
        }
    }
}

impl fmt::Display for TumorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TumorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "benign" | "b" => Ok(TumorClass::Benign),
            "malignant" | "m" => Ok(TumorClass::Malignant),
            _ => Err(Error::Data(format!("unknown tumor class `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtype {
    Adenosis,
    Fibroadenoma,
    Phyllodes,
    TubularAdenoma,
    Ductal,
    Lobular,
    Mucinous,
    Papillary,
}

impl Subtype {
    pub const ALL: [Subtype; 8] = [
        Subtype::Adenosis,
        Subtype::Fibroadenoma,
        Subtype::Phyllodes,
        Subtype::TubularAdenoma,
        Subtype::Ductal,
        Subtype::Lobular,
        Subtype::Mucinous,
        Subtype::Papillary,
    ];

    pub fn class(self) -> TumorClass {
        match self {
            Subtype::Adenosis
            | Subtype::Fibroadenoma
            | Subtype::Phyllodes
            | Subtype::TubularAdenoma => TumorClass::Benign,
            _ => TumorClass::Malignant,
        }
    }

    /// Code used in dataset file names.
    pub fn code(self) -> &'static str {
        match self {
            Subtype::Adenosis => "A",
            Subtype::Fibroadenoma => "F",
            Subtype::Phyllodes => "PT",
            Subtype::TubularAdenoma => "TA",
            Subtype::Ductal => "DC",
            Subtype::Lobular => "LC",
            Subtype::Mucinous => "MC",
            Subtype::Papillary => "PC",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.code() == code)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subtype::Adenosis => "adenosis",
            Subtype::Fibroadenoma => "fibroadenoma",
            Subtype::Phyllodes => "phyllodes",
            Subtype::TubularAdenoma => "tubular_adenoma",
            Subtype::Ductal => "ductal",
            Subtype::Lobular => "lobular",
            Subtype::Mucinous => "mucinous",
            Subtype::Papillary => "papillary",
        }
    }
}

impl fmt::Display for Subtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s || t.code() == s)
            .ok_or_else(|| Error::Data(format!("unknown subtype `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Magnification {
    X40,
    X100,
    X200,
    X400,
}

impl Magnification {
    pub const ALL: [Magnification; 4] = [
        Magnification::X40,
        Magnification::X100,
        Magnification::X200,
        Magnification::X400,
    ];

    pub fn factor(self) -> u32 {
        match self {
            Magnification::X40 => 40,
            Magnification::X100 => 100,
            Magnification::X200 => 200,
            Magnification::X400 => 400,
        }
    }
}

impl TryFrom<u32> for Magnification {
    type Error = Error;

    fn try_from(factor: u32) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.factor() == factor)
            .ok_or_else(|| {
                Error::Data(format!(
                    "magnification must be 40, 100, 200 or 400, got {factor}"
                ))
            })
    }
}

impl From<Magnification> for u32 {
    fn from(m: Magnification) -> u32 {
        m.factor()
    }
}

impl fmt::Display for Magnification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.factor())
    }
}

impl FromStr for Magnification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let factor: u32 = s
            .trim_end_matches(['x', 'X'])
            .parse()
            .map_err(|_| Error::Data(format!("bad magnification `{s}`")))?;
        Self::try_from(factor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRecord {
    pub path: PathBuf,
    pub patient_id: String,
    #[serde(rename = "class")]
    pub tumor_class: TumorClass,
    pub subtype: Subtype,
    pub magnification: Magnification,
    pub seq: u32,
}

impl ImageRecord {
    pub fn validate(&self) -> Result<()> {
        if self.patient_id.is_empty() {
            return Err(Error::Data(format!(
                "{}: empty patient id",
                self.path.display()
            )));
        }
        if self.subtype.class() != self.tumor_class {
            return Err(Error::Data(format!(
                "{}: subtype {} is not {}",
                self.path.display(),
                self.subtype,
                self.tumor_class
            )));
        }
        Ok(())
    }

    /// Stable identifier: the file name.
    pub fn image_id(&self) -> String {
        self.path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.display().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedName {
    pub tumor_class: TumorClass,
    pub subtype: Subtype,
    pub patient_id: String,
    pub magnification: Magnification,
    pub seq: u32,
}

fn name_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r"^SOB_([BM])_([A-Z]+)-(.+)-(\d+)-(\d+)\.([A-Za-z0-9]+)$")
            .expect("valid pattern")
    })
}

/// Parses `SOB_<B|M>_<SUBTYPE>-<slide-id>-<magnification>-<seq>.<ext>`.
pub fn parse_filename(name: &str) -> Result<ParsedName> {
    let bad = |why: &str| Error::FileName(format!("`{name}`: {why}"));
    let caps = name_pattern()
        .captures(name)
        .ok_or_else(|| bad("does not follow the SOB_ naming convention"))?;
    let tumor_class: TumorClass = caps[1].parse()?;
    let subtype = Subtype::from_code(&caps[2]).ok_or_else(|| bad("unknown subtype code"))?;
    if subtype.class() != tumor_class {
        return Err(bad("subtype code does not belong to the class letter"));
    }
    let magnification = caps[4]
        .parse::<u32>()
        .ok()
        .and_then(|m| Magnification::try_from(m).ok())
        .ok_or_else(|| bad("unsupported magnification"))?;
    let seq = caps[5]
        .parse()
        .map_err(|_| bad("sequence number out of range"))?;
    Ok(ParsedName {
        tumor_class,
        subtype,
        patient_id: caps[3].to_owned(),
        magnification,
        seq,
    })
}
