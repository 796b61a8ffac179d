//! Dataset records, manifests, patient-wise fold plans and image loading.

mod folds;
mod image;
mod manifest;
mod record;
mod set;

pub use folds::{make_folds, Fold, FoldPlan, Role, SplitConfig};
pub use image::{decode_rgb, load_image, resize_bilinear, save_png, ImageOptions, SizePolicy};
pub use manifest::{
    filter_magnification, load_manifest, table1_class_totals, verify_table1, write_manifest,
    LoadOptions, Manifest, TABLE1,
};
pub use record::{parse_filename, ImageRecord, Magnification, ParsedName, Subtype, TumorClass};
pub use set::ImageSet;
