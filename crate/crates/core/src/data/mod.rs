//! Slices, on-disk containers, preprocessing, splits and synthetic phantoms.

mod format;
mod phantom;
mod preprocess;
mod sample;
mod split;

pub use format::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_bsg1, read_tensor,
    save_checkpoint, write_bsg1, Bsg1Array, Bsg1Data, BSCK_MAGIC, BSG1_MAGIC,
};
pub use phantom::{synth_phantom, MIN_PHANTOM_SIZE};
pub use preprocess::{normalize_intensity, resize_image, resize_mask, DEFAULT_SIZE};
pub use sample::{
    load_dataset, parse_manifest, read_manifest, stack_samples, write_dataset, ManifestEntry,
    SliceSample, MANIFEST_NAME,
};
pub use split::{
    split_folds, split_validation, validation_count, FoldPlan, DEFAULT_FOLDS,
    DEFAULT_VALIDATION_FRACTION,
};
