//! Dataset manifests, class balancing and image augmentation.

mod augment;
mod manifest;

pub use augment::{
    augment, compute_rgb_pca, hsv_to_rgb, rgb_pca_from_images, rgb_pca_from_pixels, rgb_to_hsv,
    AugmentSpec, PcaBasis,
};
pub use manifest::{
    filter_low_shot, load_manifest, parse_pairs, read_pairs, weighted_sample, write_label_map,
    write_manifest, DatasetManifest, PairRecord, Record,
};

/// Default minimum class size for [`filter_low_shot`].
pub const DEFAULT_NUM_MIN: usize = 10;
