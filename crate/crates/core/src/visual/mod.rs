//! Visual side of the input: screenshot handling, the patch feature grid,
//! region-of-structure pooling, box normalization and 2D position
//! embeddings.

mod geometry;
mod grid;
mod image;
mod tag_vectors;

pub use self::image::{resize_image, Screenshot};
pub use geometry::{
    box_embed, mean_rows, normalize_box, normalize_in_frame, perturb_box, pool_cells, ros_pool, NormalizedBox,
    PerturbDirection, COORD_MAX,
};
pub use grid::{
    extract_feature_grid, patch_statistics, project_patches, FeatureGrid, PatchExtractorParams, PATCH_INPUTS,
};
pub use tag_vectors::{fallback_vector, tag_table, TagVectors, FALLBACK_STD};

/// Side of the resized screenshot fed to the feature extractor.
pub const IMAGE_SIDE: usize = 224;
/// Default feature-grid side.
pub const GRID_SIDE: usize = 14;
