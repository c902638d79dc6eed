//! File formats: IDX ingestion, model checkpoints, SVG/PGM figures, CSV
//! metric tables.

pub mod checkpoint;
pub mod csvout;
pub mod idx;
pub mod pgm;
pub mod svg;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use csvout::{csv_string, fmt_f64, write_csv};
pub use idx::{
    load_idx_images, load_idx_labels, parse_idx_bytes, parse_idx_images, parse_idx_labels,
    write_idx_images, write_idx_labels,
};
pub use pgm::write_pgm;
pub use svg::{svg_curves_string, svg_heatmap_string, write_svg_curves, write_svg_heatmap, CurveSeries};
