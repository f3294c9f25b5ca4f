//! Deterministic synthetic building scenes with pixel-exact labels.

mod config;
mod io;
mod scene;

pub use config::SceneConfig;
pub use io::{image_path, label_path, read_dataset, write_dataset, Pgm};
pub use scene::{generate_dataset, generate_scene, Building, BuildingKind, Occluder, Sample, MIN_OBJECT_AREA};
