//! File formats: tracklet, feature and track tables plus TOML configs.
//!
//! CSV readers skip lines starting with `#`, which writers use to embed run
//! provenance.

mod config;
mod tables;

pub use config::{
    load_rig, load_run, load_scenario, parse_toml, read_toml, rig_from_entries, to_toml_string, CameraEntry,
    InputEntry, LoadedRun, RigFile, RunConfig,
};
pub use tables::{
    read_features, read_features_bin, read_features_csv, read_timeline_csv, read_tracklets_csv, write_features_bin,
    write_features_csv, write_timeline_csv, write_tracklets_csv, write_tracks_csv, FeatureTable, FEATURE_MAGIC,
    TRACKLET_COLUMNS, TRACK_COLUMNS,
};
