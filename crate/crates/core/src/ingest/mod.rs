//! File ingestion: `.pb` ballot files, group-points sheets and their assembly
//! into a [`ValidatedInstance`](crate::model::ValidatedInstance).

mod assemble;
mod groups;
mod load;
mod pb;

pub use assemble::{assemble, config_from_meta, parse_weight_list, ConfigError, FIELD_WEIGHTS_META, SPLIT_META};
pub use groups::{parse_group_points, parse_group_points_any, serialize_group_points, GroupPointsError, GroupPointsRow, GroupPointsSheet};
pub use pb::{parse_pb, parse_pb_with_warnings, serialize_pb, PbError, PbFile, PbProject, PbVote, PbWarning, REQUIRED_META};
pub use load::{load, LoadError, LoadOptions, Loaded};
