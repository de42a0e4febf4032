//! Detection of injected (spoofed) points in LiDAR frame sequences by
//! point-level temporal consistency.

pub mod attacksim;
pub mod cloud;
pub mod clustering;
pub mod detector;
pub mod error;
pub mod io;
pub mod sceneflow;
pub mod spatial;
pub mod synthesis;
pub mod voxel;

pub use cloud::{Frame, Point3, PointCloud};
pub use clustering::{dbscan, same_cluster, ClusterLabeling, ClusterParams};
pub use error::{Error, Result};
