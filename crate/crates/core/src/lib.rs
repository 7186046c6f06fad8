//! Simulation and evaluation toolkit for rotation-then-translation 3D kitting
//! from single-view depth images.

pub mod clock;
pub mod cloud;
pub mod controller;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod mesh;
pub mod render;
pub mod rng;
pub mod so3;
pub mod suite;

pub use cloud::{chamfer, PointCloud};
pub use error::{Error, Result};
pub use mesh::TriMesh;
pub use render::{CameraModel, DepthImage};
pub use so3::{Pose, UnitQuaternion, Vec3};
