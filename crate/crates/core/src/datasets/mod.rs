//! Experiment data sources.

pub mod ground2d;
pub mod mnist;
pub mod trajectory;

pub use ground2d::Ground2D;
pub use mnist::{load_mnist, MnistSet};
pub use trajectory::{gen_trajectories, TrajectoryClass};
