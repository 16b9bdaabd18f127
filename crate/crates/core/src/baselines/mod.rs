//! Transparent comparison students: axis-aligned impurity trees (CART with
//! Gini, ID3-style with entropy) and k-nearest neighbours.

mod axis_tree;
mod knn;

pub use axis_tree::{fit_axis_tree, AxisNode, AxisTree, Impurity};
pub use knn::{fit_knn, KnnModel};
