pub mod polygon;
pub mod polytope;
pub mod quadrature;

pub use polygon::ConvexPolygon;
pub use polytope::{ConvexPolytope, Face, FaceLabel, PolytopeExport, WeightedRules};
