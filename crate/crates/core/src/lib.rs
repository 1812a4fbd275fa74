//! Synthesis and checking of generalized lexicographic ranking
//! supermartingales for linear probabilistic programs.

pub mod checker;
pub mod frontend;
pub mod interchange;
pub mod linear;
pub mod lp;
pub mod model;
pub mod num;
pub mod param;
pub mod preexp;
pub mod simulator;
pub mod synthesis;

use num_rational::BigRational;

pub use linear::{LinConstraint, LinExpr, Polyhedron, Predicate, Relation};
pub use num::Scalar;

pub type Rational = BigRational;
pub type QLinExpr = LinExpr<Rational>;
pub type QConstraint = LinConstraint<Rational>;
pub type QPolyhedron = Polyhedron<Rational>;
pub type QPredicate = Predicate<Rational>;
pub type FLinExpr = LinExpr<f64>;
