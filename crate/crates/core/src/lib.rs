pub mod bass;
pub mod convex;
pub mod dual;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod lp;
pub mod mbb;
pub mod measure;
pub mod sequence;
pub mod tolerance;
pub mod transport;

pub use error::{Error, Result};
pub use geometry::{GeometrySummary, Location};
pub use measure::{quantize_gaussian, DiscreteMeasure, Point};
pub use transport::{check_convex_order, mcov, mcov_1d, w2sq, Coupling, MartingaleTransport, TripleLaw};
pub use convex::{envelope, normalize_affine, Affine, ConvexPL};
pub use mbb::{extract_dual, irreducibility, localize, sample_mt, solve_primal, DualCertificate, Instance, PrimalSolution};
