//! Revealed-preference analysis of budget-choice data.
//!
//! The crate tests choice data for consistency with utility maximization
//! and measures the size of any departure:
//!
//! * [`dataset`] and [`relations`]: observations `(p, x)` and the revealed
//!   preference relations they induce at an efficiency level `e`.
//! * [`garp`]: GARP verdicts with violation evidence.
//! * [`indices`]: CCEI, Houtman-Maks, money pump and minimum cost indices.
//! * [`restrictions`]: tests under added structure (FOSD mirror, homothetic,
//!   quasilinear, price preference).
//! * [`power`]: random-chooser benchmarks and the share-permutation test.
//! * [`etl`]: monthly budget datasets from supermarket transaction logs.
//! * [`estimation`]: censored maximum-likelihood fit of CES demand.
//! * [`analytics`]: rank correlations, scenario splits and behavioral metrics.
//!
//! ```
//! use revpref::{indices, make_dataset};
//!
//! let ds = make_dataset(vec![
//!     (vec![1.0, 2.0], vec![0.0, 1.0]),
//!     (vec![2.0, 1.0], vec![1.0, 0.0]),
//! ])?;
//! let report = indices::index_report(&ds)?;
//! assert_eq!((report.ccei, report.hmi, report.mpi, report.mci), (0.5, 0.5, 0.5, 0.25));
//! # Ok::<(), revpref::Error>(())
//! ```

pub mod analytics;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod etl;
pub mod format;
pub mod garp;
pub mod indices;
pub mod power;
pub mod relations;
pub mod restrictions;
pub mod rng;

pub use dataset::{make_dataset, ChoiceDataset, Observation};
pub use error::{Error, Result};
pub use garp::{check_garp, GarpReport};
pub use indices::{ccei, hmi, index_report, mci, mpi, IndexReport};
pub use relations::{direct_relations, transitive_closure, RelationMatrix, Tolerance};
