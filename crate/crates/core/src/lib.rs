//! Topological dictionary learning over second-order cell complexes.
//!
//! Edge signals on a cell complex are represented sparsely in an overcomplete
//! dictionary of polynomial filters of the lower and upper Hodge Laplacians.
//! The filter coefficients, the sparse codes and the set of filled polygons
//! (the upper topology) are learned jointly by alternating minimization.
//!
//! ```
//! use topodict::{CellComplex2, PolygonSelector};
//!
//! let c = CellComplex2::from_edges(3, &[(0, 1), (0, 2), (1, 2)], 3).unwrap();
//! let hp = c.hodge_pair(&PolygonSelector::ones(1)).unwrap();
//! assert_eq!(hp.l_up[(0, 1)], -1.0);
//! ```

pub mod complex;
pub mod dictionary;
pub mod error;
pub mod io;
pub mod learner;
pub mod linalg;
pub mod metrics;
pub mod qp;
pub mod sparse_coding;
pub mod spectral;
pub mod synth;
pub mod topo_opt;

pub use complex::{
    enumerate_polygons, CandidatePolygons, CellComplex2, HodgeDecomposition, HodgePair, Polygon, PolygonSelector,
    SelectorMode, Skeleton1,
};
pub use dictionary::{assemble, Dictionary, DictionaryParams, Parameterization};
pub use error::{Error, Result};
pub use learner::{LearnConfig, LearnResult, Method, Model};
pub use metrics::EvalReport;
pub use qp::{QpProblem, QpSolution};
pub use sparse_coding::SparseCode;
pub use spectral::{eigendecompose, FrequencyClass, HodgeSpectrum};
pub use synth::{PlantedTruth, SynthConfig, SynthDataset};
pub use topo_opt::{ObjectiveState, TopologyObjective};
