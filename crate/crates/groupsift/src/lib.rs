//! Detection of coordinated (fraud) groups in user–object interaction logs.
//!
//! The pipeline turns a bipartite interaction graph into an object
//! similarity graph whose edge weights combine an unlabeled Jaccard
//! component with an optional component from partially labeled users,
//! clusters objects by weighted label propagation, and ranks the
//! resulting groups with a suspiciousness score that also drives user
//! extraction. A synthetic injection harness plants adversarial groups
//! (loose synchrony plus camouflage) so detection quality can be
//! evaluated against known ground truth.

pub mod bipartite;
pub mod error;
pub mod eval;
pub mod inject;
pub mod labelprop;
pub mod osg;
pub mod pipeline;
pub mod suspicion;

pub use bipartite::{BipartiteGraph, GraphBuilder, IngestOptions, ObjectId, PruneCutoff, UserId};
pub use error::{Error, Result};
pub use eval::EvalResult;
pub use inject::{CamouflageKind, GroundTruth, InjectionSpec};
pub use labelprop::{Coloring, Partition, UpdateCriterion};
pub use osg::{Osg, OsgEdge};
pub use suspicion::GroupReport;
