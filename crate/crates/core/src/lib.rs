//! Explicit search result diversification driven by generated query intents.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`querylog`]: query collections, the token prefix tree, distributional
//!   and plain causal LM training samples, and query-frequency statistics.
//! - [`intentgen`]: deterministic beam search over a next-token model, intent
//!   filtering, and the external generator protocol ([`external`]).
//! - [`repswap`]: sense prototypes via agglomerative clustering and pooled
//!   intent selection across swapped-representation runs.
//! - [`scoring`]: DPH and BM25, MaxPassage, score matrices.
//! - [`diversify`]: xQuAD and PM2 aggregation.
//! - [`evaldiv`]: alpha-nDCG, ERR-IA, NRBP, Judged@k and significance tests.
//! - [`pipeline`]: experiment configs, end-to-end runs, grid tuning and
//!   frequency-stratified reports.
//!
//! All file formats live in [`formats`].

pub mod diversify;
pub mod error;
pub mod evaldiv;
pub mod external;
pub mod formats;
pub mod intentgen;
pub mod pipeline;
pub mod querylog;
pub mod repswap;
pub mod scoring;
pub mod stats;
pub mod text;

pub use error::{read_file, Error, Result};
