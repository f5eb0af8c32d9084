//! Non-negative matrix and tensor factorization with automatic latent
//! dimension selection (NMFk), salient timestep extraction, and audio/video
//! anomaly pipelines built on top of them.

pub mod error;
pub mod io;
pub mod nmf;
pub mod ntf;
pub mod pipeline;
pub mod salient;
pub mod seed;
pub mod selection;
pub mod signal;
pub mod tensor;

pub use error::{Error, Result};
pub use nmf::{nmf_solve, Loss, NmfConfig, NmfModel};
pub use ntf::{ncpd_solve, ntt_solve, ntucker_solve, CpdModel, NtfConfig, TtModel, TuckerModel};
pub use pipeline::{audio_pipeline, video_pipeline, EventReport};
pub use salient::{ntd1_decompose, LatentDim, SalientReport, SpatioTemporalTensor};
pub use selection::{select_k, select_tensor_ranks, KSelectionReport, PerturbConfig, SelectionRule};
pub use signal::{AudioClip, Spectrogram};
pub use tensor::{DenseMatrix, DenseTensor};
