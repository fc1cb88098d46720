//! Depth-first sphere decoding of the 2x2 golden space-time code, with a
//! bit-accurate fixed-point datapath, a hardware cost model and a Monte
//! Carlo harness.

pub mod archmodel;
pub mod decoder;
pub mod error;
pub mod fxp;
pub mod harness;
pub mod model;
pub mod preproc;

pub use decoder::{decode, exhaustive_ml, DecodeResult, SphereDecoder};
pub use error::{Error, Result};
pub use fxp::{decode_fxp, FxpConfig, FxpFormat};
pub use harness::{compare_fxp_float, run_sweep, SweepConfig, SweepStats};
pub use model::{encode, Constellation, Mode, SymbolVector};
pub use preproc::{qr_givens, QrFactors};
