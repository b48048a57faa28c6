//! Pyramid ORAM: a hierarchical oblivious RAM built from Zigzag hash tables.
//!
//! The crate is `no_std` and only needs `alloc`. Memory traffic that an
//! adversary could observe is modelled explicitly: every bucket (or L0 slot)
//! touched by an oblivious routine is reported to a [`TraceRecorder`], and the
//! sequence of regions touched is a function of public parameters only.
//!
//! Layers, bottom to top:
//!
//! * [`slot`], [`hash`], [`rng`]: storage cells, the keyed PRF family and
//!   deterministic seeded randomness.
//! * [`oprim`]: branchless select/swap and Batcher's odd-even mergesort.
//! * [`prn`]: the probabilistic routing network.
//! * [`zht`]: Zigzag hash tables with oblivious search and throw.
//! * [`ozht`]: oblivious construction of a Zigzag hash table.
//! * [`pyramid`]: the hierarchical ORAM itself.
//! * [`trace`]: access-trace recording, shape projection and simulators.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

mod error;
pub mod hash;
pub mod oprim;
pub mod ozht;
pub mod prn;
pub mod pyramid;
pub mod rng;
pub mod slot;
pub mod trace;
pub mod zht;

pub use error::{Error, Result};
pub use hash::{hash_bucket, HashFamily, KeyedHash};
pub use ozht::{build_access_count, oblivious_build, BuildReport, FailureReason, ZhtParams};
pub use prn::{repartition, route, RouteStats, RoutingSlot};
pub use pyramid::{AccessRecord, FailurePolicy, LevelParams, PyramidConfig, PyramidOram, Request};
pub use rng::Rng;
pub use slot::{Slot, SlotState, Table, DEFAULT_PAYLOAD, EMPTY_KEY, MAX_KEY};
pub use trace::{Region, TraceEvent, TraceOp, TraceRecorder};
pub use zht::{PathSource, ThrowStats, Zht};
