//! Text formats for models and controllers, an importer for explicit sparse
//! dumps, and grid-world generators.
//!
//! Model documents:
//!
//! ```text
//! rpomdp v1
//! name <free text>            # optional
//! states N
//! actions N
//! observations N
//! obs s z                     # one per state
//! trans s a s' lo hi          # 0 < lo <= hi <= 1; lo = hi for exact values
//! cost s a c                  # omitted entries are 0
//! goal s
//! init s p
//! ```
//!
//! Controllers:
//!
//! ```text
//! fsc v1
//! nodes K
//! observations Z              # optional, inferred when absent
//! actions A                   # optional, inferred when absent
//! init n
//! act n z a p                 # positive entries of each action distribution
//! mem n z n'
//! ```
//!
//! Both formats are whitespace-delimited with `#` comments.

mod fsc;
pub mod grid;
mod model;
pub mod sparse;
mod text;

pub use fsc::{parse_fsc, serialize_fsc};
pub use grid::{generate_grid, GridKind, GridSpec};
pub use model::{parse_model, parse_model_unchecked, serialize_model, ModelDocument, MODEL_VERSION};
pub use sparse::{import_explicit, ExplicitDump};
