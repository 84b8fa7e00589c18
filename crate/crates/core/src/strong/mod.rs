//! Strong subtrees: validation, enumeration, counting, canonical
//! isomorphisms, embedding of finite sets and Milliken searches.

pub mod check;
pub mod embed;
pub mod enumerate;
pub mod iso;
pub mod milliken;
pub mod witness;

pub use check::{is_strong_subtree, is_vector_strong_subtree, Condition, StrongCheck, Violation};
pub use embed::{embed_finite_set, embed_finite_set_with_height, embeddable_by_search};
pub use enumerate::{
    count_strong, count_strong2_formula, count_strong2_total, enumerate_strong, enumerate_strong2_at,
    level_sets, level_sets_top, level_sets_within, StrongIter,
};
pub use iso::{CanonicalIso, VectorIso};
pub use milliken::{milliken_number_bruteforce, milliken_search, Coloring, MillikenNumber};
pub use witness::{Shape, VectorStrongWitness, WitnessJson};
