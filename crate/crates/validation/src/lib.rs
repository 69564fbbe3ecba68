//! Holds the `acceptance` test target, which checks every acceptance
//! criterion at its stated tolerance and runtime bound.
//!
//! ```text
//! cargo test -p portopt-validation --test acceptance
//! ```
