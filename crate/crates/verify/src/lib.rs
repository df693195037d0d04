//! Holds the acceptance suite in `tests/acceptance.rs`; the checks themselves
//! live in `cenn_forge_cli::checks` so `cenn-forge verify` runs the same code.
