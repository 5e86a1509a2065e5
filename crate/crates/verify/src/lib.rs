//! Acceptance checks for the workspace live in `tests/acceptance.rs`. Run
//! them with `cargo test -p pipevid-verify --test acceptance`.
