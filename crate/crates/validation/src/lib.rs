//! Holds the end-to-end acceptance suite (`tests/acceptance.rs`). It lives
//! in its own package so it runs after the unit and integration tests of
//! the other crates.
