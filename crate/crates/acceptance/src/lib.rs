//! End-to-end acceptance checks for the NVAR workspace. Everything lives in
//! `tests/acceptance.rs`; run it with `cargo test -p nvar-acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.
