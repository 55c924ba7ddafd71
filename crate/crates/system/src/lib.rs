//! Holds no code. The `acceptance` test target drives the engine, the CLI
//! and the HTTP service together and lives here so it runs after every
//! other crate's tests.
