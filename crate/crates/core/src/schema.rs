//! JSON Schemas (draft 2020-12) for every file and message the tool reads or
//! writes. `trackfuse schema <name>` prints one.

pub const SCHEMA_VERSION: u32 = 1;

macro_rules! schemas {
    ($($name:literal),* $(,)?) => {
        /// `(name, schema text)` pairs.
        pub const SCHEMAS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../schemas/", $name, ".schema.json")))),*
        ];
    };
}

schemas!(
    "mask",
    "segment_set",
    "results",
    "warp",
    "config",
    "scenario",
    "noise",
    "metrics",
    "bank",
    "meta",
    "manifest",
    "request",
    "response",
);

pub fn get(name: &str) -> Option<&'static str> {
    SCHEMAS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    SCHEMAS.iter().map(|(n, _)| *n)
}
