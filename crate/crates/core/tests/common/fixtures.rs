//! Reference suites per room: a strong one that kills the mutant, a weak
//! one that reaches the gate but lets the mutant through, and a wrong fix.

use std::path::PathBuf;

pub const COMPONENTS: [&str; 7] = [
    "CryoPod",
    "OxygenMixer",
    "EngineCoolant",
    "CargoManifest",
    "NavTree",
    "PowerGrid",
    "CommsEncoder",
];

fn path(component: &str, file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(component)
        .join(file)
}

fn read(component: &str, file: &str) -> String {
    std::fs::read_to_string(path(component, file)).unwrap_or_else(|e| panic!("{component}/{file}: {e}"))
}

pub fn strong(component: &str) -> String {
    read(component, "strong.ship")
}

pub fn weak(component: &str) -> String {
    read(component, "weak.ship")
}

pub fn wrong_fix(component: &str) -> String {
    read(component, "wrong_fix.ship")
}
