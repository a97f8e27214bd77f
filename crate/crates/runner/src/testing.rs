//! Locating workspace binaries from tests of other crates.

use std::path::PathBuf;
use std::process::Command;

pub const FIXTURE_MODEL: &str = "fixture-model";

/// Path of binary `bin` of workspace package `package`, in the cargo target
/// directory of the running test executable. Builds it when absent.
pub fn workspace_binary(package: &str, bin: &str) -> PathBuf {
    let exe = std::env::current_exe().expect("current executable");
    let candidates: Vec<PathBuf> = exe.ancestors().skip(1).take(3).map(|dir| dir.join(bin)).collect();
    if let Some(found) = candidates.iter().find(|p| p.is_file()) {
        return found.clone();
    }
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let status = Command::new(cargo)
        .args(["build", "-p", package, "--bin", bin])
        .status()
        .expect("run cargo build");
    assert!(status.success(), "building {bin} failed");
    candidates
        .into_iter()
        .find(|p| p.is_file())
        .unwrap_or_else(|| panic!("{bin} not found next to {}", exe.display()))
}

pub fn fixture_model_path() -> PathBuf {
    workspace_binary("evalboard-runner", FIXTURE_MODEL)
}
