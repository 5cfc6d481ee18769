#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub const FIXED_NOW: &str = "2026-05-01T00:00:00Z";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn reference_asset() -> PathBuf {
    fixtures().join("reference_asset")
}

/// Canonical thresholds with weights (0.1, 0.2, 0.3, 0.2, 0.2), which put
/// the weighted mean of (78, 83, 62, 70, 55) at exactly 68.
pub fn reference_profile() -> PathBuf {
    fixtures().join("reference_profile.json")
}

pub fn copy_dir(src: &Path, dst: &Path) {
    fs::create_dir_all(dst).unwrap();
    for entry in fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let target = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// Copy of the reference asset in a fresh temp dir.
pub fn scratch_asset() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("asset");
    copy_dir(&reference_asset(), &root);
    (tmp, root)
}

pub struct Output {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

impl Output {
    pub fn stdout_str(&self) -> String {
        String::from_utf8(self.stdout.clone()).unwrap()
    }
}

pub fn prl<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = Command::new(env!("CARGO_BIN_EXE_prl"))
        .args(args)
        .env_remove("PRL_PROFILE")
        .output()
        .unwrap();
    Output {
        code: out.status.code().unwrap(),
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}
