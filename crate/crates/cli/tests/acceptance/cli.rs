use std::path::Path;
use std::process::{Command, Output};

use anyhow::{ensure, Result};

pub fn run(args: &[&str], cwd: &Path) -> Result<Output> {
    Ok(Command::new(env!("CARGO_BIN_EXE_mocogan"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()?)
}

/// Runs the binary and fails with its stderr unless it exits with 0.
pub fn ok(args: &[&str], cwd: &Path) -> Result<Output> {
    let out = run(args, cwd)?;
    ensure!(
        out.status.success(),
        "`mocogan {}` exited with {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(out)
}
