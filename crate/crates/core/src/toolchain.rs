//! Compiler command template shared by the repair and build stages.

use std::path::Path;
use std::process::{Command, Output};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolchainError {
    #[error("compiler {0:?} not found; set `compiler` in the config")]
    CompilerMissing(String),
    #[error("failed to run compiler {cmd:?}: {source}")]
    Spawn {
        cmd: String,
        #[source]
        source: std::io::Error,
    },
}

/// `<cxx> <flags...> <extra...> <inputs> -o <output>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toolchain {
    pub cxx: String,
    /// Used for the coverage runtime object, which is plain C.
    pub cc: String,
    pub flags: Vec<String>,
}

impl Default for Toolchain {
    fn default() -> Self {
        Toolchain {
            cxx: "clang++".into(),
            cc: "clang".into(),
            flags: vec![
                "-std=c++14".into(),
                "-O2".into(),
                "-w".into(),
                "-fdiagnostics-color=never".into(),
            ],
        }
    }
}

impl Toolchain {
    pub fn with_flags(cxx: impl Into<String>, flags: &str) -> Self {
        Toolchain {
            cxx: cxx.into(),
            flags: flags.split_whitespace().map(str::to_owned).collect(),
            ..Toolchain::default()
        }
    }

    pub fn flags_string(&self) -> String {
        self.flags.join(" ")
    }

    /// Compiles and links one C++ source file.
    pub fn compile(&self, source: &Path, output: &Path, extra: &[&str], objects: &[&Path]) -> Result<Output, ToolchainError> {
        let mut cmd = Command::new(&self.cxx);
        cmd.args(&self.flags).args(extra).arg("-x").arg("c++").arg(source).arg("-x").arg("none");
        cmd.args(objects).arg("-o").arg(output);
        run(cmd, &self.cxx)
    }

    /// Links objects into an executable with the C++ driver.
    pub fn link(&self, objects: &[&Path], output: &Path) -> Result<Output, ToolchainError> {
        let mut cmd = Command::new(&self.cxx);
        cmd.args(objects).arg("-o").arg(output);
        run(cmd, &self.cxx)
    }

    /// Compiles a C file to an object without any instrumentation.
    pub fn compile_c_object(&self, source: &Path, output: &Path) -> Result<Output, ToolchainError> {
        let mut cmd = Command::new(&self.cc);
        cmd.args(["-O2", "-w", "-c"]).arg(source).arg("-o").arg(output);
        run(cmd, &self.cc)
    }
}

fn run(mut cmd: Command, name: &str) -> Result<Output, ToolchainError> {
    cmd.output().map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ToolchainError::CompilerMissing(name.to_string())
        } else {
            ToolchainError::Spawn {
                cmd: name.to_string(),
                source,
            }
        }
    })
}
