use std::fmt::Display;
use std::path::Path;

use mot_core::Error;

pub const USAGE: u8 = 1;
pub const VALIDATION: u8 = 2;
pub const PARSE: u8 = 3;
pub const SOLVER: u8 = 4;
pub const ACCEPTANCE: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Display) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }

    pub fn other(message: impl Display) -> Self {
        Failure::new(USAGE, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Validation(_) | Error::ConvexOrder { .. } | Error::InvalidArgument(_) => VALIDATION,
            Error::Parse(_) => PARSE,
            Error::Infeasible | Error::Lp(_) | Error::Domain(_) => SOLVER,
        };
        Failure::new(code, e)
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::other(format!("cannot read {}: {e}", path.display())))
}

pub fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Failure::other(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::other(format!("serializing {name}: {e}")))?;
    s.push('\n');
    write(dir, name, s)
}
