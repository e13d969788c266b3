use std::path::PathBuf;

use woods_core::Error as CoreError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, #[source] std::io::Error),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(..) => EXIT_DATA,
            CliError::Core(e) => match e {
                CoreError::Config(_) | CoreError::Usage(_) => EXIT_CONFIG,
                CoreError::Numeric(_) => EXIT_NUMERIC,
                CoreError::Shape(_)
                | CoreError::Index { .. }
                | CoreError::Parse { .. }
                | CoreError::Io { .. }
                | CoreError::Json(_) => EXIT_DATA,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(CoreError::Numeric("nan".into())).exit_code(), 4);
        let parse = CoreError::Parse {
            path: "a.csv".into(),
            line: 3,
            message: "bad float".into(),
        };
        assert_eq!(CliError::Core(parse).exit_code(), 3);
    }
}
