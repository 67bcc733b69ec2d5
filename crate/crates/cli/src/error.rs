use std::fmt;
use std::path::Path;
use std::process::ExitCode;

/// A failed command with its process exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const EXIT_IO: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self::new(EXIT_IO, format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }

    /// Prefixes the message with the file the error concerns.
    pub fn in_file(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<retention::Error> for CliError {
    fn from(err: retention::Error) -> Self {
        use retention::Error as E;
        let code = match err {
            E::Io(_) | E::Parse(_) => EXIT_IO,
            E::InsufficientData { .. } | E::Degenerate(_) | E::NotLeptokurtic { .. } => EXIT_DATA,
            E::Domain(_) | E::Config(_) | E::Stability { .. } | E::Resource(_) => EXIT_NUMERIC,
        };
        Self::new(code, err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
