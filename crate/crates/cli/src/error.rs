use std::fmt;

use jnf_core::Error;

/// Command failure with a stable exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    MissingFile(String),
    Io(String),
    Model(String),
    Dataset(String),
    Diverged(String),
    ExternalMetric(String),
    Input(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingFile(_) => "missing-file",
            CliError::Io(_) => "io",
            CliError::Model(_) => "model-mismatch",
            CliError::Dataset(_) => "dataset",
            CliError::Diverged(_) => "diverged",
            CliError::ExternalMetric(_) => "external-metric",
            CliError::Input(_) => "invalid-input",
        }
    }

    /// Process exit code; 2 is shared with command-line usage errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingFile(_) => 3,
            CliError::Io(_) => 4,
            CliError::Model(_) => 5,
            CliError::Dataset(_) => 6,
            CliError::Diverged(_) => 7,
            CliError::ExternalMetric(_) => 8,
            CliError::Input(_) => 9,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::MissingFile(m)
            | CliError::Io(m)
            | CliError::Model(m)
            | CliError::Dataset(m)
            | CliError::Diverged(m)
            | CliError::ExternalMetric(m)
            | CliError::Input(m) => m,
        }
    }

    /// Single line: `error kind=<kind> code=<code> message="<escaped>"`.
    pub fn line(&self) -> String {
        format!(
            "error kind={} code={} message={:?}",
            self.kind(),
            self.exit_code(),
            self.message()
        )
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let text = e.to_string();
        match e {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => CliError::MissingFile(text),
            Error::Io { .. } => CliError::Io(text),
            Error::Wav { path, .. } if !path.exists() => CliError::MissingFile(text),
            Error::Checkpoint(_) | Error::ModelMismatch(_) | Error::Stage { .. } => CliError::Model(text),
            Error::Dataset(_) => CliError::Dataset(text),
            Error::Diverged { last_good, .. } => CliError::Diverged(match last_good {
                Some(p) => format!("{text} (last good checkpoint {})", p.display()),
                None => text,
            }),
            Error::ExternalMetric(_) => CliError::ExternalMetric(text),
            Error::InvalidArgument(_) => CliError::Config(text),
            _ => CliError::Input(text),
        }
    }
}
