use pumpsim::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{label}: {source}", label = core_label(.0), source = .0)]
    Core(#[from] pumpsim::Error),

    #[error("oracle disagreement: max deviation {deviation:.3e} exceeds {tol:.0e}")]
    OracleMismatch { deviation: f64, tol: f64 },
}

fn core_label(e: &pumpsim::Error) -> &'static str {
    match e.kind() {
        ErrorKind::Physics => "physics guard",
        ErrorKind::Numerical => "numerical failure",
        ErrorKind::Input => "config error",
    }
}

impl CliError {
    /// 1 = config, 2 = physics guard, 3 = numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => 1,
                ErrorKind::Physics => 2,
                ErrorKind::Numerical => 3,
            },
            CliError::OracleMismatch { .. } => 3,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
