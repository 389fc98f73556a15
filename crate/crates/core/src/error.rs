use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("feedback error: {0}")]
    Feedback(String),

    #[error("numeric divergence ({})", .0)]
    Divergence(DivergenceContext),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid user input rather than by a run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

/// Where a non-finite loss showed up. Fields are filled in as the error
/// travels up from local training through rounds and trials.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DivergenceContext {
    pub stage: String,
    pub client_id: Option<usize>,
    pub round: Option<usize>,
    pub config_id: Option<String>,
}

impl std::fmt::Display for DivergenceContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "non-finite loss during {}", self.stage)?;
        if let Some(c) = self.client_id {
            write!(f, ", client {c}")?;
        }
        if let Some(r) = self.round {
            write!(f, ", round {r}")?;
        }
        if let Some(id) = &self.config_id {
            write!(f, ", config {id}")?;
        }
        Ok(())
    }
}

impl Error {
    /// Attach client/round/config information to a divergence error; other
    /// errors pass through untouched.
    pub fn with_context(
        self,
        client_id: Option<usize>,
        round: Option<usize>,
        config_id: Option<&str>,
    ) -> Self {
        match self {
            Error::Divergence(mut ctx) => {
                if ctx.client_id.is_none() {
                    ctx.client_id = client_id;
                }
                if ctx.round.is_none() {
                    ctx.round = round;
                }
                if ctx.config_id.is_none() {
                    ctx.config_id = config_id.map(str::to_owned);
                }
                Error::Divergence(ctx)
            }
            other => other,
        }
    }
}
