use surfcode::encoder::EncodeError;
use surfcode::harness::HarnessError;

/// An error tagged with the exit code it maps to.
#[derive(Debug)]
pub enum Fail {
    Config(anyhow::Error),
    Pipeline(anyhow::Error),
}

impl Fail {
    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        Fail::Config(e.into())
    }

    pub fn pipeline(e: impl Into<anyhow::Error>) -> Self {
        Fail::Pipeline(e.into())
    }

    pub fn code(&self) -> u8 {
        match self {
            Fail::Config(_) => 2,
            Fail::Pipeline(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Fail::Config(e) | Fail::Pipeline(e) => e,
        }
    }
}

impl From<HarnessError> for Fail {
    fn from(e: HarnessError) -> Self {
        // a code length the mesh cannot support is a scenario problem
        if e.is_config() || matches!(e, HarnessError::Encode(EncodeError::TooManyClasses { .. })) {
            Fail::config(e)
        } else {
            Fail::pipeline(e)
        }
    }
}

/// `?`-friendly tagging of foreign errors.
pub trait Tag<T> {
    fn or_config(self) -> Result<T, Fail>;
    fn or_pipeline(self) -> Result<T, Fail>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn or_config(self) -> Result<T, Fail> {
        self.map_err(Fail::config)
    }

    fn or_pipeline(self) -> Result<T, Fail> {
        self.map_err(Fail::pipeline)
    }
}
