//! Error classes and their process exit codes.

use std::fmt;
use twoseal_core::features::SynthError;
use twoseal_core::localize::LocalizeError;
use twoseal_core::scorers::ScoreError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// A bad or inconsistent run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Maps an error chain to 2 (config), 4 (numeric failure) or 3 (data).
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<SynthError>() {
            return EXIT_CONFIG;
        }
        let score = cause
            .downcast_ref::<ScoreError>()
            .or_else(|| match cause.downcast_ref::<LocalizeError>() {
                Some(LocalizeError::Score(s)) => Some(s),
                _ => None,
            });
        match score {
            Some(ScoreError::NonFinite { .. }) => return EXIT_NUMERIC,
            Some(ScoreError::InvalidConfig(_)) => return EXIT_CONFIG,
            _ => {}
        }
        if let Some(LocalizeError::InvalidConfig(_)) = cause.downcast_ref::<LocalizeError>() {
            return EXIT_CONFIG;
        }
    }
    EXIT_DATA
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn codes_follow_the_chain() {
        let e = anyhow::Error::new(ConfigError("x".into())).context("stage load");
        assert_eq!(exit_code(&e), EXIT_CONFIG);
        let e: anyhow::Error = Err::<(), _>(ScoreError::NonFinite { epoch: 3 }).context("stage train").unwrap_err();
        assert_eq!(exit_code(&e), EXIT_NUMERIC);
        let e = anyhow::Error::new(LocalizeError::Score(ScoreError::NonFinite { epoch: 1 }));
        assert_eq!(exit_code(&e), EXIT_NUMERIC);
        assert_eq!(exit_code(&anyhow::anyhow!("missing file")), EXIT_DATA);
    }
}
