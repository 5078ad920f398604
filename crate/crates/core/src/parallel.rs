//! Render thread-pool sizing.

use crate::error::{Error, Result};

/// Environment variable capping render parallelism.
pub const THREADS_ENV: &str = "VISTA_KIT_THREADS";

/// Parses a thread count; zero and garbage are rejected.
pub fn parse_threads(value: &str) -> Result<usize> {
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got `{value}`"))),
    }
}

/// Sizes the global rayon pool from [`THREADS_ENV`] when it is set. Must
/// run before any parallel work; returns the configured count, if any.
pub fn init_from_env() -> Result<Option<usize>> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(None) };
    let n = parse_threads(&value)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(Some(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_counts() {
        assert_eq!(parse_threads("4").unwrap(), 4);
        assert_eq!(parse_threads(" 1\n").unwrap(), 1);
        assert!(parse_threads("0").is_err());
        assert!(parse_threads("many").is_err());
    }
}
