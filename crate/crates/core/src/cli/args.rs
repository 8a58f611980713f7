use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::NmseMode;

#[derive(Debug, Parser)]
#[command(
    name = "double-irs",
    version,
    about = "Double-IRS cascaded channel estimation simulator"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML scenario file; missing keys take the reference defaults
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo trials per power point
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_parser = parse_mode)]
    pub nmse_mode: Option<NmseMode>,
    /// Cancel single-reflection paths with the true channels (debug)
    #[arg(long, global = true)]
    pub genie_cancel: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Training overhead of both schemes over a grid of N and K
    Overhead {
        /// BS antenna counts, `A..B` (inclusive) or a comma list
        #[arg(long, default_value = "4..32")]
        n_range: String,
        /// User counts, `A..B` (inclusive) or a comma list
        #[arg(long, default_value = "1..10")]
        k_range: String,
        #[arg(long)]
        no_plot: bool,
    },
    /// NMSE versus transmit power for both schemes
    MseSweep {
        /// Only run the equal-overhead comparison
        #[arg(long)]
        equal_overhead: bool,
        /// Transmit powers in dBm, comma separated (default: from config)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        powers: Option<Vec<f64>>,
        /// Joint Phase III even when N ≥ M2
        #[arg(long)]
        joint_phase3: bool,
        #[arg(long)]
        no_plot: bool,
    },
    /// Self-check of the model, estimators and overhead formulas
    Validate {
        /// Replace both path-loss exponents before running (test hook)
        #[arg(long, hide = true)]
        corrupt_alpha: Option<f64>,
    },
}

fn parse_mode(s: &str) -> Result<NmseMode, String> {
    s.parse()
}

/// Parses `A..B` (inclusive) or `a,b,c`. Returns `None` for an empty or
/// malformed range.
pub fn parse_range(s: &str) -> Option<Vec<usize>> {
    let values: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().ok()?;
        let b: usize = b.trim().trim_start_matches('=').parse().ok()?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().ok())
            .collect::<Option<_>>()?
    };
    if values.is_empty() || values.contains(&0) {
        None
    } else {
        Some(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("4..6"), Some(vec![4, 5, 6]));
        assert_eq!(parse_range("4..=6"), Some(vec![4, 5, 6]));
        assert_eq!(parse_range("8, 2"), Some(vec![8, 2]));
        assert_eq!(parse_range("6..4"), None);
        assert_eq!(parse_range(""), None);
        assert_eq!(parse_range("0..3"), None);
        assert_eq!(parse_range("a..3"), None);
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::parse_from([
            "double-irs",
            "mse-sweep",
            "--powers",
            "-10,20",
            "--trials",
            "3",
        ]);
        assert_eq!(cli.common.trials, Some(3));
        assert!(
            matches!(cli.command, Command::MseSweep { powers: Some(ref p), .. } if p == &[-10.0, 20.0])
        );
    }
}
