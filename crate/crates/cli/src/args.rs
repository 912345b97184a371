//! Command-line flags and the small value grammars they use.

use std::path::PathBuf;

use clap::{Args, Parser};
use corrdyn::relation::{Direction, Region};
use corrdyn::{ProjPoint, C64};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Parser, Debug, Clone)]
#[command(name = "corrdyn", version, about = "Dynamics of holomorphic correspondences on the sphere")]
pub struct Cli {
    /// info | compose | measure | blocks | normality | construct61
    pub command: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Flags shared by all commands; each command reads what it needs.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct CommonArgs {
    /// Chain file (JSON)
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Directory for the report and artifacts
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cells per chart side
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub depth: Option<u32>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// fwd or bwd
    #[arg(long)]
    pub direction: Option<String>,
    /// Start point "re,im", "inf" or "re_a,im_a,re_b,im_b"; repeatable
    #[arg(long, allow_hyphen_values = true)]
    pub start: Vec<String>,
    #[arg(long)]
    pub power: Option<u32>,
    #[arg(long)]
    pub max_n: Option<u32>,
    /// disk:cx,cy,r | outside:r | annulus:r1,r2 | point:re,im | point:inf
    #[arg(long, allow_hyphen_values = true)]
    pub region: Option<String>,
    /// Witness target point
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<String>,
    #[arg(long)]
    pub max_dilation: Option<usize>,
    #[arg(long)]
    pub witness_steps: Option<usize>,
    /// Polynomial coefficients, constant term first: "0,0,1" or "1.5,-1.5:0.5,1"
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<String>,
    /// auto | tree | sampler
    #[arg(long)]
    pub estimator: Option<String>,
    /// Size budget for exact expansions
    #[arg(long)]
    pub budget: Option<u128>,
    /// Depth of the measure estimate used by normality and construct61
    #[arg(long)]
    pub measure_depth: Option<u32>,
}

fn nums(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad number {x:?} in {s:?}")))
        })
        .collect()
}

pub fn parse_point(s: &str) -> CliResult<ProjPoint> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t == "∞" {
        return Ok(ProjPoint::INFINITY);
    }
    let v = nums(t)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Config(format!("non-finite point {s:?}")));
    }
    ProjPoint::from_slice(&v)
        .ok_or_else(|| CliError::Config(format!("point {s:?} needs 2 or 4 numbers, not all zero")))
}

/// Ascending coefficients; each entry is `re` or `re:im`.
pub fn parse_coeffs(s: &str) -> CliResult<Vec<C64>> {
    s.split(',')
        .map(|x| {
            let x = x.trim();
            let (re, im) = x.split_once(':').unwrap_or((x, "0"));
            match (re.parse::<f64>(), im.parse::<f64>()) {
                (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => Ok(C64::new(a, b)),
                _ => Err(CliError::Config(format!("bad coefficient {x:?}"))),
            }
        })
        .collect()
}

pub fn parse_region(s: &str) -> CliResult<Region> {
    s.parse::<Region>().map_err(|e| CliError::Config(e.to_string()))
}

pub fn parse_direction(s: &str) -> CliResult<Direction> {
    s.parse::<Direction>().map_err(|e| CliError::Config(e.to_string()))
}

impl CommonArgs {
    pub fn grid_or(&self, default: usize) -> CliResult<usize> {
        match self.grid.unwrap_or(default) {
            0 => Err(CliError::Config("grid resolution must be positive".into())),
            n if n > 4096 => Err(CliError::Config(format!("grid resolution {n} too large"))),
            n => Ok(n),
        }
    }

    pub fn starts_or(&self, default: &[ProjPoint]) -> CliResult<Vec<ProjPoint>> {
        if self.start.is_empty() {
            Ok(default.to_vec())
        } else {
            self.start.iter().map(|s| parse_point(s)).collect()
        }
    }

    pub fn require_chain(&self) -> CliResult<&PathBuf> {
        self.chain
            .as_ref()
            .ok_or_else(|| CliError::Config("--chain is required".into()))
    }
}
