use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use parlor::problems::BenchmarkProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Known,
    Blind,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Known => write!(f, "known"),
            Mode::Blind => write!(f, "blind"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Cubic,
    Expdiff,
}

impl Problem {
    pub fn benchmark(self) -> BenchmarkProblem {
        match self {
            Problem::Cubic => BenchmarkProblem::CubicReaction,
            Problem::Expdiff => BenchmarkProblem::ExpDiffusion,
        }
    }

    /// Default forcing constants: 1e-2 for the cubic benchmark, 0.1 for the
    /// exponential diffusion benchmark.
    pub fn default_rho(self) -> f64 {
        match self {
            Problem::Cubic => 1e-2,
            Problem::Expdiff => 0.1,
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Problem::Cubic => write!(f, "cubic"),
            Problem::Expdiff => write!(f, "expdiff"),
        }
    }
}

/// Fully resolved run configuration; the CSV header echoes every field.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Problem,
    pub mode: Mode,
    pub n: usize,
    pub num_samples: usize,
    pub seed: u64,
    pub rho_r: f64,
    pub rho_p: f64,
    pub trunc_eps: f64,
    pub solver_tol: f64,
    pub eps_target: f64,
    pub max_iter: usize,
    pub alpha: f64,
    pub probes: usize,
    pub threads: usize,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.problem == Problem::Expdiff && self.mode == Mode::Known {
            bail!(
                "expdiff has no known-structure coefficient map (the exponential \
                 coefficient admits no finite expansion); run it with --mode blind"
            );
        }
        if self.n < 3 {
            bail!("--n must be at least 3, got {}", self.n);
        }
        if self.num_samples == 0 {
            bail!("--Q must be positive");
        }
        if !(self.rho_r > 0.0 && self.rho_p > 0.0) {
            bail!("forcing constants must be positive");
        }
        if !(self.trunc_eps > 0.0 && self.trunc_eps <= 1.0) {
            bail!("--trunc-eps must lie in (0, 1], got {}", self.trunc_eps);
        }
        if !(self.eps_target > 0.0) {
            bail!("--eps-target must be positive");
        }
        if self.max_iter == 0 {
            bail!("--max-iter must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("--alpha must lie in (0, 1), got {}", self.alpha);
        }
        if self.mode == Mode::Blind && self.probes < 2 {
            bail!("--probes must be at least 2 in blind mode");
        }
        Ok(())
    }

    /// Key/value echo written as CSV header comments; one line per field.
    pub fn echo_lines(&self) -> Vec<String> {
        vec![
            format!("problem={}", self.problem),
            format!("mode={}", self.mode),
            format!("n={}", self.n),
            format!("Q={}", self.num_samples),
            format!("seed={}", self.seed),
            format!("rho-r={:e}", self.rho_r),
            format!("rho-p={:e}", self.rho_p),
            format!("trunc-eps={:e}", self.trunc_eps),
            format!("solver-tol={:e}", self.solver_tol),
            format!("eps-target={:e}", self.eps_target),
            format!("max-iter={}", self.max_iter),
            format!("alpha={:e}", self.alpha),
            format!("probes={}", self.probes),
        ]
    }
}

/// Parses an optional `key=value` config file. Keys use the long flag names
/// without the leading dashes; `#` starts a comment.
pub fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').with_context(|| {
            format!(
                "{}:{}: expected key=value, got {:?}",
                path.display(),
                lineno + 1,
                raw
            )
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}
