//! Test-set evaluation and significance testing.
//!
//! Two-tailed p-values come from the regularized incomplete beta function,
//! `p = I(df / (df + t²); df / 2, 1 / 2)`, evaluated by `statrs` with a
//! continued fraction accurate to well below 1e-8 absolute.

use std::fmt;
use std::path::Path;

use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::environments::{EnvError, Episode, EnvironmentFactory};
use crate::evolution::{Evaluator, PolicyEvaluator};
use crate::genome::{Genome, GenomeError};
use crate::network::ArchitectureDescriptor;
use crate::rng::derive_seed;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("t-test needs at least 2 samples per group, got {0} and {1}")]
    TooFewSamples(usize, usize),
    #[error("sample value {0} is not finite")]
    NonFinite(f64),
    #[error("at least one episode is required")]
    NoEpisodes,
    #[error("scores line {line}: {reason}")]
    Scores { line: usize, reason: String },
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Environment(#[from] EnvError),
}

/// Variance assumption of the two-sample t-test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TTestKind {
    /// Unequal variances, Welch–Satterthwaite degrees of freedom.
    Welch,
    /// Pooled variance, `n_a + n_b - 2` degrees of freedom.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample (n - 1) standard deviation; 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
fn two_tailed_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

pub fn t_test(a: &[f64], b: &[f64], kind: TTestKind) -> Result<TTest, AnalyticsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalyticsError::TooFewSamples(a.len(), b.len()));
    }
    if let Some(&bad) = a.iter().chain(b).find(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite(bad));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let va = sample_std(a).powi(2);
    let vb = sample_std(b).powi(2);
    let (se2, df) = match kind {
        TTestKind::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            (se2, se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0)))
        }
        TTestKind::Pooled => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            (pooled * (1.0 / na + 1.0 / nb), df)
        }
    };
    let diff = ma - mb;
    if se2 == 0.0 {
        // both groups constant
        return Ok(if diff == 0.0 {
            TTest { t: 0.0, p: 1.0, df: f64::INFINITY }
        } else {
            TTest { t: diff.signum() * f64::INFINITY, p: 0.0, df: f64::INFINITY }
        });
    }
    let t = diff / se2.sqrt();
    Ok(TTest { t, p: two_tailed_p(t, df), df })
}

/// Welch's unequal-variance t-test: `(t, two-tailed p)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64), AnalyticsError> {
    let r = t_test(a, b, TTestKind::Welch)?;
    Ok((r.t, r.p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    ABetter,
    BBetter,
    NoSignificantDifference,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::ABetter => "A",
            Verdict::BBetter => "B",
            Verdict::NoSignificantDifference => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub verdict: Verdict,
    pub test: TTest,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "verdict={} t={:.6} p={:.6e} mean_a={:.6} mean_b={:.6} n_a={} n_b={}",
            self.verdict, self.test.t, self.test.p, self.mean_a, self.mean_b, self.n_a, self.n_b
        )
    }
}

/// Higher mean wins iff the two-tailed Welch p-value is below `alpha`.
pub fn compare_runs(a: &[f64], b: &[f64], alpha: f64) -> Result<Comparison, AnalyticsError> {
    let test = t_test(a, b, TTestKind::Welch)?;
    let (mean_a, mean_b) = (mean(a), mean(b));
    let verdict = if test.p < alpha && mean_a > mean_b {
        Verdict::ABetter
    } else if test.p < alpha && mean_b > mean_a {
        Verdict::BBetter
    } else {
        Verdict::NoSignificantDifference
    };
    Ok(Comparison { verdict, test, mean_a, mean_b, n_a: a.len(), n_b: b.len() })
}

/// Reads per-episode scores: the first comma-separated field of every
/// non-empty line that does not start with `#`.
pub fn parse_scores(text: &str) -> Result<Vec<f64>, AnalyticsError> {
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or_default().trim();
        let value: f64 = field.parse().map_err(|_| AnalyticsError::Scores {
            line: i + 1,
            reason: format!("`{field}` is not a number"),
        })?;
        if !value.is_finite() {
            return Err(AnalyticsError::Scores { line: i + 1, reason: "score is not finite".into() });
        }
        scores.push(value);
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub scores: Vec<f64>,
    pub lifespans: Vec<usize>,
    pub mean_score: f64,
    pub std_score: f64,
    pub mean_lifespan: f64,
    pub std_lifespan: f64,
}

impl TestReport {
    pub fn from_episodes(episodes: &[Episode]) -> Result<Self, AnalyticsError> {
        if episodes.is_empty() {
            return Err(AnalyticsError::NoEpisodes);
        }
        let scores: Vec<f64> = episodes.iter().map(|e| e.score).collect();
        let lifespans: Vec<usize> = episodes.iter().map(|e| e.lifespan).collect();
        let spans: Vec<f64> = lifespans.iter().map(|&l| l as f64).collect();
        Ok(Self {
            mean_score: mean(&scores),
            std_score: sample_std(&scores),
            mean_lifespan: mean(&spans),
            std_lifespan: sample_std(&spans),
            scores,
            lifespans,
        })
    }

    /// Per-episode CSV: a `# score,lifespan` comment header, then one row per episode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# score,lifespan\n");
        for (score, lifespan) in self.scores.iter().zip(&self.lifespans) {
            out.push_str(&format!("{score},{lifespan}\n"));
        }
        out
    }
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10}{:>8}{:>14}{:>14}", "metric", "n", "mean", "std")?;
        writeln!(f, "{:<10}{:>8}{:>14.4}{:>14.4}", "score", self.scores.len(), self.mean_score, self.std_score)?;
        write!(
            f,
            "{:<10}{:>8}{:>14.4}{:>14.4}",
            "lifespan",
            self.lifespans.len(),
            self.mean_lifespan,
            self.std_lifespan
        )
    }
}

/// Plays `genome` for `episodes` episodes seeded from `namespace`.
pub fn evaluate_genome(
    genome: &Genome,
    arch: &ArchitectureDescriptor,
    env: &dyn EnvironmentFactory,
    episodes: usize,
    frames: usize,
    master_seed: u64,
    namespace: &str,
) -> Result<TestReport, AnalyticsError> {
    if episodes == 0 {
        return Err(AnalyticsError::NoEpisodes);
    }
    let seeds: Vec<u64> = (0..episodes as u64).map(|e| derive_seed(master_seed, namespace, &[e])).collect();
    let evaluator = PolicyEvaluator::new(env, arch.clone(), frames)?;
    TestReport::from_episodes(&evaluator.evaluate(genome, &seeds)?)
}

/// Loads a checkpoint file and evaluates it on the `test` seed namespace.
pub fn evaluate_checkpoint(
    path: &Path,
    env: &dyn EnvironmentFactory,
    episodes: usize,
    frames: usize,
    master_seed: u64,
) -> Result<TestReport, AnalyticsError> {
    let (genome, arch) = Genome::load(path)?;
    evaluate_genome(&genome, &arch, env, episodes, frames, master_seed, "test")
}
