//! Experiment configuration: strict TOML, every field defaulted.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::{GammaOptions, VerifyOptions};
use crate::counterexample::{frozen_norm_spec, ProjectionSearchConfig};
use crate::error::{Error, Result};
use crate::interpolation::GridCheckOptions;
use crate::manifold::{GraphProfile, ManifoldSpec};
use crate::mollification::{QuadSettings, SmoothingOptions};
use crate::normed_space::NormSpec;
use crate::report::{passes, BoundReport, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Seed of the test-function suites and of every probe set.
    pub seed: u64,
    /// Manifold and norm of the smoothing and gamma suites.
    pub manifold: ManifoldSpec,
    pub norm: NormSpec,
    /// Values of `n` for the smoothing and gamma suites.
    pub n: Vec<usize>,
    /// Unit-ball functions per `n`.
    pub suite_size: usize,
    /// Per-bound slack replacing the built-in one, keyed by bound name.
    pub slack: BTreeMap<String, f64>,
    pub output: OutputConfig,
    pub kernel: KernelConfig,
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    pub glue: GlueConfig,
    pub flatten: FlattenConfig,
    pub smoothing: SmoothingConfig,
    pub gamma: GammaConfig,
    pub counterexample: CounterexampleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            manifold: ManifoldSpec::circle(1.0),
            norm: NormSpec::Pnorm { p: f64::INFINITY },
            n: vec![5, 10, 20],
            suite_size: 10,
            slack: BTreeMap::new(),
            output: OutputConfig::default(),
            kernel: KernelConfig::default(),
            geometry: GeometryConfig::default(),
            grid: GridConfig::default(),
            glue: GlueConfig::default(),
            flatten: FlattenConfig::default(),
            smoothing: SmoothingConfig::default(),
            gamma: GammaConfig::default(),
            counterexample: CounterexampleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Fill the `seconds` column. Off by default so reruns are byte-identical.
    pub timings: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("reports"),
            timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub dims: Vec<usize>,
    pub scales: Vec<f64>,
    pub quad: QuadSettings,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            dims: vec![1, 2, 3],
            scales: vec![0.05, 0.1, 0.5],
            quad: QuadSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub manifolds: Vec<ManifoldSpec>,
    pub tangent_points: usize,
    pub tangent_step: f64,
    pub lemma1_delta: f64,
    pub lemma1_pairs: usize,
    /// Relative agreement with the chord oracle on circles and spheres.
    pub lemma1_oracle_tol: f64,
    pub lemma2_deltas: Vec<f64>,
    pub lemma2_samples: usize,
    pub lemma2_slack: f64,
    /// Radius of the ball the defects are sampled in.
    pub radius: f64,
    pub charts: usize,
    pub chart_points: usize,
    pub chart_halfwidth: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            manifolds: vec![
                ManifoldSpec::circle(1.0),
                ManifoldSpec::sphere(1.0),
                ManifoldSpec::torus(2.0, 0.5),
            ],
            tangent_points: 50,
            tangent_step: 1e-4,
            lemma1_delta: 0.1,
            lemma1_pairs: 2000,
            lemma1_oracle_tol: 0.01,
            lemma2_deltas: vec![0.2, 0.1, 0.05],
            lemma2_samples: 1500,
            lemma2_slack: 0.01,
            radius: 3.0,
            charts: 4,
            chart_points: 100,
            chart_halfwidth: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dims: Vec<usize>,
    pub delta: f64,
    pub halfwidth: f64,
    pub points: usize,
    pub check: GridCheckOptions,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dims: vec![1, 2],
            delta: 0.1,
            halfwidth: 1.0,
            points: 500,
            check: GridCheckOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlueConfig {
    pub manifold: ManifoldSpec,
    pub norm: NormSpec,
    /// The cover is built for `M` in the ball of radius `n^2`.
    pub n: usize,
    pub halfwidth: f64,
    pub instances: usize,
    pub points: usize,
    pub eps: f64,
}

impl Default for GlueConfig {
    fn default() -> Self {
        GlueConfig {
            manifold: ManifoldSpec::circle(1.0),
            norm: NormSpec::Pnorm { p: f64::INFINITY },
            n: 2,
            halfwidth: 0.3,
            instances: 20,
            points: 300,
            eps: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlattenConfig {
    pub manifold: ManifoldSpec,
    pub norm: NormSpec,
    pub radii: Vec<f64>,
    pub functions: usize,
    pub points: usize,
}

impl Default for FlattenConfig {
    fn default() -> Self {
        FlattenConfig {
            manifold: ManifoldSpec::graph(
                1,
                GraphProfile::Wave {
                    amplitude: 0.2,
                    frequency: 1.0,
                },
                150.0,
            ),
            norm: NormSpec::Pnorm { p: f64::INFINITY },
            radii: vec![5.0, 10.0],
            functions: 10,
            points: 1200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingConfig {
    pub n: Vec<usize>,
    pub functions: usize,
    pub probes: usize,
    /// Safety factor on the sampled Lipschitz constant of the retraction.
    pub inflation: f64,
    pub lip_pairs: usize,
    pub kernel_scale: f64,
    pub options: SmoothingOptions,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            n: vec![5, 10],
            functions: 5,
            probes: 200,
            inflation: 1.1,
            lip_pairs: 2000,
            kernel_scale: 0.1,
            options: SmoothingOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GammaConfig {
    pub options: GammaOptions,
    pub verify: VerifyOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleConfig {
    /// Points per axis of the flat-patch grid.
    pub grid: usize,
    /// The target norm `|.|~`; the default is the frozen `|A x|_1`.
    pub norm: NormSpec,
    pub search: ProjectionSearchConfig,
    /// Required excess of the minimal projection value over 1.
    pub margin: f64,
    pub xi: f64,
    pub quad_nodes: usize,
    pub fd_step: f64,
    pub validate_samples: usize,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig {
            grid: 9,
            norm: frozen_norm_spec(),
            search: ProjectionSearchConfig::default(),
            margin: 0.02,
            xi: 0.01,
            quad_nodes: 24,
            fd_step: 1e-6,
            validate_samples: 4000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            return Err(Error::Config("the n list is empty".into()));
        }
        if self.n.iter().any(|&n| n < 2) {
            return Err(Error::Config("every n must be at least 2".into()));
        }
        if self.suite_size == 0 {
            return Err(Error::Config("suite_size must be positive".into()));
        }
        if self.slack.values().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("slack overrides must be nonnegative".into()));
        }
        Ok(())
    }

    /// Re-evaluates reports whose bound name has a slack override.
    pub fn apply_slack(&self, reports: &mut [BoundReport]) {
        for r in reports.iter_mut() {
            if r.status == Status::HypothesisViolated {
                continue;
            }
            if let Some(&s) = self.slack.get(&r.bound_name) {
                r.slack = s;
                r.status = if passes(r.paper_value, r.sampled_value, s, r.tolerance) {
                    Status::Pass
                } else {
                    Status::Fail
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::refs;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 3\nn = [4]\n[norm]\nkind = \"euclidean\"\n")
            .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.n, vec![4]);
        assert_eq!(cfg.norm, NormSpec::Euclidean);
        assert_eq!(cfg.kernel, KernelConfig::default());

        // nested tables fill in too
        let cfg = ExperimentConfig::from_toml(
            "[gamma.options.cover]\nseed = 9\n[kernel.quad]\nnodes = 16\n",
        )
        .unwrap();
        assert_eq!(cfg.gamma.options.cover.seed, 9);
        assert_eq!(cfg.gamma.options.cover.samples, 4000);
        assert_eq!(cfg.kernel.quad.nodes, 16);
        assert_eq!(cfg.kernel.quad.check_nodes, 32);
    }

    #[test]
    fn strict_parsing() {
        for bad in [
            "sede = 3\n",
            "[kernel]\ndim = [1]\n",
            "[norm]\nkind = \"pnorm\"\np = 2\nq = 1\n",
            "n = []\n",
            "n = [1, 5]\n",
            "seed = \"x\"\n",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn infinite_exponent_is_spelled_out() {
        let text = ExperimentConfig::default().to_toml().unwrap();
        assert!(text.contains("p = \"inf\""), "{text}");
    }

    #[test]
    fn slack_overrides_recompute_status() {
        let mut cfg = ExperimentConfig::default();
        cfg.slack.insert("b".into(), 0.5);
        let mut r = vec![
            BoundReport::new("s", "b", refs::PLUMBING, 1.0, 1.2, 0.0, 0.0),
            BoundReport::new("s", "c", refs::PLUMBING, 1.0, 1.2, 0.0, 0.0),
        ];
        cfg.apply_slack(&mut r);
        assert!(r[0].passed());
        assert_eq!(r[0].slack, 0.5);
        assert!(!r[1].passed());
    }
}
