//! Experiment configuration files (TOML or JSON).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use stochrec::graph::KernelAdjust;
use stochrec::io::{load_degree_sequence, load_ird_spec};
use stochrec::law::ScalarLaw;
use stochrec::recursion::{ModelSpec, KNOWN_MODELS};
use stochrec::tree::{spec_from_degree_sequence, spec_from_ird};
use stochrec::{DegreeSequence, GWTreeSpec, GraphMode, InitialLaw, IrdSpec, Seed};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphConfig,
    pub model: ModelSpec,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Dcm,
    Ird,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub family: Family,
    pub sizes: Vec<usize>,
    #[serde(default = "raw_mode")]
    pub mode: GraphMode,
    /// Degree source for `dcm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degrees: Option<DegreeConfig>,
    /// Weight source for `ird`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightConfig>,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default)]
    pub kernel_adjust: KernelAdjust,
    /// Explicit tree spec (JSON) used instead of the graph family's limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<PathBuf>,
}

fn raw_mode() -> GraphMode {
    GraphMode::Raw
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DegreeConfig {
    Constant {
        d_minus: usize,
        d_plus: usize,
    },
    /// i.i.d. uniform on `support` for both directions, then rebalanced.
    Iid {
        support: Vec<usize>,
    },
    /// CSV or JSON degree file; its length must match every size.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightConfig {
    Constant { w_minus: f64, w_plus: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub k: usize,
    pub replicas: usize,
    /// Population dynamics pool size `M`.
    pub pool: usize,
    /// Law of the i.i.d. initial values.
    pub init: ScalarLaw,
    /// Vertices per graph entering the empirical marginal; all when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertex_sample: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub window: usize,
    /// Draws for Monte Carlo moment and contraction estimates.
    pub draws: usize,
    /// Roots sampled per graph for tree-likeness rates.
    pub roots: usize,
    /// Neighborhood depth for tree-likeness; defaults to `k`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Mark-coupling error level for the coupling bound.
    pub eps: f64,
    /// Iterate or couple even when contraction is not established.
    pub force: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            k: 3,
            replicas: 20,
            pool: 10_000,
            init: ScalarLaw::default(),
            vertex_sample: None,
            tol: 1e-3,
            max_iter: 100,
            window: 5,
            draws: 100_000,
            roots: 1000,
            depth: None,
            eps: 0.0,
            force: false,
        }
    }
}

impl RunConfig {
    pub fn initial_law(&self) -> InitialLaw {
        InitialLaw::Iid(self.init.clone())
    }
}

/// Pass/fail gates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Allowed increase of the median distance between sizes, in combined stderrs.
    pub converge_slack: f64,
    /// Optional ceiling on the distance at the largest size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converge_max_final: Option<f64>,
    /// Absolute slack on per-step contraction ratios.
    pub ratio_tol: f64,
    /// Distances below this are excluded from ratio checks.
    pub ratio_floor: f64,
    /// Minimum mean tree-likeness rate at the largest size.
    pub treelike_min_final: f64,
    /// Standard errors of slack when comparing moments with their bound.
    pub moment_z: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            converge_slack: 2.0,
            converge_max_final: None,
            ratio_tol: 1e-12,
            ratio_floor: 1e-3,
            treelike_min_final: 0.95,
            moment_z: 3.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Also write the step-by-step trajectory of the first replica at each size.
    pub trajectories: bool,
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        if text.trim().is_empty() {
            bail!("empty configuration: a [graph] block, a [model] block and optionally [run], [thresholds], [outputs] are required");
        }
        let cfg: ExperimentConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| explain(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| explain(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("config {}", path.display()))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.check_files()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(DegreeConfig::File { path }) = &mut self.graph.degrees {
            fix(path);
        }
        if let Some(WeightConfig::File { path }) = &mut self.graph.weights {
            fix(path);
        }
        if let Some(p) = &mut self.graph.tree {
            fix(p);
        }
    }

    pub fn check_files(&self) -> anyhow::Result<()> {
        let mut paths = Vec::new();
        if let Some(DegreeConfig::File { path }) = &self.graph.degrees {
            paths.push(path);
        }
        if let Some(WeightConfig::File { path }) = &self.graph.weights {
            paths.push(path);
        }
        paths.extend(self.graph.tree.iter());
        for p in paths {
            if !p.exists() {
                bail!("referenced file {} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let g = &self.graph;
        if g.sizes.is_empty() {
            bail!("graph.sizes must list at least one size");
        }
        if g.sizes.contains(&0) {
            bail!("graph sizes must be positive");
        }
        match (g.family, &g.degrees, &g.weights) {
            (Family::Dcm, None, _) => bail!("family dcm needs a graph.degrees block"),
            (Family::Ird, _, None) => bail!("family ird needs a graph.weights block"),
            (Family::Dcm, _, Some(_)) => bail!("graph.weights only applies to family ird"),
            (Family::Ird, Some(_), _) => bail!("graph.degrees only applies to family dcm"),
            _ => {}
        }
        if g.family == Family::Ird && g.mode != GraphMode::Raw {
            bail!("family ird produces simple graphs; mode must be raw");
        }
        let r = &self.run;
        if r.replicas == 0 {
            bail!("run.replicas must be positive");
        }
        if r.pool < 10 {
            bail!("run.pool must be at least 10");
        }
        r.init.validate()?;
        self.model.build().context("model block")?;
        Ok(())
    }

    pub fn degree_sequence(&self, n: usize, seed: Seed) -> anyhow::Result<DegreeSequence> {
        Ok(match self.graph.degrees.as_ref().context("graph.degrees is missing")? {
            DegreeConfig::Constant { d_minus, d_plus } => DegreeSequence::constant(n, *d_minus, *d_plus)?,
            DegreeConfig::Iid { support } => DegreeSequence::balanced_iid(n, support, seed)?,
            DegreeConfig::File { path } => {
                let seq = load_degree_sequence(path)?;
                if seq.len() != n {
                    bail!("degree file {} has {} rows but size {n} was requested", path.display(), seq.len());
                }
                seq
            }
        })
    }

    pub fn ird_spec(&self, n: usize) -> anyhow::Result<IrdSpec> {
        let mut spec = match self.graph.weights.as_ref().context("graph.weights is missing")? {
            WeightConfig::Constant { w_minus, w_plus } => IrdSpec::new(vec![(*w_minus, *w_plus); n], self.graph.theta),
            WeightConfig::File { path } => {
                let spec = load_ird_spec(path, Some(self.graph.theta))?;
                if spec.n() != n {
                    bail!("weight file {} has {} rows but size {n} was requested", path.display(), spec.n());
                }
                spec
            }
        };
        spec.kernel_adjust = self.graph.kernel_adjust.clone();
        spec.validate()?;
        Ok(spec)
    }

    /// The tree spec for tree-only commands: the explicit file when given,
    /// else the local limit of the graph family at the largest size.
    pub fn tree_spec(&self, seed: Seed) -> anyhow::Result<GWTreeSpec> {
        if let Some(path) = &self.graph.tree {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading tree spec {}", path.display()))?;
            let spec: GWTreeSpec = serde_json::from_str(&text)?;
            spec.validate()?;
            return Ok(spec);
        }
        let n = *self.graph.sizes.iter().max().expect("validated");
        Ok(match self.graph.family {
            Family::Dcm => spec_from_degree_sequence(&self.degree_sequence(n, seed)?)?,
            Family::Ird => spec_from_ird(&self.ird_spec(n)?)?,
        })
    }
}

fn explain(msg: String) -> anyhow::Error {
    if msg.contains("missing field `model`") {
        anyhow::anyhow!("{msg}\nthe model block needs `model = ...`, one of: {}", KNOWN_MODELS.join(", "))
    } else {
        anyhow::anyhow!("{msg}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[graph]
family = "dcm"
sizes = [100, 1000]
degrees = { kind = "constant", d_minus = 2, d_plus = 2 }

[model]
model = "pagerank"
c = 0.5
"#;

    #[test]
    fn parses_toml_with_defaults() {
        let cfg = ExperimentConfig::parse(BASIC).unwrap();
        assert_eq!(cfg.graph.sizes, vec![100, 1000]);
        assert_eq!(cfg.run.replicas, 20);
        assert_eq!(cfg.model.name(), "pagerank");
        assert_eq!(cfg.degree_sequence(10, Seed(0)).unwrap().len(), 10);
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::parse(BASIC).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::parse(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn empty_config_is_a_usage_error() {
        let err = ExperimentConfig::parse("  \n").unwrap_err().to_string();
        assert!(err.contains("empty configuration"), "{err}");
    }

    #[test]
    fn unknown_model_lists_known_models() {
        let text = BASIC.replace("\"pagerank\"", "\"kuramoto\"");
        let err = format!("{:#}", ExperimentConfig::parse(&text).unwrap_err());
        for m in KNOWN_MODELS {
            assert!(err.contains(m), "{err}");
        }
    }

    #[test]
    fn family_mismatch() {
        let text = BASIC.replace("family = \"dcm\"", "family = \"ird\"");
        assert!(ExperimentConfig::parse(&text).is_err());
        let text = BASIC.replace("sizes = [100, 1000]", "sizes = []");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn missing_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let text = BASIC.replace(
            "degrees = { kind = \"constant\", d_minus = 2, d_plus = 2 }",
            "degrees = { kind = \"file\", path = \"nope.csv\" }",
        );
        let path = dir.path().join("c.toml");
        std::fs::write(&path, text).unwrap();
        let err = ExperimentConfig::load(&path).unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }
}
