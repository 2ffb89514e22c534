//! Run configuration: a TOML file overlaid by command-line flags.
//!
//! Every flag mirrors one config key (see `docs/FORMATS.md` for the table);
//! flags win over the file, the file wins over defaults. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lrad_core::graphgen::{Noise, SyntheticConfig, TruthModel};
use lrad_core::{EllipticalFamily, Exec, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Environment variable that overrides the output root.
pub const OUTPUT_ROOT_ENV: &str = "LRAD_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "lrad-out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Parent of default output directories.
    pub output_root: Option<PathBuf>,
    /// Seeds both data generation and (for provenance) the solver.
    pub seed: u64,
    pub data: DataConfig,
    pub solver: SolverConfig,
    pub fit: FitConfig,
    pub eval: EvalConfig,
    pub benchmark: BenchConfig,
}

/// A generator preset plus optional overrides of its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub preset: String,
    pub p: Option<usize>,
    pub windows: Option<usize>,
    pub n: Option<usize>,
    pub perturb_frac: Option<f64>,
    /// Student-t sampling noise with this many degrees of freedom.
    pub noise_nu: Option<f64>,
    /// Rank of LRaD truths.
    pub true_rank: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            preset: "lrad".into(),
            p: None,
            windows: None,
            n: None,
            perturb_frac: None,
            noise_nu: None,
            true_rank: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Also write dense `Θ̂_t` per window.
    pub dense: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Edge threshold on `|conditional correlation|`.
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: lrad_core::graph::DEFAULT_EDGE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub seeds: Vec<u64>,
    /// Dimensions to sweep; absent means the preset's `p` only.
    pub p_grid: Option<Vec<usize>>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            p_grid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Gaussian,
    StudentT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExecArg {
    Sequential,
    Parallel,
}

/// Flags shared by every subcommand; each overrides one config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// output_root (also settable through LRAD_OUTPUT_ROOT)
    #[arg(long, value_name = "DIR")]
    pub output_root: Option<PathBuf>,
    /// seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// data.preset
    #[arg(long, help_heading = "Data")]
    pub preset: Option<String>,
    /// data.p
    #[arg(long, help_heading = "Data")]
    pub p: Option<usize>,
    /// data.windows
    #[arg(long, help_heading = "Data")]
    pub windows: Option<usize>,
    /// data.n
    #[arg(long, help_heading = "Data")]
    pub n: Option<usize>,
    /// data.perturb_frac
    #[arg(long, help_heading = "Data")]
    pub perturb_frac: Option<f64>,
    /// data.noise_nu
    #[arg(long, help_heading = "Data")]
    pub noise_nu: Option<f64>,
    /// data.true_rank
    #[arg(long, help_heading = "Data")]
    pub true_rank: Option<usize>,

    /// solver.model.family
    #[arg(long, value_enum, help_heading = "Model")]
    pub family: Option<FamilyArg>,
    /// solver.model.family.nu (Student-t fit)
    #[arg(long, help_heading = "Model")]
    pub family_nu: Option<f64>,
    /// solver.model.lambda
    #[arg(long, help_heading = "Model")]
    pub lambda: Option<f64>,
    /// solver.model.mu (0 gives independent windows)
    #[arg(long, help_heading = "Model")]
    pub mu: Option<f64>,
    /// solver.model.epsilon
    #[arg(long, help_heading = "Model")]
    pub epsilon: Option<f64>,
    /// solver.model.rank
    #[arg(long, help_heading = "Model")]
    pub rank: Option<usize>,

    /// solver.eps_tol
    #[arg(long, help_heading = "Solver")]
    pub eps_tol: Option<f64>,
    /// solver.max_iter
    #[arg(long, help_heading = "Solver")]
    pub max_iter: Option<usize>,
    /// solver.wolfe_c1
    #[arg(long, help_heading = "Solver")]
    pub wolfe_c1: Option<f64>,
    /// solver.wolfe_c2
    #[arg(long, help_heading = "Solver")]
    pub wolfe_c2: Option<f64>,
    /// solver.restart_c0
    #[arg(long, help_heading = "Solver")]
    pub restart_c0: Option<f64>,
    /// solver.ls_max_evals
    #[arg(long, help_heading = "Solver")]
    pub ls_max_evals: Option<usize>,
    /// solver.stagnation_tol
    #[arg(long, help_heading = "Solver")]
    pub stagnation_tol: Option<f64>,
    /// solver.stagnation_window
    #[arg(long, help_heading = "Solver")]
    pub stagnation_window: Option<usize>,
    /// solver.deterministic = true
    #[arg(long, help_heading = "Solver")]
    pub deterministic: bool,
    /// solver.exec
    #[arg(long, value_enum, help_heading = "Solver")]
    pub exec: Option<ExecArg>,

    /// fit.dense = true
    #[arg(long, help_heading = "Output")]
    pub dense: bool,
    /// eval.threshold
    #[arg(long, help_heading = "Output")]
    pub threshold: Option<f64>,

    /// benchmark.seeds (comma separated)
    #[arg(long, value_delimiter = ',', help_heading = "Benchmark")]
    pub seeds: Option<Vec<u64>>,
    /// benchmark.p_grid (comma separated)
    #[arg(long, value_delimiter = ',', help_heading = "Benchmark")]
    pub p_grid: Option<Vec<usize>>,
}

pub fn parse_toml(text: &str, origin: &Path) -> CliResult<RunConfig> {
    toml::from_str(text).map_err(|e| CliError::Validation(format!("{}: {e}", origin.display())))
}

impl Overrides {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
                parse_toml(&text, path)?
            }
            None => RunConfig::default(),
        };
        self.apply(&mut cfg)?;
        cfg.solver.seed = cfg.seed;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        fn set_opt<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        set_opt(&mut cfg.output_root, &self.output_root);
        set(&mut cfg.seed, &self.seed);

        let d = &mut cfg.data;
        set(&mut d.preset, &self.preset);
        set_opt(&mut d.p, &self.p);
        set_opt(&mut d.windows, &self.windows);
        set_opt(&mut d.n, &self.n);
        set_opt(&mut d.perturb_frac, &self.perturb_frac);
        set_opt(&mut d.noise_nu, &self.noise_nu);
        set_opt(&mut d.true_rank, &self.true_rank);

        let m = &mut cfg.solver.model;
        let nu_from_file = match m.family {
            EllipticalFamily::StudentT { nu } => Some(nu),
            EllipticalFamily::Gaussian => None,
        };
        match (self.family, self.family_nu.or(nu_from_file)) {
            (Some(FamilyArg::Gaussian), _) => m.family = EllipticalFamily::Gaussian,
            (Some(FamilyArg::StudentT), Some(nu)) => m.family = EllipticalFamily::StudentT { nu },
            (Some(FamilyArg::StudentT), None) => {
                return Err(CliError::Validation("--family student-t needs --family-nu".into()))
            }
            (None, _) => {
                if let (Some(nu), EllipticalFamily::StudentT { .. }) = (self.family_nu, m.family) {
                    m.family = EllipticalFamily::StudentT { nu };
                } else if self.family_nu.is_some() {
                    return Err(CliError::Validation("--family-nu applies to --family student-t only".into()));
                }
            }
        }
        set(&mut m.lambda, &self.lambda);
        set(&mut m.mu, &self.mu);
        set(&mut m.epsilon, &self.epsilon);
        set(&mut m.rank, &self.rank);

        let s = &mut cfg.solver;
        set(&mut s.eps_tol, &self.eps_tol);
        set(&mut s.max_iter, &self.max_iter);
        set(&mut s.wolfe_c1, &self.wolfe_c1);
        set(&mut s.wolfe_c2, &self.wolfe_c2);
        set(&mut s.restart_c0, &self.restart_c0);
        set(&mut s.ls_max_evals, &self.ls_max_evals);
        set(&mut s.stagnation_tol, &self.stagnation_tol);
        set(&mut s.stagnation_window, &self.stagnation_window);
        if self.deterministic {
            s.deterministic = true;
        }
        if let Some(e) = self.exec {
            s.exec = match e {
                ExecArg::Sequential => Exec::Sequential,
                ExecArg::Parallel => Exec::Parallel,
            };
        }

        if self.dense {
            cfg.fit.dense = true;
        }
        set(&mut cfg.eval.threshold, &self.threshold);
        set(&mut cfg.benchmark.seeds, &self.seeds);
        set_opt(&mut cfg.benchmark.p_grid, &self.p_grid);
        Ok(())
    }
}

impl RunConfig {
    /// Flag > `LRAD_OUTPUT_ROOT` > config file > `lrad-out`.
    ///
    /// Flags and the file share `output_root`, so the environment is only
    /// consulted when `explicit_flag` is false.
    pub fn output_root(&self, explicit_flag: bool) -> PathBuf {
        if !explicit_flag {
            if let Some(env) = std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()) {
                return PathBuf::from(env);
            }
        }
        self.output_root
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
    }

    /// Generator configuration for dimension `p` (or the preset's) and `seed`.
    pub fn synthetic(&self, p: Option<usize>, seed: u64) -> CliResult<SyntheticConfig> {
        let d = &self.data;
        let mut s = SyntheticConfig::preset(&d.preset).ok_or_else(|| {
            CliError::Validation(format!(
                "unknown preset {:?}; expected one of {}",
                d.preset,
                SyntheticConfig::PRESETS.join(", ")
            ))
        })?;
        s.p = p.or(d.p).unwrap_or(s.p);
        s.windows = d.windows.unwrap_or(s.windows);
        s.n = d.n.unwrap_or(s.n);
        s.perturb_frac = d.perturb_frac.unwrap_or(s.perturb_frac);
        s.seed = seed;
        if let Some(nu) = d.noise_nu {
            s.noise = Noise::StudentT { nu };
        }
        if let Some(r) = d.true_rank {
            match &mut s.truth {
                TruthModel::Lrad { rank, .. } => *rank = r,
                TruthModel::Graph { .. } => {
                    return Err(CliError::Validation(format!(
                        "true_rank applies to LRaD presets, not {:?}",
                        d.preset
                    )))
                }
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate_solver(&self) -> CliResult<()> {
        self.solver.validate()?;
        if !(self.eval.threshold > 0.0 && self.eval.threshold < 1.0) {
            return Err(CliError::Validation(format!(
                "eval.threshold must lie in (0, 1), got {}",
                self.eval.threshold
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of this configuration, excluding the
    /// output root (where results go does not change what they are).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_root = None;
        let json = serde_json::to_string(&c).expect("serializable config");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_overlay_defaults() {
        let cfg = parse_toml(
            r#"
            seed = 7
            [data]
            preset = "er-small"
            p = 20
            [solver]
            max_iter = 50
            [solver.model]
            mu = 0.0
            family = { kind = "student-t", nu = 4.0 }
            [benchmark]
            p_grid = [20, 40]
            "#,
            Path::new("t.toml"),
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.data.p, Some(20));
        assert_eq!(cfg.solver.max_iter, 50);
        assert_eq!(cfg.solver.model.mu, 0.0);
        assert_eq!(cfg.solver.model.lambda, 0.01);
        assert_eq!(cfg.solver.model.family, EllipticalFamily::StudentT { nu: 4.0 });
        assert_eq!(cfg.benchmark.p_grid, Some(vec![20, 40]));
        assert_eq!(cfg.benchmark.seeds.len(), 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["bogus = 1", "[data]\nq = 3", "[solver]\nmaxiter = 3", "[solver.model]\nlamda = 0.1"] {
            let err = parse_toml(text, Path::new("t.toml")).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 3\n[solver.model]\nlambda = 0.5\nmu = 2.0\n").unwrap();
        let o = Overrides {
            config: Some(path),
            lambda: Some(0.1),
            deterministic: true,
            ..Default::default()
        };
        let cfg = o.resolve().unwrap();
        assert_eq!(cfg.solver.model.lambda, 0.1);
        assert_eq!(cfg.solver.model.mu, 2.0);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.solver.seed, 3);
        assert!(cfg.solver.deterministic);
    }

    #[test]
    fn student_t_fit_needs_nu() {
        let o = Overrides {
            family: Some(FamilyArg::StudentT),
            ..Default::default()
        };
        assert_eq!(o.resolve().unwrap_err().exit_code(), 2);
        let o = Overrides {
            family: Some(FamilyArg::StudentT),
            family_nu: Some(5.0),
            ..Default::default()
        };
        assert_eq!(o.resolve().unwrap().solver.model.family, EllipticalFamily::StudentT { nu: 5.0 });
    }

    #[test]
    fn synthetic_applies_overrides_and_validates() {
        let mut cfg = RunConfig::default();
        cfg.data.windows = Some(3);
        cfg.data.noise_nu = Some(3.0);
        let s = cfg.synthetic(Some(30), 4).unwrap();
        assert_eq!((s.p, s.windows, s.seed), (30, 3, 4));
        assert_eq!(s.noise, Noise::StudentT { nu: 3.0 });

        cfg.data.windows = Some(0);
        assert_eq!(cfg.synthetic(None, 0).unwrap_err().exit_code(), 2);
        cfg.data.windows = None;
        cfg.data.preset = "nope".into();
        assert!(cfg.synthetic(None, 0).unwrap_err().to_string().contains("er-small"));
    }

    #[test]
    fn hash_ignores_output_root_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_root = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
