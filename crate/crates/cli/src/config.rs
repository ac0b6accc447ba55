//! The experiment configuration: one flat TOML table.
//!
//! Every key is optional; missing keys take the defaults below. Command-line
//! flags are applied on top of the file.

use std::path::{Path, PathBuf};

use rhpt::baselines::LogisticHyper;
use rhpt::{DgpConfig, Method, MethodSettings};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub dim: usize,
    pub latent_dim: usize,
    pub propensity_sharpness: f64,
    pub positivity_clip: f64,
    pub outcome_noise_sd: f64,
    pub effect_scale: f64,
    pub hidden_confounding: f64,

    pub beta_angular: usize,
    pub beta_shifted: usize,
    /// Omit for three times the largest within-sample row norm.
    pub lambda: Option<f64>,
    pub standardize: bool,

    pub methods: Vec<String>,
    pub replications: usize,
    pub out_fraction: f64,
    pub pca_components: usize,
    pub jl_dim: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub tolerance: f64,

    pub beta_list: Vec<usize>,
    pub runs_per_beta: usize,
    /// Epoch cap of the logistic fits in the balance study.
    pub balance_max_epochs: usize,

    pub output_dir: PathBuf,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let dgp = DgpConfig::default();
        let settings = MethodSettings::default();
        let hyper = LogisticHyper::default();
        Self {
            n: dgp.n,
            dim: dgp.dim,
            latent_dim: dgp.latent_dim,
            propensity_sharpness: dgp.propensity_sharpness,
            positivity_clip: dgp.positivity_clip,
            outcome_noise_sd: dgp.outcome_noise_sd,
            effect_scale: dgp.effect_scale,
            hidden_confounding: dgp.hidden_confounding,
            beta_angular: settings.beta_angular,
            beta_shifted: settings.beta_shifted,
            lambda: None,
            standardize: settings.standardize,
            methods: Method::ALL.iter().map(|m| m.label().to_string()).collect(),
            replications: 10,
            out_fraction: rhpt::synthetic::DEFAULT_OUT_FRACTION,
            pca_components: settings.pca_components,
            jl_dim: settings.jl_dim,
            learning_rate: hyper.learning_rate,
            l2: hyper.l2,
            max_epochs: hyper.max_epochs,
            tolerance: hyper.tolerance,
            beta_list: vec![128, 1024, 8192, 16384],
            runs_per_beta: 20,
            balance_max_epochs: rhpt::evaluation::balance_hyper().max_epochs,
            output_dir: PathBuf::from("out"),
            master_seed: 0,
        }
    }
}

/// One invalid field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldProblem {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            CliError::Config(vec![FieldProblem {
                field: "<file>".into(),
                message: e.message().trim().to_string()
                    + &e.span().map(|s| format!(" (bytes {}..{})", s.start, s.end)).unwrap_or_default(),
            }])
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dgp(&self, seed: u64) -> DgpConfig {
        DgpConfig {
            n: self.n,
            dim: self.dim,
            latent_dim: self.latent_dim,
            propensity_sharpness: self.propensity_sharpness,
            positivity_clip: self.positivity_clip,
            outcome_noise_sd: self.outcome_noise_sd,
            effect_scale: self.effect_scale,
            hidden_confounding: self.hidden_confounding,
            seed,
        }
    }

    pub fn logistic(&self) -> LogisticHyper {
        LogisticHyper {
            learning_rate: self.learning_rate,
            l2: self.l2,
            max_epochs: self.max_epochs,
            tolerance: self.tolerance,
            standardize: true,
        }
    }

    pub fn balance_logistic(&self) -> LogisticHyper {
        LogisticHyper {
            max_epochs: self.balance_max_epochs,
            standardize: false,
            ..self.logistic()
        }
    }

    pub fn method_settings(&self) -> MethodSettings {
        MethodSettings {
            beta_angular: self.beta_angular,
            beta_shifted: self.beta_shifted,
            lambda: self.lambda,
            standardize: self.standardize,
            pca_components: self.pca_components,
            pca_standardize: false,
            jl_dim: self.jl_dim,
            logistic: self.logistic(),
        }
    }

    pub fn parsed_methods(&self) -> Vec<Method> {
        self.methods.iter().filter_map(|m| m.parse().ok()).collect()
    }

    /// Every violated constraint. Empty means valid.
    pub fn problems(&self) -> Vec<FieldProblem> {
        let mut out: Vec<FieldProblem> = self
            .dgp(0)
            .problems()
            .into_iter()
            .map(|(field, message)| FieldProblem {
                field: field.into(),
                message,
            })
            .collect();
        let mut bad = |field: &str, message: String| {
            out.push(FieldProblem {
                field: field.into(),
                message,
            })
        };
        if self.beta_angular + self.beta_shifted == 0 {
            bad("beta_angular", "beta_angular + beta_shifted must be positive".into());
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                bad("lambda", format!("must be positive and finite, got {l}"));
            }
        }
        if self.methods.is_empty() {
            bad("methods", "must name at least one method".into());
        }
        for m in &self.methods {
            if let Err(e) = m.parse::<Method>() {
                bad("methods", e.to_string().trim_start_matches("invalid config: ").to_string());
            }
        }
        if self.replications == 0 {
            bad("replications", "must be at least 1".into());
        }
        if !(self.out_fraction > 0.0 && self.out_fraction < 1.0) {
            bad("out_fraction", format!("must lie in (0, 1), got {}", self.out_fraction));
        }
        if self.pca_components == 0 {
            bad("pca_components", "must be at least 1".into());
        }
        if self.jl_dim == 0 {
            bad("jl_dim", "must be at least 1".into());
        }
        if let Err(e) = self.logistic().validate() {
            let msg = e.to_string();
            let field = ["learning_rate", "l2", "tolerance"]
                .into_iter()
                .find(|f| msg.contains(f))
                .unwrap_or("learning_rate");
            bad(field, msg);
        }
        if self.beta_list.is_empty() {
            bad("beta_list", "must contain at least one value".into());
        }
        if self.beta_list.contains(&0) {
            bad("beta_list", "values must be positive".into());
        }
        if self.beta_list.windows(2).any(|w| w[0] >= w[1]) {
            bad("beta_list", format!("must be strictly increasing, got {:?}", self.beta_list));
        }
        if self.runs_per_beta == 0 {
            bad("runs_per_beta", "must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }
}
