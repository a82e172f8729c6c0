//! Attack configuration files.
//!
//! A config is TOML. Every field is optional and defaults to the Tiny
//! budget row: ten rounds of four steps, two bisection steps, forty
//! attempts per Whey pass, 200 queries per image.
//!
//! ```toml
//! methods = ["ifgsm", "curlswhey"]
//! budget = 200
//! seed = 7
//!
//! [curls]
//! T0 = 10
//! T = 4
//! bs = 2
//!
//! [whey]
//! T1 = 40
//! T2 = 40
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::curls::CurlsConfig;
use crate::error::{Error, Result};
use crate::targeted::TargetedConfig;
use crate::whey::WheyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fgsm,
    Ifgsm,
    Mifgsm,
    Vrigsm,
    Curls,
    Curlswhey,
    Targeted,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Fgsm,
        Method::Ifgsm,
        Method::Mifgsm,
        Method::Vrigsm,
        Method::Curls,
        Method::Curlswhey,
        Method::Targeted,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Fgsm => "fgsm",
            Method::Ifgsm => "ifgsm",
            Method::Mifgsm => "mifgsm",
            Method::Vrigsm => "vrigsm",
            Method::Curls => "curls",
            Method::Curlswhey => "curlswhey",
            Method::Targeted => "targeted",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Single-method shorthand; merged in front of `methods`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub methods: Vec<Method>,
    /// Target queries allowed per attacked image (per target class in
    /// targeted mode).
    pub budget: u64,
    pub seed: u64,
    /// Test images drawn per class before filtering to those every target
    /// classifies correctly.
    pub per_class: usize,
    /// Record wall-clock seconds; off by default so results are
    /// byte-reproducible.
    pub timings: bool,
    pub curls: CurlsConfig,
    pub whey: WheyConfig,
    pub baseline: BaselineConfig,
    pub targeted: TargetedConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            method: None,
            methods: Vec::new(),
            budget: 200,
            seed: 0,
            per_class: 10,
            timings: false,
            curls: CurlsConfig::default(),
            whey: WheyConfig::default(),
            baseline: BaselineConfig::default(),
            targeted: TargetedConfig::default(),
        }
    }
}

impl AttackConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AttackConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::at_path(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Methods to run, without duplicates; `curlswhey` when none are named.
    pub fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        for m in self.method.iter().chain(&self.methods) {
            if !out.contains(m) {
                out.push(*m);
            }
        }
        if out.is_empty() {
            out.push(Method::Curlswhey);
        }
        out
    }

    /// Queries `method` can spend at most under this config, ignoring the
    /// budget.
    pub fn required_queries(&self, method: Method) -> u64 {
        let curls = self.curls.label_query_cap();
        let whey = self.whey.query_cap();
        match method {
            Method::Fgsm => 1,
            Method::Ifgsm | Method::Mifgsm | Method::Vrigsm => self.baseline.steps as u64,
            Method::Curls => curls,
            Method::Curlswhey => curls + whey,
            Method::Targeted => self.targeted.seed_steps as u64 + curls + whey,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        if self.per_class == 0 {
            return Err(Error::Config("per_class must be positive".into()));
        }
        self.curls.validate()?;
        self.whey.validate()?;
        self.baseline.validate()?;
        // targeted runs may hit the cap and keep their best point; curlswhey may not
        for m in self.methods() {
            if m == Method::Curlswhey && self.required_queries(m) > self.budget {
                return Err(Error::Config(format!(
                    "{m} may need {} queries but the budget is {}",
                    self.required_queries(m),
                    self.budget
                )));
            }
        }
        Ok(())
    }

    /// Sets one sweepable parameter by its short name.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{name} needs a whole number, got {value}")))
            }
        };
        match name {
            "T" => self.curls.steps = count()?,
            "T0" => self.curls.rounds = count()?,
            "bs" => self.curls.binary_steps = count()?,
            "T1" => self.whey.group_attempts = count()?,
            "T2" => self.whey.stochastic_attempts = count()?,
            "s" => self.curls.s = value,
            "delta" => self.whey.delta = value,
            "eps0" => self.curls.eps0 = value,
            _ => {
                return Err(Error::Config(format!(
                    "unknown sweep parameter '{name}' (expected one of {})",
                    SWEEP_PARAMS.join(", ")
                )))
            }
        }
        Ok(())
    }
}

pub const SWEEP_PARAMS: [&str; 8] = ["T", "s", "bs", "T0", "T1", "T2", "delta", "eps0"];
