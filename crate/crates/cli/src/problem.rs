//! Problem files: a diffusion and a profit, read from JSON.
//!
//! ```json
//! {"diffusion": {"kind": "bessel3", "r": 0.5},
//!  "profit": {"kind": "cobb_douglas", "alpha": 0.5, "beta": 0.5}}
//! ```
//!
//! Besides the built-in profit families the file may give a weighted sum of
//! Cobb-Douglas terms, `{"kind": "cobb_douglas_mix", "terms": [{"weight": 1,
//! "alpha": 0.5, "beta": 0.5}, ...]}`. No closed form exists for mixtures;
//! they go through the generic solver.

use std::path::Path;

use fbound::profit::PowerTerm;
use fbound::{Diffusion, DiffusionSpec, Error, Profit, ProfitSpec, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixTerm {
    pub weight: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// `π(x, c) = Σ w_i x^{α_i} c^{β_i} / (α_i + β_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CobbDouglasMix {
    pub terms: Vec<MixTerm>,
}

impl CobbDouglasMix {
    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidInput("a Cobb-Douglas mix needs at least one term".into()));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if !(t.weight > 0.0 && t.weight.is_finite()) {
                return Err(Error::InvalidInput(format!("term {i}: weight must be positive, got {}", t.weight)));
            }
            ProfitSpec::cobb_douglas(t.alpha, t.beta)
                .map_err(|e| Error::InvalidInput(format!("term {i}: {e}")))?;
        }
        Ok(())
    }
}

impl Profit for CobbDouglasMix {
    fn profit(&self, x: f64, c: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight * x.powf(t.alpha) * c.powf(t.beta) / (t.alpha + t.beta))
            .sum()
    }

    fn marginal(&self, x: f64, c: f64) -> f64 {
        self.power_terms()
            .into_iter()
            .flatten()
            .map(|t| t.coef * x.powf(t.x_power) * c.powf(t.c_power))
            .sum()
    }

    fn saturation(&self) -> f64 {
        0.0
    }

    fn power_terms(&self) -> Option<Vec<PowerTerm>> {
        Some(
            self.terms
                .iter()
                .map(|t| PowerTerm {
                    coef: t.weight * t.beta / (t.alpha + t.beta),
                    x_power: t.alpha,
                    c_power: t.beta - 1.0,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfitInput {
    Builtin(ProfitSpec),
    Mix(MixInput),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixInput {
    CobbDouglasMix { terms: Vec<MixTerm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub diffusion: DiffusionSpec,
    pub profit: ProfitInput,
}

/// A validated problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub diffusion: DiffusionSpec,
    pub profit: ProfitChoice,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfitChoice {
    Builtin(ProfitSpec),
    Mix(CobbDouglasMix),
}

impl ProfitChoice {
    pub fn as_dyn(&self) -> &dyn Profit {
        match self {
            ProfitChoice::Builtin(p) => p,
            ProfitChoice::Mix(m) => m,
        }
    }

    pub fn input(&self) -> ProfitInput {
        match self {
            ProfitChoice::Builtin(p) => ProfitInput::Builtin(*p),
            ProfitChoice::Mix(m) => ProfitInput::Mix(MixInput::CobbDouglasMix { terms: m.terms.clone() }),
        }
    }
}

impl Problem {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("problem file: {e}")))?;
        file.diffusion.validate()?;
        let profit = match file.profit {
            ProfitInput::Builtin(p) => {
                p.validate()?;
                ProfitChoice::Builtin(p)
            }
            ProfitInput::Mix(MixInput::CobbDouglasMix { terms }) => {
                let m = CobbDouglasMix { terms };
                m.validate()?;
                ProfitChoice::Mix(m)
            }
        };
        Ok(Self {
            diffusion: file.diffusion,
            profit,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn file(&self) -> ProblemFile {
        ProblemFile {
            diffusion: self.diffusion,
            profit: self.profit.input(),
        }
    }

    pub fn profit(&self) -> &dyn Profit {
        self.profit.as_dyn()
    }

    pub fn discount(&self) -> f64 {
        self.diffusion.discount()
    }

    /// The built-in profit, if the pair has an explicit boundary.
    pub fn closed_form_profit(&self) -> Result<ProfitSpec> {
        match &self.profit {
            ProfitChoice::Builtin(p) => Ok(*p),
            ProfitChoice::Mix(_) => Err(Error::Unsupported(format!(
                "no closed-form boundary for {} with a Cobb-Douglas mix; use --method generic",
                self.diffusion.name()
            ))),
        }
    }
}
