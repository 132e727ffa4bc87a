//! Actor-critic pair and its checkpoint file.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::{RewardNorm, METADATA_LEN};
use crate::agent::HISTORY_LEN;
use crate::error::{IppError, Result};
use crate::nn::{clamp_log_std, parse_tagged, GaussianHead, Mlp, PolicySample};
use crate::objective::Objective;

const MAGIC: &str = "rlpomcp-policy 1";

/// Which features the policy sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureVariant {
    MetadataOnly,
    FixedLength10,
}

impl FeatureVariant {
    pub fn input_len(self) -> usize {
        match self {
            FeatureVariant::MetadataOnly => METADATA_LEN,
            FeatureVariant::FixedLength10 => METADATA_LEN + 4 * HISTORY_LEN,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureVariant::MetadataOnly => "metadata",
            FeatureVariant::FixedLength10 => "fixed10",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "metadata" => Some(FeatureVariant::MetadataOnly),
            "fixed10" => Some(FeatureVariant::FixedLength10),
            _ => None,
        }
    }
}

/// Frozen reward normalization, one entry per objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormTable(pub [RewardNorm; 3]);

impl NormTable {
    pub fn get(&self, objective: Objective) -> RewardNorm {
        self.0[objective.index()]
    }

    pub fn set(&mut self, objective: Objective, norm: RewardNorm) {
        self.0[objective.index()] = norm;
    }
}

/// Gaussian policy over the four solver parameters plus a value network.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    pub variant: FeatureVariant,
    /// Maps features to the mean of the pre-squash Gaussian.
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub critic: Mlp,
    pub norms: NormTable,
}

impl PolicyNetwork {
    pub fn new<R: Rng>(variant: FeatureVariant, hidden: &[usize], init_log_std: f64, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![variant.input_len()];
        sizes.extend_from_slice(hidden);
        sizes.push(4);
        let actor = Mlp::new(&sizes, 0.01, rng)?;
        *sizes.last_mut().unwrap() = 1;
        let critic = Mlp::new(&sizes, 1.0, rng)?;
        Ok(PolicyNetwork {
            variant,
            actor,
            log_std: vec![clamp_log_std(init_log_std); 4],
            critic,
            norms: NormTable::default(),
        })
    }

    pub fn head(&self, features: &[f64]) -> Result<GaussianHead> {
        GaussianHead::new(self.actor.predict(features)?, self.log_std.clone())
    }

    pub fn value(&self, features: &[f64]) -> Result<f64> {
        Ok(self.critic.predict(features)?[0])
    }

    /// Samples an action, or takes the mean when `deterministic`.
    pub fn act<R: Rng>(&self, features: &[f64], rng: &mut R, deterministic: bool) -> Result<PolicySample> {
        let head = self.head(features)?;
        Ok(if deterministic { head.mode() } else { head.sample(rng) })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC}\nvariant {}\n", self.variant.name());
        for obj in Objective::ALL {
            let n = self.norms.get(obj);
            writeln!(s, "norm {} {:?} {:?}", obj.short_name(), n.mu, n.sigma).unwrap();
        }
        s.push_str("log_std");
        for v in &self.log_std {
            write!(s, " {v:?}").unwrap();
        }
        s.push_str("\nactor\n");
        s.push_str(&self.actor.to_text());
        s.push_str("critic\n");
        s.push_str(&self.critic.to_text());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| IppError::Checkpoint(m.to_string());
        let mut lines = text.lines();
        let mut next = || lines.next().ok_or_else(|| bad("truncated checkpoint"));
        if next()? != MAGIC {
            return Err(bad("not a policy checkpoint"));
        }
        let variant = next()?
            .strip_prefix("variant ")
            .and_then(FeatureVariant::parse)
            .ok_or_else(|| bad("bad variant line"))?;
        let mut norms = NormTable::default();
        for _ in 0..3 {
            let line = next()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let (obj, mu, sigma) = match parts.as_slice() {
                ["norm", o, m, s] => (
                    Objective::parse(o).ok_or_else(|| bad("bad norm objective"))?,
                    m.parse::<f64>().map_err(|_| bad("bad norm mu"))?,
                    s.parse::<f64>().map_err(|_| bad("bad norm sigma"))?,
                ),
                _ => return Err(bad("bad norm line")),
            };
            norms.set(obj, RewardNorm::new(mu, sigma).map_err(|e| bad(&e.to_string()))?);
        }
        let log_std = parse_tagged::<f64>(next()?, "log_std")?;
        if log_std.len() != 4 {
            return Err(bad("log_std must have 4 entries"));
        }
        if next()? != "actor" {
            return Err(bad("expected actor section"));
        }
        let actor = Mlp::from_text(next()?, next()?)?;
        if next()? != "critic" {
            return Err(bad("expected critic section"));
        }
        let critic = Mlp::from_text(next()?, next()?)?;
        if actor.input_len() != variant.input_len() || actor.output_len() != 4 {
            return Err(bad("actor shape does not match variant"));
        }
        if critic.input_len() != variant.input_len() || critic.output_len() != 1 {
            return Err(bad("critic shape does not match variant"));
        }
        Ok(PolicyNetwork { variant, actor, log_std, critic, norms })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| IppError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IppError::Checkpoint(format!("{}: {e}", path.display())))?;
        PolicyNetwork::from_text(&text)
    }
}
