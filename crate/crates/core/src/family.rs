//! Exponential-dispersion families with their canonical links.
//!
//! Only canonical pairs are supported: gaussian/identity, binomial/logit and
//! poisson/log. Means handed to the binomial and poisson links are clamped
//! away from the boundary so that IRLS weights stay finite.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SparError};

/// Lower clamp for binomial and poisson means.
pub const MU_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logit,
    Log,
}

impl Family {
    pub fn canonical_link(self) -> Link {
        match self {
            Family::Gaussian => Link::Identity,
            Family::Binomial => Link::Logit,
            Family::Poisson => Link::Log,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
        }
    }

    /// Whether the dispersion parameter is fixed at one.
    pub fn dispersion_known(self) -> bool {
        !matches!(self, Family::Gaussian)
    }

    /// Clamp a mean into the open domain where the link and variance are finite.
    #[inline]
    pub fn clamp_mu(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Binomial => mu.clamp(MU_EPS, 1.0 - MU_EPS),
            Family::Poisson => mu.max(MU_EPS),
        }
    }

    /// g(mu) for a single value. No domain checks.
    #[inline]
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Binomial => (mu / (1.0 - mu)).ln(),
            Family::Poisson => mu.ln(),
        }
    }

    /// g^{-1}(eta) for a single value, clamped for binomial and poisson.
    #[inline]
    pub fn linkinv(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Binomial => {
                let mu = if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                };
                self.clamp_mu(mu)
            }
            Family::Poisson => self.clamp_mu(eta.exp()),
        }
    }

    /// Variance function V(mu). For canonical links this is also dmu/deta.
    #[inline]
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    fn link_domain_ok(self, mu: f64) -> bool {
        match self {
            Family::Gaussian => mu.is_finite(),
            Family::Binomial => mu > 0.0 && mu < 1.0,
            Family::Poisson => mu > 0.0 && mu.is_finite(),
        }
    }

    fn response_ok(self, y: f64) -> bool {
        match self {
            Family::Gaussian => y.is_finite(),
            Family::Binomial => (0.0..=1.0).contains(&y),
            Family::Poisson => y >= 0.0 && y.is_finite(),
        }
    }

    /// Check every response value is valid for this family.
    pub fn validate_response(self, y: &[f64]) -> Result<()> {
        match y.iter().position(|&v| !self.response_ok(v)) {
            Some(index) => Err(SparError::InvalidResponse {
                family: self.name(),
                index,
                value: y[index],
            }),
            None => Ok(()),
        }
    }

    /// Starting mean for IRLS, as in the usual `mustart` rules.
    pub(crate) fn mu_start(self, y: f64) -> f64 {
        match self {
            Family::Gaussian => y,
            Family::Binomial => (y + 0.5) / 2.0,
            Family::Poisson => y + 0.1,
        }
    }

    /// Unit deviance contribution d(y, mu) with 0 log 0 := 0.
    #[inline]
    pub(crate) fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Gaussian => (y - mu) * (y - mu),
            Family::Binomial => {
                let mu = self.clamp_mu(mu);
                2.0 * (xlogy_ratio(y, mu) + xlogy_ratio(1.0 - y, 1.0 - mu))
            }
            Family::Poisson => {
                let mu = self.clamp_mu(mu);
                2.0 * (xlogy_ratio(y, mu) - (y - mu))
            }
        }
    }
}

/// y * log(y / mu), with the convention 0 log 0 = 0.
#[inline]
fn xlogy_ratio(y: f64, mu: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y * (y / mu).ln()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = SparError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Family::Gaussian),
            "binomial" => Ok(Family::Binomial),
            "poisson" => Ok(Family::Poisson),
            other => Err(SparError::config(format!("unknown family '{other}'"))),
        }
    }
}

/// A family together with its link. Only canonical pairs can be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family: Family,
    pub link: Link,
}

impl FamilySpec {
    pub fn new(family: Family) -> Self {
        FamilySpec {
            family,
            link: family.canonical_link(),
        }
    }

    pub fn with_link(family: Family, link: Link) -> Result<Self> {
        if family.canonical_link() != link {
            return Err(SparError::config(format!(
                "{family} family only supports its canonical link"
            )));
        }
        Ok(FamilySpec { family, link })
    }

    pub fn gaussian() -> Self {
        Self::new(Family::Gaussian)
    }

    pub fn binomial() -> Self {
        Self::new(Family::Binomial)
    }

    pub fn poisson() -> Self {
        Self::new(Family::Poisson)
    }

    pub fn dispersion_known(&self) -> bool {
        self.family.dispersion_known()
    }

    /// Elementwise link g(mu).
    pub fn link_eval(&self, mu: &[f64]) -> Result<Vec<f64>> {
        mu.iter()
            .enumerate()
            .map(|(index, &m)| {
                if self.family.link_domain_ok(m) {
                    Ok(self.family.link(m))
                } else {
                    Err(SparError::Domain { index, value: m })
                }
            })
            .collect()
    }

    /// Elementwise inverse link. Binomial output is clamped to [1e-10, 1 - 1e-10].
    pub fn linkinv_eval(&self, eta: &[f64]) -> Result<Vec<f64>> {
        eta.iter()
            .enumerate()
            .map(|(index, &e)| {
                if e.is_finite() {
                    Ok(self.family.linkinv(e))
                } else {
                    Err(SparError::Domain { index, value: e })
                }
            })
            .collect()
    }

    /// Total deviance of `mu` against `y`.
    pub fn deviance_eval(&self, y: &[f64], mu: &[f64]) -> Result<f64> {
        check_len(y, mu)?;
        self.family.validate_response(y)?;
        Ok(deviance_unchecked(self.family, y, mu))
    }

    /// Log-likelihood up to terms that do not depend on `mu`, except for the
    /// poisson `log y!` term which is included. With `dispersion` absent the
    /// gaussian variance is estimated as RSS / n.
    pub fn loglik_eval(&self, y: &[f64], mu: &[f64], dispersion: Option<f64>) -> Result<f64> {
        check_len(y, mu)?;
        self.family.validate_response(y)?;
        let ll = match self.family {
            Family::Gaussian => {
                let n = y.len() as f64;
                let rss: f64 = y.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                let phi = dispersion.unwrap_or(rss / n);
                if !(phi > 0.0) {
                    return Err(SparError::config("gaussian dispersion must be positive"));
                }
                -0.5 * n * (2.0 * std::f64::consts::PI * phi).ln() - rss / (2.0 * phi)
            }
            Family::Binomial => y
                .iter()
                .zip(mu)
                .map(|(&yi, &m)| {
                    let m = self.family.clamp_mu(m);
                    let a = if yi == 0.0 { 0.0 } else { yi * m.ln() };
                    let b = if yi == 1.0 { 0.0 } else { (1.0 - yi) * (1.0 - m).ln() };
                    a + b
                })
                .sum(),
            Family::Poisson => y
                .iter()
                .zip(mu)
                .map(|(&yi, &m)| {
                    let m = self.family.clamp_mu(m);
                    let a = if yi == 0.0 { 0.0 } else { yi * m.ln() };
                    a - m - ln_gamma(yi + 1.0)
                })
                .sum(),
        };
        Ok(ll)
    }
}

pub(crate) fn deviance_unchecked(family: Family, y: &[f64], mu: &[f64]) -> f64 {
    y.iter()
        .zip(mu)
        .map(|(&yi, &m)| family.unit_deviance(yi, m))
        .sum()
}

fn check_len(y: &[f64], mu: &[f64]) -> Result<()> {
    if y.len() != mu.len() {
        return Err(SparError::shape(format!(
            "response has length {} but mean has length {}",
            y.len(),
            mu.len()
        )));
    }
    Ok(())
}
