//! Synthetic populations with known ground truth.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, LogNormal, Normal};

use super::WorldError;
use crate::market::{BehaviorProfile, GroundTruthUser, UserId};
use crate::seed::{rng_for, streams};

/// Named parametric distribution, sampled by inverse CDF so that draws can
/// be coupled through a Gaussian copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Constant {
        value: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// `low + (high - low) * Beta(alpha, beta)`.
    ScaledBeta {
        alpha: f64,
        beta: f64,
        low: f64,
        high: f64,
    },
    Normal {
        mean: f64,
        std_dev: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
}

impl Distribution {
    pub fn validate(&self) -> Result<(), WorldError> {
        let ok = match *self {
            Distribution::Constant { value } => value.is_finite(),
            Distribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            Distribution::ScaledBeta { alpha, beta, low, high } => {
                alpha > 0.0 && beta > 0.0 && low.is_finite() && high.is_finite() && low <= high
            }
            Distribution::Normal { mean, std_dev } => mean.is_finite() && std_dev > 0.0,
            Distribution::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(WorldError::Config(format!("invalid distribution parameters: {self:?}")))
        }
    }

    /// Inverse CDF at `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::Uniform { low, high } => low + (high - low) * u,
            Distribution::ScaledBeta { alpha, beta, low, high } => {
                let b = Beta::new(alpha, beta).expect("validated");
                low + (high - low) * b.inverse_cdf(u)
            }
            Distribution::Normal { mean, std_dev } => Normal::new(mean, std_dev).expect("validated").inverse_cdf(u),
            Distribution::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).expect("validated").inverse_cdf(u),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            _ => self.quantile(open_unit(rng)),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::Uniform { low, high } => 0.5 * (low + high),
            Distribution::ScaledBeta { alpha, beta, low, high } => low + (high - low) * alpha / (alpha + beta),
            Distribution::Normal { mean, .. } => mean,
            Distribution::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
        }
    }
}

/// Uniform draw in the open interval (0, 1).
pub(crate) fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Explicitly listed user, bypassing the distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitUser {
    pub p: f64,
    pub delta_p: f64,
}

/// Exogenous competing bid per auction, in currency units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompetitorBids {
    /// No other candidates in the auction.
    None,
    Fixed {
        price: f64,
    },
    /// Bid drawn from `distribution` regardless of the user.
    Absolute {
        distribution: Distribution,
    },
    /// A value-based market: bid `p * scale` with `scale` drawn from
    /// `distribution`, so competition concentrates on high-AR users.
    ValueScaled {
        distribution: Distribution,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub n_users: usize,
    /// Distribution of `p`, the AR when the ad is shown.
    pub p_distribution: Distribution,
    /// Distribution of `delta_p / p`.
    pub lift_ratio_distribution: Distribution,
    /// Gaussian-copula correlation between `p` and `delta_p / p`.
    pub lift_p_correlation: f64,
    /// When non-empty, the population is exactly these users.
    pub explicit_users: Vec<ExplicitUser>,
    /// Expected ad requests per day.
    pub request_rate_distribution: Distribution,
    /// Exact request count per user instead of a Poisson count.
    pub fixed_requests_per_user: Option<u32>,
    pub horizon_days: u32,
    pub topics: u32,
    pub apps: u32,
    pub geo_areas: u32,
    pub age_groups: u32,
    /// Strength of the link between behavior rates and `(p, delta_p)`.
    pub behavior_correlation: f64,
    pub page_view_rate: f64,
    pub search_rate: f64,
    pub app_install_rate: f64,
    pub app_use_rate: f64,
    pub click_probability: f64,
    /// Emit page views, searches and app events besides ad requests.
    pub behavior_events: bool,
    pub competitor: CompetitorBids,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_users: 1000,
            p_distribution: Distribution::ScaledBeta { alpha: 2.0, beta: 5.0, low: 0.001, high: 0.1 },
            lift_ratio_distribution: Distribution::Uniform { low: 0.05, high: 0.95 },
            lift_p_correlation: -0.5,
            explicit_users: Vec::new(),
            request_rate_distribution: Distribution::Uniform { low: 2.0, high: 4.0 },
            fixed_requests_per_user: None,
            horizon_days: 21,
            topics: 8,
            apps: 4,
            geo_areas: 10,
            age_groups: 6,
            behavior_correlation: 1.0,
            page_view_rate: 2.0,
            search_rate: 1.0,
            app_install_rate: 0.05,
            app_use_rate: 1.0,
            click_probability: 0.02,
            behavior_events: true,
            competitor: CompetitorBids::ValueScaled { distribution: Distribution::LogNormal { mu: 4.6, sigma: 0.25 } },
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::Config(m.to_string()));
        if self.explicit_users.is_empty() && self.n_users == 0 {
            return bad("n_users must be > 0");
        }
        if self.horizon_days == 0 {
            return bad("horizon_days must be > 0");
        }
        if !(-1.0..=1.0).contains(&self.lift_p_correlation) {
            return bad("lift_p_correlation must lie in [-1, 1]");
        }
        if !(0.0..=1.0).contains(&self.click_probability) {
            return bad("click_probability must lie in [0, 1]");
        }
        for r in [self.page_view_rate, self.search_rate, self.app_install_rate, self.app_use_rate] {
            if !(r.is_finite() && r >= 0.0) {
                return bad("behavior rates must be finite and >= 0");
            }
        }
        if self.geo_areas == 0 || self.age_groups == 0 {
            return bad("geo_areas and age_groups must be > 0");
        }
        self.p_distribution.validate()?;
        self.lift_ratio_distribution.validate()?;
        self.request_rate_distribution.validate()?;
        match &self.competitor {
            CompetitorBids::Absolute { distribution } | CompetitorBids::ValueScaled { distribution } => {
                distribution.validate()?
            }
            CompetitorBids::Fixed { price } if !(price.is_finite() && *price >= 0.0) => {
                return bad("competitor price must be >= 0")
            }
            _ => {}
        }
        Ok(())
    }

    pub fn user_count(&self) -> usize {
        if self.explicit_users.is_empty() {
            self.n_users
        } else {
            self.explicit_users.len()
        }
    }

    pub fn horizon_seconds(&self) -> i64 {
        self.horizon_days as i64 * 86_400
    }
}

/// Latent standard-normal scores behind a user's `p` and lift ratio.
struct Latent {
    z_p: f64,
    z_r: f64,
}

fn behavior_profile(cfg: &WorldConfig, latent: &Latent, rng: &mut ChaCha8Rng) -> BehaviorProfile {
    let k = cfg.behavior_correlation;
    // Topic 0 tracks the AR, topic 1 the lift ratio, topic 2 their contrast.
    let loading = |t: u32| match t {
        0 => latent.z_p,
        1 => latent.z_r,
        2 => (latent.z_p - latent.z_r) / std::f64::consts::SQRT_2,
        _ => 0.0,
    };
    let rate = |base: f64, load: f64, rng: &mut ChaCha8Rng| {
        let noise = 0.25 * std_normal().inverse_cdf(open_unit(rng));
        base * (k * load + noise).exp()
    };
    let page_view_rates = (0..cfg.topics).map(|t| rate(cfg.page_view_rate, loading(t), rng)).collect();
    let search_rates =
        (0..cfg.topics).map(|t| rate(cfg.search_rate, if t < 2 { loading(t) } else { 0.0 }, rng)).collect();
    let app_load = |a: u32| match a {
        0 => latent.z_r,
        1 => latent.z_p,
        _ => 0.0,
    };
    let app_install_rates = (0..cfg.apps).map(|a| rate(cfg.app_install_rate, app_load(a), rng)).collect();
    let app_use_rates = (0..cfg.apps).map(|a| rate(cfg.app_use_rate, app_load(a), rng)).collect();
    BehaviorProfile {
        page_view_rates,
        search_rates,
        app_install_rates,
        app_use_rates,
        click_probability: cfg.click_probability,
        age_group: rng.random_range(0..cfg.age_groups),
        gender: rng.random_range(0..2),
        geo_area: rng.random_range(0..cfg.geo_areas),
    }
}

/// Draw the population described by `cfg`. Each user has its own RNG
/// stream, so the population is a pure function of the config.
pub fn generate_population(cfg: &WorldConfig) -> Result<Vec<GroundTruthUser>, WorldError> {
    cfg.validate()?;
    let n = cfg.user_count();
    let normal = std_normal();
    let rho = cfg.lift_p_correlation;
    let mut attempts = 0usize;
    let mut rejected = 0usize;
    let mut users = Vec::with_capacity(n);

    for i in 0..n {
        let mut rng = rng_for(cfg.seed, streams::POPULATION, i as u64);
        let (p, delta_p, latent) = if let Some(e) = cfg.explicit_users.get(i) {
            attempts += 1;
            (e.p, e.delta_p, Latent { z_p: 0.0, z_r: 0.0 })
        } else {
            let mut draw = None;
            for _ in 0..1000 {
                attempts += 1;
                let z_p = normal.inverse_cdf(open_unit(&mut rng));
                let eps = normal.inverse_cdf(open_unit(&mut rng));
                let z_r = rho * z_p + (1.0 - rho * rho).sqrt() * eps;
                let p = cfg.p_distribution.quantile(normal.cdf(z_p).clamp(1e-15, 1.0 - 1e-15));
                let ratio = cfg.lift_ratio_distribution.quantile(normal.cdf(z_r).clamp(1e-15, 1.0 - 1e-15));
                let dp = p * ratio;
                let background = p - dp;
                if (0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&background) && p.is_finite() && dp.is_finite() {
                    draw = Some((p, dp, Latent { z_p, z_r }));
                    break;
                }
                rejected += 1;
            }
            match draw {
                Some(d) => d,
                None => return Err(WorldError::Rejection { attempts, rejected }),
            }
        };
        let request_rate = cfg.request_rate_distribution.sample(&mut rng).max(0.0);
        let behavior = behavior_profile(cfg, &latent, &mut rng);
        let user = GroundTruthUser::new(UserId(i as u64), p, delta_p, request_rate, behavior)
            .map_err(|e| WorldError::Config(format!("explicit user {i}: {e}")))?;
        users.push(user);
    }
    if rejected * 2 > attempts {
        return Err(WorldError::Rejection { attempts, rejected });
    }
    Ok(users)
}
