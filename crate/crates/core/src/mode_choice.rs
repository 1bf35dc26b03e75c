//! Generalized mode costs and the multinomial logit draw. Utility is the negative
//! cost, in euros.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::params::ScenarioParams;
use crate::transit::{transfer_penalty, PtOffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Pv,
    Pt,
    Amod,
}

pub const MODES: [Mode; 3] = [Mode::Pv, Mode::Pt, Mode::Amod];

/// `VOT·t + c_D·d + toll + parking + u^PV`.
pub fn pv_cost(p: &ScenarioParams, time_s: f64, distance_m: f64, toll: f64, parking: f64) -> f64 {
    p.value_of_time * time_s + p.pv_distance_cost * distance_m + toll + parking + p.pv_intercept
}

/// In-vehicle time multiplier: linear in crowding, reaching `max_factor` at `η = 1`.
pub fn crowding_multiplier(eta: f64, max_factor: f64) -> f64 {
    1.0 + (max_factor - 1.0) * eta.clamp(0.0, 1.0)
}

/// `fare + g(η)·VOT·t + VOT·walk/v + VOT·wait + (c^T_0/s)·transfers`.
pub fn pt_cost(p: &ScenarioParams, offer: &PtOffer, eta: f64, frequency_scale: f64) -> f64 {
    offer.fare
        + crowding_multiplier(eta, p.crowding_max_factor) * p.value_of_time * offer.in_vehicle_s
        + p.value_of_time * offer.walk_m / p.walk_speed
        + p.value_of_time * offer.wait_s
        + transfer_penalty(p.transfer_penalty, frequency_scale) * offer.transfers as f64
}

/// `fare + VOT·ride + VOT·wait`, with the offer's planned times.
pub fn amod_cost(p: &ScenarioParams, fare: f64, ride_s: f64, wait_s: f64) -> f64 {
    fare + p.value_of_time * ride_s + p.value_of_time * wait_s
}

/// Costs of the modes on offer; `None` when a mode is unavailable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ModeCosts {
    pub pv: Option<f64>,
    pub pt: Option<f64>,
    pub amod: Option<f64>,
}

impl ModeCosts {
    pub fn get(&self, mode: Mode) -> Option<f64> {
        match mode {
            Mode::Pv => self.pv,
            Mode::Pt => self.pt,
            Mode::Amod => self.amod,
        }
    }

    pub fn available(&self) -> impl Iterator<Item = (Mode, f64)> + '_ {
        MODES.into_iter().filter_map(|m| self.get(m).map(|c| (m, c)))
    }

    /// Logit probabilities over the available modes, utilities `−scale·C`.
    pub fn probabilities(&self, scale: f64) -> Vec<(Mode, f64)> {
        let (modes, utils): (Vec<Mode>, Vec<f64>) = self.available().map(|(m, c)| (m, -scale * c)).unzip();
        modes.into_iter().zip(logit(&utils)).collect()
    }
}

/// Softmax with the largest utility subtracted first.
pub fn logit(utilities: &[f64]) -> Vec<f64> {
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = utilities.iter().map(|u| (u - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Index drawn from `probs` by inverse transform.
pub fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws a mode. Panics on an empty choice set, which cannot occur when a private
/// vehicle is always available.
pub fn choose(costs: &ModeCosts, scale: f64, rng: &mut impl Rng) -> Mode {
    let probs = costs.probabilities(scale);
    assert!(!probs.is_empty(), "empty choice set");
    let p: Vec<f64> = probs.iter().map(|(_, p)| *p).collect();
    probs[sample_index(&p, rng)].0
}
