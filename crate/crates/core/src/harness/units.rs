//! SI ↔ internal units. Internally ħ = m = 1; a choice of length, time and mass
//! unit maps SI values onto that scale. Dynamics never touch SI numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metres per centimetre.
pub const CM: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitScales {
    pub length_m: f64,
    pub time_s: f64,
    pub mass_kg: f64,
}

impl UnitScales {
    pub const SI: UnitScales = UnitScales {
        length_m: 1.0,
        time_s: 1.0,
        mass_kg: 1.0,
    };

    pub fn new(length_m: f64, time_s: f64, mass_kg: f64) -> Result<Self> {
        let s = Self {
            length_m,
            time_s,
            mass_kg,
        };
        for (name, v) in [("length", length_m), ("time", time_s), ("mass", mass_kg)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} unit {v} must be positive")));
            }
        }
        Ok(s)
    }
}

/// Dimension as powers of length, time and mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    Length,
    Time,
    Mass,
    Rate,
    Other { length: i32, time: i32, mass: i32 },
}

impl Quantity {
    fn powers(self) -> (i32, i32, i32) {
        match self {
            Quantity::Length => (1, 0, 0),
            Quantity::Time => (0, 1, 0),
            Quantity::Mass => (0, 0, 1),
            Quantity::Rate => (0, -1, 0),
            Quantity::Other { length, time, mass } => (length, time, mass),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    ToInternal,
    ToSi,
}

pub fn si_conversion(value: f64, quantity: Quantity, direction: Direction, scales: &UnitScales) -> Result<f64> {
    let scales = UnitScales::new(scales.length_m, scales.time_s, scales.mass_kg)?;
    let (l, t, m) = quantity.powers();
    let unit = scales.length_m.powi(l) * scales.time_s.powi(t) * scales.mass_kg.powi(m);
    Ok(match direction {
        Direction::ToInternal => value / unit,
        Direction::ToSi => value * unit,
    })
}

/// Mean time to the first hit on any of `n_eff` constituents.
pub fn mean_first_jump_time(tau: f64, n_eff: f64) -> f64 {
    tau / n_eff
}

/// `(n_eff, tau / n_eff)` rows for a range of system sizes.
pub fn amplification_table(tau: f64, n_effs: &[f64]) -> Vec<(f64, f64)> {
    n_effs.iter().map(|&n| (n, mean_first_jump_time(tau, n))).collect()
}
