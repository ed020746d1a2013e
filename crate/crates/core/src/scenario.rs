//! Named simulation scenarios: seed level crossed with fault level.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum Scenario {
    /// High seed level, high fault level.
    HSHF,
    /// High seed level, low fault level.
    HSLF,
    /// Low seed level, high fault level.
    LSHF,
    /// Low seed level, low fault level.
    LSLF,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::HSHF, Scenario::HSLF, Scenario::LSHF, Scenario::LSLF];

    /// Share of all pairs with a faulty matching variable.
    pub fn fault_level(self) -> f64 {
        match self {
            Scenario::HSHF | Scenario::LSHF => 0.40,
            Scenario::HSLF | Scenario::LSLF => 0.05,
        }
    }

    /// Share of all pairs that are seeded with a known partner.
    pub fn seed_level(self) -> f64 {
        match self {
            Scenario::HSHF | Scenario::HSLF => 0.60,
            Scenario::LSHF | Scenario::LSLF => 0.20,
        }
    }

    /// Fault share among the pairs that are not seeded.
    pub fn non_seed_fault_level(self) -> f64 {
        self.fault_level() / (1.0 - self.seed_level())
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::HSHF => "HSHF",
            Scenario::HSLF => "HSLF",
            Scenario::LSHF => "LSHF",
            Scenario::LSLF => "LSLF",
        };
        f.write_str(s)
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_uppercase().as_str() {
            "HSHF" => Ok(Scenario::HSHF),
            "HSLF" => Ok(Scenario::HSLF),
            "LSHF" => Ok(Scenario::LSHF),
            "LSLF" => Ok(Scenario::LSLF),
            _ => Err(Error::Parameter(format!("unknown scenario '{s}'"))),
        }
    }
}
