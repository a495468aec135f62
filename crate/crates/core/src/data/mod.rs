//! Dataset schema, CSV interchange, splitting, standardization and the
//! synthetic flux generator.

mod generator;
mod io;
mod split;
mod standardize;

use serde::{Deserialize, Serialize};

pub use generator::{generate, GeneratorConfig, ResponseCoefficients};
pub use io::{csv_read, csv_read_features, csv_write, predictions_write, CSV_HEADER};
pub use split::{split, Splits};
pub use standardize::{fit_standardizer, ColumnStats, Standardizer};

pub const N_FEATURES: usize = 10;
pub const N_OFFSETS: usize = 9;

/// Days relative to fertiliser application, in target-column order.
pub const OFFSETS_DAYS: [i32; N_OFFSETS] = [-7, -3, 0, 1, 2, 4, 8, 16, 26];

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "temp_mean_c",
    "rain_monthly_mm",
    "solar_monthly_tj_ha",
    "soil_ph",
    "soil_whc_mm",
    "soil_p_mg_l",
    "soil_k_mg_l",
    "soil_mg_mg_l",
    "n_applied_kg_ha",
    "seeds_per_m2",
];

/// Upper bound of the CO₂ flux range, mg CO₂-C/h/m².
pub const CO2_MAX: f64 = 456.17;
/// Upper bound of the N₂O flux range, μg N₂O-N/h/m².
pub const N2O_MAX: f64 = 10348.62;

/// Column suffix for an offset: `dm7`, `dm3`, `d0`, … `d26`.
pub fn offset_suffix(day: i32) -> String {
    if day < 0 {
        format!("dm{}", -day)
    } else {
        format!("d{day}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gas {
    Co2,
    N2o,
}

impl Gas {
    pub fn prefix(self) -> &'static str {
        match self {
            Gas::Co2 => "co2",
            Gas::N2o => "n2o",
        }
    }

    pub fn max_flux(self) -> f64 {
        match self {
            Gas::Co2 => CO2_MAX,
            Gas::N2o => N2O_MAX,
        }
    }

    pub fn column_names(self) -> Vec<String> {
        OFFSETS_DAYS
            .iter()
            .map(|d| format!("{}_{}", self.prefix(), offset_suffix(*d)))
            .collect()
    }
}

impl std::str::FromStr for Gas {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "co2" => Ok(Gas::Co2),
            "n2o" => Ok(Gas::N2o),
            other => Err(crate::Error::usage(format!("unknown gas `{other}` (expected co2 or n2o)"))),
        }
    }
}

impl std::fmt::Display for Gas {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.prefix())
    }
}

/// One fertilisation observation.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub sample_id: u64,
    pub temp_mean_c: f64,
    pub rain_monthly_mm: f64,
    pub solar_monthly_tj_ha: f64,
    pub soil_ph: f64,
    pub soil_whc_mm: f64,
    pub soil_p_mg_l: f64,
    pub soil_k_mg_l: f64,
    pub soil_mg_mg_l: f64,
    pub n_applied_kg_ha: f64,
    pub seeds_per_m2: f64,
    pub co2_flux: [f64; N_OFFSETS],
    pub n2o_flux: [f64; N_OFFSETS],
}

impl SampleRecord {
    /// Features in [`FEATURE_NAMES`] order.
    pub fn features(&self) -> [f64; N_FEATURES] {
        [
            self.temp_mean_c,
            self.rain_monthly_mm,
            self.solar_monthly_tj_ha,
            self.soil_ph,
            self.soil_whc_mm,
            self.soil_p_mg_l,
            self.soil_k_mg_l,
            self.soil_mg_mg_l,
            self.n_applied_kg_ha,
            self.seeds_per_m2,
        ]
    }

    pub fn from_features(sample_id: u64, f: [f64; N_FEATURES]) -> Self {
        Self {
            sample_id,
            temp_mean_c: f[0],
            rain_monthly_mm: f[1],
            solar_monthly_tj_ha: f[2],
            soil_ph: f[3],
            soil_whc_mm: f[4],
            soil_p_mg_l: f[5],
            soil_k_mg_l: f[6],
            soil_mg_mg_l: f[7],
            n_applied_kg_ha: f[8],
            seeds_per_m2: f[9],
            co2_flux: [0.0; N_OFFSETS],
            n2o_flux: [0.0; N_OFFSETS],
        }
    }

    pub fn targets(&self, gas: Gas) -> &[f64; N_OFFSETS] {
        match gas {
            Gas::Co2 => &self.co2_flux,
            Gas::N2o => &self.n2o_flux,
        }
    }
}
