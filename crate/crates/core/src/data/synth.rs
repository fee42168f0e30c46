//! Seeded synthetic degradation data.
//!
//! Each cell follows a power-law capacity fade
//! `C(c) = C0·(1 − α·(c/c_max)^β) + ε`, `ε ~ N(0, σ)`, clamped at zero, with
//! `c = 0..cycles` and `c_max = cycles − 1`. Per-cell `C0`, `α` and `β` are
//! jittered around the preset values. With `s = C/C0` (SOH) and
//! `fade = 1 − s`, the features are:
//!
//! | feature    | value                                   | noise sd / σ |
//! |------------|-----------------------------------------|--------------|
//! | Qdlin      | `C̄(c) − C̄(c−1)` on the noiseless curve | 0.1          |
//! | CVCT       | `cvct0·(1 + 2.5·fade)`                  | 200          |
//! | Temp_m     | `temp0 + 6·fade`                        | 40           |
//! | Current_m  | `current0·(1 − 0.05·fade)`              | 2            |
//! | Voltage_m  | `voltage0 − 0.25·fade`                  | 2            |
//! | Voltage_l  | `voltage_cut + 0.15·s`                  | 1            |
//! | SOH        | `s` (exact, no extra noise)             | 0            |
//! | ir         | `ir0·(1 + 1.5·fade)`                    | 0.5          |
//! | chargetime | `chargetime0·(0.6 + 0.4·s)`             | 400          |
//! | CCCT       | `ccct0·s^1.5`                           | 300          |
//!
//! `C̄(−1)` is taken as `C0`. Random draws happen in a fixed order (cell
//! jitter, then per cycle the capacity noise followed by feature noise in
//! schema order), so a config and seed determine the table bit for bit.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{schema_of, CycleRecord, DataTable, Source, CANONICAL_FEATURES};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChemistryPreset {
    pub name: String,
    /// Nominal fresh capacity, Ah.
    pub c0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub temp0: f64,
    pub current0: f64,
    pub voltage0: f64,
    pub voltage_cut: f64,
    pub ir0: f64,
    pub cvct0: f64,
    pub chargetime0: f64,
    pub ccct0: f64,
}

impl ChemistryPreset {
    pub fn defaults() -> Vec<ChemistryPreset> {
        let p = |name: &str, c0, alpha, beta, temp0, current0, voltage0, voltage_cut, ir0, cvct0, chargetime0, ccct0| {
            ChemistryPreset {
                name: name.into(),
                c0,
                alpha,
                beta,
                temp0,
                current0,
                voltage0,
                voltage_cut,
                ir0,
                cvct0,
                chargetime0,
                ccct0,
            }
        };
        vec![
            p("lco", 1.85, 0.28, 1.6, 24.0, 2.0, 3.72, 2.7, 0.070, 900.0, 3900.0, 3000.0),
            p("nca", 1.75, 0.22, 1.3, 30.0, 1.6, 3.62, 2.5, 0.045, 1100.0, 4500.0, 3400.0),
            p("lfp", 1.65, 0.18, 2.4, 32.0, 4.4, 3.28, 2.0, 0.020, 600.0, 2400.0, 1800.0),
            p("lco_pouch", 1.80, 0.32, 1.2, 25.0, 1.1, 3.75, 2.75, 0.090, 1300.0, 5200.0, 3900.0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub cells: usize,
    pub cycles_per_cell: usize,
    pub chemistry_presets: Vec<ChemistryPreset>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            cells: 4,
            cycles_per_cell: 200,
            chemistry_presets: ChemistryPreset::defaults(),
            noise_sigma: 0.005,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells < 1 {
            return Err(Error::InvalidConfig(format!("cells must be >= 1 (got {})", self.cells)));
        }
        if self.cycles_per_cell < 2 {
            return Err(Error::InvalidConfig(format!(
                "cycles_per_cell must be >= 2 (got {})",
                self.cycles_per_cell
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be finite and >= 0 (got {})",
                self.noise_sigma
            )));
        }
        if self.chemistry_presets.is_empty() {
            return Err(Error::InvalidConfig("chemistry_presets must not be empty".into()));
        }
        for p in &self.chemistry_presets {
            if !(p.c0 > 0.0 && p.alpha > 0.0 && p.alpha <= 1.0 && p.beta > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "preset `{}` needs c0 > 0, 0 < alpha <= 1, beta > 0",
                    p.name
                )));
            }
        }
        Ok(())
    }
}

/// Realized per-cell parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub cell_id: String,
    pub preset: String,
    pub c0: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub table: DataTable,
    pub cells: Vec<CellMeta>,
}

/// Noise scale of each canonical feature relative to `noise_sigma`.
const FEATURE_NOISE: [f64; 10] = [0.1, 200.0, 40.0, 2.0, 2.0, 1.0, 0.0, 0.5, 400.0, 300.0];

pub fn synth_generate(config: &SynthConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = seed::rng(config.seed);
    let draw = |sd: f64, rng: &mut seed::Rng| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        z * sd
    };
    let sigma = config.noise_sigma;
    let c_max = (config.cycles_per_cell - 1) as f64;
    let mut rows = Vec::with_capacity(config.cells * config.cycles_per_cell);
    let mut metas = Vec::with_capacity(config.cells);

    for cell in 0..config.cells {
        let preset = &config.chemistry_presets[cell % config.chemistry_presets.len()];
        let c0 = preset.c0 * rng.random_range(0.97..1.03);
        let alpha = (preset.alpha * rng.random_range(0.85..1.15)).min(1.0);
        let beta = preset.beta * rng.random_range(0.9..1.1);
        let cell_id = format!("syn-{}-{cell:02}", preset.name);
        let clean = |c: f64| c0 * (1.0 - alpha * (c / c_max).powf(beta));

        for c in 0..config.cycles_per_cell {
            let cf = c as f64;
            let capacity = (clean(cf) + draw(sigma, &mut rng)).max(0.0);
            let soh = capacity / c0;
            let fade = 1.0 - soh;
            let prev = if c == 0 { c0 } else { clean(cf - 1.0) };
            let base = [
                clean(cf) - prev,
                preset.cvct0 * (1.0 + 2.5 * fade),
                preset.temp0 + 6.0 * fade,
                preset.current0 * (1.0 - 0.05 * fade),
                preset.voltage0 - 0.25 * fade,
                preset.voltage_cut + 0.15 * soh,
                soh,
                preset.ir0 * (1.0 + 1.5 * fade),
                preset.chargetime0 * (0.6 + 0.4 * soh),
                preset.ccct0 * soh.powf(1.5),
            ];
            let features = base
                .iter()
                .zip(FEATURE_NOISE)
                .map(|(&v, k)| if k > 0.0 { v + draw(sigma * k, &mut rng) } else { v })
                .collect();
            rows.push(CycleRecord {
                source: Source::Synthetic,
                cell_id: cell_id.clone(),
                cycle: c as u64,
                features,
                target: capacity,
            });
        }
        metas.push(CellMeta {
            cell_id,
            preset: preset.name.clone(),
            c0,
            alpha,
            beta,
        });
    }
    Ok(SyntheticDataset {
        table: DataTable::new(schema_of(&CANONICAL_FEATURES), rows)?,
        cells: metas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_fade_is_monotone() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            cells: 4,
            cycles_per_cell: 150,
            ..Default::default()
        };
        let ds = synth_generate(&cfg).unwrap();
        for (_, idx) in ds.table.cells() {
            let caps: Vec<f64> = idx.iter().map(|&i| ds.table.rows()[i].target).collect();
            assert!(caps.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn same_seed_same_table() {
        let cfg = SynthConfig::default();
        assert_eq!(synth_generate(&cfg).unwrap(), synth_generate(&cfg).unwrap());
        let other = SynthConfig {
            seed: cfg.seed + 1,
            ..cfg.clone()
        };
        assert_ne!(synth_generate(&cfg).unwrap().table, synth_generate(&other).unwrap().table);
    }

    #[test]
    fn soh_equals_target_over_c0() {
        let cfg = SynthConfig {
            cells: 4,
            cycles_per_cell: 100,
            ..Default::default()
        };
        let ds = synth_generate(&cfg).unwrap();
        assert_eq!(ds.table.len(), 400);
        let soh = ds.table.feature_index("SOH").unwrap();
        for r in ds.table.rows() {
            let meta = ds.cells.iter().find(|m| m.cell_id == r.cell_id).unwrap();
            assert!((r.features[soh] - r.target / meta.c0).abs() < 1e-12);
        }
    }

    #[test]
    fn bounds_are_enforced() {
        let bad = SynthConfig {
            cycles_per_cell: 1,
            ..Default::default()
        };
        let msg = synth_generate(&bad).unwrap_err().to_string();
        assert!(msg.contains("cycles_per_cell"), "{msg}");
        assert!(synth_generate(&SynthConfig { cells: 0, ..Default::default() }).is_err());
        assert!(synth_generate(&SynthConfig { noise_sigma: -1.0, ..Default::default() }).is_err());
    }
}
