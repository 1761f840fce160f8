//! Experiment configuration: a documented key=value text file plus CLI
//! overrides. Every knob has a default, and the fully resolved set is
//! printed into the output directory so runs are self-describing.

use anyhow::{bail, Context, Result};
use npuscope_core::classifier::TrainHyper;
use npuscope_core::detector::DetectorParams;
use npuscope_core::NpuConfig;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub models: Vec<String>,
    pub element_size: u32,
    pub npu: NpuConfig,
    pub window_us: u32,
    /// Multiplicative measurement noise on exported victim traces.
    pub noise_amplitude: f64,
    /// Master seed; per-model and per-stage streams derive from it.
    pub seed: u64,
    pub detector: DetectorParams,
    /// Legal configs profiled per layer (evenly subsampled beyond this).
    pub profile_cap: usize,
    /// Alternate configs per layer used for vocabulary training.
    pub codebook_alt_configs: usize,
    /// Feature rows kept for vocabulary training.
    pub codebook_rows_cap: usize,
    /// Noisy replicas per layer class in the classification benchmark.
    pub replicas: usize,
    pub dataset_noise: f64,
    pub dataset_seed: u64,
    pub split_seed: u64,
    pub train_seed: u64,
    pub hyper: TrainHyper,
    pub explore_samples: usize,
    /// Shaper targets as fractions of each model's peak window bandwidth.
    pub shaper_fracs: Vec<f64>,
    /// Shaper quantum; 0 means use the NPU DMA burst size.
    pub shaper_quantum: u64,
    pub write_period_us: u32,
    pub cycle_cap_factor: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: npuscope_core::shipped_models()
                .iter()
                .map(|s| s.to_string())
                .collect(),
            element_size: 1,
            npu: NpuConfig::default(),
            window_us: 4,
            noise_amplitude: 0.0,
            seed: 42,
            detector: DetectorParams::default(),
            profile_cap: 12,
            codebook_alt_configs: 3,
            codebook_rows_cap: 4096,
            replicas: 40,
            dataset_noise: 0.05,
            dataset_seed: 11,
            split_seed: 5,
            train_seed: 1,
            hyper: TrainHyper::default(),
            explore_samples: 200,
            shaper_fracs: vec![0.25, 0.5, 0.75, 1.0, 1.25],
            shaper_quantum: 0,
            write_period_us: 4,
            cycle_cap_factor: 64,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected key = value", path.display(), lineno + 1);
            };
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
            v.parse()
                .map_err(|_| anyhow::anyhow!("bad value '{v}' for {key}"))
        }
        match key {
            "models" => {
                self.models = value.split(',').map(|s| s.trim().to_string()).collect();
            }
            "element_size" => self.element_size = num(value, key)?,
            "clock_hz" => self.npu.clock_hz = num(value, key)?,
            "pe_count" => self.npu.pe_count = num(value, key)?,
            "alu_lanes" => self.npu.alu_lanes = num(value, key)?,
            "weight_scratchpad_bytes" => self.npu.weight_scratchpad_bytes = num(value, key)?,
            "dram_bandwidth_bps" => self.npu.dram_bandwidth_bps = num(value, key)?,
            "dma_burst_bytes" => self.npu.dma_burst_bytes = num(value, key)?,
            "dma_setup_cycles" => self.npu.dma_setup_cycles = num(value, key)?,
            "layer_sync_cycles" => self.npu.layer_sync_cycles = num(value, key)?,
            "block_granularity" => self.npu.block_granularity = num(value, key)?,
            "window_us" => self.window_us = num(value, key)?,
            "noise_amplitude" => self.noise_amplitude = num(value, key)?,
            "seed" => self.seed = num(value, key)?,
            "win_len" => self.detector.win_len = num(value, key)?,
            "stride" => self.detector.stride = num(value, key)?,
            "dwt_levels" => self.detector.dwt_levels = num(value, key)?,
            "codebook_k" => self.detector.codebook_k = num(value, key)?,
            "detector_c" => self.detector.c = num(value, key)?,
            "bag_len" => self.detector.bag_len = num(value, key)?,
            "tau" => self.detector.tau = num(value, key)?,
            "tau_valid" => self.detector.tau_valid = num(value, key)?,
            "level_rtol" => self.detector.level_rtol = num(value, key)?,
            "profile_cap" => self.profile_cap = num(value, key)?,
            "codebook_alt_configs" => self.codebook_alt_configs = num(value, key)?,
            "codebook_rows_cap" => self.codebook_rows_cap = num(value, key)?,
            "replicas" => self.replicas = num(value, key)?,
            "dataset_noise" => self.dataset_noise = num(value, key)?,
            "dataset_seed" => self.dataset_seed = num(value, key)?,
            "split_seed" => self.split_seed = num(value, key)?,
            "train_seed" => self.train_seed = num(value, key)?,
            "epochs" => self.hyper.epochs = num(value, key)?,
            "learning_rate" => self.hyper.learning_rate = num(value, key)?,
            "l2" => self.hyper.l2 = num(value, key)?,
            "batch" => self.hyper.batch = num(value, key)?,
            "hidden" => self.hyper.hidden = num(value, key)?,
            "filters" => self.hyper.filters = num(value, key)?,
            "filter_width" => self.hyper.filter_width = num(value, key)?,
            "explore_samples" => self.explore_samples = num(value, key)?,
            "shaper_fracs" => {
                self.shaper_fracs = value
                    .split(',')
                    .map(|s| num(s.trim(), key))
                    .collect::<Result<_>>()?;
            }
            "shaper_quantum" => self.shaper_quantum = num(value, key)?,
            "write_period_us" => self.write_period_us = num(value, key)?,
            "cycle_cap_factor" => self.cycle_cap_factor = num(value, key)?,
            _ => bail!("unknown config key '{key}'"),
        }
        Ok(())
    }

    pub fn quantum(&self) -> u64 {
        if self.shaper_quantum == 0 {
            self.npu.dma_burst_bytes
        } else {
            self.shaper_quantum
        }
    }

    /// Render every resolved setting, one `key = value` per line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# resolved experiment configuration");
        let _ = writeln!(s, "models = {}", self.models.join(","));
        let _ = writeln!(s, "element_size = {}", self.element_size);
        let n = &self.npu;
        let _ = writeln!(s, "clock_hz = {}", n.clock_hz);
        let _ = writeln!(s, "pe_count = {}", n.pe_count);
        let _ = writeln!(s, "alu_lanes = {}", n.alu_lanes);
        let _ = writeln!(s, "weight_scratchpad_bytes = {}", n.weight_scratchpad_bytes);
        let _ = writeln!(s, "dram_bandwidth_bps = {}", n.dram_bandwidth_bps);
        let _ = writeln!(s, "dma_burst_bytes = {}", n.dma_burst_bytes);
        let _ = writeln!(s, "dma_setup_cycles = {}", n.dma_setup_cycles);
        let _ = writeln!(s, "layer_sync_cycles = {}", n.layer_sync_cycles);
        let _ = writeln!(s, "block_granularity = {}", n.block_granularity);
        let _ = writeln!(s, "window_us = {}", self.window_us);
        let _ = writeln!(s, "noise_amplitude = {}", self.noise_amplitude);
        let _ = writeln!(s, "seed = {}", self.seed);
        let d = &self.detector;
        let _ = writeln!(s, "win_len = {}", d.win_len);
        let _ = writeln!(s, "stride = {}", d.stride);
        let _ = writeln!(s, "dwt_levels = {}", d.dwt_levels);
        let _ = writeln!(s, "codebook_k = {}", d.codebook_k);
        let _ = writeln!(s, "detector_c = {}", d.c);
        let _ = writeln!(s, "bag_len = {}", d.bag_len);
        let _ = writeln!(s, "tau = {}", d.tau);
        let _ = writeln!(s, "tau_valid = {}", d.tau_valid);
        let _ = writeln!(s, "level_rtol = {}", d.level_rtol);
        let _ = writeln!(s, "profile_cap = {}", self.profile_cap);
        let _ = writeln!(s, "codebook_alt_configs = {}", self.codebook_alt_configs);
        let _ = writeln!(s, "codebook_rows_cap = {}", self.codebook_rows_cap);
        let _ = writeln!(s, "replicas = {}", self.replicas);
        let _ = writeln!(s, "dataset_noise = {}", self.dataset_noise);
        let _ = writeln!(s, "dataset_seed = {}", self.dataset_seed);
        let _ = writeln!(s, "split_seed = {}", self.split_seed);
        let _ = writeln!(s, "train_seed = {}", self.train_seed);
        let h = &self.hyper;
        let _ = writeln!(s, "epochs = {}", h.epochs);
        let _ = writeln!(s, "learning_rate = {}", h.learning_rate);
        let _ = writeln!(s, "l2 = {}", h.l2);
        let _ = writeln!(s, "batch = {}", h.batch);
        let _ = writeln!(s, "hidden = {}", h.hidden);
        let _ = writeln!(s, "filters = {}", h.filters);
        let _ = writeln!(s, "filter_width = {}", h.filter_width);
        let _ = writeln!(s, "explore_samples = {}", self.explore_samples);
        let _ = writeln!(
            s,
            "shaper_fracs = {}",
            self.shaper_fracs
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(s, "shaper_quantum = {}", self.shaper_quantum);
        let _ = writeln!(s, "write_period_us = {}", self.write_period_us);
        let _ = writeln!(s, "cycle_cap_factor = {}", self.cycle_cap_factor);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_render() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("models", "alexnet,vgg16").unwrap();
        cfg.set("detector_c", "2.5").unwrap();
        cfg.set("seed", "99").unwrap();
        let rendered = cfg.render();
        let dir = std::env::temp_dir().join("npuscope-cfg-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.txt");
        std::fs::write(&path, &rendered).unwrap();
        let back = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("bogus", "1").is_err());
    }
}
