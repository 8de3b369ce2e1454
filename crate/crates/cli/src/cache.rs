//! Memoised mean-power evaluations, keyed by parameter hash and simulation
//! settings hash.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use harvest_sa_core::analysis::{simulate_mean_power, QoiOptions};
use harvest_sa_core::error::Result;
use harvest_sa_core::model::{HarvesterParams, Param};

use crate::config::hex_digest;

pub struct MeanPowerCache {
    map: Mutex<HashMap<(String, String), f64>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Default for MeanPowerCache {
    fn default() -> Self {
        Self::new()
    }
}

/// Hash of the exact bit patterns of every harvester parameter.
pub fn params_hash(prm: &HarvesterParams) -> String {
    let bytes: Vec<u8> = Param::ALL
        .iter()
        .flat_map(|&p| prm.get(p).to_bits().to_le_bytes())
        .collect();
    hex_digest(&bytes)
}

pub fn settings_hash(opts: &QoiOptions) -> String {
    hex_digest(format!("{opts:?}").as_bytes())
}

impl MeanPowerCache {
    pub fn new() -> Self {
        Self {
            map: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// Mean power of `prm` under `opts`, simulated at most once per key.
    /// Failures are not cached.
    pub fn mean_power(&self, prm: &HarvesterParams, opts: &QoiOptions) -> Result<f64> {
        let key = (params_hash(prm), settings_hash(opts));
        if let Some(&v) = self.map.lock().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let v = simulate_mean_power(prm, opts)?;
        self.map.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    /// Simulations run through the cache.
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }
}
