use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::adam::Adam;
use super::layers::ParamSet;

pub const CHECKPOINT_SCHEMA_VERSION: u64 = 1;

/// On-disk model state: architecture, parameters, optimizer moments and counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u64,
    pub kind: String,
    pub arch: serde_json::Value,
    pub params: ParamSet,
    pub optimizer: Option<Adam>,
    pub counters: BTreeMap<String, u64>,
    /// Free-form payload such as training history needed to resume.
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Checkpoint {
    pub fn new(kind: &str, arch: serde_json::Value, params: &ParamSet) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            kind: kind.to_string(),
            arch,
            params: params.clone(),
            optimizer: None,
            counters: BTreeMap::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if !self.params.all_finite() {
            return Err(Error::NonFinite("checkpoint parameters"));
        }
        let text = serde_json::to_string(self).map_err(|e| Error::malformed(path, e))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::malformed(path, e))?;
        let found = v
            .get("schema_version")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| Error::malformed(path, "missing schema_version"))?;
        if found != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found, expected: CHECKPOINT_SCHEMA_VERSION });
        }
        let mut ck: Checkpoint = serde_json::from_value(v).map_err(|e| Error::malformed(path, e))?;
        ck.params.zero_grad();
        Ok(ck)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Config(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mlp;
    use crate::rng::rng_from;

    #[test]
    fn round_trip_is_lossless() {
        let mut ps = ParamSet::new(3);
        let _ = Mlp::new(&mut ps, "m", &[5, 7, 2], false, &mut rng_from(3));
        let mut ck = Checkpoint::new("test", serde_json::json!({"sizes": [5, 7, 2]}), &ps);
        let mut opt = Adam::new(&ps, 1e-3, Some(0.5));
        ps.params[0].grad.iter_mut().for_each(|g| *g = 0.123456789);
        opt.step(&mut ps);
        ck.params = ps.clone();
        ck.optimizer = Some(opt);
        ck.counters.insert("update".into(), 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.params.flat_values(), ck.params.flat_values());
        assert_eq!(back.optimizer, ck.optimizer);
        assert_eq!(back.counters, ck.counters);
        for (a, b) in back.params.flat_values().iter().zip(ck.params.flat_values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
