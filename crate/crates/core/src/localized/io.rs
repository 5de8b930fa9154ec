//! Localized policies on disk: one binary table per device plus a JSON manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synth::{DeviceTables, LocalizedPolicy};
use super::Layout;
use crate::error::{Error, Result};
use crate::mdp::table_io::{Payload, Table, TableKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DeviceEntry {
    device: usize,
    members: Vec<usize>,
    components: Vec<usize>,
    radices: Vec<usize>,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    kappa: usize,
    gamma: f64,
    rounds: usize,
    horizon: usize,
    n_actions: usize,
    topology_hash: String,
    config_hash: String,
    devices: Vec<DeviceEntry>,
}

const MANIFEST: &str = "manifest.json";

/// Writes `dir/manifest.json` and `dir/device_<i>.bin`.
pub fn save_policy(policy: &LocalizedPolicy, dir: &Path, topology_hash: &str, config_hash: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let horizon = policy.horizon_len();
    let mut devices = Vec::new();
    for (i, d) in policy.devices.iter().enumerate() {
        let file = format!("device_{i}.bin");
        Table {
            kind: TableKind::LocalPolicy,
            horizon: horizon as u32,
            dims: vec![d.n_states() as u64, policy.n_actions as u64],
            payload: Payload::F64(d.tables.concat()),
        }
        .save(&dir.join(&file))?;
        devices.push(DeviceEntry {
            device: i,
            members: d.members.clone(),
            components: d.components().to_vec(),
            radices: d.radices().to_vec(),
            file,
        });
    }
    let manifest = Manifest {
        kind: "localized".into(),
        kappa: policy.kappa,
        gamma: policy.gamma,
        rounds: policy.rounds,
        horizon,
        n_actions: policy.n_actions,
        topology_hash: topology_hash.into(),
        config_hash: config_hash.into(),
        devices,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Loads a policy written by [`save_policy`]; returns it with the stored topology hash.
pub fn load_policy(dir: &Path) -> Result<(LocalizedPolicy, String)> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |reason: String| Error::Format {
        path: path.clone(),
        reason,
    };
    let man: Manifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let mut devices = Vec::new();
    for (i, d) in man.devices.iter().enumerate() {
        if d.device != i || d.components.len() != d.radices.len() {
            return Err(bad(format!("device entry {i} is malformed")));
        }
        let layout = Layout::new(d.components.clone(), d.radices.clone());
        let table = Table::load(&dir.join(&d.file))?;
        let dims_ok = table.dims == [layout.size as u64, man.n_actions as u64] && table.horizon as usize == man.horizon;
        let Payload::F64(flat) = table.payload else {
            return Err(bad(format!("{} holds integers", d.file)));
        };
        if table.kind != TableKind::LocalPolicy || !dims_ok {
            return Err(bad(format!("{} does not match the manifest", d.file)));
        }
        let per = layout.size * man.n_actions;
        let tables = if per == 0 { vec![Vec::new(); man.horizon] } else { flat.chunks(per).map(<[f64]>::to_vec).collect() };
        devices.push(DeviceTables {
            members: d.members.clone(),
            layout,
            tables,
        });
    }
    let policy = LocalizedPolicy::from_parts(man.kappa, man.gamma, man.rounds, man.n_actions, devices);
    Ok((policy, man.topology_hash))
}
