//! Checkpoint file: one line of JSON header, then the parameters and the
//! Adam moments as little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::regressor::RegressorModel;
use crate::losses::RegimeConfig;
use crate::{Error, Result};

const FORMAT: &str = "ffd-regressor/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub feature_dim: usize,
    pub hidden: usize,
    pub templates: usize,
    pub control_points: usize,
    pub degrees: [usize; 3],
    pub head_width: usize,
    pub param_count: usize,
    pub parameter_order: String,
    /// Payload after the parameters: first then second Adam moments.
    pub payload: String,
    pub regime: RegimeConfig,
    /// FNV-1a hash of the regime JSON.
    pub config_hash: String,
    pub adam: AdamConfig,
    pub step: u64,
}

/// 64-bit FNV-1a, used only to fingerprint configs.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn save_checkpoint(
    path: &Path,
    model: &RegressorModel,
    adam: &AdamState,
    regime: &RegimeConfig,
    degrees: [usize; 3],
) -> Result<()> {
    let header = CheckpointHeader {
        format: FORMAT.into(),
        feature_dim: model.feature_dim,
        hidden: model.hidden,
        templates: model.templates,
        control_points: model.control_points,
        degrees,
        head_width: model.head_width(),
        param_count: model.param_count(),
        parameter_order: "W1[H x D row-major], b1[H], then per template: W2[(3M+1) x H row-major], b2[3M+1]".into(),
        payload: "params, adam m, adam v; little-endian f64".into(),
        regime: *regime,
        config_hash: format!("{:016x}", fnv1a(regime.to_json().as_bytes())),
        adam: adam.config,
        step: adam.step,
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for values in [&model.params, &adam.m, &adam.v] {
        for v in values.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, RegressorModel, AdamState)> {
    let bytes = fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(path, 1, "missing header line"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])?;
    if header.format != FORMAT {
        return Err(Error::parse(path, 1, format!("unknown format '{}'", header.format)));
    }
    let payload = &bytes[newline + 1..];
    let n = header.param_count;
    if payload.len() != 3 * n * 8 {
        return Err(Error::parse(path, 2, format!("expected {} payload bytes, got {}", 3 * n * 8, payload.len())));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |k: usize| -> Vec<f64> { values.by_ref().take(k).collect() };
    let model = RegressorModel {
        feature_dim: header.feature_dim,
        hidden: header.hidden,
        templates: header.templates,
        control_points: header.control_points,
        params: take(n),
    };
    if model.param_count() != n {
        return Err(Error::DimensionMismatch("header dimensions disagree with parameter count".into()));
    }
    let adam = AdamState { config: header.adam, step: header.step, m: take(n), v: take(n) };
    Ok((header, model, adam))
}
