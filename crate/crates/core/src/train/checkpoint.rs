//! Policy checkpoints.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic      8 bytes  "SEATRPOL"
//! version    u32
//! n_sizes    u32, then n_sizes x u32 layer sizes
//! n_params   u64, then n_params x f64 actor parameters (row-major per layer)
//! n_log_std  u32, then n_log_std x f64
//! obs_scale  9 x f64
//! limits     5 x f64  (v_min, v_max, omega_max, a_max, alpha_max)
//! ```
//!
//! A text sidecar `<file>.meta` holds `key = value` lines with the seed, the
//! training step count and the config hash.

use std::fs;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use super::mlp::Mlp;
use super::ppo::GaussianPolicy;
use super::TrainError;
use crate::dynamics::VesselLimits;
use crate::env::OBS_DIM;

pub const MAGIC: &[u8; 8] = b"SEATRPOL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub steps: usize,
    pub config_hash: String,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn encode_policy(policy: &GaussianPolicy) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let sizes = policy.actor.sizes();
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    let params = policy.actor.params();
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out.extend_from_slice(&(policy.log_std.len() as u32).to_le_bytes());
    for p in &policy.log_std {
        out.extend_from_slice(&p.to_le_bytes());
    }
    for p in &policy.obs_scale {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let l = &policy.limits;
    for p in [l.v_min, l.v_max, l.omega_max, l.a_max, l.alpha_max] {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn format_err(msg: impl Into<String>) -> TrainError {
    TrainError::Format(msg.into())
}

fn read_u32(c: &mut Cursor<&[u8]>) -> Result<u32, TrainError> {
    let mut b = [0u8; 4];
    c.read_exact(&mut b).map_err(|_| format_err("truncated checkpoint"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(c: &mut Cursor<&[u8]>) -> Result<u64, TrainError> {
    let mut b = [0u8; 8];
    c.read_exact(&mut b).map_err(|_| format_err("truncated checkpoint"))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(c: &mut Cursor<&[u8]>, n: usize) -> Result<Vec<f64>, TrainError> {
    let remaining = c.get_ref().len() as u64 - c.position();
    if (n as u64).saturating_mul(8) > remaining {
        return Err(format_err("truncated checkpoint"));
    }
    (0..n).map(|_| read_u64(c).map(f64::from_bits)).collect()
}

pub fn decode_policy(bytes: &[u8]) -> Result<GaussianPolicy, TrainError> {
    let mut c = Cursor::new(bytes);
    let mut magic = [0u8; 8];
    c.read_exact(&mut magic).map_err(|_| format_err("truncated checkpoint"))?;
    if &magic != MAGIC {
        return Err(format_err("not a policy checkpoint"));
    }
    let version = read_u32(&mut c)?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported checkpoint version {version}")));
    }
    let n_sizes = read_u32(&mut c)? as usize;
    if n_sizes > 64 {
        return Err(format_err("implausible layer count"));
    }
    let sizes = (0..n_sizes).map(|_| read_u32(&mut c).map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
    if sizes.first() != Some(&OBS_DIM) {
        return Err(format_err(format!("actor input size {:?}, expected {OBS_DIM}", sizes.first())));
    }
    let n_params = read_u64(&mut c)? as usize;
    let params = read_f64s(&mut c, n_params)?;
    let actor = Mlp::from_params(&sizes, params).ok_or_else(|| format_err("parameter count does not match layer sizes"))?;
    let n_log_std = read_u32(&mut c)? as usize;
    if n_log_std != actor.output_dim() {
        return Err(format_err("log_std length does not match actor output"));
    }
    let log_std = read_f64s(&mut c, n_log_std)?;
    let scale = read_f64s(&mut c, OBS_DIM)?;
    let l = read_f64s(&mut c, 5)?;
    if c.position() as usize != bytes.len() {
        return Err(format_err("trailing bytes after checkpoint"));
    }
    let limits = VesselLimits { v_min: l[0], v_max: l[1], omega_max: l[2], a_max: l[3], alpha_max: l[4] };
    let obs_scale: [f64; OBS_DIM] = scale.try_into().expect("length checked");
    Ok(GaussianPolicy::new(actor, log_std, obs_scale, limits))
}

pub fn save_checkpoint(path: &Path, policy: &GaussianPolicy, meta: &CheckpointMeta) -> Result<(), TrainError> {
    fs::write(path, encode_policy(policy))?;
    let text = format!(
        "format_version = {FORMAT_VERSION}\nseed = {}\nsteps = {}\nconfig_hash = {}\n",
        meta.seed, meta.steps, meta.config_hash
    );
    fs::write(meta_path(path), text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<GaussianPolicy, TrainError> {
    decode_policy(&fs::read(path)?)
}

pub fn load_meta(path: &Path) -> Result<CheckpointMeta, TrainError> {
    let text = fs::read_to_string(meta_path(path))?;
    let mut seed = None;
    let mut steps = None;
    let mut hash = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| format_err(format!("bad meta line {line:?}")))?;
        let v = v.trim();
        match k.trim() {
            "seed" => seed = v.parse().ok(),
            "steps" => steps = v.parse().ok(),
            "config_hash" => hash = Some(v.to_string()),
            "format_version" => {}
            other => return Err(format_err(format!("unknown meta key {other:?}"))),
        }
    }
    match (seed, steps, hash) {
        (Some(seed), Some(steps), Some(config_hash)) => Ok(CheckpointMeta { seed, steps, config_hash }),
        _ => Err(format_err("incomplete meta file")),
    }
}
