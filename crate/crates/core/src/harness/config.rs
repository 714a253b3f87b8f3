//! Flat `key = value` configuration files.
//!
//! Durations are milliseconds and powers milliwatts. Blank lines and `#`
//! comments are ignored; missing keys keep the standard profile values.
//!
//! ```text
//! # 250 ms frame, 10 % idle duty cycle
//! t_listen_ms = 25
//! t_sleep_ms = 225
//! n_devices = 9
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::params::{
    validate, ConfigError, NetworkScenario, Protocol, RadioPowerProfile, TimingProfile, ValidConfig,
};

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` is set twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: `{value}` is not a valid value for `{key}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

/// Every recognised key, in the order [`render`] writes them.
pub const KEYS: [&str; 16] = [
    "t_frame_ms",
    "t_listen_ms",
    "t_sleep_ms",
    "t_data_ms",
    "bmac_preamble_ms",
    "xmac_preamble_ms",
    "xmac_ack_ms",
    "xmac_backoff_ms",
    "lamac_preamble_ms",
    "lamac_ack_ms",
    "lamac_schedule_ms",
    "p_tx_mw",
    "p_rx_mw",
    "p_poll_mw",
    "p_sleep_mw",
    "n_devices",
];

/// Network size used when the file does not set `n_devices`.
pub const DEFAULT_DEVICES: usize = 9;

/// Parses configuration text into a validated base config (B-MAC, B = 0;
/// commands swap in their own protocol and backlog).
pub fn parse(text: &str) -> Result<ValidConfig, ConfigFileError> {
    let mut values: [Option<f64>; 15] = [None; 15];
    let mut n_devices: Option<usize> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| ConfigFileError::Syntax {
                line,
                text: raw.trim().to_string(),
            })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = || ConfigFileError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        let dup = || ConfigFileError::Duplicate {
            line,
            key: key.to_string(),
        };
        if key == "n_devices" {
            if n_devices
                .replace(value.parse().map_err(|_| bad())?)
                .is_some()
            {
                return Err(dup());
            }
            continue;
        }
        let slot = KEYS[..15].iter().position(|k| *k == key).ok_or_else(|| {
            ConfigFileError::UnknownKey {
                line,
                key: key.to_string(),
            }
        })?;
        let v: f64 = value.parse().map_err(|_| bad())?;
        if !v.is_finite() {
            return Err(bad());
        }
        if values[slot].replace(v).is_some() {
            return Err(dup());
        }
    }

    let ms = |i: usize| values[i].map(|v| v / 1000.0);
    let mw = |i: usize| values[i].map(|v| v / 1000.0);
    let base = TimingProfile::with_frame(
        ms(1).unwrap_or(TimingProfile::standard().t_listen),
        ms(2).unwrap_or(TimingProfile::standard().t_sleep),
    );
    let t_frame = ms(0).unwrap_or(base.t_frame);
    let timing = TimingProfile {
        t_frame,
        t_data: ms(3).unwrap_or(base.t_data),
        // The long preamble follows the frame unless set explicitly.
        bmac_preamble: ms(4).unwrap_or(t_frame),
        xmac_preamble: ms(5).unwrap_or(base.xmac_preamble),
        xmac_ack: ms(6).unwrap_or(base.xmac_ack),
        xmac_backoff: ms(7).unwrap_or(base.xmac_backoff),
        lamac_preamble: ms(8).unwrap_or(base.lamac_preamble),
        lamac_ack: ms(9).unwrap_or(base.lamac_ack),
        lamac_schedule: ms(10).unwrap_or(base.lamac_schedule),
        ..base
    };
    let d = RadioPowerProfile::cc1100();
    let power = RadioPowerProfile {
        p_tx: mw(11).unwrap_or(d.p_tx),
        p_rx: mw(12).unwrap_or(d.p_rx),
        p_poll: mw(13).unwrap_or(d.p_poll),
        p_sleep: mw(14).unwrap_or(d.p_sleep),
    };
    let scenario = NetworkScenario::new(Protocol::Bmac, n_devices.unwrap_or(DEFAULT_DEVICES), 0);
    Ok(validate(power, timing, scenario)?)
}

pub fn load(path: &Path) -> Result<ValidConfig, ConfigFileError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text)
}

/// The standard profile with nine senders.
pub fn standard() -> ValidConfig {
    parse("").expect("standard profile is valid")
}

/// Canonical text for a config: every key, fixed order, shortest
/// round-trip numbers. Parsing it back yields the same config.
pub fn render(cfg: &ValidConfig) -> String {
    let t = cfg.timing();
    let p = cfg.power();
    let vals = [
        t.t_frame,
        t.t_listen,
        t.t_sleep,
        t.t_data,
        t.bmac_preamble,
        t.xmac_preamble,
        t.xmac_ack,
        t.xmac_backoff,
        t.lamac_preamble,
        t.lamac_ack,
        t.lamac_schedule,
        p.p_tx,
        p.p_rx,
        p.p_poll,
        p.p_sleep,
    ];
    let mut out = String::new();
    for (key, v) in KEYS.iter().zip(vals) {
        out.push_str(&format!("{key} = {:?}\n", v * 1000.0));
    }
    out.push_str(&format!("n_devices = {}\n", cfg.scenario().n_devices));
    out
}

/// SHA-256 of the canonical rendering, hex encoded. Protocol and backlog
/// are not part of it.
pub fn config_hash(cfg: &ValidConfig) -> String {
    let digest = Sha256::digest(render(cfg).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
