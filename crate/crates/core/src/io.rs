//! File formats: the SND1 grid container and CSV views of the series types.
//!
//! SND1 layout: an 8-byte magic `"SND1\r\n\x1a\n"`, a little-endian u32
//! header length, a UTF-8 JSON header (metadata, sample dtype, layout,
//! optional drift provenance), then raw interleaved samples in k-major
//! order (subcarrier outer, symbol inner). Samples are `complex64`
//! (f32 pairs) by default or `complex128` (f64 pairs).

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::compensate::{CompensationSeries, GroundTruthLos, Trajectory};
use crate::drift::DriftProfile;
use crate::error::{Error, Result};
use crate::grid::{GridMeta, PathSet, SoundingGrid};
use crate::metrics::TargetTruth;
use crate::tracker::LosTrack;

pub const SND1_MAGIC: [u8; 8] = *b"SND1\r\n\x1a\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleFormat {
    #[serde(rename = "complex64")]
    Complex64,
    #[serde(rename = "complex128")]
    Complex128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snd1Header {
    format: String,
    dtype: SampleFormat,
    layout: String,
    meta: GridMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    applied_drift: Option<DriftProfile>,
}

/// Header fields that travel with a grid file.
#[derive(Debug, Clone)]
pub struct Snd1Info {
    pub dtype: SampleFormat,
    pub applied_drift: Option<DriftProfile>,
}

pub fn write_snd1(
    path: &Path,
    grid: &SoundingGrid,
    dtype: SampleFormat,
    applied_drift: Option<&DriftProfile>,
) -> Result<()> {
    let header = Snd1Header {
        format: "SND1".into(),
        dtype,
        layout: "k-major".into(),
        meta: grid.meta.clone(),
        applied_drift: applied_drift.cloned(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&SND1_MAGIC)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    match dtype {
        SampleFormat::Complex64 => {
            for c in grid.data.iter() {
                w.write_all(&(c.re as f32).to_le_bytes())?;
                w.write_all(&(c.im as f32).to_le_bytes())?;
            }
        }
        SampleFormat::Complex128 => {
            for c in grid.data.iter() {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snd1(path: &Path) -> Result<(SoundingGrid, Snd1Info)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != SND1_MAGIC {
        return Err(Error::Format(format!("{}: bad SND1 magic", path.display())));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: Snd1Header = serde_json::from_slice(&header_bytes)?;
    if header.layout != "k-major" {
        return Err(Error::Format(format!(
            "unsupported layout '{}'",
            header.layout
        )));
    }
    header.meta.validate()?;

    let n = header.meta.num_subcarriers * header.meta.num_symbols;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let sample_bytes = match header.dtype {
        SampleFormat::Complex64 => 8,
        SampleFormat::Complex128 => 16,
    };
    if payload.len() != n * sample_bytes {
        return Err(Error::Format(format!(
            "payload holds {} bytes, expected {}",
            payload.len(),
            n * sample_bytes
        )));
    }

    let mut samples = Vec::with_capacity(n);
    match header.dtype {
        SampleFormat::Complex64 => {
            for chunk in payload.chunks_exact(8) {
                let re = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
                samples.push(Complex64::new(re as f64, im as f64));
            }
        }
        SampleFormat::Complex128 => {
            for chunk in payload.chunks_exact(16) {
                let re = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
                let im = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
                samples.push(Complex64::new(re, im));
            }
        }
    }
    let data = Array2::from_shape_vec(
        (header.meta.num_subcarriers, header.meta.num_symbols),
        samples,
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    let grid = SoundingGrid::new(header.meta, data)?;
    Ok((
        grid,
        Snd1Info {
            dtype: header.dtype,
            applied_drift: header.applied_drift,
        },
    ))
}

// ---------------------------------------------------------------------------
// CSV views
// ---------------------------------------------------------------------------

pub fn write_drift_profile_csv(path: &Path, profile: &DriftProfile) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["symbol", "mu", "nu"])?;
    for l in 0..profile.len() {
        w.write_record([
            l.to_string(),
            profile.mu[l].to_string(),
            profile.nu[l].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_drift_profile_csv(path: &Path) -> Result<DriftProfile> {
    let mut r = csv::Reader::from_path(path)?;
    let mut mu = Vec::new();
    let mut nu = Vec::new();
    for record in r.records() {
        let record = record?;
        mu.push(parse_field(&record, 1)?);
        nu.push(parse_field(&record, 2)?);
    }
    Ok(DriftProfile { mu, nu })
}

pub fn write_path_set_csv(path: &Path, set: &PathSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "delay", "doppler", "weight_re", "weight_im"])?;
    for (i, p) in set.paths.iter().enumerate() {
        w.write_record([
            i.to_string(),
            p.delay.to_string(),
            p.doppler.to_string(),
            p.weight.re.to_string(),
            p.weight.im.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write a collection of path sets (per symbol or per interval) with the
/// owning set index in the first column.
pub fn write_path_sets_csv(path: &Path, sets: &[PathSet]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["set", "index", "delay", "doppler", "weight_re", "weight_im"])?;
    for set in sets {
        for (i, p) in set.paths.iter().enumerate() {
            w.write_record([
                set.index.to_string(),
                i.to_string(),
                p.delay.to_string(),
                p.doppler.to_string(),
                p.weight.re.to_string(),
                p.weight.im.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_los_track_csv(path: &Path, track: &LosTrack) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "symbol",
        "delay",
        "weight_re",
        "weight_im",
        "chosen",
        "coasted",
    ])?;
    for l in 0..track.len() {
        let chosen = track.chosen[l].map(|i| i as i64).unwrap_or(-1);
        w.write_record([
            l.to_string(),
            track.delays[l].to_string(),
            track.weights[l].re.to_string(),
            track.weights[l].im.to_string(),
            chosen.to_string(),
            (track.coasted[l] as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_compensation_csv(path: &Path, corr: &CompensationSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["symbol", "delta_tau", "delta_phi"])?;
    for l in 0..corr.len() {
        w.write_record([
            l.to_string(),
            corr.delta_tau[l].to_string(),
            corr.delta_phi[l].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_compensation_csv(path: &Path) -> Result<CompensationSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let mut delta_tau = Vec::new();
    let mut delta_phi = Vec::new();
    for record in r.records() {
        let record = record?;
        delta_tau.push(parse_field(&record, 1)?);
        delta_phi.push(parse_field(&record, 2)?);
    }
    Ok(CompensationSeries {
        delta_tau,
        delta_phi,
    })
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "x", "y", "z"])?;
    for (t, p) in traj.times_s.iter().zip(traj.positions.iter()) {
        w.write_record([
            t.to_string(),
            p[0].to_string(),
            p[1].to_string(),
            p[2].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path)?;
    let mut times_s = Vec::new();
    let mut positions = Vec::new();
    for record in r.records() {
        let record = record?;
        times_s.push(parse_field(&record, 0)?);
        positions.push([
            parse_field(&record, 1)?,
            parse_field(&record, 2)?,
            parse_field(&record, 3)?,
        ]);
    }
    let traj = Trajectory { times_s, positions };
    traj.validate()?;
    Ok(traj)
}

pub fn write_ground_truth_csv(path: &Path, truth: &GroundTruthLos) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["symbol", "delay", "phase_rad"])?;
    for l in 0..truth.len() {
        w.write_record([
            l.to_string(),
            truth.delays[l].to_string(),
            truth.phases_rad[l].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ground_truth_csv(path: &Path) -> Result<GroundTruthLos> {
    let mut r = csv::Reader::from_path(path)?;
    let mut delays = Vec::new();
    let mut phases = Vec::new();
    for record in r.records() {
        let record = record?;
        delays.push(parse_field(&record, 1)?);
        phases.push(parse_field(&record, 2)?);
    }
    Ok(GroundTruthLos {
        delays,
        phases_rad: phases,
    })
}

pub fn write_target_truth_csv(path: &Path, truth: &TargetTruth) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["interval", "target", "delay", "doppler"])?;
    for (s, targets) in truth.per_interval.iter().enumerate() {
        for (t, &(delay, doppler)) in targets.iter().enumerate() {
            w.write_record([
                s.to_string(),
                t.to_string(),
                delay.to_string(),
                doppler.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_target_truth_csv(path: &Path) -> Result<TargetTruth> {
    let mut r = csv::Reader::from_path(path)?;
    let mut per_interval: Vec<Vec<(f64, f64)>> = Vec::new();
    for record in r.records() {
        let record = record?;
        let interval: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad interval column".into()))?;
        while per_interval.len() <= interval {
            per_interval.push(Vec::new());
        }
        per_interval[interval].push((parse_field(&record, 2)?, parse_field(&record, 3)?));
    }
    Ok(TargetTruth { per_interval })
}

fn parse_field(record: &csv::StringRecord, idx: usize) -> Result<f64> {
    record
        .get(idx)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad numeric field at column {idx}")))
}

/// SHA-256 of a file's bytes as lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// SHA-256 of an in-memory byte slice as lowercase hex.
pub fn sha256_bytes(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
