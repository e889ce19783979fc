//! Binary checkpoint files for resumable runs.
//!
//! Layout (little-endian):
//!
//! ```text
//! "KLCK" | version u32 | config hash [32] | payload length u64 | payload sha256 [32] | payload
//! ```
//!
//! The payload holds the effective config text, the iteration count, the
//! recorded series, and either every trajectory (stream id, outcome tally,
//! amplitudes) or the density matrix. RNG positions need no storage: draws
//! are keyed by `(seed, stream id, step)`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::config::EnsembleConfig;
use crate::error::{Error, Result};
use crate::observables::{ObservableSeries, SeriesMetadata};
use crate::qstate::{read_amplitudes, write_amplitudes};

const MAGIC: &[u8; 4] = b"KLCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 32 + 8 + 32;

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub stream_id: u64,
    /// Number of measurements that returned 1.
    pub ones: u64,
    pub amplitudes: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnsembleSnapshot {
    Pure(Vec<TrajectoryRecord>),
    Mixed(Vec<Complex64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointData {
    pub config: EnsembleConfig,
    pub t: u64,
    pub next_sample: u64,
    pub series: ObservableSeries,
    pub state: EnsembleSnapshot,
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Checkpoint("payload ends early".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, limit: usize) -> Result<usize> {
        let n = self.u64()?;
        if n > limit as u64 {
            return Err(Error::Checkpoint(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn amplitudes(&mut self, n: usize) -> Result<Vec<Complex64>> {
        let mut raw = self.take(n * 16)?;
        Ok(read_amplitudes(&mut raw, n)?)
    }
}

impl CheckpointData {
    fn payload(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        let text = self.config.canonical_text();
        put_u64(&mut buf, text.len() as u64);
        buf.extend_from_slice(text.as_bytes());
        put_u64(&mut buf, self.t);
        put_u64(&mut buf, self.next_sample);

        let s = &self.series;
        put_u64(&mut buf, s.len() as u64);
        for &t in &s.times {
            put_u64(&mut buf, t);
        }
        put_f64s(&mut buf, &s.second_moment);
        put_f64s(&mut buf, &s.second_moment_stderr);
        put_f64s(&mut buf, &s.ipr);
        put_f64s(&mut buf, &s.norm_check);

        match &self.state {
            EnsembleSnapshot::Pure(trajectories) => {
                buf.push(0);
                put_u64(&mut buf, trajectories.len() as u64);
                for tr in trajectories {
                    put_u64(&mut buf, tr.stream_id);
                    put_u64(&mut buf, tr.ones);
                    write_amplitudes(&mut buf, &tr.amplitudes).expect("Vec write");
                }
            }
            EnsembleSnapshot::Mixed(rho) => {
                buf.push(1);
                write_amplitudes(&mut buf, rho).expect("Vec write");
            }
        }
        buf
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let payload = self.payload();
        let digest: [u8; 32] = Sha256::digest(&payload).into();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.hash());
        put_u64(&mut out, payload.len() as u64);
        out.extend_from_slice(&digest);
        out.extend_from_slice(&payload);
        w.write_all(&out)?;
        Ok(())
    }

    /// Writes to a temporary sibling and renames, so a crash never leaves a
    /// half-written checkpoint under `path`.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            self.write(&mut f)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Parses a checkpoint. With `expected`, refuses one whose config hash differs.
    pub fn read<R: Read>(mut r: R, expected: Option<&EnsembleConfig>) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < HEADER_LEN || &bytes[0..4] != MAGIC {
            return Err(Error::Checkpoint(
                "corrupted header: bad magic or truncated".into(),
            ));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let stored_hash: [u8; 32] = bytes[8..40].try_into().unwrap();
        let payload_len = u64::from_le_bytes(bytes[40..48].try_into().unwrap());
        let digest: [u8; 32] = bytes[48..80].try_into().unwrap();
        let payload = &bytes[HEADER_LEN..];
        if payload.len() as u64 != payload_len {
            return Err(Error::Checkpoint(
                "corrupted header: payload length mismatch".into(),
            ));
        }
        if <[u8; 32]>::from(Sha256::digest(payload)) != digest {
            return Err(Error::Checkpoint(
                "corrupted payload: checksum mismatch".into(),
            ));
        }
        if let Some(expected) = expected {
            if expected.hash() != stored_hash {
                return Err(Error::Config(
                    "checkpoint was written for a different configuration; refusing to resume"
                        .into(),
                ));
            }
        }

        let mut c = Cursor { bytes: payload };
        let text_len = c.len(payload.len())?;
        let text = std::str::from_utf8(c.take(text_len)?)
            .map_err(|_| Error::Checkpoint("config text is not UTF-8".into()))?;
        let mut config = EnsembleConfig::from_kv_str(text)?;
        if config.hash() != stored_hash {
            return Err(Error::Checkpoint(
                "stored config does not match its hash".into(),
            ));
        }
        if let Some(expected) = expected {
            config.checkpoint_every = expected.checkpoint_every;
            config.outdir = expected.outdir.clone();
        }
        let t = c.u64()?;
        let next_sample = c.u64()?;

        let n = c.len(payload.len() / 8)?;
        let mut series = ObservableSeries::new(SeriesMetadata {
            params: config.params,
            spec: config.spec,
            trajectories: config.trajectories,
            master_seed: config.master_seed,
        });
        series.times = (0..n).map(|_| c.u64()).collect::<Result<_>>()?;
        series.second_moment = c.f64s(n)?;
        series.second_moment_stderr = c.f64s(n)?;
        series.ipr = c.f64s(n)?;
        series.norm_check = c.f64s(n)?;

        let dim = config.params.dimension();
        let state = match c.take(1)?[0] {
            0 => {
                let count = c.len(payload.len())?;
                if count != config.trajectories {
                    return Err(Error::Checkpoint(
                        "trajectory count disagrees with config".into(),
                    ));
                }
                let mut trajectories = Vec::with_capacity(count);
                for _ in 0..count {
                    let stream_id = c.u64()?;
                    let ones = c.u64()?;
                    let amplitudes = c.amplitudes(dim)?;
                    trajectories.push(TrajectoryRecord {
                        stream_id,
                        ones,
                        amplitudes,
                    });
                }
                EnsembleSnapshot::Pure(trajectories)
            }
            1 => EnsembleSnapshot::Mixed(c.amplitudes(dim * dim)?),
            other => return Err(Error::Checkpoint(format!("unknown state kind {other}"))),
        };
        if !c.bytes.is_empty() {
            return Err(Error::Checkpoint("trailing bytes after payload".into()));
        }
        Ok(Self {
            config,
            t,
            next_sample,
            series,
            state,
        })
    }

    pub fn read_file(path: &Path, expected: Option<&EnsembleConfig>) -> Result<Self> {
        let f = fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f), expected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{MeasurementBackend, MeasurementSpec};
    use crate::qstate::MapParams;

    fn sample() -> CheckpointData {
        let config = EnsembleConfig::new(
            MapParams::new(2.0, 2.0, 3).unwrap(),
            MeasurementSpec::new(3, MeasurementBackend::Trajectories),
            2,
            100,
            9,
        )
        .unwrap();
        let mut series = ObservableSeries::new(SeriesMetadata {
            params: config.params,
            spec: config.spec,
            trajectories: 2,
            master_seed: 9,
        });
        series.push(0, 0.0, 0.0, 1.0, 0.0);
        series.push(1, 1.25, 0.5, 2.5, 1e-16);
        let amps = |x: f64| {
            (0..8)
                .map(|j| Complex64::new(x * j as f64, -x))
                .collect::<Vec<_>>()
        };
        CheckpointData {
            config,
            t: 1,
            next_sample: 2,
            series,
            state: EnsembleSnapshot::Pure(vec![
                TrajectoryRecord {
                    stream_id: 0,
                    ones: 1,
                    amplitudes: amps(0.1),
                },
                TrajectoryRecord {
                    stream_id: 1,
                    ones: 0,
                    amplitudes: amps(0.2),
                },
            ]),
        }
    }

    #[test]
    fn round_trip() {
        let data = sample();
        let mut bytes = Vec::new();
        data.write(&mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"KLCK");
        let back = CheckpointData::read(&bytes[..], Some(&data.config)).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn corrupted_header_is_rejected() {
        let mut bytes = Vec::new();
        sample().write(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(
            CheckpointData::read(&bad[..], None),
            Err(Error::Checkpoint(_))
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            CheckpointData::read(&bad[..], None),
            Err(Error::Checkpoint(_))
        ));
        let mut bad = bytes.clone();
        let last = bad.len() - 1;
        bad[last] ^= 0xFF;
        assert!(matches!(
            CheckpointData::read(&bad[..], None),
            Err(Error::Checkpoint(_))
        ));
        assert!(CheckpointData::read(&bytes[..60], None).is_err());
    }

    #[test]
    fn altered_config_is_refused() {
        let data = sample();
        let mut bytes = Vec::new();
        data.write(&mut bytes).unwrap();
        let mut other = data.config.clone();
        other.params.k = 2.5;
        assert!(matches!(
            CheckpointData::read(&bytes[..], Some(&other)),
            Err(Error::Config(_))
        ));
    }
}
