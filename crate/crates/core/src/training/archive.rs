//! Demonstration archive.
//!
//! ```text
//! "SNDA" | u32 header length | JSON header
//! per episode: u32+bytes id | u32+bytes condition | u32 steps | steps × (v, w)
//!              u32 records | records × (u32 payload length | payload)
//! sha256 of everything above
//! ```
//!
//! All numbers are little endian; floats are f64.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::worldsim::{Pose2D, Twist};

use super::TrainError;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"SNDA";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub history_k: usize,
    pub beams: usize,
    pub episodes: usize,
    pub records: usize,
}

/// One expert sample at the history rate.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoRecord {
    /// Physics step index of the sample within its episode.
    pub step: u32,
    pub time: f64,
    pub pose: Pose2D,
    pub odom: Twist,
    /// Raw lidar ranges, m.
    pub ranges: Vec<f64>,
    /// Robot-frame pedestrian histories, one row of `2k` per person.
    pub humans: Vec<Vec<f64>>,
    /// Downsampled plan `G` in the robot frame.
    pub plan: Vec<f64>,
    /// GC subgoal in the robot frame.
    pub subgoal: [f64; 2],
    pub expert_cmd: Twist,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoEpisode {
    pub scenario: String,
    pub condition: String,
    /// Command applied on every physics step, in order.
    pub steps: Vec<Twist>,
    pub records: Vec<DemoRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoArchive {
    pub header: ArchiveHeader,
    pub episodes: Vec<DemoEpisode>,
}

impl DemoArchive {
    pub fn new(seed: u64, config_hash: &str, history_k: usize, beams: usize, episodes: Vec<DemoEpisode>) -> Self {
        let records = episodes.iter().map(|e| e.records.len()).sum();
        Self {
            header: ArchiveHeader {
                version: ARCHIVE_VERSION,
                seed,
                config_hash: config_hash.to_string(),
                history_k,
                beams,
                episodes: episodes.len(),
                records,
            },
            episodes,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ARCHIVE_MAGIC);
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        put_u32(&mut out, header.len() as u32);
        out.extend_from_slice(&header);
        for ep in &self.episodes {
            put_str(&mut out, &ep.scenario);
            put_str(&mut out, &ep.condition);
            put_u32(&mut out, ep.steps.len() as u32);
            for s in &ep.steps {
                put_f64(&mut out, s.v);
                put_f64(&mut out, s.w);
            }
            put_u32(&mut out, ep.records.len() as u32);
            for r in &ep.records {
                let payload = encode_record(r);
                put_u32(&mut out, payload.len() as u32);
                out.extend_from_slice(&payload);
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TrainError> {
        let corrupt = |what: String| TrainError::Archive { record: None, what };
        if bytes.len() < 4 + 4 + 32 || &bytes[..4] != ARCHIVE_MAGIC {
            return Err(corrupt("not a demo archive".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader { buf: body, pos: 4 };
        let header_len = r.u32().map_err(corrupt)? as usize;
        let header: ArchiveHeader =
            serde_json::from_slice(r.take(header_len).map_err(corrupt)?).map_err(|e| corrupt(format!("header: {e}")))?;
        if header.version != ARCHIVE_VERSION {
            return Err(corrupt(format!("unsupported archive version {}", header.version)));
        }
        let mut episodes = Vec::with_capacity(header.episodes);
        let mut index = 0usize;
        for _ in 0..header.episodes {
            let scenario = r.string().map_err(corrupt)?;
            let condition = r.string().map_err(corrupt)?;
            let n_steps = r.u32().map_err(corrupt)? as usize;
            let mut steps = Vec::with_capacity(n_steps.min(1 << 20));
            for _ in 0..n_steps {
                let v = r.f64().map_err(corrupt)?;
                let w = r.f64().map_err(corrupt)?;
                steps.push(Twist::new(v, w));
            }
            let n_records = r.u32().map_err(corrupt)? as usize;
            let mut records = Vec::with_capacity(n_records.min(1 << 20));
            for _ in 0..n_records {
                let bad = |what: String| TrainError::Archive {
                    record: Some(index),
                    what,
                };
                let len = r.u32().map_err(bad)? as usize;
                let payload = r.take(len).map_err(bad)?;
                records.push(decode_record(payload, header.beams, header.history_k).map_err(bad)?);
                index += 1;
            }
            episodes.push(DemoEpisode {
                scenario,
                condition,
                steps,
                records,
            });
        }
        if r.pos != body.len() {
            return Err(corrupt(format!("{} trailing bytes", body.len() - r.pos)));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch".into()));
        }
        if index != header.records {
            return Err(corrupt(format!("header lists {} records, found {index}", header.records)));
        }
        Ok(Self { header, episodes })
    }

    pub fn write(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.encode()).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, TrainError> {
        let bytes = std::fs::read(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Self::decode(&bytes)
    }
}

fn encode_record(r: &DemoRecord) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, r.step);
    for x in [r.time, r.pose.x, r.pose.y, r.pose.theta, r.odom.v, r.odom.w] {
        put_f64(&mut out, x);
    }
    put_u32(&mut out, r.ranges.len() as u32);
    r.ranges.iter().for_each(|&x| put_f64(&mut out, x));
    put_u32(&mut out, r.humans.len() as u32);
    r.humans.iter().flatten().for_each(|&x| put_f64(&mut out, x));
    put_u32(&mut out, r.plan.len() as u32);
    r.plan.iter().for_each(|&x| put_f64(&mut out, x));
    for x in [r.subgoal[0], r.subgoal[1], r.expert_cmd.v, r.expert_cmd.w] {
        put_f64(&mut out, x);
    }
    out
}

fn decode_record(buf: &[u8], beams: usize, k: usize) -> Result<DemoRecord, String> {
    let mut r = Reader { buf, pos: 0 };
    let step = r.u32()?;
    let mut head = [0.0; 6];
    for h in &mut head {
        *h = r.f64()?;
    }
    let n = r.u32()? as usize;
    if n != beams {
        return Err(format!("{n} lidar ranges, archive declares {beams}"));
    }
    let ranges = r.f64s(n)?;
    let people = r.u32()? as usize;
    let mut humans = Vec::with_capacity(people.min(1024));
    for _ in 0..people {
        humans.push(r.f64s(2 * k)?);
    }
    let n_plan = r.u32()? as usize;
    let plan = r.f64s(n_plan)?;
    let tail = r.f64s(4)?;
    if r.pos != buf.len() {
        return Err("record length mismatch".into());
    }
    let all_finite = head.iter().chain(&ranges).chain(humans.iter().flatten()).chain(&plan).chain(&tail).all(|x| x.is_finite());
    if !all_finite {
        return Err("non-finite value".into());
    }
    Ok(DemoRecord {
        step,
        time: head[0],
        pose: Pose2D::new(head[1], head[2], head[3]),
        odom: Twist::new(head[4], head[5]),
        ranges,
        humans,
        plan,
        subgoal: [tail[0], tail[1]],
        expert_cmd: Twist::new(tail[2], tail[3]),
    })
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, x: f64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.buf.len() - self.pos < n {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, String> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn string(&mut self) -> Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
}
