//! Clip binary format, dataset manifest and CSV export.
//!
//! Clip layout, little-endian:
//!
//! ```text
//! magic       8 bytes  "PMCLIP\0\0"
//! version     u32
//! rows (d)    u32
//! frames (T)  u32
//! dt          f64
//! flags       u32      bit 0: velocity rows present
//! n_joints    u32
//! freq_factor f64
//! name        u32 length + UTF-8
//! base id     u32 length + UTF-8
//! events      u32 count + count × (u32 joint, f64 center_s, f64 width_s, f64 amplitude)
//! states      d·T f64, row-major (all frames of row 0, then row 1, …)
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BumpEvent, MotionClip};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const CLIP_MAGIC: &[u8; 8] = b"PMCLIP\0\0";
pub const CLIP_VERSION: u32 = 1;

const FLAG_VELOCITIES: u32 = 1;

pub fn encode_clip(clip: &MotionClip) -> Vec<u8> {
    let mut b = Vec::with_capacity(64 + 8 * clip.states.as_slice().len());
    b.extend_from_slice(CLIP_MAGIC);
    b.extend_from_slice(&CLIP_VERSION.to_le_bytes());
    b.extend_from_slice(&(clip.dims() as u32).to_le_bytes());
    b.extend_from_slice(&(clip.frames() as u32).to_le_bytes());
    b.extend_from_slice(&clip.dt.to_le_bytes());
    let flags = if clip.with_velocities {
        FLAG_VELOCITIES
    } else {
        0
    };
    b.extend_from_slice(&flags.to_le_bytes());
    b.extend_from_slice(&(clip.n_joints as u32).to_le_bytes());
    b.extend_from_slice(&clip.freq_factor.to_le_bytes());
    for s in [&clip.name, &clip.base_motion_id] {
        b.extend_from_slice(&(s.len() as u32).to_le_bytes());
        b.extend_from_slice(s.as_bytes());
    }
    b.extend_from_slice(&(clip.events.len() as u32).to_le_bytes());
    for ev in &clip.events {
        b.extend_from_slice(&(ev.joint as u32).to_le_bytes());
        b.extend_from_slice(&ev.center_s.to_le_bytes());
        b.extend_from_slice(&ev.width_s.to_le_bytes());
        b.extend_from_slice(&ev.amplitude.to_le_bytes());
    }
    for v in clip.states.as_slice() {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(self.path, "truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::format(self.path, "name is not UTF-8"))
    }
}

pub fn decode_clip(buf: &[u8], path: &Path) -> Result<MotionClip> {
    let mut r = Reader { buf, pos: 0, path };
    if r.take(8)? != CLIP_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let version = r.u32()?;
    if version != CLIP_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let rows = r.u32()? as usize;
    let frames = r.u32()? as usize;
    let dt = r.f64()?;
    let flags = r.u32()?;
    let n_joints = r.u32()? as usize;
    let freq_factor = r.f64()?;
    let name = r.string()?;
    let base_motion_id = r.string()?;
    let n_events = r.u32()? as usize;
    let mut events = Vec::with_capacity(n_events.min(1024));
    for _ in 0..n_events {
        events.push(BumpEvent {
            joint: r.u32()? as usize,
            center_s: r.f64()?,
            width_s: r.f64()?,
            amplitude: r.f64()?,
        });
    }
    let mut data = Vec::with_capacity(rows * frames);
    for _ in 0..rows * frames {
        data.push(r.f64()?);
    }
    if r.pos != buf.len() {
        return Err(Error::format(path, "trailing bytes"));
    }
    let clip = MotionClip {
        name,
        base_motion_id,
        freq_factor,
        dt,
        n_joints,
        with_velocities: flags & FLAG_VELOCITIES != 0,
        states: Matrix::from_vec(rows, frames, data),
        events,
    };
    clip.validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(clip)
}

pub fn save_clip(clip: &MotionClip, path: &Path) -> Result<()> {
    fs::write(path, encode_clip(clip)).map_err(|e| Error::io(path, e))
}

pub fn load_clip(path: &Path) -> Result<MotionClip> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_clip(&buf, path)
}

/// Debug export: header `t,q0..q{d-1}`, one line per frame.
pub fn write_clip_csv(clip: &MotionClip, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push('t');
    for r in 0..clip.dims() {
        out.push_str(&format!(",q{r}"));
    }
    out.push('\n');
    for j in 0..clip.frames() {
        out.push_str(&format!("{}", j as f64 * clip.dt));
        for r in 0..clip.dims() {
            out.push_str(&format!(",{}", clip.states.get(r, j)));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    /// Relative to the manifest's directory.
    pub file: String,
    pub name: String,
    pub base_motion_id: String,
    pub freq_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dt: f64,
    pub d: usize,
    pub with_velocities: bool,
    pub clips: Vec<ClipEntry>,
}

impl DatasetManifest {
    /// Checks that every base motion appears exactly once per factor.
    pub fn check_augmentation(&self, factors: &[f64]) -> Result<()> {
        let mut bases: Vec<&str> = self
            .clips
            .iter()
            .map(|c| c.base_motion_id.as_str())
            .collect();
        bases.sort_unstable();
        bases.dedup();
        if self.clips.len() != bases.len() * factors.len() {
            return Err(Error::invalid(format!(
                "{} clips for {} base motions and {} factors",
                self.clips.len(),
                bases.len(),
                factors.len()
            )));
        }
        for b in bases {
            let mut got: Vec<f64> = self
                .clips
                .iter()
                .filter(|c| c.base_motion_id == b)
                .map(|c| c.freq_factor)
                .collect();
            got.sort_by(f64::total_cmp);
            let mut want = factors.to_vec();
            want.sort_by(f64::total_cmp);
            if got != want {
                return Err(Error::invalid(format!(
                    "base motion {b} has factors {got:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Writes one `.clip` file per clip plus `manifest.json` into `dir`.
pub fn save_dataset(clips: &[MotionClip], dir: &Path) -> Result<PathBuf> {
    let first = clips
        .first()
        .ok_or_else(|| Error::invalid("empty dataset"))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(clips.len());
    for clip in clips {
        if clip.dims() != first.dims() || clip.dt != first.dt {
            return Err(Error::invalid(format!(
                "clip {} disagrees with dataset shape",
                clip.name
            )));
        }
        let file = format!("{}.clip", clip.name);
        save_clip(clip, &dir.join(&file))?;
        entries.push(ClipEntry {
            file,
            name: clip.name.clone(),
            base_motion_id: clip.base_motion_id.clone(),
            freq_factor: clip.freq_factor,
        });
    }
    let manifest = DatasetManifest {
        dt: first.dt,
        d: first.dims(),
        with_velocities: first.with_velocities,
        clips: entries,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(json.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Vec<MotionClip>)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(manifest_path, e.to_string()))?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut clips = Vec::with_capacity(manifest.clips.len());
    for entry in &manifest.clips {
        let clip = load_clip(&dir.join(&entry.file))?;
        if clip.name != entry.name || clip.dims() != manifest.d {
            return Err(Error::format(
                dir.join(&entry.file),
                "does not match manifest entry",
            ));
        }
        clips.push(clip);
    }
    Ok((manifest, clips))
}
