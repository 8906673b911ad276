//! Detection-record files.
//!
//! The main file is little-endian: magic `MPQK`, format version (u16),
//! round count (u64), clock rate in Hz (u64), then one byte per round with
//! Alice's class in bits 0-1, Bob's in bits 2-3, the L click in bit 4 and
//! the R click in bit 5. Sidecars carry what the byte cannot: encoded
//! phases and photon numbers of the rounds with a click, and the reference
//! photon stream.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::source::GroundTruth;
use crate::model::{DetectionRecord, IntensityClass, RoundTag};

pub const VERSION: u16 = 1;
pub const MAGIC_RECORDS: &[u8; 4] = b"MPQK";
pub const MAGIC_PHASES: &[u8; 4] = b"MPQP";
pub const MAGIC_TRUTH: &[u8; 4] = b"MPQT";
pub const MAGIC_REFERENCE: &[u8; 4] = b"MPQR";

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic at byte 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {found} (expected {VERSION})")]
    Version { found: u16 },
    #[error("truncated {section} at byte offset {offset}: needed {needed} more bytes")]
    Truncated {
        section: &'static str,
        offset: u64,
        needed: u64,
    },
    #[error("invalid round byte {byte:#04x} at byte offset {offset}")]
    InvalidRound { offset: u64, byte: u8 },
    #[error("{0}")]
    Mismatch(String),
}

pub fn pack_round(a: IntensityClass, b: IntensityClass, d: DetectionRecord) -> u8 {
    a.code() | (b.code() << 2) | ((d.clicked_l as u8) << 4) | ((d.clicked_r as u8) << 5)
}

/// Inverse of [`pack_round`]; `None` for class code 3 or stray high bits.
pub fn unpack_round(byte: u8) -> Option<(IntensityClass, IntensityClass, DetectionRecord)> {
    if byte & 0xC0 != 0 {
        return None;
    }
    Some((
        IntensityClass::from_code(byte & 3)?,
        IntensityClass::from_code((byte >> 2) & 3)?,
        DetectionRecord::new(byte & 0x10 != 0, byte & 0x20 != 0),
    ))
}

/// Little-endian cursor that reports where input ran out.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], section: &'static str) -> Self {
        Self { buf, pos: 0, section }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], RecordError> {
        let left = self.buf.len() - self.pos;
        if left < n {
            return Err(RecordError::Truncated {
                section: self.section,
                offset: self.buf.len() as u64,
                needed: (n - left) as u64,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, RecordError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, RecordError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, RecordError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<(), RecordError> {
        self.section = "header";
        let found = self.take(4)?;
        if found != magic {
            return Err(RecordError::BadMagic {
                expected: String::from_utf8_lossy(magic).into(),
                found: String::from_utf8_lossy(found).into(),
            });
        }
        let v = self.u16()?;
        if v != VERSION {
            return Err(RecordError::Version { found: v });
        }
        Ok(())
    }

    fn counted(&mut self, n: u64, width: usize, section: &'static str) -> Result<(), RecordError> {
        self.section = section;
        let need = n.saturating_mul(width as u64);
        let left = (self.buf.len() - self.pos) as u64;
        if left < need {
            return Err(RecordError::Truncated {
                section,
                offset: self.buf.len() as u64,
                needed: need - left,
            });
        }
        Ok(())
    }
}

fn header(magic: &[u8; 4]) -> Vec<u8> {
    let mut v = magic.to_vec();
    v.extend_from_slice(&VERSION.to_le_bytes());
    v
}

/// Contents of a main record file.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordFile {
    pub n_rounds: u64,
    pub clock_hz: u64,
    pub packed: Vec<u8>,
}

impl RecordFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = header(MAGIC_RECORDS);
        v.extend_from_slice(&self.n_rounds.to_le_bytes());
        v.extend_from_slice(&self.clock_hz.to_le_bytes());
        v.extend_from_slice(&self.packed);
        v
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, RecordError> {
        let mut r = Reader::new(buf, "header");
        r.header(MAGIC_RECORDS)?;
        let n_rounds = r.u64()?;
        let clock_hz = r.u64()?;
        r.counted(n_rounds, 1, "round bytes")?;
        let start = r.pos;
        let packed = r.take(n_rounds as usize)?.to_vec();
        if let Some(i) = packed.iter().position(|&b| unpack_round(b).is_none()) {
            return Err(RecordError::InvalidRound {
                offset: (start + i) as u64,
                byte: packed[i],
            });
        }
        Ok(Self {
            n_rounds,
            clock_hz,
            packed,
        })
    }

    pub fn round(&self, j: u64) -> (IntensityClass, IntensityClass, DetectionRecord) {
        unpack_round(self.packed[j as usize]).expect("validated on load")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEntry {
    pub round: u64,
    pub phase_a: f64,
    pub phase_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthEntry {
    pub round: u64,
    pub truth: GroundTruth,
}

/// Reference photons as absolute bin indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStream {
    pub bin_ns: f64,
    pub t_r_us: f64,
    pub photons: Vec<u64>,
}

pub fn phases_to_bytes(entries: &[PhaseEntry]) -> Vec<u8> {
    let mut v = header(MAGIC_PHASES);
    v.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for e in entries {
        v.extend_from_slice(&e.round.to_le_bytes());
        v.extend_from_slice(&e.phase_a.to_le_bytes());
        v.extend_from_slice(&e.phase_b.to_le_bytes());
    }
    v
}

pub fn phases_from_bytes(buf: &[u8]) -> Result<Vec<PhaseEntry>, RecordError> {
    let mut r = Reader::new(buf, "header");
    r.header(MAGIC_PHASES)?;
    let n = r.u64()?;
    r.counted(n, 24, "phase entries")?;
    (0..n)
        .map(|_| {
            Ok(PhaseEntry {
                round: r.u64()?,
                phase_a: r.f64()?,
                phase_b: r.f64()?,
            })
        })
        .collect()
}

pub fn truth_to_bytes(entries: &[TruthEntry]) -> Vec<u8> {
    let mut v = header(MAGIC_TRUTH);
    v.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for e in entries {
        v.extend_from_slice(&e.round.to_le_bytes());
        v.extend_from_slice(&e.truth.photon_count_a.to_le_bytes());
        v.extend_from_slice(&e.truth.photon_count_b.to_le_bytes());
    }
    v
}

pub fn truth_from_bytes(buf: &[u8]) -> Result<Vec<TruthEntry>, RecordError> {
    let mut r = Reader::new(buf, "header");
    r.header(MAGIC_TRUTH)?;
    let n = r.u64()?;
    r.counted(n, 12, "truth entries")?;
    (0..n)
        .map(|_| {
            Ok(TruthEntry {
                round: r.u64()?,
                truth: GroundTruth {
                    photon_count_a: r.u16()?,
                    photon_count_b: r.u16()?,
                },
            })
        })
        .collect()
}

pub fn reference_to_bytes(s: &ReferenceStream) -> Vec<u8> {
    let mut v = header(MAGIC_REFERENCE);
    v.extend_from_slice(&s.bin_ns.to_le_bytes());
    v.extend_from_slice(&s.t_r_us.to_le_bytes());
    v.extend_from_slice(&(s.photons.len() as u64).to_le_bytes());
    for p in &s.photons {
        v.extend_from_slice(&p.to_le_bytes());
    }
    v
}

pub fn reference_from_bytes(buf: &[u8]) -> Result<ReferenceStream, RecordError> {
    let mut r = Reader::new(buf, "header");
    r.header(MAGIC_REFERENCE)?;
    let bin_ns = r.f64()?;
    let t_r_us = r.f64()?;
    let n = r.u64()?;
    r.counted(n, 8, "reference photons")?;
    let photons = (0..n).map(|_| r.u64()).collect::<Result<_, _>>()?;
    Ok(ReferenceStream {
        bin_ns,
        t_r_us,
        photons,
    })
}

/// Paths of a block's main file and its sidecars.
#[derive(Debug, Clone)]
pub struct BlockPaths {
    pub records: std::path::PathBuf,
    pub phases: std::path::PathBuf,
    pub truth: std::path::PathBuf,
    pub reference: std::path::PathBuf,
}

impl BlockPaths {
    /// Sidecars share the stem of the record file.
    pub fn for_records(records: &Path) -> Self {
        Self {
            records: records.to_path_buf(),
            phases: records.with_extension("phases"),
            truth: records.with_extension("truth"),
            reference: records.with_extension("ref"),
        }
    }

    pub fn in_dir(dir: &Path, block: u64) -> Self {
        Self::for_records(&dir.join(format!("block_{block:05}.mpqk")))
    }
}

/// Everything stored for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFiles {
    pub records: RecordFile,
    pub phases: Option<Vec<PhaseEntry>>,
    pub truth: Option<Vec<TruthEntry>>,
    pub reference: Option<ReferenceStream>,
}

impl BlockFiles {
    pub fn write(&self, paths: &BlockPaths) -> Result<(), RecordError> {
        fs::write(&paths.records, self.records.to_bytes())?;
        if let Some(p) = &self.phases {
            fs::write(&paths.phases, phases_to_bytes(p))?;
        }
        if let Some(t) = &self.truth {
            fs::write(&paths.truth, truth_to_bytes(t))?;
        }
        if let Some(r) = &self.reference {
            fs::write(&paths.reference, reference_to_bytes(r))?;
        }
        Ok(())
    }

    /// Loads a block; absent sidecars are `None`.
    pub fn read(paths: &BlockPaths) -> Result<Self, RecordError> {
        let records = RecordFile::from_bytes(&fs::read(&paths.records)?)?;
        let opt = |p: &Path| -> Result<Option<Vec<u8>>, RecordError> {
            match fs::read(p) {
                Ok(b) => Ok(Some(b)),
                Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e.into()),
            }
        };
        let phases = opt(&paths.phases)?.map(|b| phases_from_bytes(&b)).transpose()?;
        let truth = opt(&paths.truth)?.map(|b| truth_from_bytes(&b)).transpose()?;
        let reference = opt(&paths.reference)?.map(|b| reference_from_bytes(&b)).transpose()?;
        if let Some(p) = &phases {
            if p.iter().any(|e| e.round >= records.n_rounds) {
                return Err(RecordError::Mismatch("phase sidecar refers to rounds past the end".into()));
            }
        }
        Ok(Self {
            records,
            phases,
            truth,
            reference,
        })
    }
}

/// Writes one CSV row per round. Meant for small blocks.
pub fn write_csv<W: Write>(
    mut w: W,
    tags: &[RoundTag],
    detections: &[DetectionRecord],
    truth: &[GroundTruth],
) -> io::Result<()> {
    writeln!(w, "round,class_a,class_b,phase_a,phase_b,click_l,click_r,photons_a,photons_b")?;
    for (j, ((t, d), g)) in tags.iter().zip(detections).zip(truth).enumerate() {
        writeln!(
            w,
            "{j},{},{},{},{},{},{},{},{}",
            t.intensity_a,
            t.intensity_b,
            t.phase_a,
            t.phase_b,
            d.clicked_l as u8,
            d.clicked_r as u8,
            g.photon_count_a,
            g.photon_count_b
        )?;
    }
    Ok(())
}
