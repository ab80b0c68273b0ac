//! The CVOL binary container for volumes, k-space, masks, and coil maps.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "CVOL" | u32 version=1 | u32 dtype | u32 ncoils | u32 nx | u32 ny | u32 nz | data
//! ```
//!
//! dtype 0 stores interleaved re/im f32 pairs, dtype 1 stores u8 booleans.
//! Data is in (coil, z, y, x) C-order with x fastest. Masks use dtype 1 with
//! ncoils = 1 and nx = 1 (the pattern is broadcast along the readout axis);
//! their center block size is generation metadata and is not persisted.
//!
//! Values are stored single precision; everything in memory is double.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::{CoilMaps, SamplingMask};
use crate::transforms::Coefficients;
use crate::volume::{ComplexVolume, Dims, KSpaceData};

const MAGIC: &[u8; 4] = b"CVOL";
const VERSION: u32 = 1;
const DTYPE_COMPLEX64: u32 = 0;
const DTYPE_BOOL: u32 = 1;
// Guards against allocating absurd buffers for corrupt headers.
const MAX_SAMPLES: u64 = 1 << 30;

struct Header {
    dtype: u32,
    ncoils: u32,
    nx: u32,
    ny: u32,
    nz: u32,
}

impl Header {
    fn samples(&self) -> u64 {
        self.ncoils as u64 * self.nx as u64 * self.ny as u64 * self.nz as u64
    }

    fn dims(&self) -> Dims {
        (self.nx as usize, self.ny as usize, self.nz as usize)
    }
}

fn write_header(w: &mut impl Write, dtype: u32, ncoils: u32, dims: Dims) -> Result<()> {
    debug_assert!(dtype == DTYPE_COMPLEX64 || dtype == DTYPE_BOOL);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dtype.to_le_bytes())?;
    w.write_all(&ncoils.to_le_bytes())?;
    w.write_all(&(dims.0 as u32).to_le_bytes())?;
    w.write_all(&(dims.1 as u32).to_le_bytes())?;
    w.write_all(&(dims.2 as u32).to_le_bytes())?;
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut buf = [0u8; 4];
    let mut next_u32 = |r: &mut dyn Read| -> Result<u32> {
        r.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    };
    let version = next_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let header = Header {
        dtype: next_u32(r)?,
        ncoils: next_u32(r)?,
        nx: next_u32(r)?,
        ny: next_u32(r)?,
        nz: next_u32(r)?,
    };
    if header.dtype != DTYPE_COMPLEX64 && header.dtype != DTYPE_BOOL {
        return Err(Error::Format(format!("unknown dtype {}", header.dtype)));
    }
    if header.ncoils == 0 || header.nx == 0 || header.ny == 0 || header.nz == 0 {
        return Err(Error::Format("zero dimension in header".into()));
    }
    if header.samples() > MAX_SAMPLES {
        return Err(Error::Format(format!(
            "implausible sample count {}",
            header.samples()
        )));
    }
    Ok(header)
}

fn write_complex_data(w: &mut impl Write, data: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&(v.re as f32).to_le_bytes());
        buf.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_complex_data(r: &mut impl Read, n: usize) -> Result<Vec<Complex64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    let mut data = Vec::with_capacity(n);
    for chunk in bytes.chunks_exact(8) {
        let re = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        let im = f32::from_le_bytes([chunk[4], chunk[5], chunk[6], chunk[7]]);
        data.push(Complex64::new(re as f64, im as f64));
    }
    Ok(data)
}

pub fn write_volume(path: impl AsRef<Path>, vol: &ComplexVolume) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, DTYPE_COMPLEX64, 1, vol.dims())?;
    write_complex_data(&mut w, vol.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<ComplexVolume> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r)?;
    if h.dtype != DTYPE_COMPLEX64 {
        return Err(Error::Format("expected complex volume, found bool dtype".into()));
    }
    if h.ncoils != 1 {
        return Err(Error::Format(format!(
            "expected single volume, found {} coils",
            h.ncoils
        )));
    }
    let data = read_complex_data(&mut r, h.samples() as usize)?;
    ComplexVolume::new(h.dims(), data)
}

pub fn write_kspace(path: impl AsRef<Path>, k: &KSpaceData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, DTYPE_COMPLEX64, k.ncoils() as u32, k.dims())?;
    write_complex_data(&mut w, k.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_kspace(path: impl AsRef<Path>) -> Result<KSpaceData> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r)?;
    if h.dtype != DTYPE_COMPLEX64 {
        return Err(Error::Format("expected complex k-space, found bool dtype".into()));
    }
    let data = read_complex_data(&mut r, h.samples() as usize)?;
    KSpaceData::new(h.ncoils as usize, h.dims(), data)
}

pub fn write_coil_maps(path: impl AsRef<Path>, maps: &CoilMaps) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, DTYPE_COMPLEX64, maps.ncoils() as u32, maps.dims())?;
    write_complex_data(&mut w, maps.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_coil_maps(path: impl AsRef<Path>) -> Result<CoilMaps> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r)?;
    if h.dtype != DTYPE_COMPLEX64 {
        return Err(Error::Format("expected coil maps, found bool dtype".into()));
    }
    let data = read_complex_data(&mut r, h.samples() as usize)?;
    CoilMaps::new(h.ncoils as usize, h.dims(), data)
}

/// Multi-channel transform coefficients reuse the k-space container shape,
/// with channels stored in the ncoils header field.
pub fn write_coefficients(path: impl AsRef<Path>, c: &Coefficients) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, DTYPE_COMPLEX64, c.channels() as u32, c.dims())?;
    write_complex_data(&mut w, c.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_coefficients(path: impl AsRef<Path>) -> Result<Coefficients> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r)?;
    if h.dtype != DTYPE_COMPLEX64 {
        return Err(Error::Format("expected coefficients, found bool dtype".into()));
    }
    let data = read_complex_data(&mut r, h.samples() as usize)?;
    Coefficients::new(h.ncoils as usize, h.dims(), data)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &SamplingMask) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, DTYPE_BOOL, 1, (1, mask.ny(), mask.nz()))?;
    let bytes: Vec<u8> = mask.data().iter().map(|&b| b as u8).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<SamplingMask> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r)?;
    if h.dtype != DTYPE_BOOL {
        return Err(Error::Format("expected bool mask dtype".into()));
    }
    if h.ncoils != 1 || h.nx != 1 {
        return Err(Error::Format("mask files require ncoils = 1 and nx = 1".into()));
    }
    let mut bytes = vec![0u8; (h.ny * h.nz) as usize];
    r.read_exact(&mut bytes)?;
    let mut data = Vec::with_capacity(bytes.len());
    for (i, b) in bytes.iter().enumerate() {
        match b {
            0 => data.push(false),
            1 => data.push(true),
            other => {
                return Err(Error::Format(format!(
                    "mask byte {other} at offset {i} is not 0/1"
                )))
            }
        }
    }
    SamplingMask::new(h.ny as usize, h.nz as usize, (0, 0), data)
}
