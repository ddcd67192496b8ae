//! `EDF1` binary field snapshots.
//!
//! Layout: magic `EDF1`, then little-endian `u32` N, `u32` kind (0 scalar,
//! 1 spinor), `u32` reserved (0), followed by little-endian `f64` values in
//! storage order. Spinor values are interleaved re/im with the two components
//! of each point adjacent.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{ScalarField, SpinStructure, SpinorField, TorusGrid};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EDF1";

#[derive(Clone, Debug, PartialEq)]
pub enum Snapshot {
    Scalar { n: usize, values: Vec<f64> },
    Spinor { n: usize, values: Vec<Complex64> },
}

fn header(w: &mut impl Write, n: usize, kind: u32) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&kind.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    Ok(())
}

pub fn write_scalar(w: &mut impl Write, f: &ScalarField) -> Result<()> {
    header(w, f.grid().n(), 0)?;
    for v in f.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_spinor(w: &mut impl Write, psi: &SpinorField) -> Result<()> {
    header(w, psi.grid().n(), 1)?;
    for z in psi.values() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read(r: &mut impl Read) -> Result<Snapshot> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let n = read_u32(r)? as usize;
    let kind = read_u32(r)?;
    let _reserved = read_u32(r)?;
    let size = n * n * n;
    match kind {
        0 => {
            let values = (0..size).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
            Ok(Snapshot::Scalar { n, values })
        }
        1 => {
            let values = (0..2 * size)
                .map(|_| Ok(Complex64::new(read_f64(r)?, read_f64(r)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Snapshot::Spinor { n, values })
        }
        k => Err(Error::Format(format!("unknown field kind {k}"))),
    }
}

/// Read a scalar snapshot onto a grid with the given side length.
pub fn read_scalar(r: &mut impl Read, length: f64) -> Result<ScalarField> {
    match read(r)? {
        Snapshot::Scalar { n, values } => ScalarField::new(&TorusGrid::new(n, length)?, values),
        Snapshot::Spinor { .. } => Err(Error::Format("expected a scalar snapshot".into())),
    }
}

pub fn read_spinor(r: &mut impl Read, length: f64, spin: SpinStructure) -> Result<SpinorField> {
    match read(r)? {
        Snapshot::Spinor { n, values } => SpinorField::new(&TorusGrid::new(n, length)?, spin, values),
        Snapshot::Scalar { .. } => Err(Error::Format("expected a spinor snapshot".into())),
    }
}
