//! Binary path cache.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 16 | magic `SUBLINERGO-PATHS` |
//! | 1 | version, currently 1 |
//! | 8 × 4 | `n_paths`, `n_points`, `dim`, `seed` as `u64` |
//! | 8 | `dt` as `f64` |
//! | 8 × n | path values `[path][point][coordinate]` as `f64` |
//!
//! Control records are not cached.

use std::io::{Read, Write};

use super::PathEnsemble;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 16] = b"SUBLINERGO-PATHS";
pub const CACHE_VERSION: u8 = 1;

pub fn write_cache<W: Write>(ens: &PathEnsemble, mut w: W) -> Result<()> {
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&[CACHE_VERSION])?;
    for v in [
        ens.n_paths() as u64,
        ens.n_points() as u64,
        ens.dim as u64,
        ens.seed,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&ens.dt.to_le_bytes())?;
    let mut buf = Vec::with_capacity(ens.values.len() * 8);
    for v in &ens.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated cache header".into()))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_cache<R: Read>(mut r: R) -> Result<PathEnsemble> {
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for a path cache".into()))?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format("bad magic: not a path cache".into()));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)
        .map_err(|_| Error::Format("missing cache version".into()))?;
    if version[0] != CACHE_VERSION {
        return Err(Error::Format(format!(
            "unsupported cache version {}",
            version[0]
        )));
    }
    let n_paths = read_u64(&mut r)? as usize;
    let n_points = read_u64(&mut r)? as usize;
    let dim = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let dt = f64::from_bits(read_u64(&mut r)?);
    if n_points == 0 || dim == 0 {
        return Err(Error::Format("cache declares empty paths".into()));
    }
    let count = n_paths
        .checked_mul(n_points)
        .and_then(|x| x.checked_mul(dim))
        .ok_or_else(|| Error::Format("cache dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "cache body has {} bytes, expected {}",
            bytes.len(),
            count * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(PathEnsemble {
        dt,
        dim,
        n_steps: n_points - 1,
        seed,
        values,
        controls: Vec::new(),
        control_len: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::ControlSet;
    use crate::gbm::{simulate_gbm, Policy};

    #[test]
    fn round_trip_and_corruption() {
        let q = ControlSet::interval(1.0, 4.0, 0).unwrap();
        let ens = simulate_gbm(&Policy::constant_scalar(4.0), &q, 0.25, 1.0, 3, 11).unwrap();
        let mut buf = Vec::new();
        write_cache(&ens, &mut buf).unwrap();
        assert_eq!(&buf[..16], b"SUBLINERGO-PATHS");
        assert_eq!(buf[16], 1);
        assert_eq!(buf.len(), 16 + 1 + 40 + 3 * 5 * 8);
        let back = read_cache(buf.as_slice()).unwrap();
        assert_eq!(back.values, ens.values);
        assert_eq!((back.dt, back.seed, back.n_steps), (0.25, 11, 4));

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_cache(bad.as_slice()), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[16] = 2;
        assert!(read_cache(bad.as_slice()).is_err());
        assert!(read_cache(&buf[..buf.len() - 3]).is_err());
        assert!(read_cache(&buf[..10]).is_err());
    }
}
