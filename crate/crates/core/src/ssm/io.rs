//! Trajectory batch persistence.
//!
//! CSV: header `replicate,t,x,y`, one row per `t = 0..=T`; `y` is empty at
//! `t = 0`.
//!
//! Binary (little-endian):
//!
//! | bytes | content                                          |
//! |-------|--------------------------------------------------|
//! | 8     | magic `GBFTRAJ\0`                                |
//! | 4     | format version (`u32`, currently 1)              |
//! | 4     | flags (`u32`; bit 0 set when stable noise is S0) |
//! | 8     | replicate count N (`u64`)                        |
//! | 8     | horizon T (`u64`)                                |
//! | …     | per replicate: `T + 1` states, then `T` observations, all `f64` |
//!
//! Stable noise is in the S1 parameterization unless flag bit 0 is set.

use std::io::{BufRead, Read, Write};

use super::Trajectory;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GBFTRAJ\0";
pub const VERSION: u32 = 1;
pub const FLAG_S0: u32 = 1;

pub fn write_csv<W: Write>(mut w: W, batch: &[Trajectory]) -> Result<()> {
    writeln!(w, "replicate,t,x,y")?;
    for (r, tr) in batch.iter().enumerate() {
        for (t, x) in tr.states.iter().enumerate() {
            if t == 0 {
                writeln!(w, "{r},0,{x},")?;
            } else {
                writeln!(w, "{r},{t},{x},{}", tr.observations[t - 1])?;
            }
        }
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<Trajectory>> {
    let mut out: Vec<Trajectory> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "replicate,t,x,y" {
                return Err(Error::Format(format!("unexpected header `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Format(format!("row {i}: expected 4 fields")));
        }
        let bad = |what: &str| Error::Format(format!("row {i}: bad {what}"));
        let rep: usize = f[0].parse().map_err(|_| bad("replicate"))?;
        let t: usize = f[1].parse().map_err(|_| bad("t"))?;
        let x: f64 = f[2].parse().map_err(|_| bad("x"))?;
        if rep == out.len() && t == 0 {
            out.push(Trajectory {
                states: vec![x],
                observations: vec![],
                noise: vec![],
                params: vec![],
            });
            continue;
        }
        let tr = out
            .get_mut(rep)
            .filter(|tr| tr.states.len() == t)
            .ok_or_else(|| bad("row order"))?;
        tr.states.push(x);
        tr.observations.push(f[3].parse().map_err(|_| bad("y"))?);
    }
    Ok(out)
}

pub fn write_binary<W: Write>(mut w: W, batch: &[Trajectory], flags: u32) -> Result<()> {
    let horizon = batch.first().map_or(0, |t| t.horizon());
    if batch.iter().any(|t| t.horizon() != horizon) {
        return Err(Error::Interface(
            "binary batches need a common horizon".into(),
        ));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(batch.len() as u64).to_le_bytes())?;
    w.write_all(&(horizon as u64).to_le_bytes())?;
    for tr in batch {
        for v in tr.states.iter().chain(&tr.observations) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Returns the batch and the header flags.
pub fn read_binary<R: Read>(mut r: R) -> Result<(Vec<Trajectory>, u32)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a trajectory batch".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Version(format!(
            "trajectory batch version {version}, expected {VERSION}"
        )));
    }
    r.read_exact(&mut b4)?;
    let flags = u32::from_le_bytes(b4);
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let horizon = u64::from_le_bytes(b8) as usize;
    let mut read_vec = |len: usize| -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut b8)?;
            v.push(f64::from_le_bytes(b8));
        }
        Ok(v)
    };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let states = read_vec(horizon + 1)?;
        let observations = read_vec(horizon)?;
        out.push(Trajectory {
            states,
            observations,
            noise: vec![],
            params: vec![],
        });
    }
    Ok((out, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::ssm::{simulate_batch, LGParams, LinearGaussian};

    fn batch() -> Vec<Trajectory> {
        let m = LinearGaussian::stationary(LGParams::new(0.9, 0.2, 1.0).unwrap()).unwrap();
        simulate_batch(&m, 3, 6, &mut seeded(5), None).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let b = batch();
        let mut buf = Vec::new();
        write_csv(&mut buf, &b).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, c) in b.iter().zip(&back) {
            assert_eq!(a.states, c.states);
            assert_eq!(a.observations, c.observations);
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let b = batch();
        let mut buf = Vec::new();
        write_binary(&mut buf, &b, FLAG_S0).unwrap();
        assert_eq!(buf.len(), 32 + 3 * 13 * 8);
        let (back, flags) = read_binary(buf.as_slice()).unwrap();
        assert_eq!(flags, FLAG_S0);
        for (a, c) in b.iter().zip(&back) {
            assert_eq!(a.states, c.states);
            assert_eq!(a.observations, c.observations);
        }
        buf.truncate(buf.len() - 4);
        assert!(read_binary(buf.as_slice()).is_err());
    }
}
