//! Binary checkpoint of a full propagator trajectory.
//!
//! Layout (little endian): magic `NCAMTRJ1`, method tag `u8`, dimension `u32`,
//! map count `u64`, `dt` as `f64`, then every map column-major as `(re, im)`
//! pairs of `f64`.

use std::io::{self, Read, Write};

use crate::qops::{SuperOperator, TraceContract, C64};

use super::{Method, PropagatorTrajectory};

const MAGIC: &[u8; 8] = b"NCAMTRJ1";

fn method_tag(m: Method) -> u8 {
    match m {
        Method::Nca => 0,
        Method::NcaMarkov => 1,
        Method::Born => 2,
        Method::BornMarkov => 3,
    }
}

pub fn write_trajectory<W: Write>(traj: &PropagatorTrajectory, mut w: W) -> io::Result<()> {
    let dim = traj.maps().first().map(|v| v.dim()).unwrap_or(0);
    w.write_all(MAGIC)?;
    w.write_all(&[method_tag(traj.method())])?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(traj.len() as u64).to_le_bytes())?;
    w.write_all(&traj.dt().to_le_bytes())?;
    for v in traj.maps() {
        for z in v.as_slice() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_trajectory<R: Read>(mut r: R) -> io::Result<PropagatorTrajectory> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    if &read_array::<8, _>(&mut r)? != MAGIC {
        return Err(bad("not a trajectory checkpoint"));
    }
    let method = match read_array::<1, _>(&mut r)?[0] {
        0 => Method::Nca,
        1 => Method::NcaMarkov,
        2 => Method::Born,
        3 => Method::BornMarkov,
        _ => return Err(bad("unknown method tag")),
    };
    let dim = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let dt = f64::from_le_bytes(read_array(&mut r)?);
    let n = dim * dim;
    let mut maps = Vec::with_capacity(count);
    let mut buf = vec![C64::new(0.0, 0.0); n * n];
    for _ in 0..count {
        for z in buf.iter_mut() {
            let re = f64::from_le_bytes(read_array(&mut r)?);
            let im = f64::from_le_bytes(read_array(&mut r)?);
            *z = C64::new(re, im);
        }
        maps.push(SuperOperator::from_column_slice(n, &buf, TraceContract::Map));
    }
    Ok(PropagatorTrajectory::new(dt, maps, method))
}
