//! Versioned binary record for trained networks.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic               11 bytes   "PHYPLAN-NET"
//! format version      u32        currently 1
//! hidden activation   u8         0 = tanh, 1 = identity
//! output activation   u8
//! layer count         u32
//! layer sizes         u32 each
//! parameters          f64 each   per layer: weights row-major, then biases
//! named-param count   u32
//! each named param    u32 name byte length, UTF-8 name, f64 value
//! ```
//!
//! The parameter block order matches [`DenseNetwork::flatten`], so a record
//! is exactly (header, flattened parameter vector, learned physical
//! parameters).

use std::io::{Read, Write};

use crate::numerics::network::{Activation, DenseNetwork};
use crate::{Error, Result};

/// Leading bytes of every network record.
pub const MAGIC: &[u8; 11] = b"PHYPLAN-NET";
/// Current format version.
pub const FORMAT_VERSION: u32 = 1;

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
        Activation::Identity => 1,
    }
}

fn activation_from_tag(tag: u8) -> Result<Activation> {
    match tag {
        0 => Ok(Activation::Tanh),
        1 => Ok(Activation::Identity),
        other => Err(Error::Format(format!("unknown activation tag {other}"))),
    }
}

/// Writes a network and its named learned physical parameters.
pub fn write_network<W: Write>(
    mut w: W,
    net: &DenseNetwork,
    named_params: &[(String, f64)],
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[
        activation_tag(net.hidden_activation()),
        activation_tag(net.output_activation()),
    ])?;
    let sizes = net.layer_sizes();
    w.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for &s in sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    for v in net.flatten() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(named_params.len() as u32).to_le_bytes())?;
    for (name, value) in named_params {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&value.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Reads a network record written by [`write_network`].
pub fn read_network<R: Read>(mut r: R) -> Result<(DenseNetwork, Vec<(String, f64)>)> {
    let mut magic = [0u8; 11];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a network record".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let mut tags = [0u8; 2];
    r.read_exact(&mut tags)?;
    let hidden = activation_from_tag(tags[0])?;
    let output = activation_from_tag(tags[1])?;
    let n_layers = read_u32(&mut r)? as usize;
    if n_layers < 2 || n_layers > 1024 {
        return Err(Error::Format(format!("implausible layer count {n_layers}")));
    }
    let mut sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        sizes.push(read_u32(&mut r)? as usize);
    }
    let mut net = DenseNetwork::zeros(&sizes, hidden, output)?;
    let mut flat = vec![0.0; net.num_params()];
    for v in flat.iter_mut() {
        *v = read_f64(&mut r)?;
    }
    net.set_from_flat(&flat);
    let n_named = read_u32(&mut r)? as usize;
    if n_named > 4096 {
        return Err(Error::Format(format!(
            "implausible named-parameter count {n_named}"
        )));
    }
    let mut named = Vec::with_capacity(n_named);
    for _ in 0..n_named {
        let len = read_u32(&mut r)? as usize;
        if len > 4096 {
            return Err(Error::Format(format!("implausible name length {len}")));
        }
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        let name = String::from_utf8(buf)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let value = read_f64(&mut r)?;
        named.push((name, value));
    }
    Ok((net, named))
}
