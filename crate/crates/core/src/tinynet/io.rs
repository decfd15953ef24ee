//! Weight files: a small binary header (trunk widths, head tag, head
//! dimension) followed by the flat parameter vector as little-endian f64.

use std::io::{Read, Write};

use crate::error::{CoreError, Result};

use super::{HeadKind, MlpNet};

fn head_tag(head: HeadKind) -> u8 {
    match head {
        HeadKind::Plain => 0,
        HeadKind::Dueling => 1,
        HeadKind::Gaussian => 2,
    }
}

fn head_from_tag(tag: u8) -> Result<HeadKind> {
    match tag {
        0 => Ok(HeadKind::Plain),
        1 => Ok(HeadKind::Dueling),
        2 => Ok(HeadKind::Gaussian),
        other => Err(CoreError::Parse(format!("unknown head tag {other}"))),
    }
}

pub fn save_weights<W: Write>(net: &MlpNet, w: &mut W) -> Result<()> {
    let dims = net.trunk_dim_list();
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&[head_tag(net.head())])?;
    w.write_all(&(net.out_dim() as u32).to_le_bytes())?;
    for &p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_weights<R: Read>(r: &mut R) -> Result<MlpNet> {
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let n_dims = u32::from_le_bytes(u32buf) as usize;
    if n_dims == 0 || n_dims > 64 {
        return Err(CoreError::Parse(format!("implausible layer count {n_dims}")));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        r.read_exact(&mut u32buf)?;
        dims.push(u32::from_le_bytes(u32buf) as usize);
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let head = head_from_tag(tag[0])?;
    r.read_exact(&mut u32buf)?;
    let out_dim = u32::from_le_bytes(u32buf) as usize;

    let mut net = MlpNet::new(dims[0], &dims[1..], out_dim, head, 0);
    let mut f64buf = [0u8; 8];
    for i in 0..net.param_count() {
        r.read_exact(&mut f64buf).map_err(|_| {
            CoreError::Parse(format!(
                "weight file truncated at parameter {i} of {}",
                net.param_count()
            ))
        })?;
        net.params_mut()[i] = f64::from_le_bytes(f64buf);
    }
    // Trailing data means the header disagrees with the payload.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(CoreError::Parse("trailing bytes in weight file".into()));
    }
    Ok(net)
}
