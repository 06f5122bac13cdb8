//! Checkpoint files: `"PRCK"`, version `u32`, architecture TOML length
//! `u32` and text, then the parameters as little-endian `f32`.

use std::io::{Read, Write};
use std::path::Path;

use super::{ArchConfig, RefinerNet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PRCK";
const VERSION: u32 = 1;

pub fn write_checkpoint(w: &mut impl Write, net: &RefinerNet<f32>) -> Result<()> {
    let text = net.arch().to_toml();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(text.len() as u32).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    for v in net.params() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<RefinerNet<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data("not a checkpoint file".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let len = read_u32(r)? as usize;
    let mut text = vec![0u8; len];
    r.read_exact(&mut text)?;
    let text = String::from_utf8(text).map_err(|_| Error::Data("architecture text is not UTF-8".into()))?;
    let arch = ArchConfig::from_toml(&text)?;
    let mut net = RefinerNet::<f32>::zeros(&arch)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 4 * net.params().len() {
        return Err(Error::Data(format!(
            "checkpoint holds {} parameter bytes, architecture needs {}",
            bytes.len(),
            4 * net.params().len()
        )));
    }
    for (p, c) in net.params_mut().iter_mut().zip(bytes.chunks_exact(4)) {
        *p = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
    }
    Ok(net)
}

pub fn save_checkpoint(path: &Path, net: &RefinerNet<f32>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, net)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<RefinerNet<f32>> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_weights;

    #[test]
    fn round_trip() {
        let arch = ArchConfig::default_for(4);
        let net = init_weights::<f32>(&arch, None, 3).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &net).unwrap();
        assert_eq!(&buf[..4], b"PRCK");
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let net = RefinerNet::<f32>::zeros(&ArchConfig::default_for(2)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &net).unwrap();
        buf.pop();
        assert!(matches!(read_checkpoint(&mut buf.as_slice()), Err(Error::Data(_))));
    }
}
