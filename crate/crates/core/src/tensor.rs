//! Dense channel-major grids.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// `channels x height x width` grid stored channel-major, rows contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default> Tensor3<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::default(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {channels}x{height}x{width} grid",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Copy zero-padded on the bottom and right so both spatial dims are
    /// multiples of `m`.
    pub fn padded_to_multiple(&self, m: usize) -> Self {
        let h = self.height.div_ceil(m) * m;
        let w = self.width.div_ceil(m) * m;
        if h == self.height && w == self.width {
            return self.clone();
        }
        let mut out = Self::zeros(self.channels, h, w);
        for c in 0..self.channels {
            for y in 0..self.height {
                let src = self.idx(c, y, 0);
                let dst = out.idx(c, y, 0);
                out.data[dst..dst + self.width].copy_from_slice(&self.data[src..src + self.width]);
            }
        }
        out
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Tensor3<U> {
        Tensor3 {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Channels `from..to` as a new grid.
    pub fn slice_channels(&self, from: usize, to: usize) -> Self {
        let n = self.plane_len();
        Self {
            channels: to - from,
            height: self.height,
            width: self.width,
            data: self.data[from * n..to * n].to_vec(),
        }
    }
}

const TENSOR_MAGIC: &[u8; 4] = b"PRTP";
const TENSOR_VERSION: u32 = 1;

/// Writes one grid: magic `PRTP`, version, channels, height, width (all
/// little-endian `u32`) followed by the values as little-endian `f32`.
pub fn write_grid(w: &mut impl Write, t: &Tensor3<f32>) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    for v in [TENSOR_VERSION, t.channels as u32, t.height as u32, t.width as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(4 * t.data.len());
    for v in &t.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_grid(r: &mut impl Read) -> Result<Tensor3<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Data("not a tensor record".into()));
    }
    let mut word = || -> Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    };
    let version = word()?;
    if version != TENSOR_VERSION {
        return Err(Error::Data(format!("unsupported tensor version {version}")));
    }
    let (c, h, w) = (word()? as usize, word()? as usize, word()? as usize);
    let mut bytes = vec![0u8; 4 * c * h * w];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor3::from_vec(c, h, w, data)
}
