//! Weight checkpoints: little-endian binary with a shape header.
//!
//! Layout: magic `SNNW`, format version u32, layer count u32, then per
//! layer: kind tag u8 (0 conv, 1 fc, 2 pool), and for conv/fc a u8 rank,
//! u32 dims, and the f64 payload. All integers and floats little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::snn::{LayerWeights, Weights};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SNNW";
const VERSION: u32 = 1;

pub fn save_weights(weights: &Weights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(weights.layers.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for layer in &weights.layers {
        let (tag, tensor) = match layer {
            LayerWeights::Conv(t) => (0u8, Some(t)),
            LayerWeights::Fc(t) => (1u8, Some(t)),
            LayerWeights::Pool => (2u8, None),
        };
        w.write_all(&[tag]).map_err(io_err)?;
        if let Some(t) = tensor {
            w.write_all(&[t.shape().len() as u8]).map_err(io_err)?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Weights> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Schema(format!(
            "{}: not a weight checkpoint",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(io_err)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::Schema(format!(
            "{}: checkpoint version {version}, expected {VERSION}",
            path.display()
        )));
    }
    r.read_exact(&mut u32buf).map_err(io_err)?;
    let n_layers = u32::from_le_bytes(u32buf) as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag).map_err(io_err)?;
        match tag[0] {
            2 => layers.push(LayerWeights::Pool),
            t @ (0 | 1) => {
                let mut rank = [0u8; 1];
                r.read_exact(&mut rank).map_err(io_err)?;
                let mut shape = Vec::with_capacity(rank[0] as usize);
                for _ in 0..rank[0] {
                    r.read_exact(&mut u32buf).map_err(io_err)?;
                    shape.push(u32::from_le_bytes(u32buf) as usize);
                }
                let len: usize = shape.iter().product();
                let mut data = vec![0.0f64; len];
                let mut f64buf = [0u8; 8];
                for v in data.iter_mut() {
                    r.read_exact(&mut f64buf).map_err(io_err)?;
                    *v = f64::from_le_bytes(f64buf);
                }
                let tensor = Tensor::from_vec(&shape, data)?;
                layers.push(if t == 0 {
                    LayerWeights::Conv(tensor)
                } else {
                    LayerWeights::Fc(tensor)
                });
            }
            t => {
                return Err(Error::Schema(format!(
                    "{}: unknown layer tag {t}",
                    path.display()
                )))
            }
        }
    }
    Ok(Weights { layers })
}
