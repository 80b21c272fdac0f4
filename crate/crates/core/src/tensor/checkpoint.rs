//! `PVE1` parameter checkpoints.
//!
//! Layout (all integers u64 little-endian, all reals f32 little-endian):
//!
//! ```text
//! "PVE1" count
//! count × { name_len name_bytes rank extents[rank] data[prod(extents)] }
//! optional "ADAM" section:
//!   lr beta1 beta2 eps (f64) step skipped buffers
//!   buffers × { len m[len] v[len] }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Adam, AdamConfig, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PVE1";
pub const ADAM_TAG: &[u8; 4] = b"ADAM";

#[derive(Clone, Debug, Default)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub adam: Option<Adam>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u64(w, self.tensors.len() as u64)?;
        for (name, t) in &self.tensors {
            put_u64(w, name.len() as u64)?;
            w.write_all(name.as_bytes())?;
            put_u64(w, t.rank() as u64)?;
            for &d in t.shape() {
                put_u64(w, d as u64)?;
            }
            put_f32s(w, t.data())?;
        }
        if let Some(adam) = &self.adam {
            w.write_all(ADAM_TAG)?;
            let c = adam.config;
            for x in [c.learning_rate, c.beta1, c.beta2, c.epsilon] {
                w.write_all(&(x as f64).to_le_bytes())?;
            }
            put_u64(w, adam.step_count())?;
            put_u64(w, adam.skipped())?;
            let (m, v) = adam.moments();
            put_u64(w, m.len() as u64)?;
            for (mi, vi) in m.iter().zip(v) {
                put_u64(w, mi.len() as u64)?;
                put_f32s(w, mi)?;
                put_f32s(w, vi)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("checkpoint does not start with PVE1".into()));
        }
        let count = get_len(r, "record count")?;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = get_len(r, "name length")?;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not utf-8".into()))?;
            let rank = get_len(r, "rank")?;
            if rank > 8 {
                return Err(Error::Format(format!("implausible rank {rank} for {name}")));
            }
            let shape = (0..rank).map(|_| get_len(r, "extent")).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = get_f32s(r, n)?;
            tensors.push((name, Tensor::new(shape, data)?));
        }
        let mut tag = [0u8; 4];
        let adam = match read_exact_or_eof(r, &mut tag)? {
            false => None,
            true if &tag == ADAM_TAG => {
                let mut hyper = [0f32; 4];
                for h in &mut hyper {
                    let mut b = [0u8; 8];
                    r.read_exact(&mut b)?;
                    *h = f64::from_le_bytes(b) as f32;
                }
                let config = AdamConfig {
                    learning_rate: hyper[0],
                    beta1: hyper[1],
                    beta2: hyper[2],
                    epsilon: hyper[3],
                };
                let step = get_u64(r)?;
                let skipped = get_u64(r)?;
                let buffers = get_len(r, "buffer count")?;
                let mut m = Vec::with_capacity(buffers.min(1 << 16));
                let mut v = Vec::with_capacity(buffers.min(1 << 16));
                for _ in 0..buffers {
                    let len = get_len(r, "buffer length")?;
                    m.push(get_f32s(r, len)?);
                    v.push(get_f32s(r, len)?);
                }
                Some(Adam::from_state(config, step, skipped, m, v)?)
            }
            true => return Err(Error::Format(format!("unknown section tag {tag:?}"))),
        };
        Ok(Checkpoint { tensors, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f32s<W: Write>(w: &mut W, xs: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 4);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_len<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let v = get_u64(r)?;
    if v > (1 << 32) {
        return Err(Error::Format(format!("implausible {what}: {v}")));
    }
    Ok(v as usize)
}

fn get_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Fills `buf`, or returns `false` on a clean end of stream.
fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 if filled == 0 => return Ok(false),
            0 => return Err(Error::Format("truncated section tag".into())),
            n => filled += n,
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let ck = Checkpoint {
            tensors: vec![("w".into(), Tensor::new(vec![2], vec![1.0, -2.0]).unwrap())],
            adam: None,
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let mut want = b"PVE1".to_vec();
        want.extend(1u64.to_le_bytes());
        want.extend(1u64.to_le_bytes());
        want.push(b'w');
        want.extend(1u64.to_le_bytes());
        want.extend(2u64.to_le_bytes());
        want.extend(1.0f32.to_le_bytes());
        want.extend((-2.0f32).to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn round_trip_with_adam_section() {
        let mut p = Tensor::from_fn(&[3, 2], |i| i as f32 * 0.5);
        p.grad_mut().iter_mut().for_each(|g| *g = 0.25);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(vec![&mut p]).unwrap();
        let ck = Checkpoint {
            tensors: vec![("layer0.weight".into(), p.clone())],
            adam: Some(adam),
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.get("layer0.weight").unwrap().data(), p.data());
        let a = back.adam.unwrap();
        assert_eq!(a.step_count(), 1);
        assert_eq!(a.moments().0, ck.adam.as_ref().unwrap().moments().0);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(Checkpoint::read_from(&mut &b"NOPE"[..]).is_err());
        let ck = Checkpoint {
            tensors: vec![("x".into(), Tensor::zeros(&[4]))],
            adam: None,
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(Checkpoint::read_from(&mut buf.as_slice()).is_err());
    }
}
