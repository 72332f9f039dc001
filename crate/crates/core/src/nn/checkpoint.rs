//! Flat binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  b"HSEEDCKP"
//! u32    version (1)
//! u64    tensor count
//! per tensor:
//!   u64  name length, then UTF-8 name bytes
//!   u64  rank, then rank × u64 dims
//!   f32  payload, product(dims) values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NnError, Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"HSEEDCKP";
pub const VERSION: u32 = 1;

pub fn write<T: Scalar, W: Write>(
    mut w: W,
    entries: &[(&str, &Tensor<T>)],
) -> Result<(), NnError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u64).to_le_bytes())?;
    for (name, t) in entries {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u64).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

const MAX_RANK: u64 = 8;

pub fn read<R: Read>(mut r: R) -> Result<Vec<(String, Tensor<f32>)>, NnError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u64(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = read_u64(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = read_u64(&mut r)?;
        if rank > MAX_RANK {
            return Err(NnError::Checkpoint(format!("rank {rank} for {name}")));
        }
        let dims = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let mut payload = vec![0u8; n * 4];
        r.read_exact(&mut payload)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::from_vec(&dims, data)?));
    }
    Ok(out)
}

pub fn save<T: Scalar>(path: &Path, entries: &[(&str, &Tensor<T>)]) -> Result<(), NnError> {
    write(BufWriter::new(File::create(path)?), entries)
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor<f32>)>, NnError> {
    read(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_in_memory() {
        let a = Tensor::<f32>::from_vec(&[2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-7, -0.0]).unwrap();
        let b = Tensor::<f32>::scalar(42.0);
        let mut buf = Vec::new();
        write(&mut buf, &[("w", &a), ("bias", &b)]).unwrap();
        let back = read(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "w");
        assert_eq!(back[0].1.shape(), &[2, 3]);
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back[0].1), bits(&a));
        assert_eq!(back[1].1.item(), 42.0);
    }

    #[test]
    fn header_bytes_are_fixed() {
        let mut buf = Vec::new();
        write::<f32, _>(&mut buf, &[]).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[12..20], &0u64.to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(read(&b"NOTMAGIC\x01\0\0\0"[..]), Err(NnError::Checkpoint(_))));
        let t = Tensor::<f32>::zeros(&[4]);
        let mut buf = Vec::new();
        write(&mut buf, &[("z", &t)]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read(buf.as_slice()).is_err());
    }
}
