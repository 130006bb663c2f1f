//! Binary parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    4 bytes  "DIQN"
//! version  u32      1
//! n_dims   u32      number of layer widths (layers + 1)
//! dims     n_dims x u32
//! params   f32 array in the network's flat parameter order
//! ```

use std::io::{Read, Write};

use super::{NnError, QNetwork, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DIQN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(net: &QNetwork<f32>, mut out: W) -> Result<()> {
    out.write_all(&CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(net.dims().len() as u32).to_le_bytes())?;
    for &d in net.dims() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(net.num_params() * 4);
    for p in net.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<QNetwork<f32>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut input)?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut input)? as usize;
    if n > 64 {
        return Err(NnError::Checkpoint(format!("{n} layer widths")));
    }
    let dims = (0..n)
        .map(|_| read_u32(&mut input).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut net = QNetwork::<f32>::zeros(&dims)?;
    let mut buf = vec![0u8; net.num_params() * 4];
    input.read_exact(&mut buf)?;
    for (p, chunk) in net.params_mut().iter_mut().zip(buf.chunks_exact(4)) {
        *p = f32::from_le_bytes(chunk.try_into().unwrap());
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..20, actions in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = QNetwork::<f32>::new(&[3, hidden, actions], &mut rng).unwrap();
            // include awkward bit patterns
            net.params_mut()[0] = -0.0;
            net.params_mut()[1] = f32::MIN_POSITIVE / 2.0;
            let mut bytes = Vec::new();
            write_checkpoint(&net, &mut bytes).unwrap();
            let back = read_checkpoint(&bytes[..]).unwrap();
            prop_assert_eq!(back.dims(), net.dims());
            let a: Vec<u32> = net.params().iter().map(|p| p.to_bits()).collect();
            let b: Vec<u32> = back.params().iter().map(|p| p.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn header_layout() {
        let net = QNetwork::<f32>::zeros(&[2, 3, 4]).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&net, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"DIQN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 12 + 3 * 4 + net.num_params() * 4);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let net = QNetwork::<f32>::zeros(&[2, 2]).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&net, &mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad[..]).is_err());
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        bytes.push(0);
        assert!(read_checkpoint(&bytes[..]).is_err());
    }
}
