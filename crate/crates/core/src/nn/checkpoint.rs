//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "WRSNCKPT"
//! version  u32
//! seed     u64
//! count    u32      number of tensors
//! count x { name_len u16, name (UTF-8), rows u32, cols u32 }
//! payload  f64 x sum(rows * cols), tensors in table order, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{NnError, Parameterized, PolicyNet, Tensor2, ValueNet};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WRSNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub tensors: Vec<(String, Tensor2)>,
}

impl Checkpoint {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor2) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn push_all<P: Parameterized>(&mut self, params: &P) {
        for (name, t) in params.named_tensors() {
            self.push(name, t.clone());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor2> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn policy(&self) -> Result<PolicyNet, NnError> {
        PolicyNet::from_named(|n| self.get(n).cloned())
    }

    pub fn critic(&self) -> Result<ValueNet, NnError> {
        ValueNet::from_named(|n| self.get(n).cloned())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), NnError> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&len_u32(self.tensors.len(), "tensor count")?.to_le_bytes())?;
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len())
                .map_err(|_| NnError::BadCheckpoint(format!("tensor name too long: {name}")))?;
            out.write_all(&len.to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&len_u32(t.rows(), "rows")?.to_le_bytes())?;
            out.write_all(&len_u32(t.cols(), "cols")?.to_le_bytes())?;
        }
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        read_exact(&mut input, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NnError::BadCheckpoint("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut input)?);
        if version != CHECKPOINT_VERSION {
            return Err(NnError::CheckpointVersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let seed = u64::from_le_bytes(read_array(&mut input)?);
        let count = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let mut table = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = u16::from_le_bytes(read_array(&mut input)?) as usize;
            let mut name = vec![0u8; len];
            read_exact(&mut input, &mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| NnError::BadCheckpoint("tensor name is not UTF-8".into()))?;
            let rows = u32::from_le_bytes(read_array(&mut input)?) as usize;
            let cols = u32::from_le_bytes(read_array(&mut input)?) as usize;
            table.push((name, rows, cols));
        }
        let mut tensors = Vec::with_capacity(table.len());
        for (name, rows, cols) in table {
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| NnError::BadCheckpoint(format!("{name}: oversized shape")))?;
            let mut data = Vec::with_capacity(n.min(1 << 24));
            for _ in 0..n {
                data.push(f64::from_le_bytes(read_array(&mut input)?));
            }
            tensors.push((name, Tensor2::from_vec(rows, cols, data)?));
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(NnError::BadCheckpoint("trailing bytes after payload".into()));
        }
        Ok(Self { seed, tensors })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        Self::read_from(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn len_u32(n: usize, what: &str) -> Result<u32, NnError> {
    u32::try_from(n).map_err(|_| NnError::BadCheckpoint(format!("{what} exceeds u32")))
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<(), NnError> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => NnError::BadCheckpoint("truncated checkpoint".into()),
        _ => NnError::Io(e),
    })
}

fn read_array<R: Read, const N: usize>(input: &mut R) -> Result<[u8; N], NnError> {
    let mut buf = [0u8; N];
    read_exact(input, &mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::super::PolicyShape;
    use super::*;

    fn sample(recurrent: bool) -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = PolicyShape {
            obs_dim: 7,
            hidden: 4,
            action_dim: 2,
            recurrent,
            log_std_init: -0.5,
        };
        let mut ck = Checkpoint::new(42);
        ck.push_all(&PolicyNet::new(shape, &mut rng));
        ck.push_all(&ValueNet::new(7, 4, 2, &mut rng));
        ck
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        for recurrent in [true, false] {
            let ck = sample(recurrent);
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(), bytes);
            let policy = back.policy().unwrap();
            assert_eq!(policy.is_recurrent(), recurrent);
            assert_eq!(back.critic().unwrap().outputs(), 2);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = sample(true).to_bytes();
        assert_eq!(&bytes[..8], b"WRSNCKPT");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), CHECKPOINT_VERSION);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 42);
    }

    #[test]
    fn version_and_corruption_errors() {
        let mut bytes = sample(true).to_bytes();
        bytes[8] = 99;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(NnError::CheckpointVersionMismatch { found: 99, .. })
        ));
        let bytes = sample(true).to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(NnError::BadCheckpoint(_))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(b"NOTACKPT"),
            Err(NnError::BadCheckpoint(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let ck = sample(false);
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }
}
