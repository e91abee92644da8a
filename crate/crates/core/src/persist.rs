//! Versioned, bit-exact checkpoint serialization.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! 8  bytes  magic "TSLEARN\0"
//! 4  bytes  format version (= 1)
//! 4  bytes  spec text length, then that many UTF-8 bytes (canonical spec)
//! per parameter, in layer order:
//!   4 bytes  name length, then the name bytes
//!   4 bytes  rank
//!   8 bytes  per extent
//!   4 bytes  per value, IEEE-754 binary32
//! 8  bytes  CRC-64 over all preceding bytes
//! ```
//!
//! Parameters are stored as 32-bit floats regardless of the training scalar
//! type: the interchange format is fixed so files are portable. Files are
//! written to a temporary sibling and renamed into place, so readers never
//! observe a partial checkpoint.

use std::fs;
use std::path::Path;

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, FormatError, Result};
use crate::model::{ModelState, NetworkSpec, Param};
use crate::Scalar;

pub const MAGIC: &[u8; 8] = b"TSLEARN\0";
pub const FORMAT_VERSION: u32 = 1;

// CRC-64 with the ECMA-182 polynomial, reflected form (as used by xz):
// init and xorout are all-ones.
const CRC64_POLY_REFLECTED: u64 = 0xC96C_5795_D787_0F42;

const fn build_crc64_table() -> [u64; 256] {
    let mut table = [0u64; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u64;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 == 1 {
                (crc >> 1) ^ CRC64_POLY_REFLECTED
            } else {
                crc >> 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

static CRC64_TABLE: [u64; 256] = build_crc64_table();

/// CRC-64 (ECMA polynomial) of a byte slice.
pub fn crc64(bytes: &[u8]) -> u64 {
    let mut crc = !0u64;
    for &b in bytes {
        crc = CRC64_TABLE[((crc ^ b as u64) & 0xFF) as usize] ^ (crc >> 8);
    }
    !crc
}

/// Serializes a model to the checkpoint byte layout.
pub fn encode<T: Scalar>(model: &ModelState<T>) -> Vec<u8> {
    let spec_text = model.spec().canonical_text();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec_text.len() as u32).to_le_bytes());
    out.extend_from_slice(spec_text.as_bytes());
    for param in model.parameters() {
        out.extend_from_slice(&(param.name.len() as u32).to_le_bytes());
        out.extend_from_slice(param.name.as_bytes());
        out.extend_from_slice(&(param.value.rank() as u32).to_le_bytes());
        for &extent in param.value.shape() {
            out.extend_from_slice(&(extent as u64).to_le_bytes());
        }
        for &v in param.value.data() {
            let narrowed = v.to_f32().expect("scalar fits f32");
            out.extend_from_slice(&narrowed.to_le_bytes());
        }
    }
    let checksum = crc64(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

/// Saves a model checkpoint via a temporary file and an atomic rename.
pub fn save<T: Scalar>(model: &ModelState<T>, path: &Path) -> Result<()> {
    let bytes = encode(model);
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, &bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path)
        .map_err(|e| Error::io(format!("renaming {} to {}", tmp.display(), path.display()), e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    cursor: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.cursor + n > self.bytes.len() {
            return Err(FormatError::Truncated(format!(
                "needed {n} bytes for {what} at offset {}",
                self.cursor
            ))
            .into());
        }
        let slice = &self.bytes[self.cursor..self.cursor + n];
        self.cursor += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }
}

/// Decodes a checkpoint byte buffer into a model. Validation order: magic,
/// version, checksum, then spec-vs-blob consistency.
pub fn decode(bytes: &[u8]) -> Result<ModelState<f32>> {
    if bytes.len() < MAGIC.len() {
        return Err(FormatError::Truncated("shorter than the magic header".into()).into());
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(FormatError::BadMagic.into());
    }
    let mut reader = Reader { bytes, cursor: MAGIC.len() };
    let version = reader.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    if bytes.len() < reader.cursor + 8 {
        return Err(FormatError::Truncated("missing checksum".into()).into());
    }
    let payload_len = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[payload_len..].try_into().expect("8 bytes"));
    let computed = crc64(&bytes[..payload_len]);
    if stored != computed {
        return Err(FormatError::ChecksumMismatch { stored, computed }.into());
    }

    // Parse the checksummed payload only.
    let mut reader = Reader { bytes: &bytes[..payload_len], cursor: reader.cursor };
    let spec_len = reader.u32("spec length")? as usize;
    let spec_bytes = reader.take(spec_len, "spec text")?;
    let spec_text = std::str::from_utf8(spec_bytes)
        .map_err(|_| FormatError::SpecMismatch("spec text is not UTF-8".into()))?;
    let spec = NetworkSpec::parse_canonical(spec_text)?;

    let expected = spec.parameter_specs()?;
    let mut params = Vec::with_capacity(expected.len());
    for pspec in &expected {
        let name_len = reader.u32("parameter name length")? as usize;
        let name_bytes = reader.take(name_len, "parameter name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| FormatError::SpecMismatch("parameter name is not UTF-8".into()))?;
        if name != pspec.name {
            return Err(FormatError::SpecMismatch(format!(
                "expected parameter '{}', found '{name}'",
                pspec.name
            ))
            .into());
        }
        let rank = reader.u32("parameter rank")? as usize;
        if rank != pspec.shape.len() {
            return Err(FormatError::SpecMismatch(format!(
                "parameter '{name}' has rank {rank}, spec implies {}",
                pspec.shape.len()
            ))
            .into());
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(reader.u64("parameter extent")? as usize);
        }
        if shape != pspec.shape {
            return Err(FormatError::SpecMismatch(format!(
                "parameter '{name}' has shape {shape:?}, spec implies {:?}",
                pspec.shape
            ))
            .into());
        }
        let numel: usize = shape.iter().product();
        let raw = reader.take(numel * 4, "parameter values")?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.push(Param { name: name.to_string(), value: Tensor::new(shape, data)? });
    }
    if reader.cursor != payload_len {
        return Err(FormatError::SpecMismatch(format!(
            "{} unexpected trailing payload bytes",
            payload_len - reader.cursor
        ))
        .into());
    }

    Ok(ModelState::from_parameters(spec, params)?.frozen())
}

/// Loads a checkpoint. The returned model is frozen; call
/// [`ModelState::thaw`] to resume training it.
pub fn load(path: &Path) -> Result<ModelState<f32>> {
    let bytes =
        fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}
