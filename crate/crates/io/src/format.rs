//! Binary container for adapters and plain matrices.
//!
//! ```text
//! magic    5 bytes  "NORA1"
//! kind     u8       0 = LoRA, 1 = NoRA, 255 = plain matrix
//! dims     u32 LE   LoRA: m n r | NoRA: m n r_out r_in | matrix: m n
//! scale    f64 LE   (1.0 for plain matrices)
//! flags    u8       bit 0: NoRA residual init
//! payload  f64 LE   row-major matrices in declaration order
//!                   LoRA: A (r x n), B (m x r)
//!                   NoRA: U_r (m x r_out), Vt_r (r_out x n), B' (r_out x r_in), A' (r_in x r_out)
//! checksum u64 LE   FNV-1a of every preceding byte
//! ```
//!
//! The checksum is verified before anything else is read, so a damaged file
//! is rejected as [`Error::Corruption`] and never partially decoded.

use std::fs;
use std::io::Write;
use std::path::Path;

use nora_core::hash::fnv1a;
use nora_core::{AnyAdapter, LoraAdapter, Matrix, NoraAdapter};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"NORA1";
pub const KIND_LORA: u8 = 0;
pub const KIND_NORA: u8 = 1;
pub const KIND_MATRIX: u8 = 255;
pub const FLAG_RESIDUAL: u8 = 1;

const CHECKSUM_LEN: usize = 8;
const MIN_LEN: usize = MAGIC.len() + 1 + CHECKSUM_LEN;
const ORTHONORMALITY_TOL: f64 = 1e-9;

/// Anything the container can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Stored {
    Adapter(AnyAdapter),
    Matrix(Matrix),
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(kind: u8) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.push(kind);
        Writer(buf)
    }

    fn dims(&mut self, dims: &[usize]) -> Result<()> {
        for &d in dims {
            let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} does not fit in u32")))?;
            self.0.extend_from_slice(&d.to_le_bytes());
        }
        Ok(())
    }

    fn matrix(&mut self, m: &Matrix) {
        for v in m.as_slice() {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn finish(mut self) -> Vec<u8> {
        let sum = fnv1a(&self.0);
        self.0.extend_from_slice(&sum.to_le_bytes());
        self.0
    }
}

pub fn encode_adapter(ad: &AnyAdapter) -> Result<Vec<u8>> {
    let mut w;
    match ad {
        AnyAdapter::Lora(a) => {
            let (m, n) = nora_core::Adapter::dims(a);
            w = Writer::new(KIND_LORA);
            w.dims(&[m, n, a.rank()])?;
            w.0.extend_from_slice(&a.scale().to_le_bytes());
            w.0.push(0);
            w.matrix(a.a());
            w.matrix(a.b());
        }
        AnyAdapter::Nora(a) => {
            let (m, n) = nora_core::Adapter::dims(a);
            w = Writer::new(KIND_NORA);
            w.dims(&[m, n, a.r_out(), a.r_in()])?;
            w.0.extend_from_slice(&a.scale().to_le_bytes());
            w.0.push(if a.residual_init() { FLAG_RESIDUAL } else { 0 });
            w.matrix(a.u_r());
            w.matrix(a.vt_r());
            w.matrix(a.b_inner());
            w.matrix(a.a_inner());
        }
    }
    Ok(w.finish())
}

pub fn encode_matrix(m: &Matrix) -> Result<Vec<u8>> {
    let mut w = Writer::new(KIND_MATRIX);
    w.dims(&[m.rows(), m.cols()])?;
    w.0.extend_from_slice(&1.0f64.to_le_bytes());
    w.0.push(0);
    w.matrix(m);
    Ok(w.finish())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("file ends inside {what}")))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        let bytes = self.take(rows * cols * 8, what)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Matrix::new(rows, cols, data)?)
    }
}

fn payload_len(shapes: &[(usize, usize)]) -> Result<usize> {
    shapes
        .iter()
        .try_fold(0usize, |acc, &(r, c)| {
            r.checked_mul(c)
                .and_then(|e| e.checked_mul(8))
                .and_then(|b| acc.checked_add(b))
        })
        .ok_or_else(|| Error::Format("dimension overflow".into()))
}

pub fn decode(bytes: &[u8]) -> Result<Stored> {
    if bytes.len() < MIN_LEN {
        return Err(Error::Corruption(format!("truncated: {} bytes", bytes.len())));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let stored = u64::from_le_bytes(trailer.try_into().expect("8 bytes"));
    let actual = fnv1a(body);
    if stored != actual {
        return Err(Error::Corruption(format!(
            "checksum mismatch: stored {stored:016x}, computed {actual:016x}"
        )));
    }
    if &body[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }

    let kind = body[MAGIC.len()];
    let ndims = match kind {
        KIND_LORA => 3,
        KIND_NORA => 4,
        KIND_MATRIX => 2,
        other => return Err(Error::Format(format!("unknown kind byte {other}"))),
    };
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len() + 1,
    };
    let dims: Vec<usize> = (0..ndims).map(|_| r.u32("dims")).collect::<Result<_>>()?;
    if dims.contains(&0) {
        return Err(Error::Format(format!("zero dimension in {dims:?}")));
    }
    let scale = r.f64("scale")?;
    let flags = r.take(1, "flags")?[0];
    if flags & !FLAG_RESIDUAL != 0 || (flags != 0 && kind != KIND_NORA) {
        return Err(Error::Format(format!("unsupported flags {flags:#04x} for kind {kind}")));
    }

    let shapes: Vec<(usize, usize)> = match kind {
        KIND_LORA => {
            let (m, n, rank) = (dims[0], dims[1], dims[2]);
            vec![(rank, n), (m, rank)]
        }
        KIND_NORA => {
            let (m, n, r_out, r_in) = (dims[0], dims[1], dims[2], dims[3]);
            vec![(m, r_out), (r_out, n), (r_out, r_in), (r_in, r_out)]
        }
        _ => vec![(dims[0], dims[1])],
    };
    let expected = payload_len(&shapes)?;
    let remaining = body.len() - r.pos;
    if remaining != expected {
        return Err(Error::Format(format!(
            "payload is {remaining} bytes, header implies {expected}"
        )));
    }

    let mut mats = Vec::with_capacity(shapes.len());
    for &(rows, cols) in &shapes {
        mats.push(r.matrix(rows, cols, "payload")?);
    }
    let invalid = |e: nora_core::NoraError| Error::Format(format!("invalid adapter: {e}"));
    let mut mats = mats.into_iter();
    let mut next = || mats.next().expect("one matrix per shape");
    Ok(match kind {
        KIND_LORA => {
            let a = next();
            let b = next();
            Stored::Adapter(LoraAdapter::from_parts(a, b, scale).map_err(invalid)?.into())
        }
        KIND_NORA => {
            let (u_r, vt_r, b_inner, a_inner) = (next(), next(), next(), next());
            let ad = NoraAdapter::from_parts(u_r, vt_r, b_inner, a_inner, scale, flags & FLAG_RESIDUAL != 0)
                .map_err(invalid)?;
            let (du, dv) = ad.orthonormality_defect();
            if du > ORTHONORMALITY_TOL || dv > ORTHONORMALITY_TOL {
                log::warn!("frozen factors are not orthonormal: |U^T U - I| = {du:e}, |V V^T - I| = {dv:e}");
            }
            Stored::Adapter(ad.into())
        }
        _ => Stored::Matrix(next()),
    })
}

pub fn decode_adapter(bytes: &[u8]) -> Result<AnyAdapter> {
    match decode(bytes)? {
        Stored::Adapter(a) => Ok(a),
        Stored::Matrix(_) => Err(Error::Format("expected an adapter, found a plain matrix".into())),
    }
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    match decode(bytes)? {
        Stored::Matrix(m) => Ok(m),
        Stored::Adapter(_) => Err(Error::Format("expected a plain matrix, found an adapter".into())),
    }
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))
            .map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn save_adapter(ad: &AnyAdapter, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_adapter(ad)?)
}

pub fn load_adapter(path: impl AsRef<Path>) -> Result<AnyAdapter> {
    decode_adapter(&read(path.as_ref())?)
}

pub fn save_matrix(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_matrix(m)?)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    decode_matrix(&read(path.as_ref())?)
}
