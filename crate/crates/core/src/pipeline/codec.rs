//! Binary model container.
//!
//! Layout (all integers and floats little-endian):
//! magic `SMNAE1`, `u32` format version, `u64` z, `u8` fusion, then the
//! tagged sections `STG1`, `STG2`, `STG3`, `SVM0`, each as a 4-byte tag, a
//! `u64` payload length and the payload, and finally a CRC-32 of every
//! preceding byte.

use std::fs;
use std::path::Path;

use super::model::{Fusion, PipelineModel, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::layer::{SmnaeLayer, StackedSmnae};
use crate::numerics::Matrix;
use crate::svm::{PlattParams, SvmModel};

const MAGIC: &[u8; 6] = b"SMNAE1";
const STAGE_TAGS: [&[u8; 4]; 3] = [b"STG1", b"STG2", b"STG3"];
const SVM_TAG: &[u8; 4] = b"SVM0";

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        self.f64s(m.as_slice());
    }
    fn section(&mut self, tag: &[u8; 4], payload: Writer) {
        self.0.extend_from_slice(tag);
        self.u64(payload.0.len() as u64);
        self.0.extend_from_slice(&payload.0);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!(
                "model file truncated: need {n} bytes at offset {}, {} remain",
                self.pos,
                self.buf.len() - self.pos
            ))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length exceeds address space".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("array too large".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let (r, c) = (self.len()?, self.len()?);
        let n = r.checked_mul(c).ok_or_else(|| Error::Format("matrix too large".into()))?;
        Matrix::from_vec(r, c, self.f64s(n)?)
    }
    fn section(&mut self, tag: &[u8; 4]) -> Result<Reader<'a>> {
        let found = self.take(4)?;
        if found != tag {
            return Err(Error::Format(format!(
                "expected section {}, found {:?}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(found)
            )));
        }
        let n = self.len()?;
        Ok(Reader { buf: self.take(n)?, pos: 0 })
    }
    fn finish(&self, what: &str) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("{} trailing bytes in {what}", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn write_stack(stack: &StackedSmnae) -> Writer {
    let mut w = Writer::default();
    w.u64(stack.layers().len() as u64);
    for layer in stack.layers() {
        w.matrix(layer.w_enc());
        w.matrix(layer.w_dec());
    }
    w
}

fn read_stack(mut r: Reader<'_>, what: &str) -> Result<StackedSmnae> {
    let n = r.len()?;
    let mut layers = Vec::new();
    for _ in 0..n {
        let enc = r.matrix()?;
        let dec = r.matrix()?;
        layers.push(SmnaeLayer::new(enc, dec)?);
    }
    r.finish(what)?;
    StackedSmnae::new(layers)
}

fn write_svm(m: &SvmModel) -> Writer {
    let mut w = Writer::default();
    w.f64(m.gamma);
    w.f64(m.bias);
    match m.platt {
        Some(p) => {
            w.u8(1);
            w.f64(p.a);
            w.f64(p.b);
        }
        None => {
            w.u8(0);
            w.f64(0.0);
            w.f64(0.0);
        }
    }
    let dim = m.feature_dim().unwrap_or(0);
    w.u64(m.support_vectors.len() as u64);
    w.u64(dim as u64);
    for sv in &m.support_vectors {
        w.f64s(sv);
    }
    w.f64s(&m.alphas);
    w
}

fn read_svm(mut r: Reader<'_>) -> Result<SvmModel> {
    let gamma = r.f64()?;
    let bias = r.f64()?;
    let has_platt = r.u8()?;
    let (a, b) = (r.f64()?, r.f64()?);
    let platt = match has_platt {
        0 => None,
        1 => Some(PlattParams { a, b }),
        v => return Err(Error::Format(format!("bad Platt flag {v}"))),
    };
    let (n, dim) = (r.len()?, r.len()?);
    let support_vectors = (0..n).map(|_| r.f64s(dim)).collect::<Result<_>>()?;
    let alphas = r.f64s(n)?;
    r.finish("SVM section")?;
    Ok(SvmModel {
        support_vectors,
        alphas,
        bias,
        gamma,
        platt,
    })
}

impl PipelineModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u64(self.z as u64);
        w.u8(match self.fusion {
            Fusion::Sum => 0,
            Fusion::Max => 1,
        });
        for (tag, stack) in STAGE_TAGS.iter().zip([&self.stage1, &self.stage2, &self.stage3]) {
            w.section(tag, write_stack(stack));
        }
        w.section(SVM_TAG, write_svm(&self.classifier));
        let crc = crc32fast::hash(&w.0);
        w.u32(crc);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::Format(format!(
                "checksum mismatch: stored {stored:#010x}, computed {actual:#010x}"
            )));
        }
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let z = r.len()?;
        let fusion = match r.u8()? {
            0 => Fusion::Sum,
            1 => Fusion::Max,
            v => return Err(Error::Format(format!("bad fusion code {v}"))),
        };
        let mut stacks = Vec::with_capacity(3);
        for tag in STAGE_TAGS {
            let sec = r.section(tag)?;
            stacks.push(read_stack(sec, &String::from_utf8_lossy(tag))?);
        }
        let classifier = read_svm(r.section(SVM_TAG)?)?;
        r.finish("model file")?;
        let mut it = stacks.into_iter();
        let (s1, s2, s3) = (it.next().expect("3"), it.next().expect("3"), it.next().expect("3"));
        PipelineModel::new(s1, s2, s3, classifier, z, fusion)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
