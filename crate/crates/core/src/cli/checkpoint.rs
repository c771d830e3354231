//! Binary parameter files.
//!
//! Layout (all integers little-endian):
//! magic `E2EVSR1`, `u32` version, `u8` kind (0 model, 1 encoder),
//! `u32` count of `key=value` header pairs (each string `u32` length + UTF-8),
//! `u32` tensor count, then per tensor: name string, `u8` dtype (1 = f64),
//! `u32` rank, `u64` dims, row-major `f64` payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};
use crate::rbm::{layer_kinds, EncoderStack, RbmParams};
use crate::seqnet::{Architecture, Model};
use crate::trainer::{ModelCheckpoint, TrainingMeta};

pub const MAGIC: &[u8; 7] = b"E2EVSR1";
pub const VERSION: u32 = 1;
const KIND_MODEL: u8 = 0;
const KIND_ENCODER: u8 = 1;
const DTYPE_F64: u8 = 1;

type Pairs = Vec<(String, String)>;

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
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn tensor(&mut self, name: &str, m: &Matrix) {
        self.str(name);
        self.u8(DTYPE_F64);
        self.u32(2);
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        for v in m.as_slice() {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt(detail: impl Into<String>) -> Error {
    Error::Checkpoint(detail.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
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
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }
    fn tensor(&mut self) -> Result<(String, Matrix)> {
        let name = self.str()?;
        if self.u8()? != DTYPE_F64 {
            return Err(corrupt(format!("{name}: unsupported dtype")));
        }
        let rank = self.u32()?;
        if rank != 2 {
            return Err(corrupt(format!("{name}: rank {rank}, expected 2")));
        }
        let rows = usize::try_from(self.u64()?).map_err(|_| corrupt("dimension overflow"))?;
        let cols = usize::try_from(self.u64()?).map_err(|_| corrupt("dimension overflow"))?;
        let len = rows.checked_mul(cols).and_then(|n| n.checked_mul(8));
        let payload = self.take(len.ok_or_else(|| corrupt("dimension overflow"))?)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((name, Matrix::from_vec(rows, cols, data)?))
    }
}

fn encode(kind: u8, header: &Pairs, tensors: &[(String, &Matrix)]) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u8(kind);
    w.u32(header.len() as u32);
    for (k, v) in header {
        w.str(k);
        w.str(v);
    }
    w.u32(tensors.len() as u32);
    for (name, m) in tensors {
        w.tensor(name, m);
    }
    w.0
}

fn decode(bytes: &[u8], expect_kind: u8) -> Result<(Pairs, Vec<(String, Matrix)>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(format!("version {version}, expected {VERSION}")));
    }
    let kind = r.u8()?;
    if kind != expect_kind {
        let name = |k| if k == KIND_MODEL { "model" } else { "encoder" };
        return Err(corrupt(format!("file holds a {} checkpoint, expected {}", name(kind), name(expect_kind))));
    }
    let n = r.u32()?;
    let header = (0..n).map(|_| Ok((r.str()?, r.str()?))).collect::<Result<Pairs>>()?;
    let n = r.u32()?;
    let tensors = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((header, tensors))
}

fn lookup<'a>(header: &'a Pairs, key: &str) -> Result<&'a str> {
    header
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| corrupt(format!("header is missing {key}")))
}

fn parse_field<T: std::str::FromStr>(header: &Pairs, key: &str) -> Result<T> {
    lookup(header, key)?
        .parse()
        .map_err(|_| corrupt(format!("header field {key} is malformed")))
}

/// Copies `loaded` into `slots`, requiring identical names and shapes in order.
fn fill_tensors(slots: Vec<(String, &mut Matrix)>, loaded: Vec<(String, Matrix)>) -> Result<()> {
    if slots.len() != loaded.len() {
        return Err(corrupt(format!("{} tensors stored, architecture needs {}", loaded.len(), slots.len())));
    }
    for ((name, slot), (stored, m)) in slots.into_iter().zip(loaded) {
        if name != stored {
            return Err(corrupt(format!("tensor {stored:?} where {name:?} was expected")));
        }
        if slot.shape() != m.shape() {
            return Err(corrupt(format!(
                "tensor {name} is {:?}, architecture needs {:?}",
                m.shape(),
                slot.shape()
            )));
        }
        *slot = m;
    }
    Ok(())
}

pub fn encode_model(ckpt: &ModelCheckpoint) -> Vec<u8> {
    let mut header = ckpt.model.arch.to_pairs();
    let meta = &ckpt.meta;
    header.extend([
        ("epochs_run".to_string(), meta.epochs_run.to_string()),
        ("best_epoch".to_string(), meta.best_epoch.to_string()),
        ("best_val_loss".to_string(), meta.best_val_loss.to_string()),
        ("seed".to_string(), meta.seed.to_string()),
    ]);
    let tensors: Vec<(String, &Matrix)> = ckpt.model.tensors().into_iter().map(|(n, _, m)| (n, m)).collect();
    encode(KIND_MODEL, &header, &tensors)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelCheckpoint> {
    let (header, tensors) = decode(bytes, KIND_MODEL)?;
    let arch = Architecture::from_pairs(&header)?;
    let meta = TrainingMeta {
        epochs_run: parse_field(&header, "epochs_run")?,
        best_epoch: parse_field(&header, "best_epoch")?,
        best_val_loss: parse_field(&header, "best_val_loss")?,
        seed: parse_field(&header, "seed")?,
    };
    // Shapes come from the architecture; values are overwritten below.
    let mut model = Model::init_random(arch, &mut Rng::new(0))?;
    fill_tensors(model.tensors_mut().into_iter().map(|(n, _, m)| (n, m)).collect(), tensors)?;
    model.validate()?;
    Ok(ModelCheckpoint { model, meta })
}

fn encoder_names(i: usize) -> [String; 3] {
    [format!("layer.{i}.weights"), format!("layer.{i}.vbias"), format!("layer.{i}.hbias")]
}

pub fn encode_encoder(stack: &EncoderStack, stream: &str) -> Vec<u8> {
    let sizes = stack.layer_sizes().iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    let kinds = stack.layers.iter().map(|l| l.kind.tag()).collect::<Vec<_>>().join(",");
    let header = vec![
        ("stream".to_string(), stream.to_string()),
        ("layer_sizes".to_string(), sizes),
        ("layer_kinds".to_string(), kinds),
    ];
    let mut tensors = Vec::new();
    for (i, l) in stack.layers.iter().enumerate() {
        let [w, a, b] = encoder_names(i);
        tensors.extend([(w, &l.weights), (a, &l.vbias), (b, &l.hbias)]);
    }
    encode(KIND_ENCODER, &header, &tensors)
}

/// The stack and the stream it was pretrained on.
pub fn decode_encoder(bytes: &[u8]) -> Result<(EncoderStack, String)> {
    let (header, tensors) = decode(bytes, KIND_ENCODER)?;
    let sizes = lookup(&header, "layer_sizes")?
        .split(',')
        .map(|s| s.parse::<usize>().map_err(|_| corrupt("layer_sizes is malformed")))
        .collect::<Result<Vec<_>>>()?;
    let kinds = layer_kinds(&sizes)?;
    let tags = kinds.iter().map(|k| k.tag()).collect::<Vec<_>>().join(",");
    if lookup(&header, "layer_kinds")? != tags {
        return Err(corrupt(format!("layer kinds do not match sizes {sizes:?}")));
    }
    let mut layers: Vec<RbmParams> = kinds
        .iter()
        .zip(sizes.windows(2))
        .map(|(&k, d)| RbmParams::zeros(k, d[0], d[1]))
        .collect();
    let mut slots = Vec::new();
    for (i, l) in layers.iter_mut().enumerate() {
        let [w, a, b] = encoder_names(i);
        slots.extend([(w, &mut l.weights), (a, &mut l.vbias), (b, &mut l.hbias)]);
    }
    fill_tensors(slots, tensors)?;
    let stream = lookup(&header, "stream")?.to_string();
    Ok((EncoderStack::new(layers)?, stream))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

pub fn save_model(path: &Path, ckpt: &ModelCheckpoint) -> Result<()> {
    write_bytes(path, &encode_model(ckpt))
}

pub fn load_model(path: &Path) -> Result<ModelCheckpoint> {
    decode_model(&read_bytes(path)?).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn save_encoder(path: &Path, stack: &EncoderStack, stream: &str) -> Result<()> {
    write_bytes(path, &encode_encoder(stack, stream))
}

pub fn load_encoder(path: &Path) -> Result<(EncoderStack, String)> {
    decode_encoder(&read_bytes(path)?).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}
