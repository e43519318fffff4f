//! Versioned binary container for trained models.
//!
//! Layout: magic `PAGB`, format version (u16), kind tag (u8), then a
//! little-endian payload specific to the kind.

use std::path::Path;

use crate::ensemble::{Meta, StackedEnsemble};
use crate::learners::{Gbt, Node, RandomForest, Svr, TrainedModel, Tree};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PAGB";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum KindTag {
    Rf = 1,
    Gbt = 2,
    Svr = 3,
    Ensemble = 4,
}

impl KindTag {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => KindTag::Rf,
            2 => KindTag::Gbt,
            3 => KindTag::Svr,
            4 => KindTag::Ensemble,
            _ => return Err(Error::Container(format!("unknown model kind tag {v}"))),
        })
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u32(v.len());
        for x in v {
            self.f64(*x);
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Container("truncated model payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()?;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(Error::Container("array length exceeds payload".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Container("invalid UTF-8 name".into()))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()?;
        self.take(usize::try_from(n).map_err(|_| Error::Container("oversized block".into()))?)
    }
}

fn write_trees(w: &mut Writer, trees: &[Tree]) {
    w.u32(trees.len());
    for t in trees {
        w.u32(t.nodes.len());
        for n in &t.nodes {
            w.u32(n.feature as usize);
            w.f64(n.threshold);
            w.u32(n.left as usize);
            w.u32(n.right as usize);
            w.f64(n.value);
        }
    }
}

fn read_trees(r: &mut Reader, n_features: usize) -> Result<Vec<Tree>> {
    let n_trees = r.u32()?;
    let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
    for _ in 0..n_trees {
        let n = r.u32()?;
        if n == 0 || n > (r.buf.len() - r.pos) / 28 {
            return Err(Error::Container("invalid tree size".into()));
        }
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            nodes.push(Node {
                feature: r.u32()? as u32,
                threshold: r.f64()?,
                left: r.u32()? as u32,
                right: r.u32()? as u32,
                value: r.f64()?,
            });
        }
        // children must point forward so prediction always terminates
        for (i, nd) in nodes.iter().enumerate() {
            if nd.feature != crate::learners::LEAF
                && (nd.feature as usize >= n_features
                    || nd.left as usize <= i
                    || nd.right as usize <= i
                    || nd.left as usize >= n
                    || nd.right as usize >= n)
            {
                return Err(Error::Container(format!("malformed tree node {i}")));
            }
        }
        trees.push(Tree { nodes });
    }
    Ok(trees)
}

fn payload(model: &TrainedModel) -> (KindTag, Vec<u8>) {
    let mut w = Writer::default();
    let tag = match model {
        TrainedModel::Rf(m) => {
            w.u32(m.n_features);
            w.u64(m.seed);
            write_trees(&mut w, &m.trees);
            KindTag::Rf
        }
        TrainedModel::Gbt(m) => {
            w.u32(m.n_features);
            w.u64(m.seed);
            w.f64(m.init);
            w.f64(m.learning_rate);
            write_trees(&mut w, &m.trees);
            KindTag::Gbt
        }
        TrainedModel::Svr(m) => {
            w.f64s(&m.x_mean);
            w.f64s(&m.x_scale);
            w.f64(m.y_mean);
            w.f64(m.y_scale);
            w.f64(m.gamma);
            w.f64s(&m.support);
            w.f64s(&m.coef);
            w.f64(m.bias);
            w.u8(m.converged as u8);
            w.u64(m.iterations as u64);
            w.f64(m.objective);
            KindTag::Svr
        }
    };
    (tag, w.0)
}

fn read_model(tag: KindTag, r: &mut Reader) -> Result<TrainedModel> {
    Ok(match tag {
        KindTag::Rf => {
            let n_features = r.u32()?;
            let seed = r.u64()?;
            let trees = read_trees(r, n_features)?;
            TrainedModel::Rf(RandomForest {
                trees,
                n_features,
                seed,
                oob: Vec::new(),
            })
        }
        KindTag::Gbt => {
            let n_features = r.u32()?;
            let seed = r.u64()?;
            let init = r.f64()?;
            let learning_rate = r.f64()?;
            let trees = read_trees(r, n_features)?;
            TrainedModel::Gbt(Gbt {
                init,
                learning_rate,
                trees,
                n_features,
                seed,
            })
        }
        KindTag::Svr => {
            let x_mean = r.f64s()?;
            let x_scale = r.f64s()?;
            let y_mean = r.f64()?;
            let y_scale = r.f64()?;
            let gamma = r.f64()?;
            let support = r.f64s()?;
            let coef = r.f64s()?;
            let p = x_mean.len();
            if x_scale.len() != p || p == 0 || support.len() != coef.len() * p {
                return Err(Error::Container("inconsistent SVR dimensions".into()));
            }
            TrainedModel::Svr(Svr {
                x_mean,
                x_scale,
                y_mean,
                y_scale,
                gamma,
                support,
                coef,
                bias: r.f64()?,
                converged: r.u8()? != 0,
                iterations: r.u64()? as usize,
                objective: r.f64()?,
            })
        }
        KindTag::Ensemble => return Err(Error::Container("nested ensemble".into())),
    })
}

fn header(tag: KindTag) -> Writer {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    w.u8(tag as u8);
    w
}

fn open(buf: &[u8]) -> Result<(KindTag, Reader<'_>)> {
    if buf.len() < 7 || &buf[..4] != MAGIC {
        return Err(Error::Container("not a PAGB model container".into()));
    }
    let mut r = Reader { buf, pos: 4 };
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::Container(format!(
            "unsupported container version {version} (expected {FORMAT_VERSION})"
        )));
    }
    Ok((KindTag::from_u8(r.u8()?)?, r))
}

fn finish(r: &Reader) -> Result<()> {
    if r.pos != r.buf.len() {
        return Err(Error::Container("trailing bytes after model payload".into()));
    }
    Ok(())
}

pub fn encode_model(model: &TrainedModel) -> Vec<u8> {
    let (tag, body) = payload(model);
    let mut w = header(tag);
    w.0.extend_from_slice(&body);
    w.0
}

pub fn decode_model(buf: &[u8]) -> Result<TrainedModel> {
    let (tag, mut r) = open(buf)?;
    let m = read_model(tag, &mut r)?;
    finish(&r)?;
    Ok(m)
}

pub fn encode_ensemble(e: &StackedEnsemble) -> Vec<u8> {
    let mut w = header(KindTag::Ensemble);
    w.u32(e.feature_names.len());
    for n in &e.feature_names {
        w.str(n);
    }
    for c in e.meta.coef {
        w.f64(c);
    }
    w.u8(e.meta.ridge_fallback as u8);
    let flat: Vec<f64> = e.loo.iter().flatten().copied().collect();
    w.f64s(&flat);
    for m in [&e.rf, &e.gbt, &e.svr] {
        w.bytes(&encode_model(m));
    }
    w.0
}

pub fn decode_ensemble(buf: &[u8]) -> Result<StackedEnsemble> {
    let (tag, mut r) = open(buf)?;
    if tag != KindTag::Ensemble {
        return Err(Error::Container(format!("expected an ensemble, found kind tag {}", tag as u8)));
    }
    let n_names = r.u32()?;
    let feature_names = (0..n_names).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let mut coef = [0.0; 4];
    for c in coef.iter_mut() {
        *c = r.f64()?;
    }
    let ridge_fallback = r.u8()? != 0;
    let flat = r.f64s()?;
    if flat.len() % 3 != 0 {
        return Err(Error::Container("LOO matrix is not n x 3".into()));
    }
    let loo = flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    let mut models = Vec::with_capacity(3);
    for expect in [KindTag::Rf, KindTag::Gbt, KindTag::Svr] {
        let blob = r.bytes()?;
        let m = decode_model(blob)?;
        let got = payload(&m).0;
        if got != expect || m.n_features() != n_names {
            return Err(Error::Container("ensemble members out of order or mismatched".into()));
        }
        models.push(m);
    }
    finish(&r)?;
    let mut it = models.into_iter();
    Ok(StackedEnsemble {
        rf: it.next().unwrap(),
        gbt: it.next().unwrap(),
        svr: it.next().unwrap(),
        meta: Meta { coef, ridge_fallback },
        loo,
        feature_names,
    })
}

pub fn write_ensemble(path: &Path, e: &StackedEnsemble) -> Result<()> {
    std::fs::write(path, encode_ensemble(e)).map_err(|e| Error::io(path, e))
}

pub fn read_ensemble(path: &Path) -> Result<StackedEnsemble> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ensemble(&buf)
}
