//! Binary model layout, all integers as little-endian `u64` and all reals as
//! little-endian `f64`:
//!
//! ```text
//! magic "CFSEDNN1"
//! n_widths, widths...
//! one activation tag byte per layer
//! per layer: weights (row-major out x in), biases
//! normalizer mean, normalizer std          (input width each)
//! n_unicast, n_groups, group sizes..., downlink budget, uplink caps...
//! ```

use super::{Activation, Allocator, Mlp, Normalizer, OutputLayout};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"CFSEDNN1";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("model file truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Format(format!("count {v} too large")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

const MAX_DIM: usize = 1 << 24;

fn bounded(n: usize, what: &str) -> Result<usize> {
    if n > MAX_DIM {
        return Err(Error::Format(format!("{what} {n} is implausibly large")));
    }
    Ok(n)
}

impl Allocator {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MODEL_MAGIC.to_vec();
        let put_u64 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u64).to_le_bytes());
        let put_f64s = |out: &mut Vec<u8>, vs: &[f64]| vs.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        put_u64(&mut out, self.net.widths.len());
        self.net.widths.iter().for_each(|&w| put_u64(&mut out, w));
        out.extend(self.net.activations.iter().map(|a| a.tag()));
        for (w, b) in self.net.weights.iter().zip(&self.net.biases) {
            put_f64s(&mut out, w);
            put_f64s(&mut out, b);
        }
        put_f64s(&mut out, &self.normalizer.mean);
        put_f64s(&mut out, &self.normalizer.std);
        put_u64(&mut out, self.layout.n_unicast);
        put_u64(&mut out, self.layout.group_sizes.len());
        self.layout.group_sizes.iter().for_each(|&k| put_u64(&mut out, k));
        put_f64s(&mut out, &[self.layout.p_dl_total]);
        put_f64s(&mut out, &self.layout.p_ul_caps);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).ok() != Some(MODEL_MAGIC.as_slice()) {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let n_widths = bounded(r.u64()?, "layer count")?;
        if n_widths < 2 {
            return Err(Error::Format("model needs at least two widths".into()));
        }
        let widths = (0..n_widths).map(|_| r.u64().and_then(|w| bounded(w, "width"))).collect::<Result<Vec<_>>>()?;
        let layers = n_widths - 1;
        let activations = r.take(layers)?.iter().map(|&t| Activation::from_tag(t)).collect::<Result<Vec<_>>>()?;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            weights.push(r.f64s(widths[l] * widths[l + 1])?);
            biases.push(r.f64s(widths[l + 1])?);
        }
        let mean = r.f64s(widths[0])?;
        let std = r.f64s(widths[0])?;
        let n_unicast = bounded(r.u64()?, "unicast count")?;
        let n_groups = bounded(r.u64()?, "group count")?;
        let group_sizes =
            (0..n_groups).map(|_| r.u64().and_then(|k| bounded(k, "group size"))).collect::<Result<Vec<_>>>()?;
        let p_dl_total = r.f64s(1)?[0];
        let p_ul_caps = r.f64s(n_unicast + group_sizes.iter().sum::<usize>())?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes in model file", bytes.len() - r.pos)));
        }
        let net = Mlp { widths, weights, biases, activations };
        let layout = OutputLayout { n_unicast, group_sizes, p_dl_total, p_ul_caps };
        Allocator::new(net, Normalizer { mean, std }, layout).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
