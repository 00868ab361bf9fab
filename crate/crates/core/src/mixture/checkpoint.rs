//! Binary checkpoint: little-endian `"PDGM"`, u32 version, u32 K, u32 D,
//! u64 step, then weights (K f64), means (K·D f64, row-major), variances
//! (K·D), and the sufficient statistics in the same layout (zeros before the
//! first update).

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use super::{MixtureState, SufficientStats};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PDGM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(state: &MixtureState) -> Vec<u8> {
    let (k, d) = (state.k(), state.d());
    let mut out = Vec::with_capacity(24 + 8 * (2 * k + 4 * k * d));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&state.step.to_le_bytes());
    let mut put = |xs: &mut dyn Iterator<Item = f64>| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    put(&mut state.weights.iter().copied());
    put(&mut state.means.iter().copied());
    put(&mut state.variances.iter().copied());
    let zeros = SufficientStats::zeros(k, d);
    let s = state.suffstats.as_ref().unwrap_or(&zeros);
    put(&mut s.s_pi.iter().copied());
    put(&mut s.s_mu.iter().copied());
    put(&mut s.s_sigma.iter().copied());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated: need {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<MixtureState> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        r.pos = 0;
        return Err(r.err("bad magic, expected PDGM"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        r.pos -= 4;
        return Err(r.err(format!("unsupported version {version}")));
    }
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    if k == 0 || d == 0 {
        r.pos -= 8;
        return Err(r.err(format!("empty mixture K={k} D={d}")));
    }
    let step = r.u64()?;
    let weights = Array1::from(r.f64s(k)?);
    let means = Array2::from_shape_vec((k, d), r.f64s(k * d)?).expect("sized");
    let variances = Array2::from_shape_vec((k, d), r.f64s(k * d)?).expect("sized");
    let s_pi = Array1::from(r.f64s(k)?);
    let s_mu = Array2::from_shape_vec((k, d), r.f64s(k * d)?).expect("sized");
    let s_sigma = Array2::from_shape_vec((k, d), r.f64s(k * d)?).expect("sized");
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after checkpoint"));
    }
    let suffstats = s_pi.iter().any(|&p| p != 0.0).then_some(SufficientStats {
        s_pi,
        s_mu,
        s_sigma,
    });
    Ok(MixtureState {
        weights,
        means,
        variances,
        suffstats,
        step,
    })
}

pub fn write_checkpoint(path: impl AsRef<Path>, state: &MixtureState) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(state)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<MixtureState> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

/// Lossless text export: one CSV per array, named `<prefix>_<array>.csv`.
pub fn write_text_export(prefix: impl AsRef<Path>, state: &MixtureState) -> Result<Vec<PathBuf>> {
    let prefix = prefix.as_ref();
    let (k, d) = (state.k(), state.d());
    let zeros = SufficientStats::zeros(k, d);
    let s = state.suffstats.as_ref().unwrap_or(&zeros);
    let column = |v: &Array1<f64>| -> String {
        let mut out = String::from("value\n");
        for x in v {
            out.push_str(&format!("{x:?}\n"));
        }
        out
    };
    let matrix = |m: &Array2<f64>| -> String { crate::io::matrix_to_csv(m) };
    let files = [
        ("weights", column(&state.weights)),
        ("means", matrix(&state.means)),
        ("variances", matrix(&state.variances)),
        ("s_pi", column(&s.s_pi)),
        ("s_mu", matrix(&s.s_mu)),
        ("s_sigma", matrix(&s.s_sigma)),
    ];
    let mut paths = Vec::new();
    for (name, body) in files {
        let mut p = prefix.as_os_str().to_owned();
        p.push(format!("_{name}.csv"));
        let p = PathBuf::from(p);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        paths.push(p);
    }
    Ok(paths)
}
