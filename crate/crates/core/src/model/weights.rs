//! Named model parameters and the `IRSW` weight file.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! b"IRSW" | 0x01 | u32 header_len | header_len bytes of UTF-8 JSON | blob
//! ```
//!
//! The JSON header maps each parameter name to
//! `{"shape": [..], "offset": <byte offset into blob>, "dtype": "f32"}`.
//! The blob holds the raw little-endian `f32` values.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Architecture, ModelError, Result};
use crate::tensor::{conv2d, Tensor};

pub const WEIGHT_FILE_MAGIC: &[u8; 4] = b"IRSW";
pub const WEIGHT_FILE_VERSION: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

fn conv_params(out: &mut Vec<ParamSpec>, name: &str, co: usize, ci: usize, k: usize) {
    out.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: vec![co, ci, k, k],
    });
    out.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: vec![co],
    });
}

impl Architecture {
    /// Extra input channels (besides the hidden state) of GRU level `l`.
    pub(crate) fn gru_input_dim(&self, level: usize) -> usize {
        let h = self.hidden_dim;
        let from_finer = if level == 0 { self.motion_dim } else { h };
        let from_coarser = if level + 1 < self.gru_levels { h } else { 0 };
        from_finer + from_coarser
    }

    /// Every parameter the architecture needs, in a fixed order.
    pub fn manifest(&self) -> Vec<ParamSpec> {
        let [e0, e1] = self.encoder_dims;
        let h = self.hidden_dim;
        let mb = self.motion_branch_dim;
        let mut m = Vec::new();
        for net in ["fnet", "cnet"] {
            conv_params(&mut m, &format!("{net}.conv1"), e0, 3, 7);
            conv_params(&mut m, &format!("{net}.conv2"), e1, e0, 3);
            conv_params(&mut m, &format!("{net}.res.conv1"), e1, e1, 3);
            conv_params(&mut m, &format!("{net}.res.conv2"), e1, e1, 3);
        }
        conv_params(&mut m, "fnet.out", self.feature_dim, e1, 1);
        for l in 1..self.gru_levels {
            conv_params(&mut m, &format!("cnet.down.{l}"), e1, e1, 3);
        }
        for l in 0..self.gru_levels {
            conv_params(&mut m, &format!("cnet.hidden.{l}"), h, e1, 3);
            conv_params(&mut m, &format!("cnet.context.{l}"), h, e1, 3);
            conv_params(&mut m, &format!("cnet.zqr.{l}"), 3 * h, h, 3);
        }
        conv_params(&mut m, "update.encoder.convc1", mb, self.corr_channels(), 1);
        conv_params(&mut m, "update.encoder.convc2", mb, mb, 3);
        conv_params(&mut m, "update.encoder.convd1", mb, 1, 7);
        conv_params(&mut m, "update.encoder.convd2", mb, mb, 3);
        conv_params(&mut m, "update.encoder.conv", self.motion_dim - 1, 2 * mb, 3);
        for l in 0..self.gru_levels {
            let cin = h + self.gru_input_dim(l);
            for gate in ["convz", "convr", "convq"] {
                conv_params(&mut m, &format!("update.gru.{l}.{gate}"), h, cin, 3);
            }
        }
        conv_params(&mut m, "update.disp_head.conv1", self.head_dim, h, 3);
        conv_params(&mut m, "update.disp_head.conv2", 1, self.head_dim, 3);
        conv_params(&mut m, "update.mask.conv1", self.head_dim, h, 3);
        conv_params(&mut m, "update.mask.conv2", 9 * 16, self.head_dim, 1);
        m
    }
}

fn to_rank4(shape: &[usize]) -> [usize; 4] {
    let mut s = [1usize; 4];
    for (d, &v) in s.iter_mut().zip(shape) {
        *d = v;
    }
    s
}

/// Immutable-after-load parameter set for one [`Architecture`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    arch: Architecture,
    params: BTreeMap<String, Tensor>,
}

impl ModelWeights {
    /// Checks that every manifest entry is present, correctly shaped and
    /// finite. Extra parameters are ignored.
    pub fn new(arch: Architecture, params: BTreeMap<String, Tensor>) -> Result<Self> {
        arch.validate()?;
        for spec in arch.manifest() {
            let t = params
                .get(&spec.name)
                .ok_or_else(|| ModelError::MissingParam(spec.name.clone()))?;
            if t.shape() != to_rank4(&spec.shape) {
                return Err(ModelError::ParamShape {
                    name: spec.name,
                    expected: spec.shape,
                    got: t.shape().to_vec(),
                });
            }
            if !t.is_finite() {
                return Err(ModelError::NonFiniteParam(spec.name));
            }
        }
        Ok(Self { arch, params })
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation drawn from ChaCha8 in
    /// manifest order.
    pub fn random(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        let mut bound = 1.0f32;
        for spec in arch.manifest() {
            if spec.shape.len() == 4 {
                let fan_in = spec.shape[1] * spec.shape[2] * spec.shape[3];
                bound = 1.0 / (fan_in as f32).sqrt();
            }
            let len = spec.shape.iter().product();
            let data = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
            params.insert(spec.name.clone(), Tensor::new(to_rank4(&spec.shape), data)?);
        }
        Self::new(arch.clone(), params)
    }

    /// All parameters zero.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        let params = arch
            .manifest()
            .into_iter()
            .map(|s| (s.name.clone(), Tensor::zeros(to_rank4(&s.shape))))
            .collect();
        Self::new(arch.clone(), params)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }

    /// Replaces one parameter, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let cur = self
            .params
            .get_mut(name)
            .ok_or_else(|| ModelError::MissingParam(name.to_string()))?;
        if cur.shape() != value.shape() {
            return Err(ModelError::ParamShape {
                name: name.to_string(),
                expected: cur.shape().to_vec(),
                got: value.shape().to_vec(),
            });
        }
        if !value.is_finite() {
            return Err(ModelError::NonFiniteParam(name.to_string()));
        }
        *cur = value;
        Ok(())
    }

    /// Runs the convolution `name` (its `.weight` and `.bias`).
    pub(crate) fn conv(&self, name: &str, input: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        let w = self.get(&format!("{name}.weight"))?;
        let b = self.get(&format!("{name}.bias"))?;
        Ok(conv2d(input, w, b.data(), stride, pad)?)
    }

    /// Serialises in manifest order.
    pub fn to_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Entry<'a> {
            shape: &'a [usize],
            offset: usize,
            dtype: &'static str,
        }
        let manifest = self.arch.manifest();
        let mut header = BTreeMap::new();
        let mut blob = Vec::new();
        for spec in &manifest {
            let t = &self.params[&spec.name];
            header.insert(
                spec.name.as_str(),
                Entry {
                    shape: &spec.shape,
                    offset: blob.len(),
                    dtype: "f32",
                },
            );
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(9 + json.len() + blob.len());
        out.extend_from_slice(WEIGHT_FILE_MAGIC);
        out.push(WEIGHT_FILE_VERSION);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blob);
        out
    }

    pub fn from_bytes(bytes: &[u8], arch: &Architecture) -> Result<Self> {
        #[derive(Deserialize)]
        struct Entry {
            shape: Vec<usize>,
            offset: usize,
            dtype: String,
        }
        let bad = |m: String| ModelError::WeightFile(m);
        if bytes.len() < 9 {
            return Err(bad("file shorter than fixed header".into()));
        }
        if &bytes[..4] != WEIGHT_FILE_MAGIC {
            return Err(bad("bad magic".into()));
        }
        if bytes[4] != WEIGHT_FILE_VERSION {
            return Err(bad(format!("unsupported version {}", bytes[4])));
        }
        let hlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let hend = 9usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("header length exceeds file".into()))?;
        let header: BTreeMap<String, Entry> =
            serde_json::from_slice(&bytes[9..hend]).map_err(|e| bad(format!("header: {e}")))?;
        let blob = &bytes[hend..];

        let mut params = BTreeMap::new();
        for spec in arch.manifest() {
            let e = header
                .get(&spec.name)
                .ok_or_else(|| ModelError::MissingParam(spec.name.clone()))?;
            if e.dtype != "f32" {
                return Err(bad(format!("`{}` has dtype {}", spec.name, e.dtype)));
            }
            if e.shape != spec.shape {
                return Err(ModelError::ParamShape {
                    name: spec.name,
                    expected: spec.shape,
                    got: e.shape.clone(),
                });
            }
            let len: usize = e.shape.iter().product();
            let end = e
                .offset
                .checked_add(len * 4)
                .filter(|&end| end <= blob.len())
                .ok_or_else(|| bad(format!("`{}` runs past end of blob", spec.name)))?;
            let data = blob[e.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.insert(spec.name.clone(), Tensor::new(to_rank4(&e.shape), data)?);
        }
        Self::new(arch.clone(), params)
    }

    pub fn load(path: &Path, arch: &Architecture) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?, arch)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_names_unique_and_flat() {
        let m = Architecture::standard().manifest();
        let mut names: Vec<_> = m.iter().map(|p| p.name.as_str()).collect();
        assert!(names.contains(&"fnet.conv1.weight"));
        assert!(names.contains(&"update.gru.2.convq.bias"));
        names.sort();
        names.dedup();
        assert_eq!(names.len(), m.len());
    }

    #[test]
    fn gru_input_channels() {
        let a = Architecture::standard();
        assert_eq!(a.gru_input_dim(0), 128 + 128);
        assert_eq!(a.gru_input_dim(1), 256);
        assert_eq!(a.gru_input_dim(2), 128);
        let mut one = a.clone();
        one.gru_levels = 1;
        assert_eq!(one.gru_input_dim(0), 128);
    }

    #[test]
    fn file_roundtrip() {
        let arch = Architecture::small();
        let w = ModelWeights::random(&arch, 11).unwrap();
        let bytes = w.to_bytes();
        assert_eq!(&bytes[..4], b"IRSW");
        assert_eq!(bytes[4], 1);
        let back = ModelWeights::from_bytes(&bytes, &arch).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn rejects_bad_files() {
        let arch = Architecture::small();
        let bytes = ModelWeights::random(&arch, 1).unwrap().to_bytes();

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(ModelWeights::from_bytes(&magic, &arch), Err(ModelError::WeightFile(_))));

        let truncated = &bytes[..bytes.len() - 4];
        assert!(matches!(ModelWeights::from_bytes(truncated, &arch), Err(ModelError::WeightFile(_))));

        let mut other = arch.clone();
        other.feature_dim = 48;
        assert!(matches!(
            ModelWeights::from_bytes(&bytes, &other),
            Err(ModelError::ParamShape { .. })
        ));
    }

    #[test]
    fn missing_param_is_reported() {
        let arch = Architecture::small();
        let w = ModelWeights::random(&arch, 1).unwrap();
        let mut params = w.params.clone();
        params.remove("update.mask.conv2.bias");
        match ModelWeights::new(arch, params) {
            Err(ModelError::MissingParam(n)) => assert_eq!(n, "update.mask.conv2.bias"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn random_is_reproducible() {
        let arch = Architecture::small();
        assert_eq!(
            ModelWeights::random(&arch, 5).unwrap(),
            ModelWeights::random(&arch, 5).unwrap()
        );
        assert_ne!(
            ModelWeights::random(&arch, 5).unwrap(),
            ModelWeights::random(&arch, 6).unwrap()
        );
    }
}
