//! On-disk model container.
//!
//! A textual header line for `file`-command friendliness, then
//! length-prefixed binary sections:
//!
//! ```text
//! #morsel-model v1 <semicrf|maxent>\n
//! [4-byte section tag][u64 LE payload length][payload] ...
//! ```
//!
//! Feature strings are stored verbatim (index order), so models survive
//! any change to vocabulary hashing. `load(save(m))` is bit-identical:
//! every section has one canonical encoding. A version mismatch is a hard
//! error; a resource fingerprint mismatch at predict time is a warning
//! naming the resource, handled by the CLI.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::errors::{Error, Result};
use crate::features::{FeatureConfig, FeatureVocabulary};
use crate::semicrf::{Model, ResourceFingerprint};
use crate::tags::{MorphTag, Tagset, TagsetLevel};

const HEADER_PREFIX: &str = "#morsel-model";
const VERSION: &str = "v1";

/// Model kind marker in the header line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    SemiCrf,
    MaxEnt,
}

impl ModelKind {
    fn as_str(self) -> &'static str {
        match self {
            ModelKind::SemiCrf => "semicrf",
            ModelKind::MaxEnt => "maxent",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "semicrf" => Ok(ModelKind::SemiCrf),
            "maxent" => Ok(ModelKind::MaxEnt),
            other => Err(Error::ModelFormat(format!("unknown model kind `{other}`"))),
        }
    }
}

/// SHA-256 hex digest, used for resource fingerprints.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn write_section(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

struct SectionReader<'a> {
    data: &'a [u8],
    at: usize,
}

impl<'a> SectionReader<'a> {
    fn next(&mut self) -> Result<Option<([u8; 4], &'a [u8])>> {
        if self.at == self.data.len() {
            return Ok(None);
        }
        if self.at + 12 > self.data.len() {
            return Err(Error::ModelFormat("truncated section header".into()));
        }
        let mut tag = [0u8; 4];
        tag.copy_from_slice(&self.data[self.at..self.at + 4]);
        let len = u64::from_le_bytes(
            self.data[self.at + 4..self.at + 12]
                .try_into()
                .expect("8 bytes"),
        ) as usize;
        self.at += 12;
        if self.at + len > self.data.len() {
            return Err(Error::ModelFormat(format!(
                "section {} overruns the file",
                String::from_utf8_lossy(&tag)
            )));
        }
        let payload = &self.data[self.at..self.at + len];
        self.at += len;
        Ok(Some((tag, payload)))
    }
}

fn encode_config(config: &FeatureConfig, max_segment_length: Option<usize>) -> Vec<u8> {
    let mut text = String::new();
    let thresholds: Vec<String> = config
        .lsv_thresholds
        .iter()
        .map(|t| t.to_string())
        .collect();
    let _ = writeln!(text, "lsv_thresholds={}", thresholds.join(","));
    let _ = writeln!(
        text,
        "max_segment_length={}",
        max_segment_length.map_or_else(|| "none".to_owned(), |m| m.to_string())
    );
    let _ = writeln!(text, "ngram={}", config.max_context_ngram);
    let _ = writeln!(text, "use_affix={}", config.use_affix);
    let _ = writeln!(text, "use_conjunction={}", config.use_conjunction);
    let _ = writeln!(text, "use_dict={}", config.use_dict);
    let _ = writeln!(text, "use_lsv={}", config.use_lsv);
    text.into_bytes()
}

fn decode_config(payload: &[u8]) -> Result<(FeatureConfig, Option<usize>)> {
    let text = std::str::from_utf8(payload)
        .map_err(|_| Error::ModelFormat("config section is not UTF-8".into()))?;
    let mut config = FeatureConfig::default();
    let mut max_segment_length = None;
    for line in text.lines() {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::ModelFormat(format!("bad config line `{line}`")))?;
        let bad = || Error::ModelFormat(format!("bad config value `{value}` for {key}"));
        match key {
            "lsv_thresholds" => {
                config.lsv_thresholds = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| v.parse().map_err(|_| bad()))
                        .collect::<Result<_>>()?
                };
            }
            "max_segment_length" => {
                max_segment_length = if value == "none" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad())?)
                };
            }
            "ngram" => config.max_context_ngram = value.parse().map_err(|_| bad())?,
            "use_affix" => config.use_affix = value.parse().map_err(|_| bad())?,
            "use_conjunction" => config.use_conjunction = value.parse().map_err(|_| bad())?,
            "use_dict" => config.use_dict = value.parse().map_err(|_| bad())?,
            "use_lsv" => config.use_lsv = value.parse().map_err(|_| bad())?,
            other => return Err(Error::ModelFormat(format!("unknown config key `{other}`"))),
        }
    }
    Ok((config, max_segment_length))
}

fn encode_strings(strings: &[String]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(strings.len() as u32).to_le_bytes());
    for s in strings {
        let bytes = s.as_bytes();
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(bytes);
    }
    out
}

fn decode_strings(payload: &[u8]) -> Result<Vec<String>> {
    let err = || Error::ModelFormat("truncated string table".into());
    if payload.len() < 4 {
        return Err(err());
    }
    let count = u32::from_le_bytes(payload[..4].try_into().expect("4 bytes")) as usize;
    let mut at = 4;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        if at + 4 > payload.len() {
            return Err(err());
        }
        let len = u32::from_le_bytes(payload[at..at + 4].try_into().expect("4 bytes")) as usize;
        at += 4;
        if at + len > payload.len() {
            return Err(err());
        }
        let s = std::str::from_utf8(&payload[at..at + len])
            .map_err(|_| Error::ModelFormat("non-UTF-8 string entry".into()))?;
        out.push(s.to_owned());
        at += len;
    }
    if at != payload.len() {
        return Err(Error::ModelFormat("trailing bytes in string table".into()));
    }
    Ok(out)
}

fn encode_weights(weights: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * weights.len());
    out.extend_from_slice(&(weights.len() as u64).to_le_bytes());
    for w in weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

fn decode_weights(payload: &[u8]) -> Result<Vec<f64>> {
    if payload.len() < 8 {
        return Err(Error::ModelFormat("truncated weight section".into()));
    }
    let count = u64::from_le_bytes(payload[..8].try_into().expect("8 bytes")) as usize;
    if payload.len() != 8 + 8 * count {
        return Err(Error::ModelFormat("weight section length mismatch".into()));
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let at = 8 + 8 * i;
        out.push(f64::from_le_bytes(
            payload[at..at + 8].try_into().expect("8 bytes"),
        ));
    }
    Ok(out)
}

/// Serializes a segmentation model to bytes.
pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(
        format!(
            "{HEADER_PREFIX} {VERSION} {}\n",
            ModelKind::SemiCrf.as_str()
        )
        .as_bytes(),
    );
    write_section(
        &mut out,
        b"CFG ",
        &encode_config(model.config(), model.max_segment_length()),
    );
    let mut tag_lines = vec![model.tagset().level().to_string()];
    tag_lines.extend(model.tagset().tags().iter().map(|t| t.to_string()));
    write_section(&mut out, b"TAGS", &encode_strings(&tag_lines));
    write_section(&mut out, b"VOCB", &encode_strings(model.vocab().names()));
    write_section(&mut out, b"WGTS", &encode_weights(model.weights()));
    let fp_lines: Vec<String> = model
        .fingerprints()
        .iter()
        .map(|f| format!("{}\t{}", f.name, f.sha256_hex))
        .collect();
    write_section(&mut out, b"FPRS", &encode_strings(&fp_lines));
    out
}

fn split_header(data: &[u8]) -> Result<(ModelKind, &[u8])> {
    let nl = data
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::ModelFormat("missing header line".into()))?;
    let header = std::str::from_utf8(&data[..nl])
        .map_err(|_| Error::ModelFormat("header is not UTF-8".into()))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(HEADER_PREFIX) {
        return Err(Error::ModelFormat("not a model file".into()));
    }
    let version = parts
        .next()
        .ok_or_else(|| Error::ModelFormat("missing version".into()))?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported model version `{version}` (expected {VERSION})"
        )));
    }
    let kind = ModelKind::parse(
        parts
            .next()
            .ok_or_else(|| Error::ModelFormat("missing model kind".into()))?,
    )?;
    Ok((kind, &data[nl + 1..]))
}

/// Deserializes a segmentation model.
pub fn decode_model(data: &[u8]) -> Result<Model> {
    let (kind, body) = split_header(data)?;
    if kind != ModelKind::SemiCrf {
        return Err(Error::ModelFormat(
            "expected a segmentation model, found a classifier".into(),
        ));
    }
    let mut reader = SectionReader { data: body, at: 0 };
    let mut config = None;
    let mut tagset = None;
    let mut vocab = None;
    let mut weights = None;
    let mut fingerprints = Vec::new();
    while let Some((tag, payload)) = reader.next()? {
        match &tag {
            b"CFG " => config = Some(decode_config(payload)?),
            b"TAGS" => {
                let lines = decode_strings(payload)?;
                let (level_line, tag_lines) = lines
                    .split_first()
                    .ok_or_else(|| Error::ModelFormat("empty tag section".into()))?;
                let level = TagsetLevel::new(
                    level_line
                        .parse()
                        .map_err(|_| Error::ModelFormat("bad tagset level".into()))?,
                )?;
                let tags: Vec<MorphTag> = tag_lines
                    .iter()
                    .map(|s| MorphTag::parse(s))
                    .collect::<Result<_>>()?;
                tagset = Some(Tagset::from_tags(level, tags)?);
            }
            b"VOCB" => vocab = Some(FeatureVocabulary::from_names(decode_strings(payload)?)?),
            b"WGTS" => weights = Some(decode_weights(payload)?),
            b"FPRS" => {
                for line in decode_strings(payload)? {
                    let (name, hex) = line
                        .split_once('\t')
                        .ok_or_else(|| Error::ModelFormat("bad fingerprint entry".into()))?;
                    fingerprints.push(ResourceFingerprint {
                        name: name.to_owned(),
                        sha256_hex: hex.to_owned(),
                    });
                }
            }
            other => {
                return Err(Error::ModelFormat(format!(
                    "unknown section `{}`",
                    String::from_utf8_lossy(other)
                )))
            }
        }
    }
    let (config, max_segment_length) =
        config.ok_or_else(|| Error::ModelFormat("missing config section".into()))?;
    Model::new(
        weights.ok_or_else(|| Error::ModelFormat("missing weight section".into()))?,
        vocab.ok_or_else(|| Error::ModelFormat("missing vocabulary section".into()))?,
        tagset.ok_or_else(|| Error::ModelFormat("missing tagset section".into()))?,
        config,
        max_segment_length,
        fingerprints,
    )
}

/// Serialized MaxEnt classifier parts.
pub struct MaxEntParts {
    pub max_ngram: usize,
    pub l1: bool,
    pub coefficient: f64,
    pub split_mode: bool,
    pub classes: Vec<String>,
    pub vocab_names: Vec<String>,
    pub weights: Vec<f64>,
}

/// Serializes a MaxEnt classifier to bytes (same container, distinct
/// kind marker).
pub fn encode_maxent(parts: &MaxEntParts) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(
        format!("{HEADER_PREFIX} {VERSION} {}\n", ModelKind::MaxEnt.as_str()).as_bytes(),
    );
    let mut cfg = String::new();
    let _ = writeln!(cfg, "coefficient={}", parts.coefficient);
    let _ = writeln!(cfg, "l1={}", parts.l1);
    let _ = writeln!(cfg, "max_ngram={}", parts.max_ngram);
    let _ = writeln!(cfg, "split_mode={}", parts.split_mode);
    write_section(&mut out, b"CFG ", cfg.as_bytes());
    write_section(&mut out, b"CLS ", &encode_strings(&parts.classes));
    write_section(&mut out, b"VOCB", &encode_strings(&parts.vocab_names));
    write_section(&mut out, b"WGTS", &encode_weights(&parts.weights));
    out
}

/// Deserializes a MaxEnt classifier.
pub fn decode_maxent(data: &[u8]) -> Result<MaxEntParts> {
    let (kind, body) = split_header(data)?;
    if kind != ModelKind::MaxEnt {
        return Err(Error::ModelFormat(
            "expected a classifier, found a segmentation model".into(),
        ));
    }
    let mut reader = SectionReader { data: body, at: 0 };
    let mut parts = MaxEntParts {
        max_ngram: 0,
        l1: true,
        coefficient: 0.0,
        split_mode: false,
        classes: Vec::new(),
        vocab_names: Vec::new(),
        weights: Vec::new(),
    };
    let mut saw_cfg = false;
    while let Some((tag, payload)) = reader.next()? {
        match &tag {
            b"CFG " => {
                saw_cfg = true;
                let text = std::str::from_utf8(payload)
                    .map_err(|_| Error::ModelFormat("config section is not UTF-8".into()))?;
                for line in text.lines() {
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| Error::ModelFormat(format!("bad config line `{line}`")))?;
                    let bad =
                        || Error::ModelFormat(format!("bad config value `{value}` for {key}"));
                    match key {
                        "coefficient" => parts.coefficient = value.parse().map_err(|_| bad())?,
                        "l1" => parts.l1 = value.parse().map_err(|_| bad())?,
                        "max_ngram" => parts.max_ngram = value.parse().map_err(|_| bad())?,
                        "split_mode" => parts.split_mode = value.parse().map_err(|_| bad())?,
                        other => {
                            return Err(Error::ModelFormat(format!("unknown config key `{other}`")))
                        }
                    }
                }
            }
            b"CLS " => parts.classes = decode_strings(payload)?,
            b"VOCB" => parts.vocab_names = decode_strings(payload)?,
            b"WGTS" => parts.weights = decode_weights(payload)?,
            other => {
                return Err(Error::ModelFormat(format!(
                    "unknown section `{}`",
                    String::from_utf8_lossy(other)
                )))
            }
        }
    }
    if !saw_cfg {
        return Err(Error::ModelFormat("missing config section".into()));
    }
    Ok(parts)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    decode_model(&data)
}

pub fn save_maxent(path: &Path, model: &crate::baselines::MaxEntModel) -> Result<()> {
    let cfg = model.config();
    let parts = MaxEntParts {
        max_ngram: cfg.max_ngram,
        l1: cfg.regularizer == crate::baselines::Regularizer::L1,
        coefficient: cfg.coefficient,
        split_mode: cfg.split_mode,
        classes: model.classes().to_vec(),
        vocab_names: model.vocab().names().to_vec(),
        weights: model.weights().to_vec(),
    };
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode_maxent(&parts))?;
    Ok(())
}

pub fn load_maxent(path: &Path) -> Result<crate::baselines::MaxEntModel> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let parts = decode_maxent(&data)?;
    let config = crate::baselines::MaxEntConfig {
        max_ngram: parts.max_ngram,
        regularizer: if parts.l1 {
            crate::baselines::Regularizer::L1
        } else {
            crate::baselines::Regularizer::L2
        },
        coefficient: parts.coefficient,
        split_mode: parts.split_mode,
        ..crate::baselines::MaxEntConfig::default()
    };
    crate::baselines::MaxEntModel::from_parts(
        config,
        parts.classes,
        FeatureVocabulary::from_names(parts.vocab_names)?,
        parts.weights,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dataset, DatasetRole};
    use crate::features::Resources;
    use crate::training::{fit, TrainConfig};

    fn small_model() -> Model {
        let train = Dataset::parse_str(
            "takler\ttak:ROOT:NOUN ler:SUFFIX:INFL:NOUN:NUMBER:PLURAL\n\
             pol\tpol:ROOT:NOUN",
            DatasetRole::Train,
        )
        .unwrap();
        let cfg = TrainConfig {
            max_iterations: 30,
            ..TrainConfig::default()
        };
        let mut res = Resources::empty();
        res.fingerprints
            .push(("dict".into(), sha256_hex(b"tak\npol\n")));
        fit(&train, &cfg, &res).unwrap().model
    }

    #[test]
    fn model_roundtrip_bit_identical() {
        let model = small_model();
        let bytes = encode_model(&model);
        let loaded = decode_model(&bytes).unwrap();
        assert_eq!(encode_model(&loaded), bytes);
        assert_eq!(loaded.weights(), model.weights());
        assert_eq!(loaded.tagset(), model.tagset());
        assert_eq!(loaded.vocab().names(), model.vocab().names());
        assert_eq!(loaded.fingerprints(), model.fingerprints());
    }

    #[test]
    fn loaded_model_predicts_identically() {
        let model = small_model();
        let loaded = decode_model(&encode_model(&model)).unwrap();
        let res = Resources::empty();
        for word in ["takler", "poller", "tak"] {
            let a = model.viterbi(word, &res).unwrap();
            let b = loaded.viterbi(word, &res).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn header_line_is_text() {
        let bytes = encode_model(&small_model());
        let first_line: Vec<u8> = bytes.iter().take_while(|&&b| b != b'\n').copied().collect();
        assert_eq!(
            String::from_utf8(first_line).unwrap(),
            "#morsel-model v1 semicrf"
        );
    }

    #[test]
    fn version_mismatch_is_hard_error() {
        let mut bytes = encode_model(&small_model());
        // Patch the version in the header.
        let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
        let patched = String::from_utf8(bytes[..header_end].to_vec())
            .unwrap()
            .replace(" v1 ", " v9 ");
        bytes.splice(..header_end, patched.into_bytes());
        let err = decode_model(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn corrupt_sections_rejected() {
        let bytes = encode_model(&small_model());
        assert!(decode_model(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_model(b"not a model").is_err());
    }

    #[test]
    fn maxent_container_roundtrip() {
        let parts = MaxEntParts {
            max_ngram: 3,
            l1: true,
            coefficient: 0.25,
            split_mode: true,
            classes: vec![String::new(), "PLURAL".into()],
            vocab_names: vec!["NG:^t".into(), "BIAS".into()],
            weights: vec![0.5, -1.25, 0.0, 3.5],
        };
        let bytes = encode_maxent(&parts);
        let loaded = decode_maxent(&bytes).unwrap();
        assert_eq!(encode_maxent(&loaded), bytes);
        // Kind markers are enforced.
        assert!(decode_model(&bytes).is_err());
        assert!(decode_maxent(&encode_model(&small_model())).is_err());
    }

    #[test]
    fn maxent_model_roundtrip_predicts_identically() {
        let data = vec![
            ("takler".to_owned(), "PLURAL".to_owned()),
            ("takin".to_owned(), "GENITIVE".to_owned()),
            ("tak".to_owned(), String::new()),
        ];
        let cfg = crate::baselines::MaxEntConfig {
            coefficient: 1e-3,
            ..crate::baselines::MaxEntConfig::default()
        };
        let model = crate::baselines::maxent_train(&data, &cfg).unwrap();
        let dir = std::env::temp_dir().join("morsel-maxent-roundtrip.bin");
        save_maxent(&dir, &model).unwrap();
        let loaded = load_maxent(&dir).unwrap();
        for (word, _) in &data {
            assert_eq!(model.predict(word), loaded.predict(word));
        }
        let _ = std::fs::remove_file(&dir);
    }

    #[test]
    fn sha256_is_stable() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
