//! Dataset loading and the encoded-spike cache.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use spikeconv::encode::cache::{read_spike_cache, write_spike_cache};
use spikeconv::encode::idx::{parse_idx_labels, write_idx_labels};
use spikeconv::encode::{load_aer_recording, load_idx_images, AerConfig, ImageEncoder};
use spikeconv::{SpikeShape, SpikeTensor};

use crate::config::{DataConfig, DataFormat, EncodeConfig, RunConfig};
use crate::manifest::sha256_hex;

/// Input geometry after cropping MNIST's outer row and column.
pub const INPUT_SIZE: usize = 27;
pub const INPUT_CHANNELS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn limit(self, data: &DataConfig) -> usize {
        match self {
            Split::Train => data.train_limit,
            Split::Test => data.test_limit,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub shape: SpikeShape,
    pub images: Vec<SpikeTensor>,
    pub labels: Vec<u8>,
    /// Cache file holding the spikes; the labels sit next to it.
    pub cache: PathBuf,
    pub cache_hit: bool,
}

pub fn input_shape(encode: &EncodeConfig) -> SpikeShape {
    SpikeShape::new(encode.bins + encode.silent_bins, INPUT_CHANNELS, INPUT_SIZE, INPUT_SIZE)
}

#[derive(Serialize)]
struct CacheKey<'a> {
    split: Split,
    format: DataFormat,
    dir: &'a Path,
    limit: usize,
    encode: &'a EncodeConfig,
}

/// Cache file stem: the split name and a digest of everything that shapes
/// the encoded spikes.
pub fn cache_stem(cfg: &RunConfig, split: Split) -> String {
    let key = CacheKey {
        split,
        format: cfg.data.format,
        dir: &cfg.data.dir,
        limit: split.limit(&cfg.data),
        encode: &cfg.encode,
    };
    let text = toml::to_string(&key).expect("cache key serializes");
    format!("{}-{}", split.name(), &sha256_hex(text.as_bytes())[..16])
}

pub fn labels_path(cache: &Path) -> PathBuf {
    cache.with_extension("labels")
}

fn mnist_files(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// N-MNIST recordings of a split, ordered by file name then digit.
fn nmnist_files(dir: &Path, split: Split) -> Result<Vec<(PathBuf, u8)>> {
    let root = dir.join(match split {
        Split::Train => "Train",
        Split::Test => "Test",
    });
    let mut files = Vec::new();
    for digit in 0..10u8 {
        let sub = root.join(digit.to_string());
        if !sub.is_dir() {
            continue;
        }
        for entry in fs::read_dir(&sub).with_context(|| format!("listing {}", sub.display()))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "bin") {
                files.push((path, digit));
            }
        }
    }
    if files.is_empty() {
        bail!("no N-MNIST recordings under {}", root.display());
    }
    files.sort_by(|a, b| (a.0.file_name(), a.1).cmp(&(b.0.file_name(), b.1)));
    Ok(files)
}

fn truncate<T>(mut v: Vec<T>, limit: usize) -> Vec<T> {
    if limit > 0 {
        v.truncate(limit);
    }
    v
}

/// Reads and encodes a split from the raw dataset files.
pub fn encode_split(cfg: &RunConfig, split: Split) -> Result<(Vec<SpikeTensor>, Vec<u8>)> {
    let limit = split.limit(&cfg.data);
    match cfg.data.format {
        DataFormat::Mnist => {
            let (images, labels) = mnist_files(&cfg.data.dir, split);
            let data = load_idx_images(&images, &labels).with_context(|| format!("loading MNIST {}", split.name()))?;
            let data = truncate(data, limit);
            let encoder = ImageEncoder::new(cfg.encode.latency());
            let tensors = data.par_iter().map(|x| encoder.encode(&x.image)).collect::<spikeconv::Result<Vec<_>>>()?;
            Ok((tensors, data.iter().map(|x| x.label).collect()))
        }
        DataFormat::Nmnist => {
            let files = truncate(nmnist_files(&cfg.data.dir, split)?, limit);
            let aer = AerConfig {
                n_bins: cfg.encode.bins,
                silent_bins: cfg.encode.silent_bins,
                out_rows: INPUT_SIZE,
                out_cols: INPUT_SIZE,
                ..AerConfig::default()
            };
            let tensors = files
                .par_iter()
                .map(|(path, _)| load_aer_recording(path, &aer).with_context(|| format!("decoding {}", path.display())))
                .collect::<Result<Vec<_>>>()?;
            Ok((tensors, files.iter().map(|f| f.1).collect()))
        }
    }
}

/// The encoded split, from `cache_dir` when a cache with a matching key
/// exists and freshly encoded (and cached) otherwise.
pub fn load_encoded(cfg: &RunConfig, split: Split, cache_dir: &Path) -> Result<Encoded> {
    let shape = input_shape(&cfg.encode);
    let cache = cache_dir.join(format!("{}.spkt", cache_stem(cfg, split)));
    let labels_file = labels_path(&cache);
    if cache.is_file() && labels_file.is_file() {
        let (cached_shape, images) =
            read_spike_cache(&fs::read(&cache)?).with_context(|| format!("reading {}", cache.display()))?;
        let labels = parse_idx_labels(&fs::read(&labels_file)?).with_context(|| format!("reading {}", labels_file.display()))?;
        if cached_shape != shape || labels.len() != images.len() {
            bail!("{} does not match the configured encoding", cache.display());
        }
        return Ok(Encoded {
            shape,
            images,
            labels,
            cache,
            cache_hit: true,
        });
    }
    let (images, labels) = encode_split(cfg, split)?;
    fs::create_dir_all(cache_dir).with_context(|| format!("creating {}", cache_dir.display()))?;
    let mut spikes = Vec::new();
    write_spike_cache(&mut spikes, shape, &images)?;
    let mut label_bytes = Vec::new();
    write_idx_labels(&mut label_bytes, &labels)?;
    // Write through temporary names so an interrupted run never leaves a
    // cache that looks complete.
    for (path, bytes) in [(&labels_file, &label_bytes), (&cache, &spikes)] {
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, path)?;
    }
    Ok(Encoded {
        shape,
        images,
        labels,
        cache,
        cache_hit: false,
    })
}
