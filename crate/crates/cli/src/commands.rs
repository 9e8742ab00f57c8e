//! Subcommand implementations. Each reads its inputs from the input
//! directory, writes artifacts under the output directory and finishes with
//! a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use spikeconv::heads::fcn::FCN_TAG;
use spikeconv::heads::rstdp::RSTDP_TAG;
use spikeconv::heads::{FcnHead, FeatureMatrix, RstdpHead};
use spikeconv::layer::{ConvKernel, ConvLayer};
use spikeconv::network::Network;
use spikeconv::recon::{feature_ppm, montage_ppm, pgm, reconstruct_l2, reconstruct_l4, ReconFeature};
use spikeconv::rng::{self, streams};
use spikeconv::train::{
    convergence_factor, curve_csv, head_from_fcn, run_forgetting, run_noise_demo, run_rstdp, saturation, train_network,
    AccuracyPoint, LayerPhase, TrainPlan,
};

use crate::config::{HeadKind, RunConfig};
use crate::data::{labels_path, load_encoded, Encoded, Split, INPUT_CHANNELS};
use crate::manifest::{hash_file, sha256_hex, Manifest};

pub const FEATURES_TRAIN: &str = "features-train.fmat";
pub const FEATURES_TEST: &str = "features-test.fmat";
pub const SPIKES_TEST: &str = "spikes-test.csv";
pub const HEAD_FILE: &str = "head.bin";

pub fn kernel_file(layer: usize) -> String {
    format!("layer{layer}.kernel")
}

/// Shared state of one command invocation.
pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    /// Where upstream artifacts are read from.
    pub input: PathBuf,
    manifest: Manifest,
    timing: Vec<(String, f64)>,
    started: Instant,
}

impl Run {
    pub fn new(command: &str, cfg: RunConfig, out: PathBuf, input: PathBuf) -> Result<Self> {
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Run {
            manifest: Manifest::new(command, cfg.clone()),
            cfg,
            out,
            input,
            timing: Vec::new(),
            started: Instant::now(),
        })
    }

    fn cache_dir(&self) -> PathBuf {
        self.out.join("cache")
    }

    /// Writes `bytes` to `name` under the output directory, reads it back
    /// and records its digest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let digest = hash_file(&path)?;
        ensure!(digest == sha256_hex(bytes), "{} did not read back intact", path.display());
        self.manifest.artifacts.insert(name.to_string(), digest);
        Ok(())
    }

    fn record_artifact(&mut self, path: &Path) -> Result<()> {
        let name = path.strip_prefix(&self.out).unwrap_or(path).to_string_lossy().into_owned();
        self.manifest.artifacts.insert(name, hash_file(path)?);
        Ok(())
    }

    /// Reads an upstream artifact and records its digest.
    pub fn read(&mut self, name: &str) -> Result<Vec<u8>> {
        let path = self.input.join(name);
        let bytes = fs::read(&path).with_context(|| format!("missing prerequisite {}", path.display()))?;
        self.manifest.inputs.insert(path.to_string_lossy().into_owned(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn encoded(&mut self, split: Split) -> Result<Encoded> {
        let t = Instant::now();
        let enc = load_encoded(&self.cfg, split, &self.cache_dir())?;
        self.time(&format!("encode-{}", split.name()), t);
        eprintln!(
            "{} split: {} images ({})",
            split.name(),
            enc.images.len(),
            if enc.cache_hit { "cache hit" } else { "encoded" }
        );
        Ok(enc)
    }

    fn time(&mut self, stage: &str, since: Instant) {
        self.timing.push((stage.to_string(), since.elapsed().as_secs_f64()));
    }

    /// Writes the manifest and the wall-clock log. Timing lives in its own
    /// file so the numerical outputs stay byte-identical across runs.
    pub fn finish(mut self) -> Result<Manifest> {
        let total = self.started.elapsed().as_secs_f64();
        self.timing.push(("total".into(), total));
        let mut csv = String::from("stage,seconds\n");
        for (stage, secs) in &self.timing {
            writeln!(csv, "{stage},{secs:.3}").unwrap();
        }
        let command = self.manifest.command.clone();
        fs::write(self.out.join(format!("{command}.timing.csv")), csv)?;
        let path = self.out.join(Manifest::file_name(&command));
        fs::write(&path, self.manifest.to_toml()).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }

    fn network(&mut self) -> Result<Network> {
        let mut layers = Vec::with_capacity(self.cfg.layers.len());
        let mut channels = INPUT_CHANNELS;
        for (i, spec) in self.cfg.layers.clone().iter().enumerate() {
            let kernel = ConvKernel::from_bytes(&self.read(&kernel_file(i))?).with_context(|| kernel_file(i))?;
            ensure!(
                kernel.shape() == [spec.maps, channels, spec.kernel, spec.kernel],
                "{} has shape {:?} but the config describes {:?}",
                kernel_file(i),
                kernel.shape(),
                [spec.maps, channels, spec.kernel, spec.kernel]
            );
            layers.push(ConvLayer::new(kernel, spec.inhibition()));
            channels = spec.maps;
        }
        Ok(Network::new(layers))
    }

    fn features(&mut self, name: &str) -> Result<FeatureMatrix> {
        let bytes = self.read(name)?;
        FeatureMatrix::from_bytes(&bytes).with_context(|| format!("parsing {name}"))
    }
}

/// Encodes both splits into the cache.
pub fn encode(run: &mut Run) -> Result<()> {
    for split in [Split::Train, Split::Test] {
        let enc = run.encoded(split)?;
        run.record_artifact(&enc.cache)?;
        run.record_artifact(&labels_path(&enc.cache))?;
    }
    Ok(())
}

/// Unsupervised STDP training of every convolution layer in turn.
pub fn train(run: &mut Run) -> Result<()> {
    let enc = run.encoded(Split::Train)?;
    let n = run.cfg.data.stdp_images;
    let classes = &run.cfg.data.stdp_classes;
    let inputs: Vec<_> = enc
        .images
        .into_iter()
        .zip(&enc.labels)
        .filter(|(_, y)| classes.is_empty() || classes.contains(y))
        .map(|(x, _)| x)
        .take(n)
        .collect();
    ensure!(inputs.len() == n, "{} training images of the STDP classes loaded, {n} needed", inputs.len());
    let mut net = Network::new(run.cfg.initial_layers(INPUT_CHANNELS)?);
    let plan = TrainPlan {
        phases: run
            .cfg
            .layers
            .iter()
            .enumerate()
            .map(|(layer, l)| LayerPhase {
                layer,
                images: l.images,
                stop: l.stop_rule(),
            })
            .collect(),
        monitor_stride: run.cfg.monitor.stride,
    };
    let t = Instant::now();
    let reports = train_network(&mut net, &plan, &inputs)?;
    run.time("stdp", t);

    let mut summary = String::from("layer,images,stopped_early,updates,penalties,spikes_per_image,convergence_factor,saturation\n");
    for (r, layer) in reports.iter().zip(&net.layers) {
        writeln!(
            summary,
            "{},{},{},{},{},{},{},{}",
            r.layer,
            r.images,
            r.stopped_early,
            r.updates,
            r.penalties,
            r.spikes_per_image,
            convergence_factor(&layer.kernel),
            saturation(&layer.kernel)
        )
        .unwrap();
        run.write(&format!("monitor-layer{}.csv", r.layer), r.monitor.to_csv().as_bytes())?;
    }
    for (i, layer) in net.layers.iter().enumerate() {
        run.write(&kernel_file(i), &layer.kernel.to_bytes())?;
    }
    run.write("train.csv", summary.as_bytes())
}

/// Frozen-network features for both splits, plus per-image spike counts of
/// every convolution layer on the test split.
pub fn features(run: &mut Run) -> Result<()> {
    let net = run.network()?;
    let mode = run.cfg.features.feature_mode();
    for (split, name) in [(Split::Train, FEATURES_TRAIN), (Split::Test, FEATURES_TEST)] {
        let enc = run.encoded(split)?;
        let t = Instant::now();
        let m = net.extract_features(&enc.images, &enc.labels, mode)?;
        run.time(&format!("features-{}", split.name()), t);
        run.write(name, &m.to_bytes())?;
        if split == Split::Test {
            let counts = net.spike_counts(&enc.images)?;
            let mut csv = String::from("image,label");
            for i in 0..net.layers.len() {
                write!(csv, ",layer{i}").unwrap();
            }
            csv.push('\n');
            for (i, (c, label)) in counts.iter().zip(&enc.labels).enumerate() {
                write!(csv, "{i},{label}").unwrap();
                for n in c {
                    write!(csv, ",{n}").unwrap();
                }
                csv.push('\n');
            }
            run.write(SPIKES_TEST, csv.as_bytes())?;
        }
    }
    Ok(())
}

/// A trained classifier head of either kind.
#[derive(Clone, Debug)]
pub enum Head {
    Fcn(FcnHead),
    Rstdp(RstdpHead),
}

impl Head {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match bytes.get(8..12) {
            Some(tag) if tag == FCN_TAG => Ok(Head::Fcn(FcnHead::from_bytes(bytes)?)),
            Some(tag) if tag == RSTDP_TAG => Ok(Head::Rstdp(RstdpHead::from_bytes(bytes)?)),
            _ => bail!("not a head checkpoint"),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Head::Fcn(h) => h.to_bytes(),
            Head::Rstdp(h) => h.to_bytes(),
        }
    }

    pub fn n_in(&self) -> usize {
        match self {
            Head::Fcn(h) => h.n_in,
            Head::Rstdp(h) => h.n_in,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Head::Fcn(h) => h.n_out,
            Head::Rstdp(h) => h.n_classes(),
        }
    }

    /// Predicted class; `None` when an R-STDP head stays silent.
    pub fn predict(&self, x: &[f64]) -> Result<Option<usize>> {
        Ok(match self {
            Head::Fcn(h) => Some(h.predict(x)?),
            Head::Rstdp(h) => h.predict(x)?,
        })
    }
}

fn format_accuracy(x: f64) -> String {
    format!("{x:.6}")
}

/// Trains the configured head on the training features.
pub fn classify(run: &mut Run) -> Result<()> {
    let train = run.features(FEATURES_TRAIN)?;
    let test = run.features(FEATURES_TEST)?;
    ensure!(train.cols() == test.cols(), "train and test features differ in width");
    let seed = run.cfg.seed;
    let mut fcn = FcnHead::random(train.cols(), 10, run.cfg.head.params(), &mut rng::stream(seed, streams::INIT))?;
    let mut order = rng::stream(seed, streams::SHUFFLE);
    let t = Instant::now();
    let mut csv = String::from("epoch,eta,train_accuracy,test_accuracy\n");
    for e in 0..run.cfg.head.epochs {
        let train_acc = fcn.train_epoch(&train, e, &mut order)?;
        let test_acc = fcn.accuracy(&test)?;
        writeln!(csv, "{},{},{},{}", e + 1, fcn.params.eta(e), format_accuracy(train_acc), format_accuracy(test_acc)).unwrap();
    }
    run.time("fcn", t);
    run.write("classify.csv", csv.as_bytes())?;
    let head = match run.cfg.head.kind {
        HeadKind::Fcn => Head::Fcn(fcn),
        HeadKind::Rstdp => {
            let t = Instant::now();
            let result = run_rstdp(head_from_fcn(&fcn)?, &train, &test, &run.cfg.rstdp.run_config(seed))?;
            run.time("rstdp", t);
            let mut csv = String::from("epoch,test_accuracy,miss_ratio\n");
            writeln!(csv, "0,{},", format_accuracy(result.start_accuracy)).unwrap();
            for (e, (a, m)) in result.accuracy.iter().zip(&result.miss_ratio).enumerate() {
                writeln!(csv, "{},{},{m}", e + 1, format_accuracy(*a)).unwrap();
            }
            run.write("rstdp.csv", csv.as_bytes())?;
            Head::Rstdp(result.head)
        }
    };
    run.write(HEAD_FILE, &head.to_bytes())
}

/// Summary statistics of per-image spike counts.
fn spike_stats(values: &[f64]) -> [(&'static str, f64); 4] {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [("mean", mean), ("std", var.sqrt()), ("min", min), ("max", max)]
}

/// Per-layer spike counts from the spikes CSV written by `features`.
fn read_spike_counts(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let layers = reader.headers()?.len().saturating_sub(2);
    let mut cols = vec![Vec::new(); layers];
    for record in reader.records() {
        let record = record?;
        for (l, col) in cols.iter_mut().enumerate() {
            col.push(record[l + 2].parse::<f64>().context("spike count")?);
        }
    }
    Ok(cols)
}

/// Test accuracy, confusion counts and spike statistics of the trained head.
pub fn eval(run: &mut Run) -> Result<()> {
    let head = Head::from_bytes(&run.read(HEAD_FILE)?).context("parsing head checkpoint")?;
    let test = run.features(FEATURES_TEST)?;
    ensure!(test.cols() == head.n_in(), "head expects {} features, found {}", head.n_in(), test.cols());
    ensure!(!test.is_empty(), "no test features");
    let k = head.n_classes();
    // The extra column counts images on which an R-STDP head stayed silent.
    let mut confusion = vec![vec![0usize; k + 1]; k];
    for i in 0..test.rows() {
        let y = usize::from(test.label(i));
        ensure!(y < k, "label {y} for a {k}-class head");
        let p = head.predict(test.row(i))?.unwrap_or(k);
        confusion[y][p] += 1;
    }
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let mut csv = String::from("metric,value\n");
    writeln!(csv, "images,{}", test.rows()).unwrap();
    writeln!(csv, "correct,{correct}").unwrap();
    writeln!(csv, "accuracy,{}", format_accuracy(correct as f64 / test.rows() as f64)).unwrap();
    for (c, row) in confusion.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total > 0 {
            writeln!(csv, "class_accuracy.{c},{}", format_accuracy(row[c] as f64 / total as f64)).unwrap();
        }
    }
    for (c, row) in confusion.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            let pred = if p == k { "silent".to_string() } else { p.to_string() };
            writeln!(csv, "confusion.{c}.{pred},{n}").unwrap();
        }
    }
    if run.input.join(SPIKES_TEST).is_file() {
        let counts = read_spike_counts(&run.read(SPIKES_TEST)?)?;
        for (l, col) in counts.iter().enumerate() {
            for (stat, v) in spike_stats(col) {
                writeln!(csv, "layer{l}_spikes_per_image.{stat},{v}").unwrap();
            }
        }
    }
    run.write("metrics.csv", csv.as_bytes())?;
    eprintln!("test accuracy {:.4}", correct as f64 / test.rows() as f64);
    Ok(())
}

/// Pattern-in-noise STDP runs, one directory per seed.
pub fn demo_stdp(run: &mut Run) -> Result<()> {
    let mut summary = String::from("seed,selective_epoch,selective_by_bin,final_hit_rate,final_false_alarm_rate,jaccard\n");
    for s in 0..run.cfg.demo.runs {
        let seed = run.cfg.seed + s;
        let result = run_noise_demo(&run.cfg.demo.noise_config(seed))?;
        let dir = format!("demo/seed-{seed}");
        run.write(&format!("{dir}/raster.csv"), result.raster_csv().as_bytes())?;
        run.write(&format!("{dir}/output.csv"), result.output_csv().as_bytes())?;
        run.write(&format!("{dir}/epochs.csv"), result.epochs_csv().as_bytes())?;
        let selective = result.first_selective_epoch(0.95, 0.05);
        let last = result.epochs.last();
        writeln!(
            summary,
            "{seed},{},{},{},{},{}",
            selective.map_or(String::new(), |e| e.to_string()),
            selective.map_or(String::new(), |e| ((e + 1) * result.config.epoch_len).to_string()),
            last.map_or(0.0, |e| e.hit_rate()),
            last.map_or(0.0, |e| e.false_alarm_rate()),
            result.jaccard()
        )
        .unwrap();
    }
    run.write("demo/summary.csv", summary.as_bytes())
}

fn fraction_label(f: f64) -> String {
    format!("{f:.3}")
}

/// Catastrophic-forgetting sweep over the configured rehearsal fractions.
pub fn forget(run: &mut Run) -> Result<()> {
    let train = run.features(FEATURES_TRAIN)?;
    let test = run.features(FEATURES_TEST)?;
    let fcn = run.cfg.head.params();
    let mut summary = String::from("rehearsal_fraction,rehearsal_images,task_a,task_b,combined\n");
    let mut wrote_phase1 = false;
    for &fraction in &run.cfg.forget.fractions.clone() {
        let plan = run.cfg.forget.plan(fraction, fcn, run.cfg.seed);
        let t = Instant::now();
        let report = run_forgetting(&plan, &train, &test)?;
        let label = fraction_label(fraction);
        run.time(&format!("forget-{label}"), t);
        // Phase 1 depends only on task A, so every fraction shares it.
        if !wrote_phase1 {
            run.write("forget/phase1.csv", curve_csv(&report.phase1).as_bytes())?;
            wrote_phase1 = true;
        }
        run.write(&format!("forget/curve-{label}.csv"), curve_csv(&report.phase2).as_bytes())?;
        if !report.incremental.is_empty() {
            run.write(&format!("forget/incremental-{label}.csv"), curve_csv(&report.incremental).as_bytes())?;
        }
        let AccuracyPoint { task_a, task_b, combined, .. } = report.final_point().context("phase 2 produced no probes")?;
        writeln!(summary, "{label},{},{task_a},{task_b},{combined}", report.rehearsal_images).unwrap();
    }
    run.write("forget/summary.csv", summary.as_bytes())
}

fn write_features(run: &mut Run, prefix: &str, features: &[ReconFeature]) -> Result<()> {
    for f in features {
        let name = format!("recon/{prefix}-{:03}", f.source_map);
        let max = f.max_abs();
        run.write(&format!("{name}-on.pgm"), &pgm(&f.on, f.size, f.size, max))?;
        run.write(&format!("{name}-off.pgm"), &pgm(&f.off, f.size, f.size, max))?;
        run.write(&format!("{name}.ppm"), &feature_ppm(f))?;
    }
    let cols = run.cfg.reconstruct.montage_cols;
    run.write(&format!("recon/{prefix}-sheet.ppm"), &montage_ppm(features, cols, 1))
}

/// Input-space pictures of the learned kernels of the first two layers.
pub fn reconstruct(run: &mut Run) -> Result<()> {
    let net = run.network()?;
    let l2 = reconstruct_l2(&net.layers[0].kernel)?;
    write_features(run, "l2", &l2)?;
    if let Some(second) = net.layers.get(1) {
        let mut l4 = reconstruct_l4(&second.kernel, &net.layers[0].kernel)?;
        l4.truncate(run.cfg.reconstruct.l4_count);
        write_features(run, "l4", &l4)?;
    }
    Ok(())
}
