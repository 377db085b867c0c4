use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use hfur_core::codec::io::{read_frames, write_f64_sidecar, write_frames, FrameFormat, RawGeometry};
use hfur_core::codec::{
    coef_step, degrade, synth_clip, ClipScores, DegradeConfig, DegradedClip, Frame, Jitter, SynthKind,
};
use hfur_core::dct::{format_table, make_dct_basis, make_fractional_idct, make_quant_prior, ChannelKind, TableSource};
use hfur_core::nn::{enhance_frames, init_params, train_with, NetworkConfig, TrainConfig};
use hfur_core::{Checkpoint, ParamStore};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::{overlay, FileConfig, TrainSettings};
use crate::report::{self, ClipReport};
use crate::{scaled_bitrate, Command, Common, Geometry, Outcome, Profile, MANIFEST_FILE};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const NETWORK_FILE: &str = "network.toml";
pub const LOG_FILE: &str = "train_log.csv";
pub const YUV_FILE: &str = "frames.yuv";
pub const TRUTH_DIR: &str = "truth";

pub(crate) fn dispatch(command: Command, snapshot: Option<Value>) -> Result<Outcome> {
    match command {
        Command::Gen { common, kind, frames, width, height } => gen(common, &kind, frames, width, height),
        Command::Degrade { common, input, geometry, qp, cbr_jitter, table } => {
            cmd_degrade(common, &input, &geometry, qp, cbr_jitter, table.as_deref())
        }
        Command::Train {
            common,
            source,
            degraded,
            geometry,
            profile,
            steps,
            batch,
            crop,
            lr,
            val_every,
            channels,
            upsampler,
            no_hir,
            init_from,
        } => {
            let settings = match snapshot {
                Some(v) => serde_json::from_value(v).context("manifest config is not a training configuration")?,
                None => {
                    let file = FileConfig::load(common.config.as_deref())?;
                    let base = match profile {
                        Profile::Test => NetworkConfig::test_profile(),
                        Profile::Paper => NetworkConfig::paper(),
                    };
                    let mut network = overlay(&base, &file.network, "network")?;
                    let mut train = overlay(&TrainConfig::default(), &file.train, "train")?;
                    if let Some(c) = channels {
                        network.channels = c;
                    }
                    if let Some(u) = upsampler {
                        network.upsampler = u.into();
                    }
                    if no_hir {
                        network.use_hir = false;
                    }
                    let set = |dst: &mut usize, v: Option<usize>| *dst = v.unwrap_or(*dst);
                    set(&mut train.steps, steps);
                    set(&mut train.batch, batch);
                    set(&mut train.crop, crop);
                    set(&mut train.val_every, val_every);
                    train.lr_init = lr.unwrap_or(train.lr_init);
                    train.seed = common.seed.unwrap_or(train.seed);
                    TrainSettings { network, train }
                }
            };
            cmd_train(common, &source, &degraded, &geometry, settings, init_from.as_deref())
        }
        Command::Enhance { common, checkpoint, input, geometry } => cmd_enhance(common, &checkpoint, &input, &geometry),
        Command::Eval { common, source, degraded, enhanced, clips, geometry, report } => {
            cmd_eval(common, source, degraded, enhanced, clips, &geometry, report)
        }
        Command::ExportMatrices { common, block_size, factor, qp, table } => {
            export(common, block_size, factor, qp, table.as_deref())
        }
        Command::Bitrate { common, fps, width, height, base_kbps } => {
            let kbps = scaled_bitrate(fps, width, height, base_kbps)?;
            println!("{kbps}");
            let mut outputs = Vec::new();
            let manifest = match &common.out {
                Some(dir) => {
                    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
                    let p = dir.join("bitrate.txt");
                    fs::write(&p, format!("{kbps}\n")).with_context(|| format!("cannot write {}", p.display()))?;
                    outputs.push(p);
                    Some(dir.join(MANIFEST_FILE))
                }
                None => None,
            };
            Ok(Outcome {
                config: json!({"fps": fps, "width": width, "height": height, "base_kbps": base_kbps, "kbps": kbps}),
                seed: common.seed,
                inputs: vec![],
                outputs,
                manifest,
            })
        }
        Command::Replay { .. } => bail!("replay cannot be nested"),
    }
}

fn out_dir(common: &Common, command: &str) -> Result<PathBuf> {
    let dir = common.out.clone().ok_or_else(|| anyhow!("{command} needs --out <DIR>"))?;
    fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

/// Format of a clip path: a directory of PGM frames or a raw `.yuv` file.
fn clip_format(path: &Path) -> FrameFormat {
    if path.is_dir() {
        FrameFormat::PgmSequence
    } else {
        FrameFormat::YuvRaw
    }
}

fn raw_geometry(g: &Geometry) -> Option<RawGeometry> {
    match (g.width, g.height, g.layout) {
        (Some(width), Some(height), layout) => Some(RawGeometry {
            width,
            height,
            layout: layout.map(Into::into).unwrap_or(hfur_core::codec::Layout::Yuv420),
        }),
        _ => None,
    }
}

fn load_clip(path: &Path, g: &Geometry) -> Result<(Vec<Frame>, FrameFormat)> {
    if !path.exists() {
        bail!("input {} does not exist", path.display());
    }
    let format = clip_format(path);
    if format == FrameFormat::YuvRaw && raw_geometry(g).is_none() {
        bail!("{} is a raw YUV file; pass --width and --height (and --layout)", path.display());
    }
    let frames = read_frames(path, format, raw_geometry(g))?;
    ensure!(!frames.is_empty(), "{} contains no frames", path.display());
    Ok((frames, format))
}

/// Writes frames into `dir` in `format`; returns the written path.
fn store_clip(dir: &Path, format: FrameFormat, frames: &[Frame]) -> Result<PathBuf> {
    let path = match format {
        FrameFormat::PgmSequence => dir.to_path_buf(),
        FrameFormat::YuvRaw => dir.join(YUV_FILE),
    };
    write_frames(&path, format, frames)?;
    Ok(path)
}

fn gen(common: Common, kind: &str, frames: usize, width: usize, height: usize) -> Result<Outcome> {
    let kind: SynthKind = kind.parse()?;
    let seed = common.seed.unwrap_or(0);
    let clip = synth_clip(kind, frames, width, height, seed)?;
    let dir = out_dir(&common, "gen")?;
    store_clip(&dir, FrameFormat::PgmSequence, &clip)?;
    Ok(Outcome {
        config: json!({"kind": kind.name(), "frames": frames, "width": width, "height": height}),
        seed: Some(seed),
        inputs: vec![],
        outputs: vec![dir.clone()],
        manifest: Some(dir.join(MANIFEST_FILE)),
    })
}

fn tables(spec: Option<&str>) -> Result<(TableSource, TableSource)> {
    let Some(spec) = spec else { return Ok((TableSource::Flat, TableSource::Flat)) };
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [l] => Ok((TableSource::File(l.into()), TableSource::File(l.into()))),
        [l, c] => Ok((TableSource::File(l.into()), TableSource::File(c.into()))),
        _ => bail!("--table expects luma.txt or luma.txt,chroma.txt, got {spec:?}"),
    }
}

fn cmd_degrade(
    common: Common,
    input: &Path,
    geometry: &Geometry,
    qp: i32,
    jitter: i32,
    table: Option<&str>,
) -> Result<Outcome> {
    let (frames, format) = load_clip(input, geometry)?;
    let (lt, ct) = tables(table)?;
    let luma = make_quant_prior(qp, ChannelKind::Luma, &lt)?;
    let chroma = make_quant_prior(qp, ChannelKind::Chroma, &ct)?;
    let seed = common.seed.unwrap_or(0);
    let cfg = DegradeConfig::from_priors(&luma, &chroma).with_jitter(Some(Jitter { amplitude: jitter, seed }));
    let clip = degrade(&frames, &cfg)?;
    let dir = out_dir(&common, "degrade")?;
    let frames_path = store_clip(&dir, format, &clip.degraded)?;
    let truth = dir.join(TRUTH_DIR);
    fs::create_dir_all(&truth).with_context(|| format!("cannot create {}", truth.display()))?;
    for (f, ft) in clip.truth.iter().enumerate() {
        for (p, pt) in ft.planes.iter().enumerate() {
            let stem = truth.join(format!("f{f:04}_p{p}"));
            write_f64_sidecar(&stem.with_extension("xi.f64"), pt.xi.iter().copied())?;
            write_f64_sidecar(&stem.with_extension("delta.f64"), pt.delta.iter().copied())?;
            write_f64_sidecar(&stem.with_extension("qp.f64"), pt.block_qp.iter().map(|&q| q as f64))?;
        }
    }
    let mut inputs = vec![input.to_path_buf()];
    inputs.extend([&lt, &ct].into_iter().filter_map(|t| match t {
        TableSource::File(p) => Some(p.clone()),
        TableSource::Flat => None,
    }));
    Ok(Outcome {
        config: json!({"qp": qp, "cbr_jitter": jitter, "luma_table": luma.t_base.to_vec(), "chroma_table": chroma.t_base.to_vec()}),
        seed: Some(seed),
        inputs,
        outputs: vec![frames_path, truth],
        manifest: Some(dir.join(MANIFEST_FILE)),
    })
}

fn cmd_train(
    common: Common,
    sources: &[PathBuf],
    degraded: &[PathBuf],
    geometry: &Geometry,
    settings: TrainSettings,
    init_from: Option<&Path>,
) -> Result<Outcome> {
    ensure!(
        sources.len() == degraded.len(),
        "got {} --source but {} --degraded clips; pass them in pairs",
        sources.len(),
        degraded.len()
    );
    settings.validate()?;
    let mut clips = Vec::new();
    for (s, d) in sources.iter().zip(degraded) {
        let (source, _) = load_clip(s, geometry)?;
        let (deg, _) = load_clip(d, geometry)?;
        ensure!(
            source.len() == deg.len() && source[0].same_geometry(&deg[0]),
            "{} and {} differ in frame count or geometry",
            s.display(),
            d.display()
        );
        clips.push(DegradedClip { qp: settings.network.prior_qp, source, degraded: deg, truth: vec![] });
    }
    let dir = out_dir(&common, "train")?;
    let (net, mut store) = init_params(&settings.network, settings.train.seed)?;
    let mut inputs: Vec<PathBuf> = sources.iter().chain(degraded).cloned().collect();
    if let Some(p) = init_from {
        let loaded = store.load_matching(&Checkpoint::load(p)?.into_store());
        eprintln!("warm start: {} tensors loaded from {}", loaded.len(), p.display());
        inputs.push(p.to_path_buf());
    }
    let log = train_with(&net, &mut store, &clips, &settings.train, |r| {
        if let Some(v) = r.val_dpsnr {
            eprintln!("step {:6}  loss {:.6}  val ΔPSNR {:+.4} dB", r.step, r.loss, v);
        }
    })?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    let log_path = dir.join(LOG_FILE);
    let net_path = dir.join(NETWORK_FILE);
    Checkpoint::from_store(&store).save(&ckpt)?;
    fs::write(&log_path, log.to_csv()).with_context(|| format!("cannot write {}", log_path.display()))?;
    fs::write(&net_path, toml::to_string(&settings.network)?)
        .with_context(|| format!("cannot write {}", net_path.display()))?;
    Ok(Outcome {
        config: serde_json::to_value(&settings)?,
        seed: Some(settings.train.seed),
        inputs,
        outputs: vec![ckpt, log_path, net_path],
        manifest: Some(dir.join(MANIFEST_FILE)),
    })
}

/// Network settings for a checkpoint: `--config` first, then the sibling file.
fn network_for(checkpoint: &Path, config: Option<&Path>) -> Result<NetworkConfig> {
    if let Some(path) = config {
        let file = FileConfig::load(Some(path))?;
        ensure!(!file.network.is_empty(), "{} has no [network] section", path.display());
        return overlay(&NetworkConfig::default(), &file.network, "network");
    }
    let sibling = checkpoint.with_file_name(NETWORK_FILE);
    let text = fs::read_to_string(&sibling).with_context(|| {
        format!("no network settings for {}; expected {} or --config", checkpoint.display(), sibling.display())
    })?;
    toml::from_str(&text).with_context(|| format!("invalid {}", sibling.display()))
}

pub fn load_network(checkpoint: &Path, config: Option<&Path>) -> Result<(hfur_core::nn::Network, ParamStore)> {
    let cfg = network_for(checkpoint, config)?;
    let (net, mut store) = init_params(&cfg, 0)?;
    let loaded = store.load_matching(&Checkpoint::load(checkpoint)?.into_store());
    let missing: Vec<&str> =
        store.iter().filter(|(n, t)| t.requires_grad() && !loaded.iter().any(|l| l == n)).map(|(n, _)| n).collect();
    if let Some(first) = missing.first() {
        bail!(
            "{} does not match the network: {} tensors missing or misshapen, first {first}",
            checkpoint.display(),
            missing.len()
        );
    }
    Ok((net, store))
}

fn cmd_enhance(common: Common, checkpoint: &Path, input: &Path, geometry: &Geometry) -> Result<Outcome> {
    let (net, store) = load_network(checkpoint, common.config.as_deref())?;
    let (frames, format) = load_clip(input, geometry)?;
    let enhanced = enhance_frames(&net, &store, &frames)?;
    let dir = out_dir(&common, "enhance")?;
    let path = store_clip(&dir, format, &enhanced)?;
    Ok(Outcome {
        config: serde_json::to_value(&net.cfg)?,
        seed: common.seed,
        inputs: vec![checkpoint.to_path_buf(), input.to_path_buf()],
        outputs: vec![path],
        manifest: Some(dir.join(MANIFEST_FILE)),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClipList {
    clip: Vec<ClipEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClipEntry {
    name: String,
    #[serde(default = "default_class")]
    class: String,
    source: PathBuf,
    degraded: PathBuf,
    enhanced: PathBuf,
}

fn default_class() -> String {
    "all".into()
}

fn cmd_eval(
    common: Common,
    source: Option<PathBuf>,
    degraded: Option<PathBuf>,
    enhanced: Option<PathBuf>,
    clips: Option<PathBuf>,
    geometry: &Geometry,
    report: Option<PathBuf>,
) -> Result<Outcome> {
    let entries = match (source, degraded, enhanced, &clips) {
        (Some(s), Some(d), Some(e), None) => {
            vec![ClipEntry { name: "clip".into(), class: default_class(), source: s, degraded: d, enhanced: e }]
        }
        (None, None, None, Some(list)) => {
            let text = fs::read_to_string(list).with_context(|| format!("cannot read {}", list.display()))?;
            let parsed: ClipList =
                toml::from_str(&text).with_context(|| format!("invalid clip list {}", list.display()))?;
            let base = list.parent().unwrap_or(Path::new("."));
            parsed
                .clip
                .into_iter()
                .map(|c| ClipEntry {
                    source: base.join(c.source),
                    degraded: base.join(c.degraded),
                    enhanced: base.join(c.enhanced),
                    ..c
                })
                .collect()
        }
        _ => bail!("eval needs either --source, --degraded and --enhanced, or --clips"),
    };
    ensure!(!entries.is_empty(), "no clips to evaluate");
    let report_path = match (report, &common.out) {
        (Some(r), _) => r,
        (None, Some(_)) => out_dir(&common, "eval")?.join("report.csv"),
        (None, None) => bail!("eval needs --report <CSV> or --out <DIR>"),
    };
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let mut reports = Vec::new();
    let mut inputs = Vec::new();
    for e in entries {
        let (s, _) = load_clip(&e.source, geometry)?;
        let (d, _) = load_clip(&e.degraded, geometry)?;
        let (x, _) = load_clip(&e.enhanced, geometry)?;
        let scores = ClipScores::compute(&s, &d, &x)
            .with_context(|| format!("clip {}: sources, degraded and enhanced frames disagree", e.name))?;
        reports.push(ClipReport { name: e.name, class: e.class, scores });
        inputs.extend([e.source, e.degraded, e.enhanced]);
    }
    let text = report::to_text(&reports)?;
    print!("{text}");
    let text_path = report_path.with_extension("txt");
    fs::write(&report_path, report::to_csv(&reports)?)
        .with_context(|| format!("cannot write {}", report_path.display()))?;
    fs::write(&text_path, text).with_context(|| format!("cannot write {}", text_path.display()))?;
    let manifest = match &common.out {
        Some(dir) => dir.join(MANIFEST_FILE),
        None => report_path.with_extension("manifest.json"),
    };
    if let Some(l) = clips {
        inputs.insert(0, l);
    }
    Ok(Outcome {
        config: json!({"clips": reports.len()}),
        seed: common.seed,
        inputs,
        outputs: vec![report_path, text_path],
        manifest: Some(manifest),
    })
}

fn export(common: Common, block_size: usize, factor: usize, qp: i32, table: Option<&str>) -> Result<Outcome> {
    let dir = out_dir(&common, "export-matrices")?;
    let basis = make_dct_basis(block_size)?;
    let frac = make_fractional_idct(block_size, factor)?;
    let (lt, ct) = tables(table)?;
    let mut outputs = Vec::new();
    let mut write = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))?;
        outputs.push(p);
        Ok(())
    };
    write(format!("dct_basis_{block_size}.csv"), basis.forward.to_csv())?;
    write(format!("idct_{block_size}.csv"), basis.inverse().to_csv())?;
    write(format!("fractional_idct_{block_size}_x{factor}.csv"), frac.matrix.to_csv())?;
    for (kind, src, label) in [(ChannelKind::Luma, &lt, "luma"), (ChannelKind::Chroma, &ct, "chroma")] {
        let prior = make_quant_prior(qp, kind, src)?;
        let rows = |vals: &[f64], width: usize| -> String {
            vals.chunks(width)
                .map(|r| r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","))
                .collect::<Vec<_>>()
                .join("\n")
                + "\n"
        };
        write(format!("quant_table_{label}.csv"), rows(&prior.t_base, 8))?;
        write(format!("quant_table_{label}_up.csv"), rows(&prior.t_up, 16))?;
        let steps: Vec<f64> = prior.t_base.iter().map(|&t| coef_step(qp, t)).collect::<hfur_core::Result<_>>()?;
        write(format!("coef_step_{label}_qp{qp}.csv"), rows(&steps, 8))?;
        write(format!("quant_table_{label}.txt"), format_table(&prior.t_base))?;
    }
    Ok(Outcome {
        config: json!({"block_size": block_size, "factor": factor, "qp": qp}),
        seed: common.seed,
        inputs: vec![],
        outputs,
        manifest: Some(dir.join(MANIFEST_FILE)),
    })
}
