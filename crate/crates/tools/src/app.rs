//! The `carlo` command line. `main_with_args` returns the process exit
//! code: 0 success, 1 usage, 2 data error, 3 internal error. Failures print
//! one machine-readable line on stderr:
//!
//! ```text
//! carlo-error code=2 kind=data message="..."
//! ```

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use carlo_core::attack::{
    extract_vehicle_points, prune_to_capability, select_candidates, size_group, spoof_front_near, AttackTrace,
    CandidateKind, TraceSource,
};
use carlo_core::carlo::{carlo_batch, fit_thresholds, measure_ratios, CarloConfig, Clock, NoClock, RatioDistributions, ScoredScene};
use carlo_core::cloud::{PointCloud, SensorModel};
use carlo_core::fv::{augment_with_scores, build_fv_image, FvConfig};
use carlo_core::geometry::Box3D;
use carlo_core::harness::{
    a2sr, aggregate, average_precision, best_success_score, placement_range, proxy_detect, recall_curve,
    relative_score_error, run_pair, CampaignSpec, Detection, ExperimentResult, PairResult,
};
use carlo_core::renderer::{render, render_trace_family};
use carlo_core::stats::EmpiricalDistribution;
use carlo_core::synth::synthetic_frame;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use crate::bench::{frame_id, Bench, BoxSource};
use crate::clock::WallClock;
use crate::config::{FlagOverrides, RunConfig};
use crate::dataset::{list_ids, write_frame, KittiDataset};
use crate::dump::{csv_writer, finish, fmt_opt, fmt_sig9, group_by_frame, read_detection_dump, write_detection_dump, DumpRow};
use crate::error::{read_text, write_bytes, DataError};
use crate::fv_io::{read_score_raster, write_count_csv, write_pgm, write_range_csv};
use crate::kitti::{lidar_box_to_label, Calibration};
use crate::profile::CalibrationProfile;
use crate::provenance::{sha256_hex, sha256_of_parts, Provenance};
use crate::scene_file::load_scene;
use crate::tables::{campaign_summary, write_cdf, write_groups, write_rows, write_summary, write_verdicts, VerdictRow};
use crate::trace_io::{find_traces, load_trace, save_trace};
use crate::velodyne::{load_velodyne, save_velodyne, write_velodyne_bin};

#[derive(Debug, Parser)]
#[command(name = "carlo", version, about = "LiDAR spoof trace synthesis and occlusion-aware spoof detection")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration file (TOML); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Bundled sensor preset (hdl64, vlp16) or a sensor file.
    #[arg(long, global = true)]
    pub sensor: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Occluded,
    Distant,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BoxArg {
    Label,
    Detector,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene file into a cloud and capability-pruned traces.
    Render {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Cut labelled vehicles out of a KITTI-layout dataset into a trace library.
    Extract {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Box dilation in meters.
        #[arg(long, default_value_t = 0.1)]
        margin: f64,
    },
    /// Inject traces into frames as listed in a manifest.
    Inject {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Fit CARLO thresholds from valid and spoofed scene sets.
    CarloFit {
        /// Scene set directory: velodyne/*.bin plus boxes.csv.
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        spoofed: Option<PathBuf>,
        /// Generate N valid and N spoofed synthetic scenes instead.
        #[arg(long)]
        synthetic: Option<usize>,
        /// Boxes scored in synthetic scenes.
        #[arg(long, value_enum, default_value = "label")]
        boxes: BoxArg,
        /// Leave the ground plane out of synthetic scenes.
        #[arg(long)]
        no_ground: bool,
    },
    /// Judge every detection of a dump with CARLO.
    CarloCheck {
        /// Directory of <frame_id>.bin scans (or a dataset root with velodyne/).
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Calibration profile; without one the uncalibrated defaults apply.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Write 0 in the ms column so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
    },
    /// Front-view raster exports of one scan.
    Fv {
        #[arg(long)]
        frame: PathBuf,
        /// Per-pixel score raster (CSV) to attach to every point.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, requires = "el_step")]
        az_step: Option<f64>,
        #[arg(long, requires = "az_step")]
        el_step: Option<f64>,
    },
    /// Run an injection campaign described by a manifest.
    Campaign {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// ASR, A²SR and AP from a detection dump and labels.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        /// KITTI-layout root (label_2/, calib/) or a dump-format CSV of boxes.
        #[arg(long)]
        labels: PathBuf,
        /// Dump-format CSV of attack target boxes, one per frame.
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long, default_value_t = 0.7)]
        iou: f64,
    },
    /// Write a synthetic KITTI-layout dataset.
    Synth {
        #[arg(long, default_value_t = 10)]
        frames: usize,
    },
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn parts(&self) -> (&'static str, &str) {
        match self {
            Failure::Usage(m) => ("usage", m),
            Failure::Data(m) => ("data", m),
            Failure::Internal(m) => ("internal", m),
        }
    }

    pub fn line(&self) -> String {
        let (kind, msg) = self.parts();
        format!("carlo-error code={} kind={kind} message={msg:?}", self.code())
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<carlo_core::Error> for Failure {
    fn from(e: carlo_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let _ = e.print();
            let f = Failure::Usage(e.kind().to_string());
            eprintln!("{}", f.line());
            return f.code();
        }
    };
    let result = std::panic::catch_unwind(|| run(cli)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(Failure::Internal(msg))
    });
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.line());
            f.code()
        }
    }
}

/// Effective configuration plus where to write.
struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    /// Provenance whose hash also covers the command's own inputs.
    fn prov(&self, inputs: &[&[u8]]) -> Provenance {
        let mut text = self.cfg.canonical_text();
        for bytes in inputs {
            text.push_str(&sha256_hex(bytes));
            text.push('\n');
        }
        Provenance::new(self.cfg.seed, &text)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Outcome {
        Ok(write_bytes(&self.path(name), bytes.as_ref())?)
    }

    fn sensor(&self) -> Outcome<SensorModel> {
        Ok(self.cfg.sensor_model()?)
    }

    /// `run.toml`: provenance, the merged configuration and the command.
    fn write_run_record(&self, prov: &Provenance, command: &str) -> Outcome {
        #[derive(serde::Serialize)]
        struct Record<'a> {
            command: &'a str,
            provenance: &'a Provenance,
            config: &'a RunConfig,
        }
        let text = toml::to_string(&Record {
            command,
            provenance: prov,
            config: &RunConfig {
                out: None,
                jobs: 0,
                ..self.cfg.clone()
            },
        })
        .map_err(|e| Failure::Internal(e.to_string()))?;
        self.write("run.toml", text)
    }
}

pub fn run(cli: Cli) -> Outcome {
    let file_text = match &cli.global.config {
        Some(p) => Some(read_text(p).map_err(|e| Failure::Usage(e.to_string()))?),
        None => None,
    };
    let flags = FlagOverrides {
        sensor: cli.global.sensor.clone(),
        seed: cli.global.seed,
        jobs: cli.global.jobs,
        out: cli.global.out.clone(),
    };
    let cfg = RunConfig::merged(file_text.as_deref(), &flags).map_err(Failure::Usage)?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Failure::Usage("an output directory is required (--out or `out` in the config)".into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Failure::Internal(e.to_string()))?;
    let ctx = Ctx { cfg, out };
    pool.install(|| match cli.command {
        Command::Render { scene } => cmd_render(&ctx, &scene),
        Command::Extract { dataset, kind, margin } => cmd_extract(&ctx, &dataset, kind, margin),
        Command::Inject { manifest } => cmd_inject(&ctx, &manifest),
        Command::CarloFit {
            valid,
            spoofed,
            synthetic,
            boxes,
            no_ground,
        } => cmd_carlo_fit(&ctx, valid, spoofed, synthetic, boxes, no_ground),
        Command::CarloCheck {
            frames,
            detections,
            profile,
            no_timing,
        } => cmd_carlo_check(&ctx, &frames, &detections, profile.as_deref(), no_timing),
        Command::Fv {
            frame,
            scores,
            az_step,
            el_step,
        } => cmd_fv(&ctx, &frame, scores.as_deref(), az_step.zip(el_step)),
        Command::Campaign { manifest } => cmd_campaign(&ctx, &manifest),
        Command::Eval {
            detections,
            labels,
            targets,
            iou,
        } => cmd_eval(&ctx, &detections, &labels, targets.as_deref(), iou),
        Command::Synth { frames } => cmd_synth(&ctx, frames),
    })
}

fn read_input(path: &Path) -> Outcome<Vec<u8>> {
    std::fs::read(path).map_err(|source| {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn text_of(bytes: &[u8], path: &Path) -> Outcome<String> {
    String::from_utf8(bytes.to_vec()).map_err(|_| Failure::Data(format!("{}: not UTF-8 text", path.display())))
}

// ---------------------------------------------------------------- render

fn cmd_render(ctx: &Ctx, scene_path: &Path) -> Outcome {
    let scene_bytes = read_input(scene_path)?;
    let mut loaded = load_scene(scene_path)?;
    let sensor = ctx.sensor()?;
    let cap = ctx.cfg.capability();
    let prov = ctx.prov(&[&scene_bytes]);
    let seed = crate::bench::mix_seed(ctx.cfg.seed, loaded.file.seed, 0);
    if let Some(n) = loaded.scene.range_noise.as_mut() {
        n.seed = seed;
    }

    let mut w = csv_writer();
    w.write_record(["trace", "source_points", "points", "azimuth_extent_deg", "source_range"])
        .expect("in-memory write");
    let mut emit = |name: String, raw: &AttackTrace| -> Outcome {
        let pruned = prune_to_capability(raw, &cap);
        save_trace(&ctx.path(&name), &pruned, Some(&prov))?;
        w.write_record([
            name,
            raw.len().to_string(),
            pruned.len().to_string(),
            fmt_sig9(pruned.meta.azimuth_extent_deg),
            fmt_sig9(pruned.meta.source_range),
        ])
        .expect("in-memory write");
        Ok(())
    };

    if let Some(plan) = &loaded.family {
        let family = render_trace_family(
            &sensor,
            &plan.mesh,
            loaded.file.ground_z,
            &plan.postures,
            &plan.patterns,
            seed,
        );
        for (i, t) in family.iter().enumerate() {
            emit(format!("traces/trace_{i:04}.bin"), t)?;
        }
    } else {
        let result = render(&sensor, &loaded.scene);
        save_velodyne(&ctx.path("scene.bin"), &result.cloud)?;
        let target = result.target_points();
        if let (false, Some(t)) = (target.is_empty(), &loaded.scene.target) {
            let range = t.pose.translation.norm_xy();
            emit("trace.bin".into(), &AttackTrace::new(target, TraceSource::Rendered, range))?;
        }
    }
    ctx.write("render.csv", finish(w, Some(&prov)))?;
    ctx.write_run_record(&prov, "render")
}

// ---------------------------------------------------------------- extract

fn cmd_extract(ctx: &Ctx, root: &Path, kind: KindArg, margin: f64) -> Outcome {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Failure::Usage("--margin must be a non-negative number".into()));
    }
    let ds = KittiDataset::open(root)?;
    let frames = ds
        .ids
        .par_iter()
        .map(|id| ds.labeled_frame(id))
        .collect::<Result<Vec<_>, _>>()?;
    let (ck, source) = match kind {
        KindArg::Occluded => (CandidateKind::Occluded, TraceSource::Occluded),
        KindArg::Distant => (CandidateKind::Distant, TraceSource::Distant),
    };
    let candidates = select_candidates(&frames, ck);
    let cap = ctx.cfg.capability();
    let traces = candidates
        .par_iter()
        .map(|&(fi, li)| {
            let cloud = ds.cloud(&frames[fi].frame_id)?;
            match extract_vehicle_points(&cloud, &frames[fi].labels[li].bbox, margin, source) {
                Ok(t) => Ok(Some((fi, li, prune_to_capability(&t, &cap)))),
                Err(carlo_core::Error::EmptyTrace) => Ok(None),
                Err(e) => Err(Failure::from(e)),
            }
        })
        .collect::<Outcome<Vec<_>>>()?;

    let prov = ctx.prov(&[root.to_string_lossy().as_bytes()]);
    let mut w = csv_writer();
    w.write_record(["file", "frame_id", "label_index", "source", "points", "azimuth_extent_deg", "source_range", "group"])
        .expect("in-memory write");
    let mut empty = 0;
    for item in &traces {
        let Some((fi, li, t)) = item else {
            empty += 1;
            continue;
        };
        let group = size_group(t.len(), 10).expect("non-empty trace");
        let name = format!("group_{group:02}/{}_{li:02}.bin", frames[*fi].frame_id);
        save_trace(&ctx.path(&name), t, Some(&prov))?;
        w.write_record([
            name,
            frames[*fi].frame_id.clone(),
            li.to_string(),
            source.as_str().into(),
            t.len().to_string(),
            fmt_sig9(t.meta.azimuth_extent_deg),
            fmt_sig9(t.meta.source_range),
            group.to_string(),
        ])
        .expect("in-memory write");
    }
    ctx.write("index.csv", finish(w, Some(&prov)))?;
    eprintln!(
        "extract: {} candidates, {} traces written, {} without points",
        candidates.len(),
        candidates.len() - empty,
        empty
    );
    ctx.write_run_record(&prov, "extract")
}

// ---------------------------------------------------------------- inject

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InjectionManifest {
    /// Dataset root with velodyne/ (relative to the manifest).
    dataset: PathBuf,
    #[serde(default)]
    injection: Vec<InjectionEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InjectionEntry {
    frame: String,
    trace: PathBuf,
    #[serde(default)]
    azimuth_deg: f64,
    /// Drawn from the capability band with the run seed when absent.
    range_m: Option<f64>,
}

fn base_dir(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn cmd_inject(ctx: &Ctx, manifest_path: &Path) -> Outcome {
    let bytes = read_input(manifest_path)?;
    let m: InjectionManifest = toml::from_str(&text_of(&bytes, manifest_path)?)
        .map_err(|e| Failure::Data(format!("{}: {e}", manifest_path.display())))?;
    let base = base_dir(manifest_path);
    let ds = KittiDataset::open(&base.join(&m.dataset))?;
    let sensor = ctx.sensor()?;
    let cap = ctx.cfg.capability();
    let template = ctx.cfg.template();
    let prov = ctx.prov(&[&bytes]);
    let spec = CampaignSpec {
        capability: cap,
        seed: ctx.cfg.seed,
        ..CampaignSpec::default()
    };

    let reports = m
        .injection
        .par_iter()
        .enumerate()
        .map(|(k, e)| {
            let cloud = ds.cloud(&e.frame)?;
            let trace = load_trace(&base.join(&e.trace))?;
            let range = e.range_m.unwrap_or_else(|| placement_range(&spec, k, 0));
            let rep = spoof_front_near(&cloud, &sensor, &trace, &cap, &template, e.azimuth_deg, range)?;
            Ok((trace, range, rep))
        })
        .collect::<Outcome<Vec<_>>>()?;

    let mut targets = Vec::new();
    let mut w = csv_writer();
    w.write_record([
        "id",
        "frame",
        "trace",
        "azimuth_deg",
        "range_m",
        "target_range_m",
        "replaced_rays",
        "injected_points",
    ])
        .expect("in-memory write");
    for (k, (e, (trace, range, rep))) in m.injection.iter().zip(&reports).enumerate() {
        let id = format!("{}_{k:03}", e.frame);
        save_velodyne(&ctx.path(&format!("velodyne/{id}.bin")), &rep.cloud)?;
        let injected = AttackTrace::new(
            PointCloud::new(rep.injected_points().to_vec()),
            trace.meta.source,
            trace.meta.source_range,
        );
        save_trace(&ctx.path(&format!("traces/{id}.bin")), &injected, Some(&prov))?;
        targets.push(DumpRow {
            frame_id: id.clone(),
            detection: Detection {
                bbox: rep.target_box,
                score: 1.0,
            },
        });
        let c = rep.target_box.center;
        w.write_record([
            id,
            e.frame.clone(),
            e.trace.to_string_lossy().into_owned(),
            fmt_sig9(e.azimuth_deg),
            fmt_sig9(*range),
            fmt_sig9(c.norm_xy()),
            rep.replaced_ray_count.to_string(),
            rep.injected_point_count.to_string(),
        ])
        .expect("in-memory write");
    }
    ctx.write("targets.csv", write_detection_dump(&targets, Some(&prov)))?;
    ctx.write("injections.csv", finish(w, Some(&prov)))?;
    ctx.write_run_record(&prov, "inject")
}

// ---------------------------------------------------------------- carlo-fit

/// A scene set directory: `velodyne/<id>.bin` and `boxes.csv` (dump
/// format, scores ignored).
fn load_scene_set(dir: &Path) -> Outcome<(Vec<ScoredScene>, String)> {
    let boxes_path = dir.join("boxes.csv");
    let boxes_bytes = read_input(&boxes_path)?;
    let rows = read_detection_dump(&text_of(&boxes_bytes, &boxes_path)?)?;
    let mut parts: Vec<(String, Vec<u8>)> = vec![("boxes.csv".into(), boxes_bytes)];
    let mut scenes = Vec::new();
    for (id, dets) in group_by_frame(&rows) {
        let p = dir.join("velodyne").join(format!("{id}.bin"));
        let bytes = read_input(&p)?;
        let cloud = crate::velodyne::read_velodyne_bin(&bytes)?.with_frame_id(id.clone());
        parts.push((id, bytes));
        scenes.push(ScoredScene {
            cloud,
            boxes: dets.iter().map(|d| d.bbox).collect(),
        });
    }
    let hash = sha256_of_parts(parts.iter().map(|(n, b)| (n.as_str(), b.as_slice())));
    Ok((scenes, hash))
}

fn scenes_hash(scenes: &[ScoredScene]) -> String {
    let blobs: Vec<(String, Vec<u8>)> = scenes
        .iter()
        .map(|s| {
            let rows: Vec<DumpRow> = s
                .boxes
                .iter()
                .map(|&bbox| DumpRow {
                    frame_id: s.cloud.frame_id.clone(),
                    detection: Detection { bbox, score: 1.0 },
                })
                .collect();
            let mut b = write_velodyne_bin(&s.cloud);
            b.extend_from_slice(write_detection_dump(&rows, None).as_bytes());
            (s.cloud.frame_id.clone(), b)
        })
        .collect();
    sha256_of_parts(blobs.iter().map(|(n, b)| (n.as_str(), b.as_slice())))
}

/// `(f, g)` per box, scenes measured in parallel.
pub fn ratios(sensor: &SensorModel, scenes: &[ScoredScene], base: &CarloConfig) -> Vec<(Option<f64>, Option<f64>)> {
    scenes
        .par_iter()
        .map(|s| measure_ratios(sensor, std::slice::from_ref(s), base))
        .collect::<Vec<_>>()
        .concat()
}

fn write_ratio_cdfs(ctx: &Ctx, d: &RatioDistributions, prov: &Provenance, prefix: &str) -> Outcome {
    ctx.write(
        &format!("{prefix}cdf_f.csv"),
        write_cdf(&[("f_valid", &d.f_valid), ("f_spoofed", &d.f_spoofed)], Some(prov)),
    )?;
    ctx.write(
        &format!("{prefix}cdf_g.csv"),
        write_cdf(&[("g_valid", &d.g_valid), ("g_spoofed", &d.g_spoofed)], Some(prov)),
    )
}

/// Measures, writes CDFs, fits and writes the profile.
fn fit_and_write(
    ctx: &Ctx,
    sensor: &SensorModel,
    valid: &[ScoredScene],
    spoofed: &[ScoredScene],
    hashes: (String, String),
    prov: &Provenance,
    prefix: &str,
) -> Outcome<CalibrationProfile> {
    if valid.is_empty() || spoofed.is_empty() {
        return Err(Failure::Data("calibration needs at least one valid and one spoofed scene".into()));
    }
    let base = ctx.cfg.carlo_base()?;
    let d = RatioDistributions::from_samples(&ratios(sensor, valid, &base), &ratios(sensor, spoofed, &base));
    write_ratio_cdfs(ctx, &d, prov, prefix)?;
    let cal = fit_thresholds(&d, &base)?;
    let profile = CalibrationProfile::new(&cal, &d, hashes.0, hashes.1, Some(prov.clone()));
    ctx.write(&format!("{prefix}profile.toml"), profile.to_toml())?;
    Ok(profile)
}

/// The synthetic calibration benchmark.
pub fn synthetic_calibration_sets(bench: &Bench, n: usize, boxes: BoxSource) -> (Vec<ScoredScene>, Vec<ScoredScene>) {
    let traces = bench.rendered_library(5);
    (bench.valid_set(n, boxes), bench.spoofed_set(&traces, n, boxes))
}

fn cmd_carlo_fit(
    ctx: &Ctx,
    valid: Option<PathBuf>,
    spoofed: Option<PathBuf>,
    synthetic: Option<usize>,
    boxes: BoxArg,
    no_ground: bool,
) -> Outcome {
    let sensor = ctx.sensor()?;
    let (valid, spoofed, hashes, prov) = match (valid, spoofed, synthetic) {
        (Some(v), Some(s), None) => {
            let (vs, vh) = load_scene_set(&v)?;
            let (ss, sh) = load_scene_set(&s)?;
            let prov = ctx.prov(&[vh.as_bytes(), sh.as_bytes()]);
            (vs, ss, (vh, sh), prov)
        }
        (None, None, Some(n)) => {
            let mut bench = Bench::from_config(&ctx.cfg)?;
            bench.ground = !no_ground;
            let source = match boxes {
                BoxArg::Label => BoxSource::Label,
                BoxArg::Detector => BoxSource::Detector,
            };
            let (vs, ss) = synthetic_calibration_sets(&bench, n, source);
            let (vh, sh) = (scenes_hash(&vs), scenes_hash(&ss));
            let flags = format!("synthetic={n} boxes={boxes:?} ground={}", !no_ground);
            let prov = ctx.prov(&[flags.as_bytes()]);
            (vs, ss, (vh, sh), prov)
        }
        _ => {
            return Err(Failure::Usage(
                "give either --valid and --spoofed scene sets or --synthetic N".into(),
            ))
        }
    };
    ctx.write_run_record(&prov, "carlo-fit")?;
    let p = fit_and_write(ctx, &sensor, &valid, &spoofed, hashes, &prov, "")?;
    println!(
        "a={} b={} a'={} b'={} fsd_threshold={} lpd=[{}, {}] lpd_overlap={}",
        fmt_sig9(p.a),
        fmt_sig9(p.b),
        fmt_sig9(p.a_prime),
        fmt_sig9(p.b_prime),
        fmt_sig9(p.fsd_threshold),
        fmt_sig9(p.lpd_low),
        fmt_sig9(p.lpd_high),
        p.lpd_overlap
    );
    Ok(())
}

// ---------------------------------------------------------------- carlo-check

fn cmd_carlo_check(ctx: &Ctx, frames: &Path, dets_path: &Path, profile: Option<&Path>, no_timing: bool) -> Outcome {
    let sensor = ctx.sensor()?;
    let config = match profile {
        Some(p) => CalibrationProfile::load(p)?.carlo_config()?,
        None => ctx.cfg.carlo_base()?,
    };
    let dets_bytes = read_input(dets_path)?;
    let rows = read_detection_dump(&text_of(&dets_bytes, dets_path)?)
        .map_err(|e| Failure::Data(format!("{}: {e}", dets_path.display())))?;
    let scan_dir = if frames.join("velodyne").is_dir() {
        frames.join("velodyne")
    } else {
        frames.to_path_buf()
    };
    let profile_bytes = profile.map(read_input).transpose()?.unwrap_or_default();
    let prov = ctx.prov(&[&dets_bytes, &profile_bytes]);
    let grouped = group_by_frame(&rows);
    let wall = WallClock::new();
    let clock: &(dyn Clock + Sync) = if no_timing { &NoClock } else { &wall };
    let per_frame = grouped
        .par_iter()
        .map(|(id, dets)| {
            let cloud = load_velodyne(&scan_dir.join(format!("{id}.bin")))?;
            let boxes: Vec<Box3D> = dets.iter().map(|d| d.bbox).collect();
            let verdicts = carlo_batch(&sensor, &cloud, &boxes, &config, clock);
            Ok(verdicts
                .into_iter()
                .enumerate()
                .map(|(k, v)| VerdictRow {
                    frame_id: id.clone(),
                    box_index: k,
                    verdict: v.map_err(|e| e.to_string()),
                })
                .collect::<Vec<_>>())
        })
        .collect::<Outcome<Vec<_>>>()?;
    let rows: Vec<VerdictRow> = per_frame.concat();
    for r in &rows {
        if let Err(e) = &r.verdict {
            eprintln!("carlo-check: {} box {}: {e}", r.frame_id, r.box_index);
        }
    }
    ctx.write("verdicts.csv", write_verdicts(&rows, Some(&prov)))?;
    ctx.write_run_record(&prov, "carlo-check")
}

// ---------------------------------------------------------------- fv

fn cmd_fv(ctx: &Ctx, frame: &Path, scores: Option<&Path>, steps: Option<(f64, f64)>) -> Outcome {
    let sensor = ctx.sensor()?;
    let bytes = read_input(frame)?;
    let cloud = crate::velodyne::read_velodyne_bin(&bytes)?;
    let config = match steps {
        None => FvConfig::from_sensor(&sensor),
        Some((az, el)) => {
            let els = sensor.elevations_deg();
            let (lo, hi) = (els[0], els[els.len() - 1]);
            FvConfig::new(az, el, sensor.azimuth_start_deg(), lo - el / 2.0, 360.0, hi - lo + el)?
        }
    };
    let img = build_fv_image(&cloud, &config);
    let prov = ctx.prov(&[&bytes]);
    ctx.write("fv_range.csv", write_range_csv(&img, Some(&prov)))?;
    ctx.write("fv_count.csv", write_count_csv(&img, Some(&prov)))?;
    ctx.write("fv.pgm", write_pgm(&img, Some(&prov)))?;
    if let Some(p) = scores {
        let raster = read_score_raster(&read_text(p)?).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
        let scored = augment_with_scores(&cloud, &config, &raster)?;
        let mut w = csv_writer();
        w.write_record(["x", "y", "z", "intensity", "score"]).expect("in-memory write");
        for (q, s) in scored.cloud.iter().zip(&scored.scores) {
            w.write_record([q.x, q.y, q.z, q.intensity, *s].map(fmt_sig9)).expect("in-memory write");
        }
        ctx.write("scored_points.csv", finish(w, Some(&prov)))?;
    }
    ctx.write_run_record(&prov, "fv")
}

// ---------------------------------------------------------------- campaign

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignManifest {
    /// `all` runs every frame against every trace; `cycle` pairs frame i
    /// with trace i mod n.
    #[serde(default = "default_pairing")]
    pub pairing: String,
    pub frames: FramesSpec,
    pub traces: TracesSpec,
    #[serde(default)]
    pub defense: DefenseSpec,
}

fn default_pairing() -> String {
    "all".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramesSpec {
    /// Number of synthetic background frames.
    pub synthetic: Option<usize>,
    /// KITTI-layout root (relative to the manifest).
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracesSpec {
    /// `rendered` (size-grouped family), `dense` (whole-car renders cut to
    /// the capability by the pipeline) or `library` (trace files).
    pub kind: String,
    #[serde(default = "default_per_group")]
    pub per_group: usize,
    #[serde(default)]
    pub count: Option<usize>,
    pub library: Option<PathBuf>,
}

fn default_per_group() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseSpec {
    /// `none`, `profile` or `calibrate`.
    #[serde(default = "default_defense")]
    pub mode: String,
    pub profile: Option<PathBuf>,
    /// Valid and spoofed scenes generated for `calibrate`.
    #[serde(default = "default_calibration_samples")]
    pub calibration_samples: usize,
    /// Valid front-near vehicles judged to measure the false-spoof rate.
    #[serde(default)]
    pub valid_checks: usize,
}

fn default_defense() -> String {
    "none".into()
}

fn default_calibration_samples() -> usize {
    60
}

impl Default for DefenseSpec {
    fn default() -> Self {
        Self {
            mode: default_defense(),
            profile: None,
            calibration_samples: default_calibration_samples(),
            valid_checks: 0,
        }
    }
}

/// Everything a campaign produced, before it is written out.
pub struct CampaignOutput {
    pub result: ExperimentResult,
    pub trace_sources: Vec<String>,
    pub profile: Option<CalibrationProfile>,
    pub score_errors: EmpiricalDistribution,
    /// `(judged, labelled spoofed)` over valid front-near vehicles.
    pub valid_checks: Option<(usize, usize)>,
}

/// Proxy score of the detection covering `trace` when it is the only thing
/// in the scene.
fn isolated_score(bench: &Bench, trace: &AttackTrace) -> Option<f64> {
    let c = trace.points.centroid()?;
    proxy_detect(&trace.points, &bench.detector)
        .into_iter()
        .filter(|d| {
            let (dx, dy) = (d.bbox.center.x - c.x, d.bbox.center.y - c.y);
            dx * dx + dy * dy <= 9.0
        })
        .map(|d| d.score)
        .max_by(f64::total_cmp)
}

/// Relative change of the proxy score when a trace is moved front-near.
fn score_errors(bench: &Bench, traces: &[AttackTrace], spec: &CampaignSpec) -> EmpiricalDistribution {
    let v: Vec<f64> = traces
        .par_iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let s = isolated_score(bench, t)?;
            let rep = spoof_front_near(
                &PointCloud::default(),
                &bench.sensor,
                t,
                &spec.capability,
                &spec.template,
                spec.azimuth_deg,
                placement_range(spec, usize::MAX, i),
            )
            .ok()?;
            let moved = AttackTrace::new(rep.cloud, t.meta.source, t.meta.source_range);
            relative_score_error(s, isolated_score(bench, &moved).unwrap_or(0.0))
        })
        .collect();
    EmpiricalDistribution::new(v)
}

pub fn run_campaign_manifest(cfg: &RunConfig, m: &CampaignManifest, base: &Path) -> Outcome<CampaignOutput> {
    let bench = Bench::from_config(cfg)?;
    let frames: Vec<PointCloud> = match (&m.frames.synthetic, &m.frames.dataset) {
        (Some(n), None) => bench.backgrounds(*n),
        (None, Some(root)) => {
            let ds = KittiDataset::open(&base.join(root))?;
            let n = m.frames.limit.unwrap_or(ds.ids.len()).min(ds.ids.len());
            ds.ids[..n].par_iter().map(|id| ds.cloud(id)).collect::<Result<_, _>>()?
        }
        _ => return Err(Failure::Data("campaign frames: set exactly one of `synthetic` or `dataset`".into())),
    };
    let traces: Vec<AttackTrace> = match m.traces.kind.as_str() {
        "rendered" => bench.rendered_library(m.traces.per_group),
        "dense" => bench.dense_traces(m.traces.count.unwrap_or(20)),
        "library" => {
            let dir = m
                .traces
                .library
                .as_ref()
                .ok_or_else(|| Failure::Data("campaign traces: `library` needs a directory".into()))?;
            find_traces(&base.join(dir))?.iter().map(|p| load_trace(p)).collect::<Result<_, _>>()?
        }
        other => return Err(Failure::Data(format!("campaign traces: unknown kind {other:?}"))),
    };
    let trace_sources: Vec<String> = traces.iter().map(|t| t.meta.source.as_str().to_string()).collect();

    let mut spec = CampaignSpec {
        capability: bench.capability,
        template: bench.template,
        rule: bench.rule,
        detector: bench.detector,
        defense: None,
        azimuth_deg: 0.0,
        group_width: 10,
        seed: cfg.seed,
    };
    let profile = match m.defense.mode.as_str() {
        "none" => None,
        "profile" => {
            let p = m
                .defense
                .profile
                .as_ref()
                .ok_or_else(|| Failure::Data("defense mode `profile` needs `profile`".into()))?;
            Some(CalibrationProfile::load(&base.join(p))?)
        }
        "calibrate" => {
            let (v, s) = synthetic_calibration_sets(&bench, m.defense.calibration_samples, BoxSource::Detector);
            let base_cfg = cfg.carlo_base()?;
            let d = RatioDistributions::from_samples(
                &ratios(&bench.sensor, &v, &base_cfg),
                &ratios(&bench.sensor, &s, &base_cfg),
            );
            let cal = fit_thresholds(&d, &base_cfg)?;
            Some(CalibrationProfile::new(&cal, &d, scenes_hash(&v), scenes_hash(&s), None))
        }
        other => return Err(Failure::Data(format!("defense: unknown mode {other:?}"))),
    };
    if let Some(p) = &profile {
        spec.defense = Some(p.carlo_config()?);
    }

    let pairs: Vec<(usize, usize)> = match m.pairing.as_str() {
        "all" => (0..frames.len()).flat_map(|f| (0..traces.len()).map(move |t| (f, t))).collect(),
        "cycle" if traces.is_empty() => Vec::new(),
        "cycle" => (0..frames.len()).map(|f| (f, f % traces.len())).collect(),
        other => return Err(Failure::Data(format!("pairing must be `all` or `cycle`, got {other:?}"))),
    };
    let detector = spec.detector;
    let rows: Vec<PairResult> = pairs
        .par_iter()
        .map(|&(f, t)| {
            let detect = |c: &PointCloud| proxy_detect(c, &detector);
            run_pair(&bench.sensor, &frames[f], f, &traces[t], t, &spec, &detect, &NoClock)
        })
        .collect();
    let result = aggregate(rows, spec.group_width);
    let errors = score_errors(&bench, &traces, &spec);

    let valid_checks = match (&spec.defense, m.defense.valid_checks) {
        (Some(c), n) if n > 0 => {
            let flags: Vec<Option<bool>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let v = bench.valid_scene(i);
                    let d = bench.matching_detection(&v.cloud, &v.label)?;
                    let verdict = carlo_batch(&bench.sensor, &v.cloud, &[d.bbox], c, &NoClock).pop()?.ok()?;
                    Some(verdict.label == carlo_core::carlo::Label::Spoofed)
                })
                .collect();
            let judged = flags.iter().flatten().count();
            let spoofed = flags.iter().flatten().filter(|&&s| s).count();
            Some((judged, spoofed))
        }
        _ => None,
    };
    Ok(CampaignOutput {
        result,
        trace_sources,
        profile,
        score_errors: errors,
        valid_checks,
    })
}

fn cmd_campaign(ctx: &Ctx, manifest_path: &Path) -> Outcome {
    let bytes = read_input(manifest_path)?;
    let m: CampaignManifest = toml::from_str(&text_of(&bytes, manifest_path)?)
        .map_err(|e| Failure::Data(format!("{}: {e}", manifest_path.display())))?;
    let prov = ctx.prov(&[&bytes]);
    let out = run_campaign_manifest(&ctx.cfg, &m, &base_dir(manifest_path))?;
    let r = &out.result;
    ctx.write("rows.csv", write_rows(&r.rows, &out.trace_sources, Some(&prov)))?;
    ctx.write("groups.csv", write_groups(&r.groups, Some(&prov)))?;
    ctx.write(
        "score_errors.csv",
        write_cdf(&[("relative_score_error", &out.score_errors)], Some(&prov)),
    )?;
    let mut summary = campaign_summary(r);
    if let Some(p) = &out.profile {
        let mut p = p.clone();
        p.provenance = Some(prov.clone());
        ctx.write("profile.toml", p.to_toml())?;
    }
    if let Some((judged, spoofed)) = out.valid_checks {
        summary.push(("valid_judged".into(), judged.to_string()));
        summary.push(("valid_labelled_spoofed".into(), spoofed.to_string()));
        let rate = (judged > 0).then(|| spoofed as f64 / judged as f64);
        summary.push(("false_spoof_rate".into(), fmt_opt(rate)));
    }
    ctx.write("summary.csv", write_summary(&summary, Some(&prov)))?;
    ctx.write_run_record(&prov, "campaign")?;
    for (k, v) in &summary {
        println!("{k}={v}");
    }
    Ok(())
}

// ---------------------------------------------------------------- eval

/// Ground-truth boxes per frame id.
fn load_truth(path: &Path) -> Outcome<Vec<(String, Vec<Box3D>)>> {
    if path.is_dir() {
        let ids = list_ids(&path.join("label_2"), "txt")?;
        let ds = KittiDataset {
            root: path.to_path_buf(),
            ids: ids.clone(),
        };
        ids.par_iter()
            .map(|id| {
                let f = ds.labeled_frame(id)?;
                Ok((id.clone(), f.labels.iter().filter(|l| l.is_vehicle()).map(|l| l.bbox).collect()))
            })
            .collect()
    } else {
        let text = read_text(path)?;
        let rows = read_detection_dump(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        Ok(group_by_frame(&rows)
            .into_iter()
            .map(|(id, d)| (id, d.iter().map(|x| x.bbox).collect()))
            .collect())
    }
}

fn cmd_eval(ctx: &Ctx, dets_path: &Path, labels: &Path, targets: Option<&Path>, iou: f64) -> Outcome {
    if !(iou > 0.0 && iou <= 1.0) {
        return Err(Failure::Usage("--iou must lie in (0, 1]".into()));
    }
    let dets_bytes = read_input(dets_path)?;
    let dets = read_detection_dump(&text_of(&dets_bytes, dets_path)?)
        .map_err(|e| Failure::Data(format!("{}: {e}", dets_path.display())))?;
    let truth = load_truth(labels)?;
    let mut ids: Vec<String> = truth.iter().map(|(id, _)| id.clone()).collect();
    let by_frame = group_by_frame(&dets);
    for (id, _) in &by_frame {
        if !ids.contains(id) {
            ids.push(id.clone());
        }
    }
    let lookup = |list: &[(String, Vec<Detection>)], id: &str| {
        list.iter().find(|(k, _)| k == id).map(|(_, v)| v.clone()).unwrap_or_default()
    };
    let det_frames: Vec<Vec<Detection>> = ids.iter().map(|id| lookup(&by_frame, id)).collect();
    let truth_frames: Vec<Vec<Box3D>> = ids
        .iter()
        .map(|id| truth.iter().find(|(k, _)| k == id).map(|(_, v)| v.clone()).unwrap_or_default())
        .collect();

    let rule = ctx.cfg.rule().map_err(Failure::Usage)?;
    let ap = average_precision(&det_frames, &truth_frames, iou);
    let mut items = vec![
        ("detector".to_string(), "external".to_string()),
        ("frames".into(), ids.len().to_string()),
        ("ground_truth".into(), truth_frames.iter().map(Vec::len).sum::<usize>().to_string()),
        ("detections".into(), dets.len().to_string()),
        ("iou_threshold".into(), fmt_sig9(iou)),
        ("ap".into(), fmt_sig9(ap)),
    ];
    let mut inputs = vec![dets_bytes];
    if let Some(tp) = targets {
        let tb = read_input(tp)?;
        let trows = read_detection_dump(&text_of(&tb, tp)?).map_err(|e| Failure::Data(format!("{}: {e}", tp.display())))?;
        inputs.push(tb);
        let scores: Vec<Option<f64>> = trows
            .iter()
            .map(|t| best_success_score(&lookup(&by_frame, &t.frame_id), &t.detection.bbox, &rule))
            .collect();
        let successes = scores.iter().filter(|s| s.is_some_and(|s| s >= rule.score_threshold)).count();
        items.push(("attacks".into(), trows.len().to_string()));
        if !trows.is_empty() {
            items.push(("asr".into(), fmt_sig9(successes as f64 / trows.len() as f64)));
        }
        let curve = recall_curve(&det_frames, &truth_frames, iou);
        match a2sr(&scores, &curve) {
            Ok(v) => items.push(("a2sr".into(), fmt_sig9(v))),
            Err(e) => eprintln!("eval: A²SR skipped: {e}"),
        }
    }
    let refs: Vec<&[u8]> = inputs.iter().map(Vec::as_slice).collect();
    let prov = ctx.prov(&refs);
    ctx.write("report.csv", write_summary(&items, Some(&prov)))?;
    ctx.write_run_record(&prov, "eval")?;
    for (k, v) in &items {
        println!("{k}={v}");
    }
    Ok(())
}

// ---------------------------------------------------------------- synth

fn cmd_synth(ctx: &Ctx, n: usize) -> Outcome {
    let sensor = ctx.sensor()?;
    let synth = ctx.cfg.synth();
    let calib = Calibration::axis_permutation();
    let prov = ctx.prov(&[format!("frames={n}").as_bytes()]);
    (0..n).into_par_iter().try_for_each(|i| {
        let seed = crate::bench::mix_seed(ctx.cfg.seed, 1, i as u64);
        let f = synthetic_frame(&sensor, &synth, seed, frame_id(i));
        let labels: Vec<_> = f
            .labels
            .iter()
            .map(|l| lidar_box_to_label(&l.bbox, &l.object_type, l.truncated, l.occluded as i8, &calib))
            .collect();
        write_frame(&ctx.out, &frame_id(i), &f.cloud, &labels, &calib).map_err(Failure::from)
    })?;
    ctx.write_run_record(&prov, "synth")
}
