use std::path::Path;

use anyhow::{bail, Context, Result};
use egomem_core::bundle::{assemble_conditioning_bundle, BundleInputs, RenderOptions};
use egomem_core::features::FeatureVideo;
use egomem_core::geometry::Vec3;
use egomem_core::image::{read_frames, RgbImage};
use egomem_core::memory::{
    ingest_semidense, sample_point_colors, sample_point_features, Descriptors, Region,
    SpatialMemory,
};
use egomem_core::metrics::{
    camera_error, exo_metrics, hand_metrics, obj_consistency, read_detections, read_masks,
    MetricReport,
};
use egomem_core::pose::{EgoPoseSequence, ExoPoseSequence};
use egomem_core::trajectory::{read_intrinsics, CameraTrajectory};
use egomem_encoder::{EgoPoseEncoder, EncoderConfig, EncoderWeights};
use egomem_synth::{generate_fixture, FixtureParams, SceneParams};
use log::info;
use serde_json::json;

use crate::staging::write_dir;
use crate::{
    BuildMemoryArgs, EditArgs, EncodePoseArgs, EncoderArgs, EvaluateArgs, RenderArgs, SynthArgs,
};

fn emit(value: serde_json::Value) {
    println!("{value}");
}

pub fn build_memory(a: &BuildMemoryArgs) -> Result<()> {
    let traj = CameraTrajectory::read_csv(&a.traj)?;
    let intr = read_intrinsics(&a.intr)?;
    let pts = ingest_semidense(&a.points, &a.obs, &traj, &intr)?;
    info!("{} points with in-frustum observations", pts.points.len());
    let frames = read_frames(&a.frames, traj.frames())?;
    for (f, img) in traj.frames().iter().zip(&frames) {
        if (img.width(), img.height()) != (intr.width, intr.height) {
            bail!(
                "context frame {f} is {}x{}, intrinsics say {}x{}",
                img.width(),
                img.height(),
                intr.width,
                intr.height
            );
        }
    }
    let colors = sample_point_colors(&pts, &frames)?;
    let descriptors = match &a.feats {
        Some(path) => {
            let video = FeatureVideo::read(path)?;
            if video.n_frames() != traj.len() {
                bail!(
                    "{}: {} feature frames for {} context frames",
                    path.display(),
                    video.n_frames(),
                    traj.len()
                );
            }
            let d = sample_point_features(&pts, &video, &intr, a.stride)
                .with_context(|| format!("sampling {}", path.display()))?;
            Some((d, video.channels()))
        }
        None => None,
    };
    let mem = SpatialMemory::build(
        &pts,
        &colors,
        descriptors
            .as_ref()
            .map(|(values, dim)| Descriptors { values, dim: *dim }),
        a.voxel_rgb,
        a.voxel_feat,
    )?;
    mem.write(&a.out)?;
    emit(json!({
        "points": pts.points.len(),
        "rgb_voxels": mem.rgb_voxels.len(),
        "feat_voxels": mem.feat_voxels.len(),
        "feat_dim": mem.feat_dim,
    }));
    Ok(())
}

/// Loads trained weights, or initializes from a config, or (with `fallback`)
/// from the default config. `--seed` overrides the config seed.
fn load_encoder(
    a: &EncoderArgs,
    fallback: bool,
) -> Result<Option<(EncoderConfig, EgoPoseEncoder<f32>)>> {
    if let Some(path) = &a.encoder {
        let (cfg, weights) = EncoderWeights::<f32>::read(path)?;
        if a.seed.is_some() {
            log::warn!("--seed ignored: weights come from {}", path.display());
        }
        return Ok(Some((cfg.clone(), EgoPoseEncoder::new(cfg, weights)?)));
    }
    let mut cfg = match &a.encoder_config {
        Some(path) => EncoderConfig::read(path)?,
        None if fallback || a.seed.is_some() => EncoderConfig::default(),
        None => return Ok(None),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    info!("initializing encoder weights from seed {}", cfg.seed);
    Ok(Some((cfg.clone(), EgoPoseEncoder::init(cfg)?)))
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let memory = SpatialMemory::read(&a.memory)?;
    let traj = CameraTrajectory::read_csv(&a.traj)?;
    let intr = read_intrinsics(&a.intr)?;
    let exo = match &a.exo {
        Some(p) => {
            let mut seq = ExoPoseSequence::read(p)?;
            for &id in &a.exclude {
                seq = seq.without_person(id);
            }
            Some(seq)
        }
        None if !a.exclude.is_empty() => bail!("--exclude-person needs --exo"),
        None => None,
    };
    let ego = a.ego.as_deref().map(EgoPoseSequence::read).transpose()?;
    let encoder = load_encoder(&a.encoder, false)?;
    if ego.is_some() && encoder.is_none() {
        info!("no encoder given; skipping pose tokens");
    }
    let last = a
        .context_frame
        .as_deref()
        .map(RgbImage::read_ppm)
        .transpose()?;
    let opts = RenderOptions {
        splat_radius: a.splat_radius,
        background: a.background,
        stride: a.stride,
        ..RenderOptions::default()
    };
    let bundle = assemble_conditioning_bundle(
        &BundleInputs {
            memory: &memory,
            trajectory: &traj,
            intrinsics: &intr,
            exo: exo.as_ref(),
            ego: ego.as_ref(),
            last_context_frame: last.as_ref(),
            tokenizer: encoder.as_ref().map(|(_, e)| e as _),
        },
        &opts,
    )?;
    write_dir(&a.out, |dir| Ok(bundle.write(dir)?))?;
    emit(json!({
        "frames": bundle.rgb_control.len(),
        "features": bundle.feature_render.is_some(),
        "tokens": bundle.pose_tokens.as_ref().map(|t| [t.rows, t.cols]),
    }));
    Ok(())
}

pub fn encode_pose(a: &EncodePoseArgs) -> Result<()> {
    let ego = EgoPoseSequence::read(&a.ego)?;
    let (cfg, encoder) =
        load_encoder(&a.encoder, true)?.expect("fallback config always yields an encoder");
    let tokens = encoder.encode(&ego)?;
    if let Some(path) = &a.save_weights {
        encoder.weights().write(&cfg, path)?;
    }
    tokens.write(&a.out)?;
    emit(json!({ "rows": tokens.rows, "cols": tokens.cols }));
    Ok(())
}

fn parse_regions(a: &EditArgs) -> Vec<Region> {
    let boxes = a.remove_box.iter().map(|b| Region::Box {
        min: Vec3::new(b[0], b[1], b[2]),
        max: Vec3::new(b[3], b[4], b[5]),
    });
    let spheres = a.remove_sphere.iter().map(|s| Region::Sphere {
        center: Vec3::new(s[0], s[1], s[2]),
        radius: s[3],
    });
    boxes.chain(spheres).collect()
}

pub fn edit(a: &EditArgs) -> Result<()> {
    let regions = parse_regions(a);
    if regions.is_empty() && a.remove_exo_person.is_empty() {
        bail!("nothing to do: give --remove-box, --remove-sphere or --remove-exo-person");
    }
    let mut summary = serde_json::Map::new();
    // Everything is computed before anything is written.
    let memory_edit = match (&a.memory, &a.out) {
        (Some(input), Some(out)) => {
            let mut mem = SpatialMemory::read(input)?;
            let before = (mem.rgb_voxels.len(), mem.feat_voxels.len());
            for r in &regions {
                mem = mem.delete_region(r)?;
            }
            summary.insert("rgb_removed".into(), json!(before.0 - mem.rgb_voxels.len()));
            summary.insert(
                "feat_removed".into(),
                json!(before.1 - mem.feat_voxels.len()),
            );
            Some((mem, out))
        }
        _ => None,
    };
    let exo_edit = match (&a.exo, &a.exo_out) {
        (Some(input), Some(out)) => {
            let mut seq = ExoPoseSequence::read(input)?;
            for &id in &a.remove_exo_person {
                seq = seq.without_person(id);
            }
            Some((seq, out))
        }
        _ => None,
    };
    if let Some((mem, out)) = &memory_edit {
        mem.write(out)?;
    }
    if let Some((seq, out)) = &exo_edit {
        seq.write(out)?;
    }
    emit(serde_json::Value::Object(summary));
    Ok(())
}

fn both<'a>(
    a: &'a Option<std::path::PathBuf>,
    b: &'a Option<std::path::PathBuf>,
) -> Option<(&'a Path, &'a Path)> {
    Some((a.as_deref()?, b.as_deref()?))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut report = MetricReport::default();
    if let Some((gt, est)) = both(&a.gt_traj, &a.est_traj) {
        let (gt, est) = (
            CameraTrajectory::read_csv(gt)?,
            CameraTrajectory::read_csv(est)?,
        );
        report.camera = Some(camera_error(&gt, &est).context("camera error")?);
    }
    if let Some((gt, pred)) = both(&a.gt_objects, &a.pred_objects) {
        report.obj = Some(
            obj_consistency(&read_detections(gt)?, &read_detections(pred)?)
                .context("object metrics")?,
        );
    }
    if let Some((gt, pred)) = both(&a.gt_exo, &a.pred_exo) {
        report.exo = Some(
            exo_metrics(&read_detections(gt)?, &read_detections(pred)?).context("exo metrics")?,
        );
    }
    if let Some((gt, pred)) = both(&a.gt_hands, &a.pred_hands) {
        let (gt, pred) = (read_masks(gt)?, read_masks(pred)?);
        report.hand =
            Some(hand_metrics(&gt.frames, &pred.frames, a.min_mask_area).context("hand metrics")?);
    }
    if report.camera.is_none()
        && report.obj.is_none()
        && report.exo.is_none()
        && report.hand.is_none()
    {
        bail!("nothing to evaluate: give at least one gt/prediction pair");
    }
    write_dir(&a.out, |dir| Ok(report.write(dir)?))?;
    emit(report.to_json());
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let params = FixtureParams {
        scene: SceneParams {
            extent: a.extent,
            point_count: a.points,
            context_frames: a.context_frames,
            width: a.width,
            height: a.height,
            fov_deg: a.fov,
            objects: a.objects,
            voxel_size_rgb: a.voxel_rgb,
            voxel_size_feat: a.voxel_feat,
            feat_dim: a.feat_dim,
            stride: a.stride,
            ..SceneParams::default()
        },
        targets: a.targets,
        profile: a.profile,
        exo_people: a.exo_people,
        ..FixtureParams::default()
    };
    let fixture = generate_fixture(a.seed, &params)?;
    write_dir(&a.out, |dir| Ok(fixture.write(dir)?))?;
    emit(json!({
        "seed": a.seed,
        "points": fixture.dataset.points.len(),
        "context_frames": fixture.dataset.context.len(),
        "targets": fixture.target.len(),
    }));
    Ok(())
}
