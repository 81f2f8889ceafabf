use std::path::{Path, PathBuf};

use echomeasure_core::dataset::{load_coco, load_manifest, render_overlay};
use echomeasure_core::measure::{bbox_filter, indicators_csv, measure_image, ImageRecord};
use echomeasure_core::{ClassId, Detection, Scale, View};
use rayon::prelude::*;
use serde::Serialize;

use super::{create_dir, thread_pool, write_json};
use crate::args::MeasureArgs;
use crate::error::CliError;

/// One image ready to measure, or the reason it cannot be.
struct Job {
    image_id: String,
    view: Option<View>,
    width: usize,
    height: usize,
    scale: Option<f64>,
    detections: Result<Vec<Detection>, String>,
}

#[derive(Serialize)]
struct Failure<'a> {
    image_id: &'a str,
    error: &'a str,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    input: String,
    images: usize,
    measured: usize,
    failed: Vec<Failure<'a>>,
    outputs: Vec<&'static str>,
}

fn stem(file_name: &str) -> String {
    Path::new(file_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name.to_owned())
}

fn coco_jobs(path: &Path, args: &MeasureArgs) -> Result<Vec<Job>, CliError> {
    let coco = load_coco(path, &args.keys.key_map())?;
    Ok(coco
        .images
        .iter()
        .map(|im| Job {
            image_id: stem(&im.file_name),
            view: coco.view_of(im),
            width: im.width,
            height: im.height,
            scale: im.scale_cm_per_px,
            detections: coco.detections_for(im).map_err(|e| e.to_string()),
        })
        .collect())
}

fn manifest_jobs(path: &Path) -> Result<Vec<Job>, CliError> {
    let (manifest, base) = load_manifest(path)?;
    Ok(manifest
        .images
        .iter()
        .map(|im| Job {
            image_id: im.image_id.clone(),
            view: Some(im.view),
            width: im.width,
            height: im.height,
            scale: im.scale_cm_per_px,
            detections: im.detections(&base).map_err(|e| e.to_string()),
        })
        .collect())
}

fn measure_job(job: &Job, args: &MeasureArgs, overlay_dir: Option<&PathBuf>) -> Result<ImageRecord, CliError> {
    let view = args.view.map(View::from).or(job.view);
    let fail = |msg: String| ImageRecord::failed(job.image_id.clone(), view.unwrap_or(View::Lv), msg);
    let Some(view) = view else {
        return Ok(fail("view unknown: no annotations and no --view".into()));
    };
    let dets = match &job.detections {
        Ok(d) => d,
        Err(e) => return Ok(fail(e.clone())),
    };
    let Some(scale) = job.scale.or(args.scale_cm_per_px) else {
        return Ok(fail("no scale for this image (pass --scale-cm-per-px)".into()));
    };
    let scale = Scale::new(scale)?;
    let set = match measure_image(view, dets, scale) {
        Ok(s) => s,
        Err(e) => return Ok(fail(e.to_string())),
    };
    if let Some(dir) = overlay_dir {
        let kept = bbox_filter(dets);
        let masks: Vec<(ClassId, _)> = kept
            .iter()
            .filter(|d| view.classes().contains(&d.class))
            .map(|d| (d.class, &d.mask))
            .collect();
        let img = render_overlay(job.width, job.height, &masks, &set);
        let path = dir.join(format!("{}.png", job.image_id));
        img.save(&path).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(ImageRecord::from_set(job.image_id.clone(), &set))
}

pub fn run(args: MeasureArgs) -> Result<(), CliError> {
    if let Some(s) = args.scale_cm_per_px {
        if !(s.is_finite() && s > 0.0) {
            return Err(CliError::usage(format!("--scale-cm-per-px must be positive, got {s}")));
        }
    }
    let (jobs, input) = match (&args.coco, &args.masks) {
        (Some(c), None) => (coco_jobs(c, &args)?, c.display().to_string()),
        (None, Some(m)) => (manifest_jobs(m)?, m.display().to_string()),
        _ => return Err(CliError::usage("pass exactly one of --coco or --masks")),
    };
    create_dir(&args.out)?;
    let overlay_dir = (!args.no_overlays).then(|| args.out.join("overlays"));
    if let Some(d) = &overlay_dir {
        create_dir(d)?;
    }

    let pool = thread_pool(args.threads)?;
    let records: Vec<ImageRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|job| measure_job(job, &args, overlay_dir.as_ref()))
            .collect::<Result<_, _>>()
    })?;

    write_json(&args.out.join("indicators.json"), &records)?;
    let csv_path = args.out.join("indicators.csv");
    std::fs::write(&csv_path, indicators_csv(&records)).map_err(|e| CliError::io(&csv_path, e))?;

    let failed: Vec<Failure> = records
        .iter()
        .filter_map(|r| r.error.as_deref().map(|e| Failure { image_id: &r.image_id, error: e }))
        .collect();
    for f in &failed {
        eprintln!("warning[amem-measure]: {}: {}", f.image_id, f.error);
    }
    let mut outputs = vec!["indicators.json", "indicators.csv", "report.json"];
    if overlay_dir.is_some() {
        outputs.push("overlays/");
    }
    let report = Report {
        command: "measure",
        input,
        images: records.len(),
        measured: records.len() - failed.len(),
        failed,
        outputs,
    };
    write_json(&args.out.join("report.json"), &report)?;
    println!(
        "measured {}/{} images -> {}",
        report.measured,
        report.images,
        args.out.display()
    );
    Ok(())
}
