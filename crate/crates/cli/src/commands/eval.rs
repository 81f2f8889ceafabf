use std::path::Path;

use echomeasure_core::dataset::{load_coco, load_coco_results, CocoSubset};
use echomeasure_core::eval::{average_precision, coco_thresholds, mae_mse_table, ApResult, ErrorTable, Instance};
use echomeasure_core::measure::ImageRecord;
use echomeasure_core::View;
use serde::Serialize;

use super::{create_dir, read_json, write_json};
use crate::args::EvalArgs;
use crate::error::CliError;

#[derive(Serialize)]
struct Report {
    command: &'static str,
    errors: Option<ErrorTable>,
    ap: Option<ApResult>,
    checks: Vec<Check>,
}

#[derive(Serialize)]
struct Check {
    name: String,
    value: f64,
    bound: f64,
    passed: bool,
}

fn stem(file_name: &str) -> String {
    Path::new(file_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name.to_owned())
}

fn coco_truths(coco: &CocoSubset) -> Vec<ImageRecord> {
    coco.images
        .iter()
        .map(|im| ImageRecord {
            image_id: stem(&im.file_name),
            view: coco.view_of(im).unwrap_or(View::Lv),
            indicators: coco
                .truth_for(im)
                .into_iter()
                .map(|(k, v)| (k.name().to_owned(), v))
                .collect(),
            anchors: Default::default(),
            error: None,
        })
        .collect()
}

fn instances(coco: &CocoSubset, anns: &[echomeasure_core::dataset::CocoAnnotation]) -> Result<Vec<Instance>, CliError> {
    anns.iter()
        .map(|a| {
            let im = coco
                .image(a.image_id)
                .ok_or_else(|| CliError::new("dataset-io", format!("annotation {}: unknown image {}", a.id, a.image_id)))?;
            Ok(Instance {
                image_id: a.image_id.to_string(),
                class: a.class,
                bbox: a.bbox,
                mask: Some(a.mask(im.width, im.height)?),
                score: a.score.unwrap_or(1.0),
            })
        })
        .collect()
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let keys = args.keys.key_map();
    let coco = args.coco.as_ref().map(|p| load_coco(p, &keys)).transpose()?;

    let errors = match &args.pred {
        None => None,
        Some(pred) => {
            let preds: Vec<ImageRecord> = read_json(pred)?;
            let truths: Vec<ImageRecord> = match (&args.truth, &coco) {
                (Some(t), _) => read_json(t)?,
                (None, Some(c)) => coco_truths(c),
                (None, None) => return Err(CliError::usage("--pred needs --truth or --coco")),
            };
            let table = mae_mse_table(&preds, &truths)?;
            println!("{table}");
            Some(table)
        }
    };

    let ap = match (&args.detections, &coco) {
        (Some(d), Some(c)) => {
            let dets = load_coco_results(d, c, &keys)?;
            let r = average_precision(&instances(c, &dets)?, &instances(c, &c.annotations)?, &coco_thresholds());
            println!("mask-mAP {:.4}  box-mAP {:.4}  avg-mAP {:.4}", r.mask_map, r.box_map, r.avg_map);
            Some(r)
        }
        _ => None,
    };

    let mut checks = Vec::new();
    if args.check {
        if let Some(t) = &errors {
            for (ind, row) in &t.rows {
                if let Some(b) = args.mae_max {
                    checks.push(Check { name: format!("mae.{ind}"), value: row.mae, bound: b, passed: row.mae <= b });
                }
                if let Some(b) = args.mse_max {
                    checks.push(Check { name: format!("mse.{ind}"), value: row.mse, bound: b, passed: row.mse <= b });
                }
            }
        }
        if let Some(b) = args.map_min {
            let Some(r) = &ap else {
                return Err(CliError::usage("--map-min needs --detections and --coco"));
            };
            checks.push(Check { name: "avg_map".into(), value: r.avg_map, bound: b, passed: r.avg_map >= b });
        }
        if (args.mae_max.is_some() || args.mse_max.is_some()) && errors.is_none() {
            return Err(CliError::usage("--mae-max/--mse-max need --pred"));
        }
    }

    let report = Report {
        command: "eval",
        errors,
        ap,
        checks,
    };
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(&out.join("report.json"), &report)?;
    }
    let failed: Vec<&Check> = report.checks.iter().filter(|c| !c.passed).collect();
    for c in &report.checks {
        println!("check {:<16} {:>12.6} bound {:>10.6} {}", c.name, c.value, c.bound, if c.passed { "ok" } else { "FAIL" });
    }
    if !failed.is_empty() {
        let names: Vec<&str> = failed.iter().map(|c| c.name.as_str()).collect();
        return Err(CliError::new("eval-harness", format!("check failed: {}", names.join(", "))));
    }
    Ok(())
}
