use std::collections::BTreeMap;

use echomeasure_core::dataset::load_coco;
use echomeasure_core::BBox;

use crate::args::IngestArgs;
use crate::error::CliError;

pub fn run(args: IngestArgs) -> Result<(), CliError> {
    let coco = load_coco(&args.coco, &args.keys.key_map())?;
    let mut per_class: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_view: BTreeMap<String, usize> = BTreeMap::new();
    let mut bbox_mismatch = 0usize;
    for im in &coco.images {
        let view = coco.view_of(im).map_or("unknown", |v| v.name());
        *per_view.entry(view.to_owned()).or_default() += 1;
        for a in coco.annotations_for(im.id) {
            *per_class.entry(a.class.to_string()).or_default() += 1;
            let m = a.mask(im.width, im.height)?;
            let ok = BBox::of_mask(&m).is_some_and(|b| {
                let sides = [(b.x, a.bbox.x), (b.y, a.bbox.y), (b.x + b.w, a.bbox.x + a.bbox.w), (b.y + b.h, a.bbox.y + a.bbox.h)];
                sides.iter().all(|(p, q)| (p - q).abs() <= 1.0)
            });
            if !ok {
                bbox_mismatch += 1;
                eprintln!("warning[dataset-io]: annotation {}: rasterized mask disagrees with bbox", a.id);
            }
        }
    }
    let no_scale = coco.images.iter().filter(|i| i.scale_cm_per_px.is_none()).count();
    println!("images {}", coco.images.len());
    println!("annotations {}", coco.annotations.len());
    for (k, v) in &per_view {
        println!("view {k} {v}");
    }
    for (k, v) in &per_class {
        println!("class {k} {v}");
    }
    println!("images without scale {no_scale}");
    println!("bbox mismatches {bbox_mismatch}");
    Ok(())
}
