use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::geometry::BinaryMask;
use crate::measure::{BBox, ClassId, Detection, Indicator, View};

use super::raster::{polygons_to_mask, Polygon};
use super::{io_err, DatasetError, Result};

/// JSON keys for the per-image fields whose names vary between exports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyMap {
    pub scale: String,
    pub indicators: String,
    pub view: String,
}

impl Default for KeyMap {
    fn default() -> Self {
        Self {
            scale: "scale_cm_per_px".into(),
            indicators: "indicators".into(),
            view: "view".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
    pub scale_cm_per_px: Option<f64>,
    pub view: Option<View>,
    pub indicators: BTreeMap<Indicator, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocoCategory {
    pub id: u64,
    pub class: ClassId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub class: ClassId,
    pub polygons: Vec<Polygon>,
    pub bbox: BBox,
    pub score: Option<f64>,
    pub indicators: BTreeMap<Indicator, f64>,
}

impl CocoAnnotation {
    pub fn mask(&self, width: usize, height: usize) -> Result<BinaryMask> {
        polygons_to_mask(&self.polygons, width, height)
    }

    pub fn to_detection(&self, width: usize, height: usize) -> Result<Detection> {
        Ok(Detection {
            class: self.class,
            bbox: self.bbox,
            mask: self.mask(width, height)?,
            score: self.score.unwrap_or(1.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CocoSubset {
    pub images: Vec<CocoImage>,
    pub categories: Vec<CocoCategory>,
    pub annotations: Vec<CocoAnnotation>,
}

#[derive(Deserialize)]
struct RawFile {
    images: Vec<RawImage>,
    categories: Vec<RawCategory>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
}

#[derive(Deserialize)]
struct RawImage {
    id: u64,
    file_name: String,
    width: usize,
    height: usize,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Deserialize)]
struct RawCategory {
    id: u64,
    name: String,
}

#[derive(Deserialize)]
struct RawAnnotation {
    id: Option<u64>,
    image_id: u64,
    category_id: u64,
    segmentation: Value,
    bbox: Option<[f64; 4]>,
    score: Option<f64>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, file: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| DatasetError::Parse {
        file: file.to_owned(),
        json_path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

struct Validator<'a> {
    file: &'a str,
}

impl Validator<'_> {
    fn fail(&self, context: impl Into<String>, reason: impl Into<String>) -> DatasetError {
        DatasetError::Validation {
            file: self.file.to_owned(),
            context: context.into(),
            reason: reason.into(),
        }
    }

    fn indicators(&self, context: &str, v: Option<&Value>) -> Result<BTreeMap<Indicator, f64>> {
        let Some(v) = v else { return Ok(BTreeMap::new()) };
        let obj = v
            .as_object()
            .ok_or_else(|| self.fail(context, "indicator field is not an object"))?;
        let mut out = BTreeMap::new();
        for (k, val) in obj {
            let Some(ind) = Indicator::from_name(&k.to_ascii_lowercase()) else { continue };
            let x = val
                .as_f64()
                .ok_or_else(|| self.fail(context, format!("indicator `{k}` is not a number")))?;
            out.insert(ind, x);
        }
        Ok(out)
    }

    fn image(&self, raw: RawImage, keys: &KeyMap) -> Result<CocoImage> {
        let ctx = format!("image {}", raw.id);
        let scale = match raw.extra.get(&keys.scale) {
            None | Some(Value::Null) => None,
            Some(v) => {
                let s = v
                    .as_f64()
                    .filter(|s| s.is_finite() && *s > 0.0)
                    .ok_or_else(|| self.fail(&ctx, format!("`{}` must be a positive number", keys.scale)))?;
                Some(s)
            }
        };
        let view = match raw.extra.get(&keys.view) {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                v.as_str()
                    .ok_or_else(|| self.fail(&ctx, "view is not a string"))?
                    .parse::<View>()
                    .map_err(|e| self.fail(&ctx, e))?,
            ),
        };
        if raw.width == 0 || raw.height == 0 {
            return Err(self.fail(&ctx, "zero-sized image"));
        }
        Ok(CocoImage {
            id: raw.id,
            file_name: raw.file_name,
            width: raw.width,
            height: raw.height,
            scale_cm_per_px: scale,
            view,
            indicators: self.indicators(&ctx, raw.extra.get(&keys.indicators))?,
        })
    }

    fn polygons(&self, ctx: &str, seg: &Value) -> Result<Vec<Polygon>> {
        let parts = match seg {
            Value::Array(parts) => parts,
            Value::Object(_) => return Err(self.fail(ctx, "RLE segmentations are not supported, use polygons")),
            _ => return Err(self.fail(ctx, "segmentation must be a list of polygons")),
        };
        if parts.is_empty() {
            return Err(self.fail(ctx, "empty segmentation"));
        }
        parts
            .iter()
            .enumerate()
            .map(|(i, part)| {
                let nums: Option<Vec<f64>> = part.as_array().and_then(|a| a.iter().map(Value::as_f64).collect());
                let nums = nums.ok_or_else(|| self.fail(ctx, format!("polygon {i} is not a list of numbers")))?;
                if nums.len() % 2 != 0 {
                    return Err(self.fail(ctx, format!("polygon {i} has an odd number of coordinates")));
                }
                if nums.len() < 6 {
                    return Err(self.fail(ctx, format!("polygon {i} has {} vertices, need at least 3", nums.len() / 2)));
                }
                Ok(nums.chunks_exact(2).map(|c| (c[0], c[1])).collect())
            })
            .collect()
    }

    fn annotation(
        &self,
        index: usize,
        raw: RawAnnotation,
        images: &BTreeMap<u64, &CocoImage>,
        categories: &BTreeMap<u64, ClassId>,
        keys: &KeyMap,
    ) -> Result<CocoAnnotation> {
        let id = raw.id.unwrap_or(index as u64 + 1);
        let ctx = format!("annotation {id} (#{index})");
        if !images.contains_key(&raw.image_id) {
            return Err(self.fail(&ctx, format!("references missing image {}", raw.image_id)));
        }
        let class = *categories
            .get(&raw.category_id)
            .ok_or_else(|| self.fail(&ctx, format!("references missing category {}", raw.category_id)))?;
        let polygons = self.polygons(&ctx, &raw.segmentation)?;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in polygons.iter().flatten() {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let bbox = match raw.bbox {
            None => BBox::new(x0, y0, x1 - x0, y1 - y0),
            Some([x, y, w, h]) => {
                let sides = [(x, x0), (y, y0), (x + w, x1), (y + h, y1)];
                if w < 0.0 || h < 0.0 || sides.iter().any(|(a, b)| (a - b).abs() > 1.0) {
                    return Err(self.fail(
                        &ctx,
                        format!("bbox [{x}, {y}, {w}, {h}] disagrees with polygon extent [{x0}, {y0}, {x1}, {y1}] by more than 1 px"),
                    ));
                }
                BBox::new(x, y, w, h)
            }
        };
        if let Some(s) = raw.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(self.fail(&ctx, format!("score {s} outside [0, 1]")));
            }
        }
        Ok(CocoAnnotation {
            id,
            image_id: raw.image_id,
            category_id: raw.category_id,
            class,
            polygons,
            bbox,
            score: raw.score,
            indicators: self.indicators(&ctx, raw.extra.get(&keys.indicators))?,
        })
    }

    fn file(&self, raw: RawFile, keys: &KeyMap) -> Result<CocoSubset> {
        let mut categories = Vec::new();
        let mut seen = BTreeSet::new();
        for c in raw.categories {
            let class = ClassId::from_name(&c.name)
                .ok_or_else(|| self.fail(format!("category {}", c.id), format!("unknown class name `{}`", c.name)))?;
            if !seen.insert(c.id) {
                return Err(self.fail(format!("category {}", c.id), "duplicate id"));
            }
            categories.push(CocoCategory { id: c.id, class });
        }
        let mut images = Vec::new();
        let mut ids = BTreeSet::new();
        for im in raw.images {
            if !ids.insert(im.id) {
                return Err(self.fail(format!("image {}", im.id), "duplicate id"));
            }
            images.push(self.image(im, keys)?);
        }
        let subset = CocoSubset {
            images,
            categories,
            annotations: Vec::new(),
        };
        let annotations = self.annotations(raw.annotations, &subset, keys)?;
        Ok(CocoSubset { annotations, ..subset })
    }

    fn annotations(&self, raw: Vec<RawAnnotation>, base: &CocoSubset, keys: &KeyMap) -> Result<Vec<CocoAnnotation>> {
        let images: BTreeMap<u64, &CocoImage> = base.images.iter().map(|i| (i.id, i)).collect();
        let cats: BTreeMap<u64, ClassId> = base.categories.iter().map(|c| (c.id, c.class)).collect();
        raw.into_iter()
            .enumerate()
            .map(|(i, a)| self.annotation(i, a, &images, &cats, keys))
            .collect()
    }
}

/// Parse and validate a COCO-subset document. `file` names the source in errors.
pub fn parse_coco(text: &str, file: &str, keys: &KeyMap) -> Result<CocoSubset> {
    let raw: RawFile = parse_json(text, file)?;
    Validator { file }.file(raw, keys)
}

pub fn load_coco(path: impl AsRef<Path>, keys: &KeyMap) -> Result<CocoSubset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_coco(&text, &path.display().to_string(), keys)
}

/// Parse predictions against ground truth: either a bare COCO results list
/// or a full document whose annotations carry scores. Image and category
/// ids are resolved against `gt`.
pub fn parse_coco_results(text: &str, file: &str, gt: &CocoSubset, keys: &KeyMap) -> Result<Vec<CocoAnnotation>> {
    let v = Validator { file };
    if text.trim_start().starts_with('[') {
        let list: Vec<RawAnnotation> = parse_json(text, file)?;
        v.annotations(list, gt, keys)
    } else {
        let raw: RawFile = parse_json(text, file)?;
        {
            let own = v.file(raw, keys)?;
            // category ids must mean the same class in both files
            for c in &own.categories {
                if let Some(g) = gt.categories.iter().find(|g| g.id == c.id) {
                    if g.class != c.class {
                        return Err(v.fail(format!("category {}", c.id), "class differs from ground truth"));
                    }
                }
            }
            for a in &own.annotations {
                if !gt.images.iter().any(|i| i.id == a.image_id) {
                    return Err(v.fail(format!("annotation {}", a.id), format!("image {} not in ground truth", a.image_id)));
                }
            }
            Ok(own.annotations)
        }
    }
}

pub fn load_coco_results(path: impl AsRef<Path>, gt: &CocoSubset, keys: &KeyMap) -> Result<Vec<CocoAnnotation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_coco_results(&text, &path.display().to_string(), gt, keys)
}

impl CocoSubset {
    pub fn image(&self, id: u64) -> Option<&CocoImage> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn annotations_for(&self, image_id: u64) -> impl Iterator<Item = &CocoAnnotation> {
        self.annotations.iter().filter(move |a| a.image_id == image_id)
    }

    pub fn detections_for(&self, image: &CocoImage) -> Result<Vec<Detection>> {
        self.annotations_for(image.id)
            .map(|a| a.to_detection(image.width, image.height))
            .collect()
    }

    /// Explicit view if present, otherwise inferred from annotated classes.
    pub fn view_of(&self, image: &CocoImage) -> Option<View> {
        image
            .view
            .or_else(|| self.annotations_for(image.id).next().map(|a| a.class.view()))
    }

    /// Ground-truth indicators of an image, merging image- and annotation-level values.
    pub fn truth_for(&self, image: &CocoImage) -> BTreeMap<Indicator, f64> {
        let mut out = image.indicators.clone();
        for a in self.annotations_for(image.id) {
            out.extend(a.indicators.iter().map(|(k, v)| (*k, *v)));
        }
        out
    }

    /// Serialize with the given key names.
    pub fn to_json(&self, keys: &KeyMap) -> Value {
        let images: Vec<Value> = self
            .images
            .iter()
            .map(|im| {
                let mut o = Map::new();
                o.insert("id".into(), im.id.into());
                o.insert("file_name".into(), im.file_name.clone().into());
                o.insert("width".into(), im.width.into());
                o.insert("height".into(), im.height.into());
                if let Some(s) = im.scale_cm_per_px {
                    o.insert(keys.scale.clone(), s.into());
                }
                if let Some(v) = im.view {
                    o.insert(keys.view.clone(), v.name().into());
                }
                if !im.indicators.is_empty() {
                    o.insert(keys.indicators.clone(), indicator_json(&im.indicators));
                }
                Value::Object(o)
            })
            .collect();
        let categories: Vec<Value> = self
            .categories
            .iter()
            .map(|c| serde_json::json!({"id": c.id, "name": c.class.name()}))
            .collect();
        let annotations: Vec<Value> = self
            .annotations
            .iter()
            .map(|a| {
                let mut o = Map::new();
                o.insert("id".into(), a.id.into());
                o.insert("image_id".into(), a.image_id.into());
                o.insert("category_id".into(), a.category_id.into());
                let seg: Vec<Vec<f64>> = a.polygons.iter().map(|p| p.iter().flat_map(|&(x, y)| [x, y]).collect()).collect();
                o.insert("segmentation".into(), serde_json::json!(seg));
                o.insert("bbox".into(), serde_json::json!([a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h]));
                o.insert("area".into(), a.bbox.area().into());
                o.insert("iscrowd".into(), 0.into());
                if let Some(s) = a.score {
                    o.insert("score".into(), s.into());
                }
                if !a.indicators.is_empty() {
                    o.insert(keys.indicators.clone(), indicator_json(&a.indicators));
                }
                Value::Object(o)
            })
            .collect();
        serde_json::json!({"images": images, "categories": categories, "annotations": annotations})
    }
}

fn indicator_json(m: &BTreeMap<Indicator, f64>) -> Value {
    Value::Object(m.iter().map(|(k, v)| (k.name().to_owned(), (*v).into())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "info": {"description": "ignored"},
            "images": [{"id": 1, "file_name": "a.png", "width": 20, "height": 10, "scale_cm_per_px": 0.05,
                        "indicators": {"aor_diam": 2.5, "LA_Dim": 3.0, "other": 1}}],
            "categories": [{"id": 1, "name": "AoR"}, {"id": 2, "name": "LA"}],
            "annotations": [
                {"id": 7, "image_id": 1, "category_id": 1, "segmentation": [[1, 1, 8, 1, 8, 3, 1, 3]], "bbox": [1, 1, 7, 2]},
                {"id": 8, "image_id": 1, "category_id": 2, "segmentation": [[1, 5, 8, 5, 8, 8, 1, 8]], "bbox": [1, 5, 8, 4], "iscrowd": 0}
            ]
        })
    }

    fn parse(v: &Value) -> Result<CocoSubset> {
        parse_coco(&v.to_string(), "test.json", &KeyMap::default())
    }

    #[test]
    fn loads_minimal_file() {
        let s = parse(&minimal()).unwrap();
        assert_eq!(s.images.len(), 1);
        assert_eq!(s.annotations.len(), 2);
        let im = &s.images[0];
        assert_eq!(im.scale_cm_per_px, Some(0.05));
        assert_eq!(s.view_of(im), Some(View::Av));
        assert_eq!(s.truth_for(im).get(&Indicator::LaDim), Some(&3.0));
        let dets = s.detections_for(im).unwrap();
        assert_eq!(dets[0].class, ClassId::AoR);
        assert_eq!(dets[0].mask.count(), 8 * 3);
    }

    #[test]
    fn missing_image_reference_is_named() {
        let mut v = minimal();
        v["annotations"][1]["image_id"] = json!(99);
        let err = parse(&v).unwrap_err();
        assert!(matches!(err, DatasetError::Validation { .. }));
        assert_eq!(err.to_string(), "test.json: annotation 8 (#1): references missing image 99");
    }

    #[test]
    fn parse_errors_carry_json_path() {
        let mut v = minimal();
        v["images"][0]["width"] = json!("wide");
        match parse(&v).unwrap_err() {
            DatasetError::Parse { json_path, .. } => assert_eq!(json_path, "images[0].width"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn rejects_bad_polygons_and_bboxes() {
        let mut v = minimal();
        v["annotations"][0]["segmentation"] = json!([[1, 1, 8, 1]]);
        assert!(parse(&v).unwrap_err().to_string().contains("need at least 3"));
        let mut v = minimal();
        v["annotations"][0]["bbox"] = json!([1, 1, 12, 2]);
        assert!(parse(&v).unwrap_err().to_string().contains("disagrees with polygon extent"));
        let mut v = minimal();
        v["annotations"][0]["segmentation"] = json!({"counts": [1, 2], "size": [10, 20]});
        assert!(parse(&v).unwrap_err().to_string().contains("RLE"));
        let mut v = minimal();
        v["categories"][0]["name"] = json!("Heart");
        assert!(parse(&v).unwrap_err().to_string().contains("unknown class"));
    }

    #[test]
    fn custom_key_map() {
        let mut v = minimal();
        let obj = v["images"][0].as_object_mut().unwrap();
        let s = obj.remove("scale_cm_per_px").unwrap();
        obj.insert("pixel_spacing".into(), s);
        let keys = KeyMap {
            scale: "pixel_spacing".into(),
            ..KeyMap::default()
        };
        let parsed = parse_coco(&v.to_string(), "t", &keys).unwrap();
        assert_eq!(parsed.images[0].scale_cm_per_px, Some(0.05));
        assert_eq!(parse(&v).unwrap().images[0].scale_cm_per_px, None);
    }

    #[test]
    fn json_round_trip() {
        let s = parse(&minimal()).unwrap();
        let again = parse(&s.to_json(&KeyMap::default())).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn results_list_and_file_forms() {
        let gt = parse(&minimal()).unwrap();
        let list = json!([{"image_id": 1, "category_id": 2, "segmentation": [[1, 5, 8, 5, 8, 8]], "score": 0.7}]);
        let r = parse_coco_results(&list.to_string(), "p", &gt, &KeyMap::default()).unwrap();
        assert_eq!(r[0].class, ClassId::LA);
        assert_eq!(r[0].bbox, BBox::new(1.0, 5.0, 7.0, 3.0));
        let bad = json!([{"image_id": 4, "category_id": 2, "segmentation": [[1, 5, 8, 5, 8, 8]]}]);
        assert!(parse_coco_results(&bad.to_string(), "p", &gt, &KeyMap::default()).is_err());
        let r = parse_coco_results(&minimal().to_string(), "p", &gt, &KeyMap::default()).unwrap();
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn polygon_bbox_agrees_with_rasterized_bbox() {
        let s = parse(&minimal()).unwrap();
        for a in &s.annotations {
            let m = a.mask(20, 10).unwrap();
            let b = BBox::of_mask(&m).unwrap();
            assert!((b.x - a.bbox.x).abs() <= 1.0 && (b.y - a.bbox.y).abs() <= 1.0);
            assert!(((b.x + b.w) - (a.bbox.x + a.bbox.w)).abs() <= 1.0);
            assert!(((b.y + b.h) - (a.bbox.y + a.bbox.h)).abs() <= 1.0);
        }
    }

    // Runs against a local MEIS export when MEIS_TEST_JSON points at it.
    #[test]
    fn meis_test_split_size() {
        let Ok(path) = std::env::var("MEIS_TEST_JSON") else { return };
        let s = load_coco(path, &KeyMap::default()).unwrap();
        assert_eq!(s.images.len(), 1118);
    }
}
