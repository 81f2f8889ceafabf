use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{BinaryMask, PixelCoord};
use crate::measure::{BBox, ClassId, Detection, ImageRecord, Indicator, IndicatorSet, Scale, View};

use super::coco::{CocoAnnotation, CocoCategory, CocoImage, CocoSubset, KeyMap};
use super::manifest::{ManifestDetection, ManifestImage, MaskManifest};
use super::png::save_mask_png;
use super::raster::mask_polygons;
use super::{io_err, DatasetError, Result};

/// One horizontal tissue band whose upper face follows a sine wave.
///
/// At column `x` the band covers rows `top(x) ..= top(x) + thickness - 1`
/// with `top(x) = round(center + amplitude * sin(2 pi x / period + phase)) - thickness / 2`.
/// A negative amplitude mirrors the wave, which phase-locks two bands in
/// opposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub class: ClassId,
    pub center: f64,
    pub thickness: usize,
    pub amplitude: f64,
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
    /// Inclusive column range; the full width when absent.
    #[serde(default)]
    pub x_range: Option<(usize, usize)>,
}

impl BandSpec {
    fn theta(&self, x: f64) -> f64 {
        2.0 * PI * x / self.period + self.phase
    }

    fn half(&self) -> f64 {
        (self.thickness / 2) as f64
    }

    /// Top edge before rounding.
    pub fn continuous_top(&self, x: f64) -> f64 {
        self.center + self.amplitude * self.theta(x).sin() - self.half()
    }

    pub fn top_row(&self, x: usize) -> i64 {
        (self.center + self.amplitude * self.theta(x as f64).sin()).round() as i64 - (self.thickness / 2) as i64
    }

    fn columns(&self, width: usize) -> (usize, usize) {
        let (a, b) = self.x_range.unwrap_or((0, width.saturating_sub(1)));
        (a, b.min(width.saturating_sub(1)))
    }

    /// First column `>= from` where the top edge is highest (`crest`) or lowest.
    fn extreme_at_or_after(&self, from: f64, crest: bool) -> f64 {
        if self.amplitude == 0.0 {
            return from;
        }
        // the top is smallest where amplitude * sin is most negative
        let want_neg_sin = crest == (self.amplitude > 0.0);
        let target = if want_neg_sin { -PI / 2.0 } else { PI / 2.0 };
        let x0 = (target - self.phase) * self.period / (2.0 * PI);
        let k = ((from - x0) / self.period).ceil();
        x0 + k * self.period
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub image_id: String,
    pub view: View,
    pub width: usize,
    pub height: usize,
    pub scale_cm_per_px: f64,
    pub bands: Vec<BandSpec>,
    /// Noise blobs added per class outside that class's band.
    #[serde(default)]
    pub speckle: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    fn band(&self, class: ClassId) -> Result<&BandSpec> {
        self.bands
            .iter()
            .find(|b| b.class == class)
            .ok_or_else(|| DatasetError::InvalidSpec(format!("{}: no {class} band", self.image_id)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DatasetError::InvalidSpec(format!("{}: {m}", self.image_id)));
        if self.width == 0 || self.height == 0 {
            return bad("zero-sized image".into());
        }
        Scale::new(self.scale_cm_per_px).map_err(|e| DatasetError::InvalidSpec(e.to_string()))?;
        let classes = self.view.classes();
        if self.bands.len() != 2 || !classes.iter().all(|c| self.bands.iter().any(|b| b.class == *c)) {
            return bad(format!("a {} image needs exactly one {} and one {} band", self.view, classes[0], classes[1]));
        }
        for b in &self.bands {
            if b.thickness == 0 {
                return bad(format!("{} band has zero thickness", b.class));
            }
            if !(b.period.is_finite() && b.period > 0.0 && b.amplitude.is_finite() && b.center.is_finite() && b.phase.is_finite()) {
                return bad(format!("{} band has non-finite or non-positive wave parameters", b.class));
            }
            let (x0, x1) = b.columns(self.width);
            if x0 > x1 {
                return bad(format!("{} band has an empty column range", b.class));
            }
            for x in x0..=x1 {
                let top = b.top_row(x);
                if top < 0 || top + b.thickness as i64 > self.height as i64 {
                    return bad(format!("{} band leaves the frame at column {x}", b.class));
                }
            }
        }
        let (a, b) = (&self.bands[0], &self.bands[1]);
        for x in 0..self.width {
            let on = |band: &BandSpec| {
                let (x0, x1) = band.columns(self.width);
                (x0..=x1).contains(&x)
            };
            if on(a) && on(b) {
                let (ta, tb) = (a.top_row(x), b.top_row(x));
                if ta < tb + b.thickness as i64 && tb < ta + a.thickness as i64 {
                    return bad(format!("{} and {} bands overlap at column {x}", a.class, b.class));
                }
            }
        }
        Ok(())
    }
}

/// Generated masks plus the truth implied by the spec.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub spec: SyntheticSpec,
    /// Band masks with speckle noise.
    pub masks: BTreeMap<ClassId, BinaryMask>,
    /// Band masks without noise.
    pub clean: BTreeMap<ClassId, BinaryMask>,
    /// Tight boxes of the clean bands.
    pub bboxes: BTreeMap<ClassId, BBox>,
    pub truth: IndicatorSet,
}

impl SyntheticSample {
    /// Noisy masks with their band boxes, as a detector would report them.
    pub fn detections(&self) -> Vec<Detection> {
        self.masks
            .iter()
            .map(|(&class, mask)| Detection {
                class,
                bbox: self.bboxes[&class],
                mask: mask.clone(),
                score: 1.0,
            })
            .collect()
    }

    pub fn scale(&self) -> Scale {
        Scale::new(self.spec.scale_cm_per_px).expect("validated spec")
    }
}

fn rasterize(band: &BandSpec, width: usize, height: usize) -> BinaryMask {
    let mut m = BinaryMask::new(width, height);
    let (x0, x1) = band.columns(width);
    for x in x0..=x1 {
        let top = band.top_row(x);
        for y in top..top + band.thickness as i64 {
            if y >= 0 {
                m.set(x, y as usize, true);
            }
        }
    }
    m
}

fn add_speckle(spec: &SyntheticSpec, clean: &BTreeMap<ClassId, BinaryMask>, masks: &mut BTreeMap<ClassId, BinaryMask>) {
    if spec.speckle == 0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let union = clean.values().fold(BinaryMask::new(spec.width, spec.height), |acc, m| acc.union(m));
    let mut taken = union.clone();
    for (&class, mask) in masks.iter_mut() {
        let Some(own) = clean[&class].bounds() else { continue };
        for _ in 0..spec.speckle {
            for _attempt in 0..200 {
                let (bw, bh) = (rng.random_range(2..=4usize), rng.random_range(2..=4usize));
                if bw + 2 > spec.width || bh + 2 > spec.height {
                    break;
                }
                let x = rng.random_range(1..spec.width - bw);
                let y = rng.random_range(1..spec.height - bh);
                let in_own_box = x <= own.x1 + 1 && x + bw >= own.x0 && y <= own.y1 + 1 && y + bh >= own.y0;
                let clear = (y - 1..=y + bh).all(|yy| (x - 1..=x + bw).all(|xx| !taken.get(xx, yy)));
                if in_own_box || !clear {
                    continue;
                }
                for yy in y..y + bh {
                    for xx in x..x + bw {
                        mask.set(xx, yy, true);
                        taken.set(xx, yy, true);
                    }
                }
                break;
            }
        }
    }
}

fn anchor(band: &BandSpec, x: f64, bottom: bool) -> PixelCoord {
    let col = x.round().max(0.0) as usize;
    let top = band.top_row(col).max(0) as usize;
    PixelCoord::new(col, if bottom { top + band.thickness - 1 } else { top })
}

fn truth(spec: &SyntheticSpec) -> Result<IndicatorSet> {
    let scale = Scale::new(spec.scale_cm_per_px).map_err(|e| DatasetError::InvalidSpec(e.to_string()))?;
    let mut set = IndicatorSet::empty(spec.view);
    match spec.view {
        View::Av => {
            let (aor, la) = (spec.band(ClassId::AoR)?, spec.band(ClassId::LA)?);
            let xc = la.extreme_at_or_after(la.columns(spec.width).0 as f64, true);
            let aor_px = la.continuous_top(xc) - aor.continuous_top(xc);
            let (la_top, c_aor, c_la) = (anchor(la, xc, false), anchor(aor, xc, false), anchor(la, xc, true));
            set.put(Indicator::AorDiam, scale, aor_px, c_aor, la_top);
            set.put(Indicator::LaDim, scale, la.thickness as f64, la_top, c_la);
            set.anchors.insert("c_la_top", la_top);
            set.anchors.insert("c_aor", c_aor);
            set.anchors.insert("c_la", c_la);
        }
        View::Lv => {
            let (ivs, lvpw) = (spec.band(ClassId::IVS)?, spec.band(ClassId::LVPW)?);
            let xs = lvpw.extreme_at_or_after(lvpw.columns(spec.width).0 as f64, true);
            let xd = lvpw.extreme_at_or_after(xs, false);
            let phases = [
                (xs, [Indicator::LvidS, Indicator::IvsS, Indicator::LvpwS], ["c_lvpw_sigma", "c_lvid_s", "c_ivs_s", "c_lvpw_s"]),
                (xd, [Indicator::LvidD, Indicator::IvsD, Indicator::LvpwD], ["c_lvpw_delta", "c_lvid_d", "c_ivs_d", "c_lvpw_d"]),
            ];
            for (x, [i_lvid, i_ivs, i_lvpw], names) in phases {
                let lvid_px = lvpw.continuous_top(x) - ivs.continuous_top(x) - ivs.thickness as f64;
                let a = anchor(lvpw, x, false);
                let c_ivs = anchor(ivs, x, false);
                let c_lvid = PixelCoord::new(c_ivs.x, c_ivs.y + ivs.thickness);
                let c_lvpw = anchor(lvpw, x, true);
                set.put(i_lvid, scale, lvid_px, c_lvid, a);
                set.put(i_ivs, scale, ivs.thickness as f64, c_ivs, c_lvid);
                set.put(i_lvpw, scale, lvpw.thickness as f64, a, c_lvpw);
                for (n, p) in names.into_iter().zip([a, c_lvid, c_ivs, c_lvpw]) {
                    set.anchors.insert(n, p);
                }
            }
        }
    }
    Ok(set)
}

/// Rasterize the bands, add speckle and compute the analytic truth.
///
/// Truth is evaluated on the continuous wave: systole at the first crest
/// of the anchor band (LA or LVPW), diastole at the trough that follows.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticSample> {
    spec.validate()?;
    let clean: BTreeMap<ClassId, BinaryMask> = spec
        .bands
        .iter()
        .map(|b| (b.class, rasterize(b, spec.width, spec.height)))
        .collect();
    let bboxes = clean
        .iter()
        .map(|(&c, m)| (c, BBox::of_mask(m).expect("non-empty band")))
        .collect();
    let mut masks = clean.clone();
    add_speckle(spec, &clean, &mut masks);
    Ok(SyntheticSample {
        spec: spec.clone(),
        masks,
        clean,
        bboxes,
        truth: truth(spec)?,
    })
}

/// Ranges for [`random_spec`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSpecOptions {
    pub width: usize,
    pub height: usize,
    pub amplitude: (f64, f64),
    pub scale_cm_per_px: f64,
    pub speckle: usize,
}

impl Default for RandomSpecOptions {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            amplitude: (2.0, 20.0),
            scale_cm_per_px: 0.01,
            speckle: 6,
        }
    }
}

/// A plausible spec for `view` drawn from `seed`.
///
/// Both bands share one period and phase so every crest gives the same
/// truth. In LV images the septum moves against the posterior wall with a
/// smaller amplitude; in AV images the aortic root moves with the atrium.
pub fn random_spec(view: View, seed: u64, opts: &RandomSpecOptions) -> SyntheticSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_ec40);
    let w = opts.width as f64;
    let period = rng.random_range(0.2 * w..0.4 * w);
    let phase = rng.random_range(0.0..2.0 * PI);
    let (amp_lo, amp_hi) = opts.amplitude;
    let amp = if amp_hi > amp_lo { rng.random_range(amp_lo..=amp_hi) } else { amp_lo };
    let half = |t: usize| (t / 2) as f64;
    let band = |class, center, thickness, amplitude| BandSpec {
        class,
        center,
        thickness,
        amplitude,
        period,
        phase,
        x_range: None,
    };
    let bands = match view {
        View::Lv => {
            let amp_ivs = amp * rng.random_range(0.3..=1.0);
            let t_ivs = rng.random_range(10..=30usize);
            let t_lvpw = rng.random_range(12..=36usize);
            let gap = rng.random_range(6.0..=30.0);
            let c_ivs = 30.0 + amp_ivs + half(t_ivs);
            let c_lvpw = gap + amp + amp_ivs + half(t_lvpw) + c_ivs - half(t_ivs) + t_ivs as f64;
            vec![
                band(ClassId::IVS, c_ivs.round(), t_ivs, -amp_ivs),
                band(ClassId::LVPW, c_lvpw.round(), t_lvpw, amp),
            ]
        }
        View::Av => {
            let amp_aor = amp * rng.random_range(0.5..=1.0);
            let t_aor = rng.random_range(20..=60usize);
            let t_la = rng.random_range(30..=100usize);
            let gap = rng.random_range(2.0..=12.0);
            let c_aor = 30.0 + amp_aor + half(t_aor);
            let c_la = gap + (amp - amp_aor) + half(t_la) + c_aor - half(t_aor) + t_aor as f64;
            vec![
                band(ClassId::AoR, c_aor.round(), t_aor, amp_aor),
                band(ClassId::LA, c_la.round(), t_la, amp),
            ]
        }
    };
    SyntheticSpec {
        image_id: format!("{}_{seed:04}", view.name()),
        view,
        width: opts.width,
        height: opts.height,
        scale_cm_per_px: opts.scale_cm_per_px,
        bands,
        speckle: opts.speckle,
        seed,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Write `masks/*.png`, `manifest.json`, `truth.json`, `coco.json` and
/// `specs.json` under `dir`.
pub fn write_synthetic_dataset(dir: impl AsRef<Path>, samples: &[SyntheticSample]) -> Result<()> {
    let dir = dir.as_ref();
    let mask_dir = dir.join("masks");
    std::fs::create_dir_all(&mask_dir).map_err(io_err(&mask_dir))?;
    let mut manifest = MaskManifest { images: Vec::new() };
    let mut coco = CocoSubset {
        images: Vec::new(),
        categories: ClassId::ALL
            .iter()
            .enumerate()
            .map(|(i, &class)| CocoCategory { id: i as u64 + 1, class })
            .collect(),
        annotations: Vec::new(),
    };
    let mut truths = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let id = &s.spec.image_id;
        let mut detections = Vec::new();
        for (class, mask) in &s.masks {
            let rel = format!("masks/{id}_{class}.png");
            save_mask_png(mask, dir.join(&rel))?;
            let b = s.bboxes[class];
            detections.push(ManifestDetection {
                class: *class,
                mask: rel.into(),
                bbox: Some([b.x, b.y, b.w, b.h]),
                score: 1.0,
            });
        }
        manifest.images.push(ManifestImage {
            image_id: id.clone(),
            view: s.spec.view,
            width: s.spec.width,
            height: s.spec.height,
            scale_cm_per_px: Some(s.spec.scale_cm_per_px),
            detections,
        });
        let image_id = i as u64 + 1;
        coco.images.push(CocoImage {
            id: image_id,
            file_name: format!("{id}.png"),
            width: s.spec.width,
            height: s.spec.height,
            scale_cm_per_px: Some(s.spec.scale_cm_per_px),
            view: Some(s.spec.view),
            indicators: s.truth.values.iter().map(|(k, m)| (*k, m.cm)).collect(),
        });
        for (class, mask) in &s.clean {
            let polygons = mask_polygons(mask);
            if polygons.is_empty() {
                continue;
            }
            coco.annotations.push(CocoAnnotation {
                id: coco.annotations.len() as u64 + 1,
                image_id,
                category_id: ClassId::ALL.iter().position(|c| c == class).unwrap() as u64 + 1,
                class: *class,
                polygons,
                bbox: s.bboxes[class],
                score: None,
                indicators: BTreeMap::new(),
            });
        }
        truths.push(ImageRecord::from_set(id.clone(), &s.truth));
    }
    write_json(&dir.join("manifest.json"), &manifest)?;
    write_json(&dir.join("truth.json"), &truths)?;
    write_json(&dir.join("coco.json"), &coco.to_json(&KeyMap::default()))?;
    let specs: Vec<&SyntheticSpec> = samples.iter().map(|s| &s.spec).collect();
    write_json(&dir.join("specs.json"), &specs)
}
