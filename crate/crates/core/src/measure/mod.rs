//! Automatic measurement of M-mode indicators from segmentation masks.
//!
//! Every indicator is a vertical distance along one image column, found by
//! picking an anchor on a contour and scanning up or down through the
//! masks. Lengths use the band-edge convention: a band covering rows `a..=b`
//! is `b - a + 1` pixels thick, and the gap between two bands is the number
//! of rows strictly between them.

mod output;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    convex_hull, convexity_defects, find_contours, scan_until_exit, topmost_point, upper_defect_point,
    BinaryMask, Contour, GeometryError, PixelCoord, ScanDir,
};

pub use output::{indicators_csv, ImageRecord, CSV_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("{0} mask is empty")]
    EmptyMask(MaskRole),
    #[error("{mask} mask not found scanning {dir} along column {column}")]
    NoBoundary {
        mask: MaskRole,
        column: usize,
        dir: ScanDir,
    },
    #[error("LVPW contour has no upper convexity defect (no diastole)")]
    NoDiastole,
    #[error("missing detection for class {0}")]
    MissingClass(ClassId),
    #[error("scale must be finite and positive, got {0}")]
    InvalidScale(f64),
    #[error("{role} mask is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        role: MaskRole,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("geometry: {0}")]
    Geometry(GeometryError),
}

pub type Result<T, E = MeasureError> = std::result::Result<T, E>;

/// Vertical calibration in centimetres per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Scale(f64);

impl Scale {
    pub fn new(cm_per_pixel: f64) -> Result<Self> {
        if cm_per_pixel.is_finite() && cm_per_pixel > 0.0 {
            Ok(Self(cm_per_pixel))
        } else {
            Err(MeasureError::InvalidScale(cm_per_pixel))
        }
    }

    pub fn cm_per_pixel(self) -> f64 {
        self.0
    }

    pub fn to_cm(self, pixels: f64) -> f64 {
        pixels * self.0
    }
}

impl TryFrom<f64> for Scale {
    type Error = MeasureError;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Scale> for f64 {
    fn from(s: Scale) -> f64 {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassId {
    AoR,
    LA,
    IVS,
    LVPW,
}

impl ClassId {
    pub const ALL: [ClassId; 4] = [ClassId::AoR, ClassId::LA, ClassId::IVS, ClassId::LVPW];

    pub fn name(self) -> &'static str {
        match self {
            ClassId::AoR => "AoR",
            ClassId::LA => "LA",
            ClassId::IVS => "IVS",
            ClassId::LVPW => "LVPW",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(name))
    }

    pub fn view(self) -> View {
        match self {
            ClassId::AoR | ClassId::LA => View::Av,
            ClassId::IVS | ClassId::LVPW => View::Lv,
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which mask a scan or error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskRole {
    Class(ClassId),
    Background,
}

impl fmt::Display for MaskRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskRole::Class(c) => c.fmt(f),
            MaskRole::Background => f.write_str("background"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Av,
    Lv,
}

impl View {
    pub fn classes(self) -> [ClassId; 2] {
        match self {
            View::Av => [ClassId::AoR, ClassId::LA],
            View::Lv => [ClassId::IVS, ClassId::LVPW],
        }
    }

    pub fn indicators(self) -> &'static [Indicator] {
        match self {
            View::Av => &Indicator::ALL[..2],
            View::Lv => &Indicator::ALL[2..],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            View::Av => "av",
            View::Lv => "lv",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for View {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "av" => Ok(View::Av),
            "lv" => Ok(View::Lv),
            other => Err(format!("unknown view `{other}` (expected av or lv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    AorDiam,
    LaDim,
    LvidS,
    IvsS,
    LvpwS,
    LvidD,
    IvsD,
    LvpwD,
}

impl Indicator {
    pub const ALL: [Indicator; 8] = [
        Indicator::AorDiam,
        Indicator::LaDim,
        Indicator::LvidS,
        Indicator::IvsS,
        Indicator::LvpwS,
        Indicator::LvidD,
        Indicator::IvsD,
        Indicator::LvpwD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::AorDiam => "aor_diam",
            Indicator::LaDim => "la_dim",
            Indicator::LvidS => "lvid_s",
            Indicator::IvsS => "ivs_s",
            Indicator::LvpwS => "lvpw_s",
            Indicator::LvidD => "lvid_d",
            Indicator::IvsD => "ivs_d",
            Indicator::LvpwD => "lvpw_d",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|i| i.name() == name)
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis-aligned box in pixels, COCO layout `(x, y, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Tight box around the set pixels of a mask.
    pub fn of_mask(mask: &BinaryMask) -> Option<Self> {
        mask.bounds().map(|b| {
            Self::new(
                b.x0 as f64,
                b.y0 as f64,
                (b.x1 - b.x0 + 1) as f64,
                (b.y1 - b.y0 + 1) as f64,
            )
        })
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Whether the pixel with index `(x, y)` belongs to the box, i.e. the
    /// pixel square overlaps the box interior.
    pub fn covers_pixel(&self, x: usize, y: usize) -> bool {
        let (x, y) = (x as f64, y as f64);
        x + 1.0 > self.x && x < self.x + self.w && y + 1.0 > self.y && y < self.y + self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class: ClassId,
    pub bbox: BBox,
    pub mask: BinaryMask,
    pub score: f64,
}

/// One measured indicator with the two anchors it spans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub cm: f64,
    pub pixels: f64,
    pub from: PixelCoord,
    pub to: PixelCoord,
}

/// Named anchor points of one image, keyed by stable names such as `c_la_top`.
pub type Anchors = BTreeMap<&'static str, PixelCoord>;

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSet {
    pub view: View,
    pub values: BTreeMap<Indicator, Measurement>,
    pub anchors: Anchors,
}

impl IndicatorSet {
    pub(crate) fn empty(view: View) -> Self {
        Self {
            view,
            values: BTreeMap::new(),
            anchors: BTreeMap::new(),
        }
    }

    pub fn get(&self, ind: Indicator) -> Option<f64> {
        self.values.get(&ind).map(|m| m.cm)
    }

    pub fn measurement(&self, ind: Indicator) -> Option<&Measurement> {
        self.values.get(&ind)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn merge(&mut self, other: IndicatorSet) {
        self.values.extend(other.values);
        self.anchors.extend(other.anchors);
    }

    pub(crate) fn put(&mut self, ind: Indicator, scale: Scale, pixels: f64, from: PixelCoord, to: PixelCoord) {
        self.values.insert(
            ind,
            Measurement {
                cm: scale.to_cm(pixels),
                pixels,
                from,
                to,
            },
        );
    }
}

fn row_gap(a: PixelCoord, b: PixelCoord) -> f64 {
    a.y.abs_diff(b.y) as f64
}

fn row_span(a: PixelCoord, b: PixelCoord) -> f64 {
    (a.y.abs_diff(b.y) + 1) as f64
}

fn scan(mask: &BinaryMask, role: MaskRole, start: PixelCoord, dir: ScanDir) -> Result<PixelCoord> {
    scan_until_exit(mask, start, dir).map_err(|e| match e {
        GeometryError::NoBoundary { column, dir, .. } => MeasureError::NoBoundary { mask: role, column, dir },
        other => MeasureError::Geometry(other),
    })
}

fn contours_of(mask: &BinaryMask, role: MaskRole) -> Result<Vec<Contour>> {
    let c = find_contours(mask);
    if c.is_empty() {
        return Err(MeasureError::EmptyMask(role));
    }
    Ok(c)
}

fn topmost_of(contours: &[Contour]) -> Result<PixelCoord> {
    contours
        .iter()
        .map(topmost_point)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(MeasureError::Geometry)?
        .into_iter()
        .min_by_key(|p| (p.y, p.x))
        .ok_or(MeasureError::Geometry(GeometryError::EmptyContour))
}

fn same_dims(reference: &BinaryMask, other: &BinaryMask, role: MaskRole) -> Result<()> {
    if (reference.width(), reference.height()) != (other.width(), other.height()) {
        return Err(MeasureError::DimensionMismatch {
            role,
            got_w: other.width(),
            got_h: other.height(),
            want_w: reference.width(),
            want_h: reference.height(),
        });
    }
    Ok(())
}

/// Keep the best-scoring detection per class and clear mask pixels outside
/// its box. Output is ordered by class.
pub fn bbox_filter(dets: &[Detection]) -> Vec<Detection> {
    let mut best: BTreeMap<ClassId, &Detection> = BTreeMap::new();
    for d in dets {
        match best.get(&d.class) {
            Some(b) if b.score >= d.score => {}
            _ => {
                best.insert(d.class, d);
            }
        }
    }
    best.into_values()
        .map(|d| {
            let mut out = d.clone();
            let bbox = d.bbox;
            for y in 0..out.mask.height() {
                for x in 0..out.mask.width() {
                    if out.mask.get(x, y) && !bbox.covers_pixel(x, y) {
                        out.mask.set(x, y, false);
                    }
                }
            }
            out
        })
        .collect()
}

/// Aortic root diameter and left atrium dimension.
pub fn measure_av(aor: &BinaryMask, la: &BinaryMask, scale: Scale) -> Result<IndicatorSet> {
    let aor_role = MaskRole::Class(ClassId::AoR);
    let la_role = MaskRole::Class(ClassId::LA);
    same_dims(la, aor, aor_role)?;
    if aor.is_empty() {
        return Err(MeasureError::EmptyMask(aor_role));
    }
    let la_top = topmost_of(&contours_of(la, la_role)?)?;
    let c_aor = scan(aor, aor_role, la_top, ScanDir::Up)?;
    let c_la = scan(la, la_role, la_top, ScanDir::Down)?;

    let mut set = IndicatorSet::empty(View::Av);
    set.put(Indicator::AorDiam, scale, row_gap(c_aor, la_top), c_aor, la_top);
    set.put(Indicator::LaDim, scale, row_span(la_top, c_la), la_top, c_la);
    set.anchors.insert("c_la_top", la_top);
    set.anchors.insert("c_aor", c_aor);
    set.anchors.insert("c_la", c_la);
    Ok(set)
}

struct LvMasks<'a> {
    ivs: &'a BinaryMask,
    lvpw: &'a BinaryMask,
    background: BinaryMask,
}

impl<'a> LvMasks<'a> {
    fn new(ivs: &'a BinaryMask, lvpw: &'a BinaryMask) -> Result<Self> {
        same_dims(lvpw, ivs, MaskRole::Class(ClassId::IVS))?;
        if ivs.is_empty() {
            return Err(MeasureError::EmptyMask(MaskRole::Class(ClassId::IVS)));
        }
        Ok(Self {
            ivs,
            lvpw,
            background: ivs.union(lvpw).complement(),
        })
    }

    /// The three column scans shared by systole and diastole.
    fn chain(&self, anchor: PixelCoord, scale: Scale, phase: Phase) -> Result<IndicatorSet> {
        // Touching bands leave no background between them: the cavity is zero
        // rows tall and the septum scan starts from the anchor itself.
        let cavity_open = anchor.y > 0 && self.background.get(anchor.x, anchor.y - 1);
        let c_lvid = if cavity_open {
            scan(&self.background, MaskRole::Background, anchor, ScanDir::Up)?
        } else {
            anchor
        };
        let ivs_from = if cavity_open { c_lvid } else { anchor };
        let c_ivs = scan(self.ivs, MaskRole::Class(ClassId::IVS), ivs_from, ScanDir::Up)?;
        let c_lvpw = scan(self.lvpw, MaskRole::Class(ClassId::LVPW), anchor, ScanDir::Down)?;

        let (lvid_px, ivs_px) = if cavity_open {
            (row_gap(anchor, c_lvid), row_gap(c_lvid, c_ivs))
        } else {
            (0.0, row_gap(anchor, c_ivs))
        };
        let [i_lvid, i_ivs, i_lvpw] = phase.indicators();
        let names = phase.anchor_names();
        let mut set = IndicatorSet::empty(View::Lv);
        set.put(i_lvid, scale, lvid_px, c_lvid, anchor);
        set.put(i_ivs, scale, ivs_px, c_ivs, c_lvid);
        set.put(i_lvpw, scale, row_span(anchor, c_lvpw), anchor, c_lvpw);
        set.anchors.insert(names[0], anchor);
        set.anchors.insert(names[1], c_lvid);
        set.anchors.insert(names[2], c_ivs);
        set.anchors.insert(names[3], c_lvpw);
        Ok(set)
    }
}

#[derive(Clone, Copy)]
enum Phase {
    Systole,
    Diastole,
}

impl Phase {
    fn indicators(self) -> [Indicator; 3] {
        match self {
            Phase::Systole => [Indicator::LvidS, Indicator::IvsS, Indicator::LvpwS],
            Phase::Diastole => [Indicator::LvidD, Indicator::IvsD, Indicator::LvpwD],
        }
    }

    fn anchor_names(self) -> [&'static str; 4] {
        match self {
            Phase::Systole => ["c_lvpw_sigma", "c_lvid_s", "c_ivs_s", "c_lvpw_s"],
            Phase::Diastole => ["c_lvpw_delta", "c_lvid_d", "c_ivs_d", "c_lvpw_d"],
        }
    }
}

/// Systolic LVID, IVS and LVPW anchored at the LVPW crest.
pub fn measure_lv_systole(ivs: &BinaryMask, lvpw: &BinaryMask, scale: Scale) -> Result<IndicatorSet> {
    let masks = LvMasks::new(ivs, lvpw)?;
    let contours = contours_of(lvpw, MaskRole::Class(ClassId::LVPW))?;
    let anchor = topmost_of(&contours)?;
    masks.chain(anchor, scale, Phase::Systole)
}

/// Diastolic LVID, IVS and LVPW anchored at the deepest upper convexity
/// defect of the LVPW outline. Only the longest contour (the wall itself)
/// is considered when several components remain.
pub fn measure_lv_diastole(ivs: &BinaryMask, lvpw: &BinaryMask, scale: Scale) -> Result<IndicatorSet> {
    let masks = LvMasks::new(ivs, lvpw)?;
    let contours = contours_of(lvpw, MaskRole::Class(ClassId::LVPW))?;
    let wall = contours
        .iter()
        .rev()
        .max_by_key(|c| c.len())
        .expect("non-empty contour list");
    let defects = convexity_defects(wall, &convex_hull(wall));
    let anchor = upper_defect_point(&defects).map_err(|_| MeasureError::NoDiastole)?;
    masks.chain(anchor, scale, Phase::Diastole)
}

/// Filter detections, then measure every indicator of the view.
pub fn measure_image(view: View, dets: &[Detection], scale: Scale) -> Result<IndicatorSet> {
    let kept = bbox_filter(dets);
    let find = |class: ClassId| {
        kept.iter()
            .find(|d| d.class == class)
            .map(|d| &d.mask)
            .ok_or(MeasureError::MissingClass(class))
    };
    let [a, b] = view.classes();
    let (first, second) = (find(a)?, find(b)?);
    match view {
        View::Av => measure_av(first, second, scale),
        View::Lv => {
            let mut set = measure_lv_systole(first, second, scale)?;
            set.merge(measure_lv_diastole(first, second, scale)?);
            Ok(set)
        }
    }
}
