use image::{Rgb, RgbImage};

use crate::geometry::{BinaryMask, PixelCoord};
use crate::measure::{ClassId, Indicator, IndicatorSet, View};

pub const ANCHOR_COLOR: Rgb<u8> = Rgb([255, 0, 255]);
pub const SEGMENT_COLOR: Rgb<u8> = Rgb([255, 255, 0]);
const LABEL_COLOR: Rgb<u8> = Rgb([255, 255, 255]);

fn class_color(c: ClassId) -> Rgb<u8> {
    match c {
        ClassId::AoR => Rgb([150, 40, 40]),
        ClassId::LA => Rgb([40, 60, 150]),
        ClassId::IVS => Rgb([40, 130, 50]),
        ClassId::LVPW => Rgb([150, 110, 30]),
    }
}

// 3x5 glyphs, one row per byte, high bit on the left.
fn glyph(c: char) -> [u8; 5] {
    match c {
        't' => [0b010, 0b111, 0b010, 0b010, 0b011],
        'b' => [0b100, 0b100, 0b110, 0b101, 0b110],
        's' => [0b011, 0b100, 0b010, 0b001, 0b110],
        'd' => [0b001, 0b001, 0b011, 0b101, 0b011],
        _ => [0; 5],
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_label(img: &mut RgbImage, at: PixelCoord, c: char) {
    let (x0, y0) = (at.x as i64 + 4, at.y as i64 - 2);
    for (dy, row) in glyph(c).iter().enumerate() {
        for dx in 0..3 {
            if row & (0b100 >> dx) != 0 {
                put(img, x0 + dx, y0 + dy as i64, LABEL_COLOR);
            }
        }
    }
}

/// Masks in muted class colours, each measurement as a vertical segment and
/// every anchor as a cross centred on the anchor pixel. AV segments carry
/// `t`/`b` at their ends; LV segments carry `s` or `d` for the phase.
pub fn render_overlay(width: usize, height: usize, masks: &[(ClassId, &BinaryMask)], set: &IndicatorSet) -> RgbImage {
    let mut img = RgbImage::new(width as u32, height as u32);
    for (class, mask) in masks {
        for p in mask.pixels() {
            put(&mut img, p.x as i64, p.y as i64, class_color(*class));
        }
    }
    for (ind, m) in &set.values {
        let (lo, hi) = (m.from.y.min(m.to.y), m.from.y.max(m.to.y));
        for y in lo..=hi {
            put(&mut img, m.from.x as i64, y as i64, SEGMENT_COLOR);
        }
        let top = PixelCoord::new(m.from.x, lo);
        let bottom = PixelCoord::new(m.from.x, hi);
        match set.view {
            View::Av => {
                draw_label(&mut img, top, 't');
                draw_label(&mut img, bottom, 'b');
            }
            View::Lv => {
                let phase = if matches!(ind, Indicator::LvidS | Indicator::IvsS | Indicator::LvpwS) { 's' } else { 'd' };
                draw_label(&mut img, PixelCoord::new(m.from.x, (lo + hi) / 2), phase);
            }
        }
    }
    for p in set.anchors.values() {
        let (x, y) = (p.x as i64, p.y as i64);
        for d in -3..=3 {
            put(&mut img, x + d, y, ANCHOR_COLOR);
            put(&mut img, x, y + d, ANCHOR_COLOR);
        }
    }
    img
}
