use std::path::Path;

use image::{DynamicImage, GrayImage, Luma};

use crate::geometry::BinaryMask;

use super::{DatasetError, Result};

/// Nonzero pixels are foreground.
pub fn mask_from_gray(img: &GrayImage) -> BinaryMask {
    let (w, h) = (img.width() as usize, img.height() as usize);
    BinaryMask::from_fn(w, h, |x, y| img.get_pixel(x as u32, y as u32)[0] != 0)
}

/// Foreground as 255, background as 0.
pub fn mask_to_gray(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    })
}

pub fn save_mask_png(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    mask_to_gray(mask)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| DatasetError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

pub fn load_mask_png(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| DatasetError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    match img {
        DynamicImage::ImageLuma8(g) => Ok(mask_from_gray(&g)),
        other => Err(DatasetError::ChannelCount {
            path: path.to_path_buf(),
            found: format!("{:?}", other.color()),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::from_fn(13, 7, |x, y| (x * 3 + y * 5) % 7 < 3);
        let p = dir.path().join("m.png");
        save_mask_png(&m, &p).unwrap();
        assert_eq!(load_mask_png(&p).unwrap(), m);
    }

    #[test]
    fn zero_image_is_empty_and_checkerboard_counts() {
        let zero = GrayImage::new(5, 5);
        assert!(mask_from_gray(&zero).is_empty());
        let checker = GrayImage::from_fn(4, 4, |x, y| Luma([if (x + y) % 2 == 0 { 17 } else { 0 }]));
        assert_eq!(mask_from_gray(&checker).count(), 8);
    }

    #[test]
    fn rejects_rgb_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        image::RgbImage::new(3, 3).save(&p).unwrap();
        assert!(matches!(load_mask_png(&p), Err(DatasetError::ChannelCount { .. })));
        assert!(matches!(load_mask_png(dir.path().join("nope.png")), Err(DatasetError::Image { .. })));
    }
}
