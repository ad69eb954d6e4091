//! Ground resolution of geo-referenced aerial tiles from their overlap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgm::GrayImage;

pub const EARTH_RADIUS_M: f64 = 6_371_008.8;
/// Minimum overlap, as a fraction of the image area, for an offset to count.
pub const MIN_OVERLAP: f64 = 0.25;
/// Minimum ZNCC peak accepted as a match.
pub const MIN_PEAK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// `b(x, y) ~ a(x - dx, y - dy)`.
    pub pixel_offset: (i64, i64),
    pub peak_correlation: f64,
    pub distance_m: f64,
    pub ground_resolution_m_per_px: f64,
}

/// Equirectangular distance between two nearby points.
pub fn equirectangular_distance_m(a: LatLon, b: LatLon) -> f64 {
    let mean_lat = ((a.lat_deg + b.lat_deg) / 2.0).to_radians();
    let x = (b.lon_deg - a.lon_deg).to_radians() * mean_lat.cos();
    let y = (b.lat_deg - a.lat_deg).to_radians();
    EARTH_RADIUS_M * x.hypot(y)
}

/// Zero-normalized cross-correlation of `a` shifted by `(dx, dy)` against `b`
/// over their overlap, with the overlap size in pixels.
pub fn zncc_at(a: &GrayImage, b: &GrayImage, dx: i64, dy: i64) -> (f64, usize) {
    let (w, h) = (a.width as i64, a.height as i64);
    let (x0, x1) = (dx.max(0), (w + dx).min(w));
    let (y0, y1) = (dy.max(0), (h + dy).min(h));
    if x1 <= x0 || y1 <= y0 {
        return (0.0, 0);
    }
    let n = ((x1 - x0) * (y1 - y0)) as usize;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let va = a.at((x - dx) as usize, (y - dy) as usize) as f64;
            let vb = b.at(x as usize, y as usize) as f64;
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
        }
    }
    let nf = n as f64;
    let cov = sab - sa * sb / nf;
    let var_a = saa - sa * sa / nf;
    let var_b = sbb - sb * sb / nf;
    let denom = (var_a * var_b).sqrt();
    if denom <= 1e-12 * nf {
        return (0.0, n);
    }
    (cov / denom, n)
}

/// Integer offset maximizing ZNCC over all shifts leaving at least
/// [`MIN_OVERLAP`] of the image overlapping.
///
/// `max_offset` bounds `|dx|` and `|dy|`; the unbounded search is
/// quartic in the image side.
pub fn best_offset(
    a: &GrayImage,
    b: &GrayImage,
    max_offset: Option<usize>,
) -> Result<((i64, i64), f64)> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Dimension(format!(
            "images differ in size: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.width == 0 || a.height == 0 {
        return Err(Error::Empty("image"));
    }
    let (w, h) = (a.width as i64, a.height as i64);
    let lim = |side: i64| max_offset.map_or(side - 1, |m| (m as i64).min(side - 1));
    let (mx, my) = (lim(w), lim(h));
    let min_px = (MIN_OVERLAP * (w * h) as f64).ceil() as usize;
    let rows: Vec<((i64, i64), f64)> = (-my..=my)
        .into_par_iter()
        .filter_map(|dy| {
            let mut best: Option<((i64, i64), f64)> = None;
            for dx in -mx..=mx {
                let (c, n) = zncc_at(a, b, dx, dy);
                if n >= min_px && best.is_none_or(|(_, bc)| c > bc) {
                    best = Some(((dx, dy), c));
                }
            }
            best
        })
        .collect();
    // rows arrive in dy order, so ties keep the first in scan order
    rows.into_iter()
        .reduce(|acc, r| if r.1 > acc.1 { r } else { acc })
        .ok_or(Error::NoReliableOverlap(0.0))
}

pub fn calibrate_ground_resolution(
    img_a: &GrayImage,
    img_b: &GrayImage,
    center_a: LatLon,
    center_b: LatLon,
) -> Result<CalibrationResult> {
    calibrate_ground_resolution_within(img_a, img_b, center_a, center_b, None)
}

/// [`calibrate_ground_resolution`] with the offset search bounded.
pub fn calibrate_ground_resolution_within(
    img_a: &GrayImage,
    img_b: &GrayImage,
    center_a: LatLon,
    center_b: LatLon,
    max_offset: Option<usize>,
) -> Result<CalibrationResult> {
    let distance_m = equirectangular_distance_m(center_a, center_b);
    if !(distance_m > 0.0) {
        return Err(Error::InvalidArgument(
            "image centers must be distinct".into(),
        ));
    }
    let ((dx, dy), peak) = best_offset(img_a, img_b, max_offset)?;
    if peak < MIN_PEAK {
        return Err(Error::NoReliableOverlap(peak));
    }
    if dx == 0 && dy == 0 {
        return Err(Error::DegeneratePair);
    }
    let px = (dx as f64).hypot(dy as f64);
    Ok(CalibrationResult {
        pixel_offset: (dx, dy),
        peak_correlation: peak,
        distance_m,
        ground_resolution_m_per_px: distance_m / px,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize, ox: i64, oy: i64) -> GrayImage {
        let data = (0..h)
            .flat_map(|y| {
                (0..w).map(move |x| {
                    let (x, y) = ((x as i64 + ox) as f32, (y as i64 + oy) as f32);
                    0.5 + 0.2 * (0.21 * x).sin() * (0.17 * y).cos()
                        + 0.15 * (0.05 * x + 0.11 * y).sin()
                        + 0.1 * (0.37 * x - 0.07 * y).cos()
                })
            })
            .collect();
        GrayImage::new(w, h, data).unwrap()
    }

    fn north_of(p: LatLon, m: f64) -> LatLon {
        LatLon {
            lat_deg: p.lat_deg + (m / EARTH_RADIUS_M).to_degrees(),
            lon_deg: p.lon_deg,
        }
    }

    #[test]
    fn distance_along_meridian() {
        let a = LatLon {
            lat_deg: 40.7,
            lon_deg: -74.0,
        };
        assert!((equirectangular_distance_m(a, north_of(a, 5.65)) - 5.65).abs() < 1e-9);
    }

    #[test]
    fn zncc_self_is_one() {
        let a = texture(16, 16, 0, 0);
        let (c, n) = zncc_at(&a, &a, 0, 0);
        assert!((c - 1.0).abs() < 1e-9);
        assert_eq!(n, 256);
        assert_eq!(zncc_at(&a, &a, 16, 0).1, 0);
    }

    #[test]
    fn recovers_shift() {
        let a = texture(64, 64, 100, 100);
        let b = texture(64, 64, 100 - 10, 100 - 7);
        let c = LatLon {
            lat_deg: 47.6,
            lon_deg: -122.3,
        };
        let r = calibrate_ground_resolution(&a, &b, c, north_of(c, 1.0)).unwrap();
        assert_eq!(r.pixel_offset, (10, 7));
        assert!((r.peak_correlation - 1.0).abs() < 1e-6);
        let bounded = calibrate_ground_resolution_within(&a, &b, c, north_of(c, 1.0), Some(12));
        assert_eq!(bounded.unwrap().pixel_offset, (10, 7));
    }

    #[test]
    fn degenerate_and_unreliable() {
        let a = texture(24, 24, 0, 0);
        let c = LatLon {
            lat_deg: 0.0,
            lon_deg: 0.0,
        };
        assert!(matches!(
            calibrate_ground_resolution(&a, &a, c, north_of(c, 3.0)),
            Err(Error::DegeneratePair)
        ));
        assert!(calibrate_ground_resolution(&a, &a, c, c).is_err());
        let flat = GrayImage::new(24, 24, vec![0.5; 576]).unwrap();
        assert!(matches!(
            calibrate_ground_resolution(&a, &flat, c, north_of(c, 3.0)),
            Err(Error::NoReliableOverlap(_))
        ));
        let small = GrayImage::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(best_offset(&a, &small, None).is_err());
    }
}
