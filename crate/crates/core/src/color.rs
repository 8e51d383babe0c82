//! sRGB to CIE L*a*b* (D65 reference white).

use alloc::vec::Vec;

use crate::math;
use crate::raster::{Raster, RgbImage};

const WHITE_D65: [f64; 3] = [0.950_47, 1.0, 1.088_83];
const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

/// Linear-light value of one 8-bit sRGB channel.
pub fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.040_45 {
        c / 12.92
    } else {
        math::powf((c + 0.055) / 1.055, 2.4)
    }
}

fn lab_from_linear(r: f64, g: f64, b: f64) -> [f64; 3] {
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let f = |t: f64| {
        if t > EPSILON {
            math::cbrt(t)
        } else {
            (KAPPA * t + 16.0) / 116.0
        }
    };
    let fx = f(x / WHITE_D65[0]);
    let fy = f(y / WHITE_D65[1]);
    let fz = f(z / WHITE_D65[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    lab_from_linear(
        srgb_to_linear(rgb[0]),
        srgb_to_linear(rgb[1]),
        srgb_to_linear(rgb[2]),
    )
}

/// Converts a whole image, sharing one gamma lookup table.
pub fn lab_image(rgb: &RgbImage) -> Raster<[f64; 3]> {
    let table: Vec<f64> = (0..=255u8).map(srgb_to_linear).collect();
    rgb.map(|p| {
        lab_from_linear(
            table[p[0] as usize],
            table[p[1] as usize],
            table[p[2] as usize],
        )
    })
}

pub fn lab_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    math::sqrt(math::sq(a[0] - b[0]) + math::sq(a[1] - b[1]) + math::sq(a[2] - b[2]))
}
