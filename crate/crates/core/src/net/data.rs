//! Seeded synthetic digit images, 28×28×1 with values in `[0, 1]`.
//!
//! Each digit is drawn as a seven-segment glyph with random placement,
//! stroke width, intensity and background noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Element, Tensor};

const SIDE: usize = 28;

// Segments a..g: top, upper right, lower right, bottom, lower left, upper
// left, middle.
const GLYPHS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

/// Draws one digit.
pub fn render_digit<T: Element>(digit: u8, rng: &mut impl Rng) -> Tensor<T> {
    let mut img = vec![0.0f64; SIDE * SIDE];
    let (w, h) = (rng.gen_range(9..=13i32), rng.gen_range(14..=18i32));
    let left = rng.gen_range(4..=(SIDE as i32 - 4 - w));
    let top = rng.gen_range(3..=(SIDE as i32 - 3 - h));
    let t = rng.gen_range(2..=3);
    let ink = rng.gen_range(0.7..1.0);
    let mid = top + h / 2;
    let (right, bottom) = (left + w, top + h);
    // (x0, y0, x1, y1) rectangles, inclusive of x0/y0.
    let segments = [
        (left, top, right, top + t),
        (right - t, top, right, mid),
        (right - t, mid, right, bottom),
        (left, bottom - t, right, bottom),
        (left, mid, left + t, bottom),
        (left, top, left + t, mid),
        (left, mid - t / 2, right, mid - t / 2 + t),
    ];
    for (on, &(x0, y0, x1, y1)) in GLYPHS[digit as usize % 10].iter().zip(&segments) {
        if !on {
            continue;
        }
        for y in y0.max(0)..y1.min(SIDE as i32) {
            for x in x0.max(0)..x1.min(SIDE as i32) {
                img[y as usize * SIDE + x as usize] = ink;
            }
        }
    }
    let data = img
        .into_iter()
        .map(|v| {
            let noise = rng.gen_range(0.0..0.1);
            T::from_f64((v + noise).min(1.0)).unwrap()
        })
        .collect();
    Tensor::from_parts(SIDE, SIDE, 1, data)
}

/// `count` labelled samples cycling through `classes`.
pub fn synthetic_digits<T: Element>(
    count: usize,
    seed: u64,
    classes: &[u8],
) -> Vec<(Tensor<T>, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let label = classes[i % classes.len()];
            (render_digit(label, &mut rng), label)
        })
        .collect()
}
