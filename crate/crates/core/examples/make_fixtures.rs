//! Regenerates the fixture images used by the adaptation config and tests.
//!
//! cargo run -p mgn-core --example make_fixtures -- fixtures

use std::path::PathBuf;

use mgn::imaging::{save_image, PixelDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const WIDTH: usize = 96;
const HEIGHT: usize = 64;

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

/// A vertical color gradient with soft horizontal banding and pixel noise.
fn scene(top: [f64; 3], bottom: [f64; 3], noise: f64, phase: f64, seed: u64) -> PixelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(WIDTH * HEIGHT);
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let t = y as f64 / (HEIGHT - 1) as f64;
            let band = 0.03 * (x as f64 * 0.11 + phase).sin() * (y as f64 * 0.07).cos();
            let base = lerp(top, bottom, t);
            let mut p = [0.0; 3];
            for c in 0..3 {
                let z: f64 = rng.sample(StandardNormal);
                p[c] = (base[c] + band + noise * z).clamp(0.0, 1.0);
            }
            pixels.push(p);
        }
    }
    PixelDataset::new(WIDTH, HEIGHT, pixels).expect("sized")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let day = scene([0.35, 0.60, 0.90], [0.55, 0.72, 0.50], 0.05, 0.0, 1);
    let sunset = scene([0.95, 0.55, 0.25], [0.40, 0.18, 0.32], 0.05, 1.3, 2);
    let held_out = scene([0.40, 0.62, 0.88], [0.50, 0.70, 0.52], 0.05, 2.1, 3);
    save_image(&day, &dir.join("day.png"))?;
    save_image(&sunset, &dir.join("sunset.png"))?;
    save_image(&held_out, &dir.join("day_test.png"))?;
    Ok(())
}
