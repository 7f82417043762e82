//! Forward-diffuse an image along the default 50-step linear schedule and
//! write snapshots at several timesteps.
//!
//!     cargo run --release --example noisify_demo

use fakespot::commands::cmd_noisify;
use fakespot::diffusion::{default_schedule, DEFAULT_STEPS};

fn main() -> Result<(), fakespot::Error> {
    let out_dir = std::path::Path::new("target/examples/noisify_demo");
    std::fs::create_dir_all(out_dir).expect("create output dir");

    // A simple 32x32 test card: colour gradient with a white square.
    let src = out_dir.join("source.png");
    let mut img = image::RgbImage::new(32, 32);
    for y in 0..32u32 {
        for x in 0..32u32 {
            img.put_pixel(x, y, image::Rgb([(8 * x) as u8, (8 * y) as u8, 128]));
        }
    }
    for y in 12..20u32 {
        for x in 12..20u32 {
            img.put_pixel(x, y, image::Rgb([255, 255, 255]));
        }
    }
    img.save(&src).expect("write source image");

    let schedule = default_schedule();
    for t in [1, 10, 25, 40, 50] {
        let written = cmd_noisify(std::slice::from_ref(&src), t, DEFAULT_STEPS, 1, out_dir)?;
        println!(
            "t = {t:>2} (alpha_bar {:.4}): {}",
            schedule.alpha_bar_at(t)?,
            written[0].display()
        );
    }
    Ok(())
}
