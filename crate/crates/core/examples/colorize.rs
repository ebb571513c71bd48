//! Colorize a handful of MNIST test digits and write a before/after montage.
//!
//! ```text
//! ZDDA_DATA_ROOT=/path/to/data cargo run --release --example colorize
//! ```

mod support;

use image::{Rgb, RgbImage};
use zdda::datasets::colorize::CorpusPart;
use zdda::datasets::{colorize, colorize_dataset, CorpusSplit, Family, Split};

fn main() -> zdda::Result<()> {
    let root = support::data_root();
    let gray = root.gray(Family::Mnist, Split::Test)?;
    let picked = gray.select(&(0..16).collect::<Vec<_>>());
    let corpus = root.backgrounds()?;
    let backgrounds = corpus.part(CorpusSplit::Disjoint, CorpusPart::Test);
    println!("{} background photos, {} in the test half", corpus.images.len(), backgrounds.len());

    let colored = colorize_dataset(&picked, &backgrounds, support::SEED)?;

    // each output pixel is |patch - gray|, so re-blending a zero digit gives the patch back
    let zero = zdda::datasets::ImageTensor::zeros(1, 28, 28);
    let patch = &colored.images()[0];
    assert_eq!(&colorize(&zero, patch)?, patch);

    let mut montage = RgbImage::new(16 * 28, 2 * 28);
    for (i, (g, c)) in picked.images().iter().zip(colored.images()).enumerate() {
        for y in 0..28 {
            for x in 0..28 {
                let v = (g.get(0, y, x) * 255.0) as u8;
                montage.put_pixel((i * 28 + x) as u32, y as u32, Rgb([v, v, v]));
                let px = [0, 1, 2].map(|ch| (c.get(ch, y, x) * 255.0) as u8);
                montage.put_pixel((i * 28 + x) as u32, (28 + y) as u32, Rgb(px));
            }
        }
    }
    let path = support::out_dir("colorize").join("montage.png");
    montage.save(&path)?;
    println!("labels {:?}", picked.labels());
    println!("wrote {}", path.display());
    Ok(())
}
