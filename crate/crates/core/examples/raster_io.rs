//! Writes a mixed-resolution raster and a label mask, reads them back and
//! brings every band onto the 10m grid.
//!
//! cargo run --example raster_io [-- OUT_DIR]

use std::error::Error;

use ccfmap::raster::{
    load_mask, load_raster, save_mask, save_raster, BandId, BandInfo, Label, LabelMask,
    MultiSpectralRaster, Resolution,
};
use ccfmap::sampling::resample_to_common_grid;

fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("ccfmap-raster-io"));
    std::fs::create_dir_all(&out)?;

    let (w, h) = (6, 4);
    let bands = vec![
        BandInfo::new(BandId::B4, Resolution::M10),
        BandInfo::new(BandId::B8, Resolution::M10),
        BandInfo::new(BandId::B11, Resolution::M20),
    ];
    let data = bands
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (bw, bh) = b.native_resolution.grid_dims(w, h);
            (0..bw * bh).map(|p| (i * 100 + p) as f32 / 1000.0).collect()
        })
        .collect();
    let raster = MultiSpectralRaster::new(w, h, bands, data, Some(-9999.0))?;
    save_raster(&raster, out.join("raster"))?;

    let labels = (0..w * h)
        .map(|p| match p % 3 {
            0 => Label::Unlabeled,
            1 => Label::Environment,
            _ => Label::Informal,
        })
        .collect();
    let mask = LabelMask::new(w, h, labels)?;
    save_mask(&mask, out.join("mask.pgm"))?;

    let back = load_raster(out.join("raster"))?;
    for i in 0..back.bands().len() {
        let (bw, bh) = back.band_dims(i);
        println!("{:>4?}: {bw}x{bh} samples", back.bands()[i].band_id);
    }
    let common = resample_to_common_grid(&back)?;
    println!("common grid: {}x{}, {} bands", common.width(), common.height(), common.bands().len());
    println!("b11 row 0 on the 10m grid: {:?}", &common.band(2)[..w]);

    let mask = load_mask(out.join("mask.pgm"))?;
    println!(
        "mask: {} environment, {} informal, {} unlabeled",
        mask.count(Label::Environment),
        mask.count(Label::Informal),
        mask.count(Label::Unlabeled)
    );
    println!("written to {}", out.display());
    Ok(())
}
