//! 8-bit RGB PNG load/save for `[0, 1]` image tensors.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{bail, Context, Result};
use lde_core::tensor::Tensor;

/// Decode an 8-bit RGB PNG into an `h x w x 3` tensor with byte `b`
/// mapping to exactly `b / 255`. RGBA inputs drop alpha with a warning;
/// palette images are expanded; anything else is rejected.
pub fn load_png(path: &Path) -> Result<Tensor<f32>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .with_context(|| format!("decoding {}", path.display()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().context("image too large")?];
    let info = reader
        .next_frame(&mut buf)
        .with_context(|| format!("decoding {}", path.display()))?;

    if info.bit_depth != png::BitDepth::Eight {
        bail!(
            "{}: unsupported bit depth {:?}, expected 8-bit",
            path.display(),
            info.bit_depth
        );
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => buf[..w * h * 3].to_vec(),
        png::ColorType::Rgba => {
            eprintln!("warning: {}: ignoring alpha channel", path.display());
            buf[..w * h * 4]
                .chunks_exact(4)
                .flat_map(|px| [px[0], px[1], px[2]])
                .collect()
        }
        other => bail!(
            "{}: unsupported color type {:?}, expected RGB",
            path.display(),
            other
        ),
    };
    let data = rgb.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(Tensor::from_vec(vec![h, w, 3], data)?)
}

/// Encode an `h x w x 3` tensor, clamping to `[0, 1]` and quantizing by
/// `round(v * 255)`. The write is atomic (temp file + rename).
pub fn save_png(image: &Tensor<f32>, path: &Path) -> Result<()> {
    let (h, w, c) = image.hwc()?;
    if c != 3 {
        bail!("save_png expects h x w x 3, got {:?}", image.shape);
    }
    let bytes: Vec<u8> = image
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();

    let tmp = path.with_extension("png.tmp");
    {
        let file = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().context("writing png header")?;
        writer.write_image_data(&bytes).context("writing png data")?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use lde_core::rng::Rng;

    #[test]
    fn roundtrip_on_quantized_lattice_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut rng = Rng::new(5);
        // quantize source to the 256-level lattice first
        let mut img = Tensor::<f32>::uniform([9, 7, 3], 0.0, 1.0, &mut rng);
        for v in img.data.iter_mut() {
            *v = (*v * 255.0).round() / 255.0;
        }
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.shape, img.shape);
        assert_eq!(back.data, img.data);
    }

    #[test]
    fn byte_mapping_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let img = Tensor::from_vec(
            vec![1, 3, 3],
            vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 128.0 / 255.0, 0.5, 1.0],
        )
        .unwrap();
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.data[0], 0.0);
        assert_eq!(back.data[3], 1.0);
        assert!((back.data[6] - 128.0 / 255.0).abs() < 1e-9);
        // 0.5 quantizes to round(127.5) = 128
        assert_eq!(back.data[7], 128.0 / 255.0);
    }

    #[test]
    fn missing_file_is_structured_error() {
        let err = load_png(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(format!("{err:#}").contains("nonexistent"));
    }
}
