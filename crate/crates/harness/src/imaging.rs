//! PNG encoding of rendered screens.

use std::io::Cursor;

use guirl_core::sim::render::{render, Raster};
use guirl_core::sim::{AppScript, EnvState};

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("png encode: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("png decode: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("unsupported png layout {0:?}/{1:?}")]
    Layout(png::ColorType, png::BitDepth),
}

pub fn encode_png(raster: &Raster) -> Result<Vec<u8>, ImagingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, raster.width, raster.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Fast);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&raster.rgb)?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Raster, ImagingError> {
    let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(ImagingError::Layout(info.color_type, info.bit_depth));
    }
    buf.truncate(info.buffer_size());
    Ok(Raster { width: info.width, height: info.height, rgb: buf })
}

/// Renders the current screen, shrunk by `factor` (1 keeps full size).
pub fn screenshot(script: &AppScript, state: &EnvState, factor: u32) -> Raster {
    let full = render(script, state);
    if factor > 1 {
        full.downsample(factor)
    } else {
        full
    }
}

pub fn screenshot_png(script: &AppScript, state: &EnvState, factor: u32) -> Result<Vec<u8>, ImagingError> {
    encode_png(&screenshot(script, state, factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use guirl_core::sim::fixtures;

    #[test]
    fn png_round_trip() {
        let script = fixtures::app_script(0);
        let state = EnvState::initial(&script);
        let raster = screenshot(&script, &state, 2);
        assert_eq!((raster.width, raster.height), (540, 1200));
        let bytes = encode_png(&raster).unwrap();
        assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
        assert_eq!(decode_png(&bytes).unwrap(), raster);
    }

    #[test]
    fn garbage_is_a_decode_error() {
        assert!(matches!(decode_png(b"not a png"), Err(ImagingError::Decode(_))));
    }
}
