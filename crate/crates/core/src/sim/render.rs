//! Synthetic screenshots: element boxes colored by kind, labelled with a
//! built-in 3x5 pixel font. RGB8, row-major.

use alloc::vec;
use alloc::vec::Vec;

use super::{AppScript, ElementKind, EnvState};
use crate::reward::BBox;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

type Rgb = [u8; 3];

const BACKGROUND: Rgb = [246, 246, 246];
const INK: Rgb = [20, 20, 20];
const STATUS_BAR: Rgb = [40, 40, 48];
const FOCUS: Rgb = [30, 110, 230];

impl Raster {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let mut rgb = vec![0; width as usize * height as usize * 3];
        for px in rgb.chunks_exact_mut(3) {
            px.copy_from_slice(&fill);
        }
        Self { width, height, rgb }
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Fills `[x1, x2) x [y1, y2)`, clipped to the raster.
    pub fn fill_rect(&mut self, x1: u32, y1: u32, x2: u32, y2: u32, color: Rgb) {
        let (x2, y2) = (x2.min(self.width), y2.min(self.height));
        for y in y1..y2 {
            let row = y as usize * self.width as usize;
            for x in x1..x2 {
                let i = (row + x as usize) * 3;
                self.rgb[i..i + 3].copy_from_slice(&color);
            }
        }
    }

    fn outline(&mut self, b: BBox, thickness: u32, color: Rgb) {
        let (x2, y2) = (b.x2 + 1, b.y2 + 1);
        self.fill_rect(b.x1, b.y1, x2, b.y1 + thickness, color);
        self.fill_rect(b.x1, y2.saturating_sub(thickness), x2, y2, color);
        self.fill_rect(b.x1, b.y1, b.x1 + thickness, y2, color);
        self.fill_rect(x2.saturating_sub(thickness), b.y1, x2, y2, color);
    }

    /// Draws `text` with its top-left corner at `(x, y)`; glyph cells are
    /// `4 * scale` wide. Stops at `max_x`.
    pub fn text(&mut self, x: u32, y: u32, text: &str, scale: u32, max_x: u32, color: Rgb) {
        let mut cx = x;
        for ch in text.chars() {
            if cx + 3 * scale > max_x {
                break;
            }
            let bits = glyph(ch);
            for row in 0..5u32 {
                for col in 0..3u32 {
                    if bits & (1 << (14 - (row * 3 + col))) != 0 {
                        let px = cx + col * scale;
                        let py = y + row * scale;
                        self.fill_rect(px, py, px + scale, py + scale, color);
                    }
                }
            }
            cx += 4 * scale;
        }
    }

    /// Box-filter downsampling by an integer factor in both dimensions.
    pub fn downsample(&self, factor: u32) -> Raster {
        let factor = factor.max(1);
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Raster::new(w, h, [0, 0, 0]);
        let n = factor * factor;
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0u32; 3];
                for dy in 0..factor {
                    for dx in 0..factor {
                        let p = self.pixel(x * factor + dx, y * factor + dy);
                        for c in 0..3 {
                            acc[c] += u32::from(p[c]);
                        }
                    }
                }
                let i = (y as usize * w as usize + x as usize) * 3;
                for (c, sum) in acc.iter().enumerate() {
                    out.rgb[i + c] = ((sum + n / 2) / n) as u8;
                }
            }
        }
        out
    }
}

fn kind_color(kind: ElementKind) -> Rgb {
    match kind {
        ElementKind::Icon => [255, 214, 153],
        ElementKind::Button => [170, 210, 255],
        ElementKind::Tab => [210, 210, 225],
        ElementKind::Input => [255, 255, 255],
        ElementKind::ListItem => [225, 240, 220],
    }
}

/// Renders the current screen of `state`.
pub fn render(script: &AppScript, state: &EnvState) -> Raster {
    let Some(screen) = script.screen(&state.screen) else {
        return Raster::new(1, 1, BACKGROUND);
    };
    let mut r = Raster::new(screen.size.width, screen.size.height, BACKGROUND);
    let bar = (screen.size.height / 40).max(12);
    r.fill_rect(0, 0, screen.size.width, bar, STATUS_BAR);
    let scale = (bar / 8).max(1);
    r.text(8, (bar - 5 * scale) / 2, &state.screen, scale, screen.size.width, [235, 235, 235]);

    for e in &screen.elements {
        let b = e.bbox;
        r.fill_rect(b.x1, b.y1, b.x2 + 1, b.y2 + 1, kind_color(e.kind));
        let focused = state.focused_input.as_deref() == Some(e.id.as_str());
        r.outline(b, if focused { 8 } else { 3 }, if focused { FOCUS } else { INK });
        let scale = ((b.y2 - b.y1) / 24).clamp(2, 8);
        let pad = 4 * scale;
        let text = match (e.kind, state.inputs.get(&e.id)) {
            (ElementKind::Input, Some(typed)) => typed.as_str(),
            _ => e.label.as_str(),
        };
        r.text(b.x1 + pad, b.y1 + pad, text, scale, b.x2.saturating_sub(pad), INK);
        if 6 * scale + pad * 2 + 5 * scale <= b.y2 - b.y1 {
            r.text(b.x1 + pad, b.y1 + pad + 7 * scale, &e.id, (scale / 2).max(1), b.x2, [90, 90, 90]);
        }
    }
    r
}

/// 3x5 glyphs, 15 bits, row-major from the top-left bit 14.
fn glyph(c: char) -> u16 {
    const fn g(rows: [u8; 5]) -> u16 {
        ((rows[0] as u16) << 12)
            | ((rows[1] as u16) << 9)
            | ((rows[2] as u16) << 6)
            | ((rows[3] as u16) << 3)
            | rows[4] as u16
    }
    match c.to_ascii_uppercase() {
        '0' => g([0b111, 0b101, 0b101, 0b101, 0b111]),
        '1' => g([0b010, 0b110, 0b010, 0b010, 0b111]),
        '2' => g([0b111, 0b001, 0b111, 0b100, 0b111]),
        '3' => g([0b111, 0b001, 0b111, 0b001, 0b111]),
        '4' => g([0b101, 0b101, 0b111, 0b001, 0b001]),
        '5' => g([0b111, 0b100, 0b111, 0b001, 0b111]),
        '6' => g([0b111, 0b100, 0b111, 0b101, 0b111]),
        '7' => g([0b111, 0b001, 0b001, 0b001, 0b001]),
        '8' => g([0b111, 0b101, 0b111, 0b101, 0b111]),
        '9' => g([0b111, 0b101, 0b111, 0b001, 0b111]),
        'A' => g([0b010, 0b101, 0b111, 0b101, 0b101]),
        'B' => g([0b110, 0b101, 0b110, 0b101, 0b110]),
        'C' => g([0b011, 0b100, 0b100, 0b100, 0b011]),
        'D' => g([0b110, 0b101, 0b101, 0b101, 0b110]),
        'E' => g([0b111, 0b100, 0b110, 0b100, 0b111]),
        'F' => g([0b111, 0b100, 0b110, 0b100, 0b100]),
        'G' => g([0b011, 0b100, 0b101, 0b101, 0b011]),
        'H' => g([0b101, 0b101, 0b111, 0b101, 0b101]),
        'I' => g([0b111, 0b010, 0b010, 0b010, 0b111]),
        'J' => g([0b001, 0b001, 0b001, 0b101, 0b010]),
        'K' => g([0b101, 0b101, 0b110, 0b101, 0b101]),
        'L' => g([0b100, 0b100, 0b100, 0b100, 0b111]),
        'M' => g([0b101, 0b111, 0b111, 0b101, 0b101]),
        'N' => g([0b110, 0b101, 0b101, 0b101, 0b101]),
        'O' => g([0b010, 0b101, 0b101, 0b101, 0b010]),
        'P' => g([0b110, 0b101, 0b110, 0b100, 0b100]),
        'Q' => g([0b010, 0b101, 0b101, 0b110, 0b011]),
        'R' => g([0b110, 0b101, 0b110, 0b101, 0b101]),
        'S' => g([0b011, 0b100, 0b010, 0b001, 0b110]),
        'T' => g([0b111, 0b010, 0b010, 0b010, 0b010]),
        'U' => g([0b101, 0b101, 0b101, 0b101, 0b111]),
        'V' => g([0b101, 0b101, 0b101, 0b101, 0b010]),
        'W' => g([0b101, 0b101, 0b111, 0b111, 0b101]),
        'X' => g([0b101, 0b101, 0b010, 0b101, 0b101]),
        'Y' => g([0b101, 0b101, 0b010, 0b010, 0b010]),
        'Z' => g([0b111, 0b001, 0b010, 0b100, 0b111]),
        '_' => g([0, 0, 0, 0, 0b111]),
        '-' => g([0, 0, 0b111, 0, 0]),
        '.' => g([0, 0, 0, 0, 0b010]),
        ':' => g([0, 0b010, 0, 0b010, 0]),
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::fixtures;

    #[test]
    fn renders_at_screen_size() {
        let s = fixtures::app_script(1);
        let st = EnvState::initial(&s);
        let r = render(&s, &st);
        assert_eq!((r.width, r.height), (1080, 2400));
        assert_eq!(r.rgb.len(), 1080 * 2400 * 3);
        assert_eq!(r.pixel(1079, 2399), BACKGROUND);
        let icon = s.screen("home").unwrap().element("app_icon").unwrap().bbox;
        assert_eq!(r.pixel(icon.x1, icon.y1), INK);
        assert_eq!(render(&s, &st), r);
    }

    #[test]
    fn downsample_halves_and_averages() {
        let mut r = Raster::new(4, 2, [0, 0, 0]);
        r.fill_rect(0, 0, 1, 1, [200, 100, 40]);
        let d = r.downsample(2);
        assert_eq!((d.width, d.height), (2, 1));
        assert_eq!(d.pixel(0, 0), [50, 25, 10]);
        assert_eq!(d.pixel(1, 0), [0, 0, 0]);
    }
}
