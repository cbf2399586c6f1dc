//! Minimal built-in rasterization for report artifacts: 2-D scatter plots,
//! per-group boxplots, and annotated image grids, written as PNG. No
//! external plotting stack; text uses an embedded 5x7 bitmap font.

use std::path::Path;

use crate::error::TrainError;

/// RGB raster canvas.
pub struct Canvas {
    pub w: usize,
    pub h: usize,
    data: Vec<u8>,
}

pub const PALETTE: [[u8; 3]; 12] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
    [64, 32, 128],
    [180, 60, 16],
];

pub fn palette_color(index: usize) -> [u8; 3] {
    PALETTE[index % PALETTE.len()]
}

const BLACK: [u8; 3] = [20, 20, 20];

/// 5x7 glyphs, one byte per row, bit 4 is the leftmost column.
fn glyph(c: char) -> [u8; 7] {
    match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'a' => [0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F],
        'b' => [0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1E],
        'c' => [0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E],
        'd' => [0x01, 0x01, 0x0D, 0x13, 0x11, 0x11, 0x0F],
        'e' => [0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E],
        'f' => [0x06, 0x09, 0x08, 0x1C, 0x08, 0x08, 0x08],
        'g' => [0x00, 0x0F, 0x11, 0x11, 0x0F, 0x01, 0x0E],
        'h' => [0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11],
        'i' => [0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E],
        'j' => [0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0C],
        'k' => [0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12],
        'l' => [0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'm' => [0x00, 0x00, 0x1A, 0x15, 0x15, 0x11, 0x11],
        'n' => [0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11],
        'o' => [0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E],
        'p' => [0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10],
        'q' => [0x00, 0x00, 0x0D, 0x13, 0x0F, 0x01, 0x01],
        'r' => [0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10],
        's' => [0x00, 0x00, 0x0E, 0x10, 0x0E, 0x01, 0x1E],
        't' => [0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06],
        'u' => [0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D],
        'v' => [0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'w' => [0x00, 0x00, 0x11, 0x11, 0x15, 0x15, 0x0A],
        'x' => [0x00, 0x00, 0x11, 0x0A, 0x04, 0x0A, 0x11],
        'y' => [0x00, 0x00, 0x11, 0x11, 0x0F, 0x01, 0x0E],
        'z' => [0x00, 0x00, 0x1F, 0x02, 0x04, 0x08, 0x1F],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '+' => [0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00],
        '=' => [0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '/' => [0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        _ => [0x00; 7],
    }
}

impl Canvas {
    pub fn new(w: usize, h: usize, background: [u8; 3]) -> Self {
        let mut data = vec![0u8; w * h * 3];
        for px in data.chunks_mut(3) {
            px.copy_from_slice(&background);
        }
        Self { w, h, data }
    }

    pub fn set(&mut self, x: isize, y: isize, color: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.w as isize || y >= self.h as isize {
            return;
        }
        let idx = (y as usize * self.w + x as usize) * 3;
        self.data[idx..idx + 3].copy_from_slice(&color);
    }

    pub fn fill_rect(&mut self, x0: isize, y0: isize, w: usize, h: usize, color: [u8; 3]) {
        for dy in 0..h as isize {
            for dx in 0..w as isize {
                self.set(x0 + dx, y0 + dy, color);
            }
        }
    }

    pub fn rect_outline(&mut self, x0: isize, y0: isize, w: usize, h: usize, color: [u8; 3]) {
        for dx in 0..w as isize {
            self.set(x0 + dx, y0, color);
            self.set(x0 + dx, y0 + h as isize - 1, color);
        }
        for dy in 0..h as isize {
            self.set(x0, y0 + dy, color);
            self.set(x0 + w as isize - 1, y0 + dy, color);
        }
    }

    pub fn line(&mut self, x0: isize, y0: isize, x1: isize, y1: isize, color: [u8; 3]) {
        let (mut x, mut y) = (x0, y0);
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.set(x, y, color);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    /// Lowercased 5x7 text; returns the advance width.
    pub fn text(&mut self, x: isize, y: isize, s: &str, color: [u8; 3]) -> isize {
        let mut cx = x;
        for c in s.chars() {
            let g = glyph(c.to_ascii_lowercase());
            for (row, bits) in g.iter().enumerate() {
                for col in 0..5 {
                    if bits & (0x10 >> col) != 0 {
                        self.set(cx + col as isize, y + row as isize, color);
                    }
                }
            }
            cx += 6;
        }
        cx - x
    }

    /// Draw a grayscale [0,1] image with its top-left corner at (x0, y0).
    pub fn blit_gray(&mut self, x0: isize, y0: isize, pixels: &[f32], h: usize, w: usize) {
        for y in 0..h {
            for x in 0..w {
                let v = (pixels[y * w + x].clamp(0.0, 1.0) * 255.0) as u8;
                self.set(x0 + x as isize, y0 + y as isize, [v, v, v]);
            }
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<(), TrainError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let img = image::RgbImage::from_vec(self.w as u32, self.h as u32, self.data.clone())
            .expect("buffer matches extents");
        img.save(path)
            .map_err(|e| TrainError::Io(std::io::Error::other(e.to_string())))
    }
}

/// Scatter plot of 2-D points colored by label; held-out labels render as
/// hollow markers. `label_names[i]` names label value i.
pub fn scatter_2d(
    points: &[(f64, f64)],
    labels: &[usize],
    label_names: &[String],
    held_out: Option<&[bool]>,
    title: &str,
    path: &Path,
) -> Result<(), TrainError> {
    let (pw, ph, margin, legend) = (640usize, 640usize, 48isize, 190usize);
    let mut canvas = Canvas::new(pw + legend, ph, [255, 255, 255]);
    canvas.text(margin, 12, title, BLACK);
    canvas.rect_outline(
        margin,
        margin,
        pw - 2 * margin as usize,
        ph - 2 * margin as usize,
        [120, 120, 120],
    );

    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (max_y - min_y).max(1e-12);
    let inner_w = (pw as isize - 2 * margin - 8) as f64;
    let inner_h = (ph as isize - 2 * margin - 8) as f64;

    for (i, &(x, y)) in points.iter().enumerate() {
        let px = margin + 4 + ((x - min_x) / span_x * inner_w) as isize;
        let py = margin + 4 + ((max_y - y) / span_y * inner_h) as isize;
        let color = palette_color(labels[i]);
        let hollow = held_out.is_some_and(|m| m[i]);
        if hollow {
            canvas.rect_outline(px - 3, py - 3, 7, 7, color);
        } else {
            canvas.fill_rect(px - 2, py - 2, 5, 5, color);
        }
    }

    let lx = pw as isize + 8;
    for (li, name) in label_names.iter().enumerate() {
        let ly = margin + 14 * li as isize;
        canvas.fill_rect(lx, ly, 8, 8, palette_color(li));
        canvas.text(lx + 12, ly, name, BLACK);
    }
    if held_out.is_some() {
        let ly = margin + 14 * label_names.len() as isize + 8;
        canvas.rect_outline(lx, ly, 8, 8, BLACK);
        canvas.text(lx + 12, ly, "held out", BLACK);
    }
    canvas.save_png(path)
}

fn quartiles(sorted: &[f64]) -> (f64, f64, f64) {
    let q = |f: f64| -> f64 {
        let pos = f * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let t = pos - lo as f64;
        sorted[lo] * (1.0 - t) + sorted[hi] * t
    };
    (q(0.25), q(0.5), q(0.75))
}

/// Boxplots of 1-D coordinates per group (whiskers at min/max).
pub fn boxplot_1d(
    groups: &[(String, Vec<f64>)],
    title: &str,
    path: &Path,
) -> Result<(), TrainError> {
    let (pw, ph, margin) = (720usize, 480usize, 56isize);
    let mut canvas = Canvas::new(pw, ph, [255, 255, 255]);
    canvas.text(margin, 12, title, BLACK);
    canvas.rect_outline(
        margin,
        margin,
        pw - 2 * margin as usize,
        ph - 2 * margin as usize,
        [120, 120, 120],
    );

    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for (_, values) in groups {
        for &v in values {
            min_v = min_v.min(v);
            max_v = max_v.max(v);
        }
    }
    let span = (max_v - min_v).max(1e-12);
    let inner_h = (ph as isize - 2 * margin - 8) as f64;
    let y_of = |v: f64| -> isize { margin + 4 + ((max_v - v) / span * inner_h) as isize };

    let slot = (pw - 2 * margin as usize) / groups.len().max(1);
    for (gi, (name, values)) in groups.iter().enumerate() {
        if values.is_empty() {
            continue;
        }
        let cx = margin + (gi * slot + slot / 2) as isize;
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        let (q1, q2, q3) = quartiles(&sorted);
        let color = palette_color(gi);
        let half = (slot as isize / 3).clamp(4, 18);

        canvas.line(cx, y_of(sorted[0]), cx, y_of(q1), color);
        canvas.line(
            cx,
            y_of(q3),
            cx,
            y_of(*sorted.last().expect("non-empty")),
            color,
        );
        let box_top = y_of(q3);
        let box_h = (y_of(q1) - box_top).max(1) as usize;
        canvas.rect_outline(cx - half, box_top, (2 * half + 1) as usize, box_h, color);
        canvas.line(cx - half, y_of(q2), cx + half, y_of(q2), BLACK);
        canvas.text(cx - half, ph as isize - margin + 8, name, BLACK);
    }
    canvas.save_png(path)
}

/// One tile of an annotated image grid.
pub struct GridTile {
    pub pixels: Vec<f32>,
    pub h: usize,
    pub w: usize,
    pub caption: String,
}

/// Image grid with per-tile captions, `cols` tiles per row.
pub fn image_grid(tiles: &[GridTile], cols: usize, title: &str, path: &Path) -> Result<(), TrainError> {
    let cols = cols.max(1);
    let tile_w = tiles.iter().map(|t| t.w).max().unwrap_or(64);
    let tile_h = tiles.iter().map(|t| t.h).max().unwrap_or(64);
    let caption_h = 14usize;
    let pad = 8usize;
    let rows = tiles.len().div_ceil(cols);
    let pw = cols * (tile_w + pad) + pad;
    let ph = rows * (tile_h + caption_h + pad) + pad + 20;
    let mut canvas = Canvas::new(pw, ph, [255, 255, 255]);
    canvas.text(pad as isize, 4, title, BLACK);

    for (i, tile) in tiles.iter().enumerate() {
        let cx = (pad + (i % cols) * (tile_w + pad)) as isize;
        let cy = (20 + pad + (i / cols) * (tile_h + caption_h + pad)) as isize;
        canvas.blit_gray(cx, cy, &tile.pixels, tile.h, tile.w);
        canvas.rect_outline(cx - 1, cy - 1, tile.w + 2, tile.h + 2, [160, 160, 160]);
        canvas.text(cx, cy + tile.h as isize + 3, &tile.caption, BLACK);
    }
    canvas.save_png(path)
}
