//! Image and seed-mask loading, plus the synthetic two-rectangle scene.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat as CodecFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    /// Sniffs the format from the leading bytes.
    pub fn detect(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(b"P5") {
            Some(ImageFormat::Pgm)
        } else if bytes.starts_with(PNG_SIGNATURE) {
            Some(ImageFormat::Png)
        } else {
            None
        }
    }
}

/// Grayscale image with intensities in `[0, 1]`, row-major (x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    intensities: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, intensities: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Decode("image has zero size".into()));
        }
        if width * height != intensities.len() {
            return Err(Error::Shape(format!(
                "{width}x{height} image needs {} intensities, got {}",
                width * height,
                intensities.len()
            )));
        }
        if intensities.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Decode("intensity outside [0, 1]".into()));
        }
        Ok(Self { width, height, intensities })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn pixel(&self, x: usize, y: usize) -> f64 {
        self.intensities[y * self.width + x]
    }

    /// Renders the first `width x height` nodes of a field, clamping values to `[0, 1]`.
    pub fn from_field(field: &GridField, width: usize, height: usize) -> Result<Self> {
        let spec = field.spec();
        if width > spec.width() || height > spec.height() {
            return Err(Error::Shape(format!(
                "{width}x{height} image larger than {}x{} node grid",
                spec.width(),
                spec.height()
            )));
        }
        let mut intensities = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                intensities.push(field.at(x, y).clamp(0.0, 1.0));
            }
        }
        Self::new(width, height, intensities)
    }

    pub fn decode(bytes: &[u8], format: ImageFormat) -> Result<Self> {
        match format {
            ImageFormat::Pgm => decode_pgm(bytes),
            ImageFormat::Png => decode_png_gray(bytes),
        }
    }

    /// Decodes with the format sniffed from the leading bytes.
    pub fn decode_any(bytes: &[u8]) -> Result<Self> {
        let format = ImageFormat::detect(bytes)
            .ok_or_else(|| Error::ingest(0, "unrecognised image signature (expected P5 PGM or PNG)"))?;
        Self::decode(bytes, format)
    }

    /// 8-bit binary PGM encoding.
    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.intensities.iter().map(|v| (v * 255.0).round() as u8));
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode_pgm())?;
        Ok(())
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    Image::decode_any(&bytes)
}

fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cursor = 0usize;
    if !bytes.starts_with(b"P5") {
        return Err(Error::ingest(0, "missing P5 magic"));
    }
    cursor += 2;
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        // whitespace and comments between tokens
        loop {
            match bytes.get(cursor) {
                Some(b) if b.is_ascii_whitespace() => cursor += 1,
                Some(b'#') => {
                    while bytes.get(cursor).is_some_and(|&b| b != b'\n') {
                        cursor += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::ingest(cursor, format!("truncated header before {name}"))),
            }
        }
        let start = cursor;
        while bytes.get(cursor).is_some_and(u8::is_ascii_digit) {
            cursor += 1;
        }
        if start == cursor {
            return Err(Error::ingest(start, format!("expected decimal {name}")));
        }
        let text = std::str::from_utf8(&bytes[start..cursor]).expect("ascii digits");
        *slot = text
            .parse()
            .map_err(|_| Error::ingest(start, format!("{name} out of range")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(Error::ingest(cursor, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::ingest(cursor, format!("unsupported maxval {maxval}")));
    }
    if !bytes.get(cursor).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::ingest(cursor, "expected single whitespace after maxval"));
    }
    cursor += 1;

    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bytes_per_sample))
        .ok_or_else(|| Error::ingest(cursor, "image dimensions overflow"))?;
    let raster = &bytes[cursor..];
    if raster.len() < needed {
        return Err(Error::ingest(
            cursor + raster.len(),
            format!("raster truncated: need {needed} bytes, have {}", raster.len()),
        ));
    }
    let scale = maxval as f64;
    let mut intensities = Vec::with_capacity(width * height);
    for (k, chunk) in raster[..needed].chunks_exact(bytes_per_sample).enumerate() {
        let sample = match chunk {
            [b] => *b as usize,
            [hi, lo] => ((*hi as usize) << 8) | *lo as usize,
            _ => unreachable!(),
        };
        if sample > maxval {
            return Err(Error::ingest(
                cursor + k * bytes_per_sample,
                format!("sample {sample} exceeds maxval {maxval}"),
            ));
        }
        intensities.push(sample as f64 / scale);
    }
    Image::new(width, height, intensities)
}

fn decode_png(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory_with_format(bytes, CodecFormat::Png)
        .map_err(|e| Error::Decode(format!("PNG: {e}")))
}

fn decode_png_gray(bytes: &[u8]) -> Result<Image> {
    let img = decode_png(bytes)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let intensities: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&p| p as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.as_raw().iter().map(|&p| p as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        other => {
            log::warn!("colour PNG converted to luma");
            other.to_luma16().as_raw().iter().map(|&p| p as f64 / 65535.0).collect()
        }
    };
    Image::new(width, height, intensities)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Nearest,
    Bilinear,
}

/// Grid for an image: `N1 = W`, `N2 = H` over `L1 = W / H`, `L2 = 1`.
pub fn image_grid(img: &Image) -> Result<GridSpec> {
    GridSpec::new(img.width as f64 / img.height as f64, 1.0, img.width, img.height)
}

/// Samples the image at node positions. Pixel `p` sits at node coordinate
/// `p * N / W`, so a `W`-wide image on an `N1 = W` grid maps node `i` to pixel `i`.
pub fn image_to_field(img: &Image, spec: GridSpec, method: Sampling) -> Result<GridField> {
    let sx = img.width as f64 / spec.n1() as f64;
    let sy = img.height as f64 / spec.n2() as f64;
    let max_x = img.width - 1;
    let max_y = img.height - 1;
    let mut values = Vec::with_capacity(spec.node_count());
    for j in 0..=spec.n2() {
        let py = j as f64 * sy;
        for i in 0..=spec.n1() {
            let px = i as f64 * sx;
            let v = match method {
                Sampling::Nearest => {
                    let x = (px.round() as usize).min(max_x);
                    let y = (py.round() as usize).min(max_y);
                    img.pixel(x, y)
                }
                Sampling::Bilinear => {
                    let px = px.min(max_x as f64);
                    let py = py.min(max_y as f64);
                    let (x0, y0) = (px.floor() as usize, py.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(max_x), (y0 + 1).min(max_y));
                    let (fx, fy) = (px - x0 as f64, py - y0 as f64);
                    let top = img.pixel(x0, y0) * (1.0 - fx) + img.pixel(x1, y0) * fx;
                    let bottom = img.pixel(x0, y1) * (1.0 - fx) + img.pixel(x1, y1) * fx;
                    top * (1.0 - fy) + bottom * fy
                }
            };
            values.push(v);
        }
    }
    GridField::new(spec, values)
}

/// Geometry of the two-rectangle test scene. Each rectangle is an outline band
/// of the given thickness; the vertical edge facing the other rectangle has a
/// gap of `hole_height`, centred vertically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub centers: [(f64, f64); 2],
    pub width: f64,
    pub height: f64,
    pub thickness: f64,
    pub hole_height: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            centers: [(0.4, 0.5), (0.6, 0.5)],
            width: 0.1,
            height: 0.4,
            thickness: 0.04,
            hole_height: 0.04,
        }
    }
}

impl SceneParams {
    fn validate(&self, spec: &GridSpec) -> Result<()> {
        if !(self.thickness > 0.0) {
            return Err(Error::Scene("edge thickness must be positive".into()));
        }
        if 2.0 * self.thickness >= self.width.min(self.height) {
            return Err(Error::Scene("edge thickness leaves no rectangle interior".into()));
        }
        if !(self.hole_height >= 0.0 && self.hole_height <= self.height - 2.0 * self.thickness) {
            return Err(Error::Scene("hole height must fit the inner edge".into()));
        }
        for &(cx, cy) in &self.centers {
            let x_ok = cx - self.width / 2.0 >= 0.0 && cx + self.width / 2.0 <= spec.l1();
            let y_ok = cy - self.height / 2.0 >= 0.0 && cy + self.height / 2.0 <= spec.l2();
            if !(x_ok && y_ok) {
                return Err(Error::Scene(format!("rectangle at ({cx}, {cy}) leaves the domain")));
            }
        }
        Ok(())
    }

    /// Scene intensity at a point: 0 on outline bands, 1 elsewhere.
    pub fn intensity(&self, x: f64, y: f64) -> f64 {
        let mid_x = (self.centers[0].0 + self.centers[1].0) / 2.0;
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        for &(cx, cy) in &self.centers {
            let (dx, dy) = (x - cx, y - cy);
            let in_outer = dx.abs() <= hw && dy.abs() <= hh;
            let in_inner = dx.abs() < hw - self.thickness && dy.abs() < hh - self.thickness;
            if !in_outer || in_inner {
                continue;
            }
            // the vertical band facing the other rectangle carries the hole
            let facing = if cx < mid_x { dx } else { -dx };
            let on_inner_edge = facing >= hw - self.thickness;
            if on_inner_edge && dy.abs() < self.hole_height / 2.0 {
                continue;
            }
            return 0.0;
        }
        1.0
    }
}

pub fn synth_two_rectangles(params: &SceneParams, spec: GridSpec) -> Result<GridField> {
    params.validate(&spec)?;
    GridField::from_fn(spec, |x, y| params.intensity(x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SeedLabel {
    #[default]
    Free,
    Inside,
    Outside,
}

/// Per-node seed labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedMask {
    spec: GridSpec,
    labels: Vec<SeedLabel>,
}

impl SeedMask {
    pub fn free(spec: GridSpec) -> Self {
        Self { spec, labels: vec![SeedLabel::Free; spec.node_count()] }
    }

    pub fn new(spec: GridSpec, labels: Vec<SeedLabel>) -> Result<Self> {
        if labels.len() != spec.node_count() {
            return Err(Error::Shape(format!(
                "mask needs {} labels, got {}",
                spec.node_count(),
                labels.len()
            )));
        }
        if !labels.contains(&SeedLabel::Free) {
            return Err(Error::Param("seed mask leaves no free node".into()));
        }
        Ok(Self { spec, labels })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn labels(&self) -> &[SeedLabel] {
        &self.labels
    }

    pub fn label(&self, i: usize, j: usize) -> SeedLabel {
        self.labels[self.spec.idx(i, j)]
    }

    pub fn count(&self, label: SeedLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Node coordinates `(i, j)` carrying `label`.
    pub fn nodes(&self, label: SeedLabel) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.spec.width();
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == label)
            .map(move |(k, _)| (k % w, k / w))
    }

    /// Merges two masks; a node seeded differently by both is a conflict.
    pub fn union(&self, other: &SeedMask) -> Result<SeedMask> {
        if self.spec != other.spec {
            return Err(Error::Shape("masks live on different grids".into()));
        }
        let mut labels = Vec::with_capacity(self.labels.len());
        for (k, (&a, &b)) in self.labels.iter().zip(&other.labels).enumerate() {
            let merged = match (a, b) {
                (SeedLabel::Free, l) | (l, SeedLabel::Free) => l,
                (a, b) if a == b => a,
                _ => {
                    let (i, j) = (k % self.spec.width(), k / self.spec.width());
                    return Err(Error::MaskConflict { i, j });
                }
            };
            labels.push(merged);
        }
        SeedMask::new(self.spec, labels)
    }

    /// Encodes the mask as an RGB image (red = outside, blue = inside, white = free).
    /// Pixel `(x, y)` takes the label of node `(min(x, N1), min(y, N2))`.
    pub fn to_rgb(&self, width: usize, height: usize) -> RgbImage {
        RgbImage::from_fn(width as u32, height as u32, |x, y| {
            let i = (x as usize).min(self.spec.n1());
            let j = (y as usize).min(self.spec.n2());
            match self.label(i, j) {
                SeedLabel::Outside => Rgb([255, 0, 0]),
                SeedLabel::Inside => Rgb([0, 0, 255]),
                SeedLabel::Free => Rgb([255, 255, 255]),
            }
        })
    }

    pub fn encode_png(&self, width: usize, height: usize) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb(width, height)
            .write_to(&mut out, CodecFormat::Png)
            .map_err(|e| Error::Decode(format!("PNG encode: {e}")))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>, width: usize, height: usize) -> Result<()> {
        std::fs::write(path, self.encode_png(width, height)?)?;
        Ok(())
    }
}

/// Classifies one RGB pixel by the red-outside / blue-inside convention.
pub fn classify_seed_pixel([r, g, b]: [u8; 3]) -> SeedLabel {
    if r > 128 && g < 64 && b < 64 {
        SeedLabel::Outside
    } else if b > 128 && r < 64 && g < 64 {
        SeedLabel::Inside
    } else {
        SeedLabel::Free
    }
}

/// Decodes an RGB(A) PNG seed mask. Accepted sizes are node resolution
/// `(N1+1) x (N2+1)` or pixel resolution `N1 x N2` (last node row/column clamped).
pub fn decode_seed_mask(bytes: &[u8], spec: GridSpec) -> Result<SeedMask> {
    let img = decode_png(bytes)?;
    let rgb = match img {
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => img.to_rgb8(),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => img.to_rgb8(),
        _ => return Err(Error::Decode("seed mask must be an RGB image".into())),
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let node_res = w == spec.width() && h == spec.height();
    let pixel_res = w == spec.n1() && h == spec.n2();
    if !(node_res || pixel_res) {
        return Err(Error::Shape(format!(
            "{w}x{h} mask does not fit a {}x{} grid",
            spec.n1(),
            spec.n2()
        )));
    }
    let mut labels = Vec::with_capacity(spec.node_count());
    for j in 0..=spec.n2() {
        for i in 0..=spec.n1() {
            let p = rgb.get_pixel(i.min(w - 1) as u32, j.min(h - 1) as u32);
            labels.push(classify_seed_pixel(p.0));
        }
    }
    SeedMask::new(spec, labels)
}

pub fn load_seed_mask(path: impl AsRef<Path>, spec: GridSpec) -> Result<SeedMask> {
    let bytes = std::fs::read(path)?;
    decode_seed_mask(&bytes, spec)
}

/// Labels the nodes inside an axis-aligned bar; everything else stays free.
pub fn synth_bar_seed(
    center: (f64, f64),
    width: f64,
    height: f64,
    label: SeedLabel,
    spec: GridSpec,
) -> Result<SeedMask> {
    let (cx, cy) = center;
    let (hw, hh) = (width / 2.0, height / 2.0);
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::Scene("bar needs positive size".into()));
    }
    if cx - hw < 0.0 || cx + hw > spec.l1() || cy - hh < 0.0 || cy + hh > spec.l2() {
        return Err(Error::Scene(format!("bar at ({cx}, {cy}) leaves the domain")));
    }
    // tolerate rounding of node positions landing on the bar edge
    let slack = 1e-9 * spec.l1().max(spec.l2());
    let mut labels = Vec::with_capacity(spec.node_count());
    for j in 0..=spec.n2() {
        for i in 0..=spec.n1() {
            let (x, y) = spec.position(i, j);
            let inside = (x - cx).abs() <= hw + slack && (y - cy).abs() <= hh + slack;
            labels.push(if inside { label } else { SeedLabel::Free });
        }
    }
    SeedMask::new(spec, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrokeLabel {
    Inside,
    Outside,
    Erase,
}

/// A painted polyline in node-index coordinates (pixel `p` = node `p`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub label: StrokeLabel,
    #[serde(alias = "polyline")]
    pub points: Vec<[f64; 2]>,
    pub radius: f64,
}

/// Rasterizes strokes in order. Erase strokes reset nodes to free; painting a
/// node already holding the opposite label is a conflict.
pub fn rasterize_strokes(strokes: &[Stroke], spec: GridSpec) -> Result<SeedMask> {
    let mut labels = vec![SeedLabel::Free; spec.node_count()];
    for stroke in strokes {
        if !(stroke.radius >= 0.0 && stroke.radius.is_finite()) || stroke.points.is_empty() {
            return Err(Error::Param("stroke needs points and a non-negative radius".into()));
        }
        let paint = match stroke.label {
            StrokeLabel::Inside => SeedLabel::Inside,
            StrokeLabel::Outside => SeedLabel::Outside,
            StrokeLabel::Erase => SeedLabel::Free,
        };
        let r = stroke.radius;
        let segments: Vec<([f64; 2], [f64; 2])> = if stroke.points.len() == 1 {
            vec![(stroke.points[0], stroke.points[0])]
        } else {
            stroke.points.windows(2).map(|w| (w[0], w[1])).collect()
        };
        for (a, b) in segments {
            let lo_i = (a[0].min(b[0]) - r).floor().max(0.0) as usize;
            let hi_i = ((a[0].max(b[0]) + r).ceil().max(0.0) as usize).min(spec.n1());
            let lo_j = (a[1].min(b[1]) - r).floor().max(0.0) as usize;
            let hi_j = ((a[1].max(b[1]) + r).ceil().max(0.0) as usize).min(spec.n2());
            for j in lo_j..=hi_j {
                for i in lo_i..=hi_i {
                    if point_segment_distance([i as f64, j as f64], a, b) > r {
                        continue;
                    }
                    let slot = &mut labels[spec.idx(i, j)];
                    match (*slot, paint) {
                        (SeedLabel::Inside, SeedLabel::Outside) | (SeedLabel::Outside, SeedLabel::Inside) => {
                            return Err(Error::MaskConflict { i, j });
                        }
                        _ => *slot = paint,
                    }
                }
            }
        }
    }
    SeedMask::new(spec, labels)
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(header: &str, raster: &[u8]) -> Vec<u8> {
        let mut v = header.as_bytes().to_vec();
        v.extend_from_slice(raster);
        v
    }

    #[test]
    fn pgm_scales_by_maxval() {
        let img = Image::decode(&pgm("P5\n2 2\n255\n", &[0, 255, 128, 64]), ImageFormat::Pgm).unwrap();
        assert_eq!(img.intensities(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);

        let zeros = Image::decode(&pgm("P5 3 1 255 ", &[0, 0, 0]), ImageFormat::Pgm).unwrap();
        assert!(zeros.intensities().iter().all(|&v| v == 0.0));

        let wide = Image::decode(&pgm("P5\n# comment\n2 1\n65535\n", &[0xff, 0xff, 0x80, 0x00]), ImageFormat::Pgm)
            .unwrap();
        assert_eq!(wide.intensities()[0], 1.0);
        assert_eq!(wide.intensities()[1], 32768.0 / 65535.0);
    }

    #[test]
    fn pgm_errors_carry_offsets() {
        match Image::decode(b"P6\n1 1\n255\n\0", ImageFormat::Pgm) {
            Err(Error::Ingest { offset: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match Image::decode(&pgm("P5\n2 2\n255\n", &[1, 2]), ImageFormat::Pgm) {
            Err(Error::Ingest { offset, .. }) => assert_eq!(offset, 13),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Image::decode(b"P5\n2 x\n255\n", ImageFormat::Pgm),
            Err(Error::Ingest { offset: 5, .. })
        ));
        assert!(Image::decode(b"P5\n1 1\n70000\n\0\0", ImageFormat::Pgm).is_err());
        assert!(Image::decode_any(b"").is_err());
    }

    #[test]
    fn pgm_round_trip_is_bit_exact() {
        let raster: Vec<u8> = (0..=255u8).collect();
        let bytes = pgm("P5\n16 16\n255\n", &raster);
        let img = Image::decode_any(&bytes).unwrap();
        assert_eq!(img.encode_pgm(), bytes);
    }

    #[test]
    fn png_gray_8_and_16_bit() {
        let buf = image::GrayImage::from_raw(2, 1, vec![0, 255]).unwrap();
        let mut bytes = Cursor::new(Vec::new());
        buf.write_to(&mut bytes, CodecFormat::Png).unwrap();
        let img = Image::decode_any(bytes.get_ref()).unwrap();
        assert_eq!(img.intensities(), &[0.0, 1.0]);

        let buf16 = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(1, 1, vec![65535u16]).unwrap();
        let mut bytes = Cursor::new(Vec::new());
        buf16.write_to(&mut bytes, CodecFormat::Png).unwrap();
        assert_eq!(Image::decode_any(bytes.get_ref()).unwrap().intensities(), &[1.0]);
    }

    #[test]
    fn constant_image_gives_constant_field() {
        let img = Image::new(5, 3, vec![0.3; 15]).unwrap();
        let spec = GridSpec::new(2.0, 1.0, 7, 4).unwrap();
        for m in [Sampling::Nearest, Sampling::Bilinear] {
            let f = image_to_field(&img, spec, m).unwrap();
            assert!(f.values().iter().all(|&v| v == 0.3));
        }
    }

    #[test]
    fn nearest_sampling_clamps_last_node() {
        let data: Vec<f64> = (0..128 * 128).map(|k| (k % 251) as f64 / 250.0).collect();
        let img = Image::new(128, 128, data).unwrap();
        let spec = GridSpec::unit_square(128).unwrap();
        let f = image_to_field(&img, spec, Sampling::Nearest).unwrap();
        for j in 0..=128 {
            for i in 0..=128 {
                assert_eq!(f.at(i, j), img.pixel(i.min(127), j.min(127)));
            }
        }
    }

    #[test]
    fn bilinear_reproduces_ramps() {
        let (w, h) = (20, 10);
        let ramp = |x: f64, y: f64| 0.1 + 0.03 * x + 0.02 * y;
        let data = (0..h).flat_map(|y| (0..w).map(move |x| ramp(x as f64, y as f64))).collect();
        let img = Image::new(w, h, data).unwrap();
        let spec = GridSpec::new(2.0, 1.0, 40, 20).unwrap();
        let f = image_to_field(&img, spec, Sampling::Bilinear).unwrap();
        for j in 0..=18 {
            for i in 0..=38 {
                // node (i, j) sits at pixel coordinate (i / 2, j / 2)
                let expected = ramp(i as f64 / 2.0, j as f64 / 2.0);
                assert!((f.at(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scene_is_binary_and_validated() {
        let spec = GridSpec::unit_square(128).unwrap();
        let f = synth_two_rectangles(&SceneParams::default(), spec).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(f.values().contains(&0.0));

        let bad = SceneParams { centers: [(0.02, 0.5), (0.6, 0.5)], ..Default::default() };
        assert!(matches!(synth_two_rectangles(&bad, spec), Err(Error::Scene(_))));
        let thin = SceneParams { thickness: 0.0, ..Default::default() };
        assert!(synth_two_rectangles(&thin, spec).is_err());
    }

    #[test]
    fn scene_point_examples() {
        let p = SceneParams::default();
        assert_eq!(p.intensity(0.4, 0.5), 1.0);
        assert_eq!(p.intensity(0.4 - 0.05 + 0.02, 0.5), 0.0);
        assert_eq!(p.intensity(0.5, 0.5), 1.0);
        // hole in the inner edge of each rectangle
        assert_eq!(p.intensity(0.43, 0.5), 1.0);
        assert_eq!(p.intensity(0.57, 0.5), 1.0);
        assert_eq!(p.intensity(0.43, 0.6), 0.0);
        let no_hole = SceneParams { hole_height: 0.0, ..p };
        assert_eq!(no_hole.intensity(0.43, 0.5), 0.0);
    }

    #[test]
    fn seed_pixel_classification() {
        assert_eq!(classify_seed_pixel([255, 0, 0]), SeedLabel::Outside);
        assert_eq!(classify_seed_pixel([0, 0, 255]), SeedLabel::Inside);
        assert_eq!(classify_seed_pixel([255, 255, 255]), SeedLabel::Free);
        assert_eq!(classify_seed_pixel([255, 0, 255]), SeedLabel::Free);
    }

    #[test]
    fn bar_seeds_and_union() {
        let spec = GridSpec::unit_square(128).unwrap();
        let bar = synth_bar_seed((0.5, 0.5), 0.04, 0.6, SeedLabel::Outside, spec).unwrap();
        assert_eq!(bar.label(64, 64), SeedLabel::Outside);
        assert_eq!(bar.label(38, 64), SeedLabel::Free);

        let inner = synth_bar_seed((0.4, 0.5), 0.01, 0.2, SeedLabel::Inside, spec).unwrap();
        let both = bar.union(&inner).unwrap();
        assert_eq!(both.count(SeedLabel::Outside), bar.count(SeedLabel::Outside));
        assert_eq!(both.count(SeedLabel::Inside), inner.count(SeedLabel::Inside));
        assert!(both.count(SeedLabel::Inside) > 0);

        let clash = synth_bar_seed((0.5, 0.5), 0.1, 0.1, SeedLabel::Inside, spec).unwrap();
        assert!(matches!(bar.union(&clash), Err(Error::MaskConflict { .. })));
        assert!(synth_bar_seed((0.99, 0.5), 0.04, 0.6, SeedLabel::Outside, spec).is_err());
    }

    #[test]
    fn mask_png_round_trip() {
        let spec = GridSpec::unit_square(16).unwrap();
        let a = synth_bar_seed((0.5, 0.5), 0.2, 0.5, SeedLabel::Outside, spec).unwrap();
        let b = synth_bar_seed((0.2, 0.5), 0.1, 0.2, SeedLabel::Inside, spec).unwrap();
        let mask = a.union(&b).unwrap();
        let png = mask.encode_png(17, 17).unwrap();
        assert_eq!(decode_seed_mask(&png, spec).unwrap(), mask);

        let gray = image::GrayImage::new(17, 17);
        let mut bytes = Cursor::new(Vec::new());
        gray.write_to(&mut bytes, CodecFormat::Png).unwrap();
        assert!(matches!(decode_seed_mask(bytes.get_ref(), spec), Err(Error::Decode(_))));
        assert!(decode_seed_mask(&mask.encode_png(5, 5).unwrap(), spec).is_err());
    }

    #[test]
    fn strokes_rasterize_and_conflict() {
        let spec = GridSpec::unit_square(32).unwrap();
        let out = Stroke { label: StrokeLabel::Outside, points: vec![[16.0, 4.0], [16.0, 28.0]], radius: 1.0 };
        let mask = rasterize_strokes(std::slice::from_ref(&out), spec).unwrap();
        assert_eq!(mask.label(16, 10), SeedLabel::Outside);
        assert_eq!(mask.label(17, 10), SeedLabel::Outside);
        assert_eq!(mask.label(18, 10), SeedLabel::Free);
        assert_eq!(mask.count(SeedLabel::Outside), 3 * 25 + 2);

        let crossing = Stroke { label: StrokeLabel::Inside, points: vec![[10.0, 10.0], [22.0, 10.0]], radius: 0.5 };
        assert!(matches!(
            rasterize_strokes(&[out.clone(), crossing.clone()], spec),
            Err(Error::MaskConflict { .. })
        ));

        let erase = Stroke { label: StrokeLabel::Erase, points: vec![[16.0, 10.0]], radius: 2.0 };
        let mask = rasterize_strokes(&[out, erase, crossing], spec).unwrap();
        assert_eq!(mask.label(16, 10), SeedLabel::Inside);
    }
}
