//! Obstacle sprites: RGBA rasters with per-pixel opacity plus a nominal
//! physical size. The bundled library is generated procedurally so the full
//! evaluation protocol runs without external assets.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpriteError {
    #[error("sprite `{0}` not found in the library")]
    SpriteNotFound(String),
    #[error("sprite has no opaque pixels")]
    EmptySprite,
}

/// RGBA raster with a tight bounding box (no fully transparent border rows
/// or columns) and the nominal metric size of the depicted object.
#[derive(Debug, Clone)]
pub struct Sprite {
    pub name: String,
    pub width: u32,
    pub height: u32,
    /// Row-major RGBA, 4 bytes per pixel; alpha 255 = fully opaque.
    pub rgba: Vec<u8>,
    pub nominal_width_m: f64,
    pub nominal_height_m: f64,
}

impl Sprite {
    pub fn alpha(&self, col: u32, row: u32) -> u8 {
        self.rgba[(row as usize * self.width as usize + col as usize) * 4 + 3]
    }

    pub fn is_fully_transparent(&self) -> bool {
        self.rgba.chunks_exact(4).all(|p| p[3] == 0)
    }

    /// Crops fully transparent border rows and columns.
    pub fn tighten(&self) -> Result<Sprite, SpriteError> {
        let mut c0 = self.width;
        let mut c1 = 0u32;
        let mut r0 = self.height;
        let mut r1 = 0u32;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.alpha(c, r) > 0 {
                    c0 = c0.min(c);
                    c1 = c1.max(c + 1);
                    r0 = r0.min(r);
                    r1 = r1.max(r + 1);
                }
            }
        }
        if c1 <= c0 {
            return Err(SpriteError::EmptySprite);
        }
        let w = c1 - c0;
        let h = r1 - r0;
        let mut rgba = Vec::with_capacity((w * h * 4) as usize);
        for r in r0..r1 {
            let start = ((r * self.width + c0) * 4) as usize;
            rgba.extend_from_slice(&self.rgba[start..start + (w * 4) as usize]);
        }
        Ok(Sprite {
            name: self.name.clone(),
            width: w,
            height: h,
            rgba,
            nominal_width_m: self.nominal_width_m,
            nominal_height_m: self.nominal_height_m,
        })
    }

    /// Nearest-neighbor rescale to the given pixel size.
    pub fn scale_to(&self, width: u32, height: u32) -> Sprite {
        let width = width.max(1);
        let height = height.max(1);
        let mut rgba = vec![0u8; (width * height * 4) as usize];
        for r in 0..height {
            let sr = (r as u64 * self.height as u64 / height as u64) as u32;
            for c in 0..width {
                let sc = (c as u64 * self.width as u64 / width as u64) as u32;
                let src = ((sr * self.width + sc) * 4) as usize;
                let dst = ((r * width + c) * 4) as usize;
                rgba[dst..dst + 4].copy_from_slice(&self.rgba[src..src + 4]);
            }
        }
        Sprite {
            name: self.name.clone(),
            width,
            height,
            rgba,
            ..*self
        }
    }

    /// In-plane rotation by `degrees` around the sprite center,
    /// nearest-neighbor, output cropped back to a tight box.
    pub fn rotate(&self, degrees: f64) -> Result<Sprite, SpriteError> {
        if degrees == 0.0 {
            return Ok(self.clone());
        }
        let rad = degrees.to_radians();
        let (sin, cos) = rad.sin_cos();
        let w = self.width as f64;
        let h = self.height as f64;
        let out_w = (w * cos.abs() + h * sin.abs()).ceil() as u32 + 1;
        let out_h = (w * sin.abs() + h * cos.abs()).ceil() as u32 + 1;
        let ocx = out_w as f64 / 2.0;
        let ocy = out_h as f64 / 2.0;
        let icx = w / 2.0;
        let icy = h / 2.0;
        let mut rgba = vec![0u8; (out_w * out_h * 4) as usize];
        for r in 0..out_h {
            for c in 0..out_w {
                // inverse rotation into source coordinates
                let x = c as f64 + 0.5 - ocx;
                let y = r as f64 + 0.5 - ocy;
                let sx = x * cos + y * sin + icx;
                let sy = -x * sin + y * cos + icy;
                if sx < 0.0 || sy < 0.0 || sx >= w || sy >= h {
                    continue;
                }
                let src = ((sy as u32 * self.width + sx as u32) * 4) as usize;
                let dst = ((r * out_w + c) * 4) as usize;
                rgba[dst..dst + 4].copy_from_slice(&self.rgba[src..src + 4]);
            }
        }
        Sprite {
            name: self.name.clone(),
            width: out_w,
            height: out_h,
            rgba,
            ..*self
        }
        .tighten()
    }
}

const COLORS: [(&str, [u8; 3]); 4] = [
    ("red", [180, 40, 35]),
    ("blue", [40, 70, 160]),
    ("gray", [110, 110, 115]),
    ("tan", [190, 160, 110]),
];

const SHAPES: [(&str, f64, f64); 7] = [
    // name, nominal width m, nominal height m
    ("crate", 0.60, 0.50),
    ("barrel", 0.58, 0.90),
    ("tire", 0.70, 0.70),
    ("cone", 0.45, 0.70),
    ("plank", 1.50, 0.30),
    ("ball", 0.50, 0.50),
    ("case", 0.75, 0.55),
];

/// The bundled 28-item sprite library (7 shapes x 4 colors).
pub fn builtin_library() -> Vec<Sprite> {
    let mut out = Vec::with_capacity(28);
    for (shape, w_m, h_m) in SHAPES {
        for (color, rgb) in COLORS {
            out.push(make_sprite(shape, color, rgb, w_m, h_m));
        }
    }
    out
}

pub fn lookup<'a>(library: &'a [Sprite], name: &str) -> Result<&'a Sprite, SpriteError> {
    library
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| SpriteError::SpriteNotFound(name.to_string()))
}

fn make_sprite(shape: &str, color: &str, rgb: [u8; 3], w_m: f64, h_m: f64) -> Sprite {
    let w = 96u32;
    let h = ((96.0 * h_m / w_m).round() as u32).max(16);
    let mut rgba = vec![0u8; (w * h * 4) as usize];
    for r in 0..h {
        for c in 0..w {
            let x = (c as f64 + 0.5) / w as f64 - 0.5; // [-0.5, 0.5]
            let y = (r as f64 + 0.5) / h as f64 - 0.5;
            let inside = match shape {
                "crate" | "plank" | "case" => x.abs() <= 0.48 && y.abs() <= 0.48,
                "barrel" => x.abs() <= 0.45 * (1.0 - (2.0 * y).powi(4) * 0.15),
                "tire" => {
                    let d = (x * x + y * y).sqrt();
                    d <= 0.48 && d >= 0.16
                }
                "cone" => {
                    let half = 0.06 + 0.42 * (y + 0.5);
                    x.abs() <= half && y.abs() <= 0.48
                }
                "ball" => (x * x + y * y).sqrt() <= 0.48,
                _ => unreachable!("unknown shape"),
            };
            if inside {
                // mild deterministic shading so sprites are not flat color
                let shade = 1.0 - 0.35 * (y + 0.5) - 0.1 * ((c / 6 + r / 6) % 2) as f64;
                let i = ((r * w + c) * 4) as usize;
                rgba[i] = (rgb[0] as f64 * shade) as u8;
                rgba[i + 1] = (rgb[1] as f64 * shade) as u8;
                rgba[i + 2] = (rgb[2] as f64 * shade) as u8;
                rgba[i + 3] = 255;
            }
        }
    }
    Sprite {
        name: format!("{shape}_{color}"),
        width: w,
        height: h,
        rgba,
        nominal_width_m: w_m,
        nominal_height_m: h_m,
    }
    .tighten()
    .expect("builtin sprite is non-empty")
}
