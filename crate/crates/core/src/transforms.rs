//! Geometric preprocessing: center crop, bilinear resize and seeded affine
//! augmentation applied identically to an image and its masks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Grid, ImageTensor, PIXEL_MIN};
use crate::masks::MaskSet;
use crate::rng::SeededRng;

/// Crop the largest centered square. Odd remainders put the extra row or
/// column after the window.
pub fn center_crop(img: &Grid) -> Grid {
    let side = img.rows().min(img.cols());
    let top = (img.rows() - side) / 2;
    let left = (img.cols() - side) / 2;
    Grid::from_fn(side, side, |r, c| img.get(top + r, left + c))
}

/// Bilinear resize to `res x res`.
///
/// Output pixel `i` samples source coordinate `(i + 0.5) * S / res - 0.5`,
/// clamped to `[0, S - 1]`, independently on each axis.
pub fn resize_bilinear(img: &Grid, res: usize) -> Result<Grid> {
    if res == 0 {
        return Err(Error::InvalidTransform("resize target must be >= 1".into()));
    }
    let ys = axis_taps(img.rows(), res);
    let xs = axis_taps(img.cols(), res);
    Ok(Grid::from_fn(res, res, |r, c| {
        let (y0, y1, fy) = ys[r];
        let (x0, x1, fx) = xs[c];
        let top = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
        let bottom = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    }))
}

fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = s.floor();
            let i0 = lo as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - lo)
        })
        .collect()
}

/// Bounds for random affine augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub max_rotation_deg: f64,
    /// Maximum translation as a fraction of the image side.
    pub max_translation_frac: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub image_fill: f64,
    pub mask_fill: f64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            max_rotation_deg: 45.0,
            max_translation_frac: 0.15,
            scale_min: 0.9,
            scale_max: 1.1,
            image_fill: PIXEL_MIN,
            mask_fill: 0.0,
        }
    }
}

impl AugmentationSpec {
    /// A spec whose draws are always the identity transform.
    pub fn identity() -> Self {
        AugmentationSpec {
            max_rotation_deg: 0.0,
            max_translation_frac: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.max_rotation_deg >= 0.0
            && self.max_translation_frac >= 0.0
            && self.scale_min > 0.0
            && self.scale_min <= self.scale_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTransform(format!("bad augmentation bounds {self:?}")))
        }
    }
}

/// One concrete draw of affine parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub rotation_deg: f64,
    /// Horizontal shift in pixels.
    pub tx: f64,
    /// Vertical shift in pixels.
    pub ty: f64,
    pub scale: f64,
}

/// Draw `(rotation, tx, ty, scale)` in that order from a fresh generator.
pub fn draw_params(spec: &AugmentationSpec, seed: u64, rows: usize, cols: usize) -> AffineParams {
    let mut rng = SeededRng::new(seed);
    let rot = spec.max_rotation_deg;
    let tx_max = spec.max_translation_frac * cols as f64;
    let ty_max = spec.max_translation_frac * rows as f64;
    AffineParams {
        rotation_deg: rng.uniform(-rot, rot),
        tx: rng.uniform(-tx_max, tx_max),
        ty: rng.uniform(-ty_max, ty_max),
        scale: rng.uniform(spec.scale_min, spec.scale_max),
    }
}

/// Warp a grid: rotate about the center, scale, then translate. Sampling is
/// bilinear via the inverse map; taps outside the grid read `fill`.
pub fn warp_affine(img: &Grid, p: &AffineParams, fill: f64) -> Grid {
    let (rows, cols) = img.shape();
    let cy = (rows as f64 - 1.0) / 2.0;
    let cx = (cols as f64 - 1.0) / 2.0;
    let (sin, cos) = p.rotation_deg.to_radians().sin_cos();
    let tap = |r: i64, c: i64| -> f64 {
        if r < 0 || c < 0 || r >= rows as i64 || c >= cols as i64 {
            fill
        } else {
            img.get(r as usize, c as usize)
        }
    };
    Grid::from_fn(rows, cols, |r, c| {
        let dx = c as f64 - cx - p.tx;
        let dy = r as f64 - cy - p.ty;
        let sx = (cos * dx + sin * dy) / p.scale + cx;
        let sy = (-sin * dx + cos * dy) / p.scale + cy;
        let x0 = sx.floor();
        let y0 = sy.floor();
        let fx = sx - x0;
        let fy = sy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let top = tap(y0, x0) * (1.0 - fx) + tap(y0, x0 + 1) * fx;
        let bottom = tap(y0 + 1, x0) * (1.0 - fx) + tap(y0 + 1, x0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Apply one random affine warp, drawn from `seed`, to the image and to
/// every mask.
pub fn augment(
    img: &ImageTensor,
    masks: Option<&MaskSet>,
    seed: u64,
    spec: &AugmentationSpec,
) -> Result<(ImageTensor, Option<MaskSet>)> {
    spec.validate()?;
    if let Some(ms) = masks {
        for g in ms.grids() {
            img.check_same_shape(g)?;
        }
    }
    let params = draw_params(spec, seed, img.rows(), img.cols());
    let out = warp_affine(img, &params, spec.image_fill);
    let masks = masks.map(|ms| ms.map_grids(|g| warp_affine(g, &params, spec.mask_fill)));
    Ok((out, masks))
}

/// A single preprocessing step.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    CenterCrop,
    Resize(usize),
    Augment { spec: AugmentationSpec, seed: Option<u64> },
}

/// An ordered list of steps, at most one of which augments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransformChain {
    steps: Vec<Step>,
}

impl TransformChain {
    pub fn new(steps: Vec<Step>) -> Result<Self> {
        let mut augments = 0;
        for s in &steps {
            match s {
                Step::Resize(0) => return Err(Error::InvalidTransform("resize target must be >= 1".into())),
                Step::Augment { spec, .. } => {
                    spec.validate()?;
                    augments += 1;
                }
                _ => {}
            }
        }
        if augments > 1 {
            return Err(Error::InvalidTransform("at most one augment step".into()));
        }
        Ok(TransformChain { steps })
    }

    /// The usual evaluation chain: center crop then resize.
    pub fn crop_resize(res: usize) -> Result<Self> {
        Self::new(vec![Step::CenterCrop, Step::Resize(res)])
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Run every step on the image and, in lockstep, on the masks.
    ///
    /// `seed` is used by the augment step unless the step pins its own.
    pub fn apply(
        &self,
        img: ImageTensor,
        masks: Option<MaskSet>,
        seed: u64,
    ) -> Result<(ImageTensor, Option<MaskSet>)> {
        self.run(img, masks, seed, true)
    }

    /// Like [`TransformChain::apply`] but `seed` overrides any pinned seed.
    pub fn apply_with_seed(
        &self,
        img: ImageTensor,
        masks: Option<MaskSet>,
        seed: u64,
    ) -> Result<(ImageTensor, Option<MaskSet>)> {
        self.run(img, masks, seed, false)
    }

    /// Seed pinned by the augment step, if any.
    pub fn pinned_seed(&self) -> Option<u64> {
        self.steps.iter().find_map(|s| match s {
            Step::Augment { seed, .. } => *seed,
            _ => None,
        })
    }

    fn run(
        &self,
        img: ImageTensor,
        masks: Option<MaskSet>,
        seed: u64,
        respect_pinned: bool,
    ) -> Result<(ImageTensor, Option<MaskSet>)> {
        let mut img = img;
        let mut masks = masks;
        for step in &self.steps {
            match step {
                Step::CenterCrop => {
                    img = center_crop(&img);
                    masks = masks.map(|m| m.map_grids(center_crop));
                }
                Step::Resize(res) => {
                    img = resize_bilinear(&img, *res)?;
                    masks = masks.map(|m| m.try_map_grids(|g| resize_bilinear(g, *res))).transpose()?;
                }
                Step::Augment { spec, seed: pinned } => {
                    let seed = match pinned {
                        Some(p) if respect_pinned => *p,
                        _ => seed,
                    };
                    let (i, m) = augment(&img, masks.as_ref(), seed, spec)?;
                    img = i;
                    masks = m;
                }
            }
        }
        Ok((img, masks))
    }
}

impl FromStr for TransformChain {
    type Err = Error;

    /// Parse e.g. `crop,resize:224,augment:seed=7`. Augment also accepts
    /// `rot=`, `trans=`, `scale=` (half-width of the scale range) options.
    fn from_str(s: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let mut parts = tok.split(':');
            let head = parts.next().unwrap_or_default();
            match head {
                "crop" | "center_crop" => steps.push(Step::CenterCrop),
                "resize" => {
                    let res = parts
                        .next()
                        .and_then(|v| v.parse::<usize>().ok())
                        .ok_or_else(|| Error::InvalidTransform(format!("bad resize step `{tok}`")))?;
                    steps.push(Step::Resize(res));
                }
                "augment" | "aug" => {
                    let mut spec = AugmentationSpec::default();
                    let mut seed = None;
                    for kv in parts {
                        let (k, v) = kv
                            .split_once('=')
                            .ok_or_else(|| Error::InvalidTransform(format!("bad option `{kv}`")))?;
                        let bad = || Error::InvalidTransform(format!("bad value in `{kv}`"));
                        match k {
                            "seed" => seed = Some(v.parse().map_err(|_| bad())?),
                            "rot" => spec.max_rotation_deg = v.parse().map_err(|_| bad())?,
                            "trans" => spec.max_translation_frac = v.parse().map_err(|_| bad())?,
                            "scale" => {
                                let half: f64 = v.parse().map_err(|_| bad())?;
                                spec.scale_min = 1.0 - half;
                                spec.scale_max = 1.0 + half;
                            }
                            _ => return Err(Error::InvalidTransform(format!("unknown option `{k}`"))),
                        }
                    }
                    steps.push(Step::Augment { spec, seed });
                }
                other => return Err(Error::InvalidTransform(format!("unknown step `{other}`"))),
            }
        }
        TransformChain::new(steps)
    }
}

impl fmt::Display for TransformChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .steps
            .iter()
            .map(|s| match s {
                Step::CenterCrop => "crop".to_string(),
                Step::Resize(r) => format!("resize:{r}"),
                Step::Augment { spec, seed } => {
                    let mut s = "augment".to_string();
                    if let Some(seed) = seed {
                        s.push_str(&format!(":seed={seed}"));
                    }
                    let d = AugmentationSpec::default();
                    if spec.max_rotation_deg != d.max_rotation_deg {
                        s.push_str(&format!(":rot={}", spec.max_rotation_deg));
                    }
                    if spec.max_translation_frac != d.max_translation_frac {
                        s.push_str(&format!(":trans={}", spec.max_translation_frac));
                    }
                    if spec.scale_min != d.scale_min || spec.scale_max != d.scale_max {
                        s.push_str(&format!(":scale={}", (spec.scale_max - spec.scale_min) / 2.0));
                    }
                    s
                }
            })
            .collect();
        f.write_str(&parts.join(","))
    }
}
