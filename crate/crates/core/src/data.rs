//! Synthetic multi-label image data with controllable per-label prevalence
//! and known object boxes, its binary file format, and group-aware splits.
//!
//! Every label is drawn as its own glyph family (square, ring, cross, ...)
//! at a random position over uniform background noise. Samples are
//! clustered into small groups that play the role of patients: splits never
//! divide a group.
//!
//! File layout (all integers little-endian `u32`):
//!
//! ```text
//! "CAND" version n_samples L H W
//! per sample: group_id, L label bytes, L × (x, y, w, h) box table
//!             (all zero for absent labels), H·W image values as f32
//! trailer:    byte length + UTF-8 JSON {label_names, provenance}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{checked_u32, put_f32, put_u32, ByteReader};
use crate::error::{CanError, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 4] = b"CAND";
pub const DATASET_VERSION: u32 = 1;

const GLYPHS: [&str; 6] = ["square", "ring", "cross", "triangle", "saltire", "bar"];

/// Axis-aligned box in pixel coordinates; covers `x..x+w` by `y..y+h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(CanError::config(format!("degenerate box {w}x{h}")));
        }
        Ok(BBox { x, y, w, h })
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        let (x, y) = (self.x as usize, self.y as usize);
        col >= x && col < x + self.w as usize && row >= y && row < y + self.h as usize
    }

    /// The box in a window whose origin sits at `(top, left)`, clipped to
    /// `size`. `None` if nothing of it remains.
    pub fn shifted(&self, top: usize, left: usize, size: (usize, usize)) -> Option<BBox> {
        let x0 = (self.x as usize).max(left);
        let y0 = (self.y as usize).max(top);
        let x1 = (self.x as usize + self.w as usize).min(left + size.1);
        let y1 = (self.y as usize + self.h as usize).min(top + size.0);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        Some(BBox {
            x: (x0 - left) as u32,
            y: (y0 - top) as u32,
            w: (x1 - x0) as u32,
            h: (y1 - y0) as u32,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[1, H, W]`, values in `[0, 1]`.
    pub image: Tensor,
    pub labels: Vec<u8>,
    /// One box per positive label, `None` for negatives.
    pub boxes: Vec<Option<BBox>>,
    pub group_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    label_names: Vec<String>,
    pos_counts: Vec<usize>,
    neg_counts: Vec<usize>,
    /// JSON text describing how the data was produced.
    provenance: String,
}

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub hw: usize,
    pub prevalences: Vec<f64>,
    #[serde(default = "default_noise")]
    pub noise_level: f64,
    /// Inclusive glyph edge length range in pixels.
    #[serde(default = "default_glyph_size")]
    pub glyph_size: (usize, usize),
    /// Glyph intensity range added on top of the background.
    #[serde(default = "default_intensity")]
    pub intensity: (f64, f64),
    /// Unlabelled blobs drawn per image to make detection harder.
    #[serde(default)]
    pub distractors: usize,
}

fn default_noise() -> f64 {
    0.3
}

fn default_glyph_size() -> (usize, usize) {
    (8, 16)
}

fn default_intensity() -> (f64, f64) {
    (0.5, 0.8)
}

impl GenConfig {
    pub fn new(seed: u64, n_samples: usize, hw: usize, prevalences: &[f64]) -> Self {
        GenConfig {
            seed,
            n_samples,
            hw,
            prevalences: prevalences.to_vec(),
            noise_level: default_noise(),
            glyph_size: default_glyph_size(),
            intensity: default_intensity(),
            distractors: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prevalences.is_empty() {
            return Err(CanError::config("at least one label prevalence is required"));
        }
        for (l, &p) in self.prevalences.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(CanError::config(format!("prevalence {p} of label {l} is outside [0, 1]")));
            }
        }
        if self.hw < 32 {
            return Err(CanError::config(format!("image size {} is below the minimum of 32", self.hw)));
        }
        if self.n_samples == 0 {
            return Err(CanError::config("sample count must be positive"));
        }
        let (lo, hi) = self.glyph_size;
        if lo < 3 || lo > hi || hi > self.hw {
            return Err(CanError::config(format!(
                "glyph size range {lo}..={hi} must satisfy 3 <= lo <= hi <= {}",
                self.hw
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return Err(CanError::config("noise level must lie in [0, 1]"));
        }
        let (ilo, ihi) = self.intensity;
        if !(ilo > 0.0 && ilo <= ihi && ihi <= 1.0) {
            return Err(CanError::config("intensity range must satisfy 0 < lo <= hi <= 1"));
        }
        Ok(())
    }
}

/// Name of the glyph family drawn for label `l`.
pub fn glyph_name(l: usize) -> String {
    let base = GLYPHS[l % GLYPHS.len()];
    if l < GLYPHS.len() {
        base.to_string()
    } else {
        format!("{base}{}", l / GLYPHS.len())
    }
}

/// Glyph mask in an `s × s` cell; later repeats of a family are rotated.
fn glyph_mask(family: usize, s: usize) -> Vec<bool> {
    let variant = family / GLYPHS.len();
    let f = s as f64;
    let c = (f - 1.0) / 2.0;
    let thick = (s / 4).max(1);
    let mut m = vec![false; s * s];
    for r in 0..s {
        for col in 0..s {
            let (rr, cc) = if variant % 2 == 1 { (col, r) } else { (r, col) };
            let (y, x) = (rr as f64, cc as f64);
            let on = match family % GLYPHS.len() {
                0 => true,
                1 => {
                    let d = ((y - c).powi(2) + (x - c).powi(2)).sqrt();
                    d <= f / 2.0 && d >= f / 2.0 - (s as f64 / 5.0).max(1.0)
                }
                2 => {
                    let lo = (s - thick) / 2;
                    (rr >= lo && rr < lo + thick) || (cc >= lo && cc < lo + thick)
                }
                3 => {
                    // apex at the top, base along the bottom row
                    (x - c).abs() <= (y + 1.0) / 2.0
                }
                4 => {
                    let t = thick as f64 / 2.0 + 0.25;
                    (x - y).abs() <= t || (x + y - (f - 1.0)).abs() <= t
                }
                _ => {
                    let lo = s / 3;
                    rr >= lo && rr < s - lo
                }
            };
            m[r * s + col] = on;
        }
    }
    m
}

fn f32_exact(v: f64) -> f64 {
    v as f32 as f64
}

/// Deterministic synthetic dataset.
pub fn generate(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hw = cfg.hw;
    let l_count = cfg.prevalences.len();
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut group_id = 0u32;
    let mut group_left = rng.random_range(1..=3usize);
    for _ in 0..cfg.n_samples {
        if group_left == 0 {
            group_id += 1;
            group_left = rng.random_range(1..=3usize);
        }
        group_left -= 1;

        let mut pixels: Vec<f64> = (0..hw * hw)
            .map(|_| rng.random::<f64>() * cfg.noise_level)
            .collect();
        for _ in 0..cfg.distractors {
            let radius = rng.random_range(1.5..3.5f64);
            let cy = rng.random_range(0.0..hw as f64);
            let cx = rng.random_range(0.0..hw as f64);
            let amp = rng.random_range(cfg.intensity.0..=cfg.intensity.1);
            for r in 0..hw {
                for c in 0..hw {
                    let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                    if d2 <= radius * radius {
                        pixels[r * hw + c] += amp;
                    }
                }
            }
        }
        let labels: Vec<u8> = cfg
            .prevalences
            .iter()
            .map(|&p| u8::from(rng.random::<f64>() < p))
            .collect();
        let mut boxes = vec![None; l_count];
        for (l, _) in labels.iter().enumerate().filter(|(_, &y)| y == 1) {
            let s = rng.random_range(cfg.glyph_size.0..=cfg.glyph_size.1);
            let top = rng.random_range(0..=hw - s);
            let left = rng.random_range(0..=hw - s);
            let amp = rng.random_range(cfg.intensity.0..=cfg.intensity.1);
            let mask = glyph_mask(l, s);
            let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
            for r in 0..s {
                for c in 0..s {
                    if mask[r * s + c] {
                        pixels[(top + r) * hw + left + c] += amp;
                        r0 = r0.min(r);
                        c0 = c0.min(c);
                        r1 = r1.max(r);
                        c1 = c1.max(c);
                    }
                }
            }
            boxes[l] = Some(BBox {
                x: (left + c0) as u32,
                y: (top + r0) as u32,
                w: (c1 - c0 + 1) as u32,
                h: (r1 - r0 + 1) as u32,
            });
        }
        let data = pixels.into_iter().map(|v| f32_exact(v.clamp(0.0, 1.0))).collect();
        samples.push(Sample {
            image: Tensor::new(&[1, hw, hw], data)?,
            labels,
            boxes,
            group_id,
        });
    }
    let names = (0..l_count).map(glyph_name).collect();
    let provenance = serde_json::json!({ "generator": cfg }).to_string();
    Dataset::new(samples, names, provenance)
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, label_names: Vec<String>, provenance: String) -> Result<Self> {
        let l_count = label_names.len();
        let first_shape = samples.first().map(|s| s.image.shape().to_vec());
        for (i, s) in samples.iter().enumerate() {
            if s.labels.len() != l_count || s.boxes.len() != l_count {
                return Err(CanError::shape(format!(
                    "sample {i} has {} labels, dataset declares {l_count}",
                    s.labels.len()
                )));
            }
            if Some(s.image.shape().to_vec()) != first_shape || s.image.rank() != 3 {
                return Err(CanError::shape(format!(
                    "sample {i} image shape {:?} differs from {first_shape:?}",
                    s.image.shape()
                )));
            }
            for (l, (&y, b)) in s.labels.iter().zip(&s.boxes).enumerate() {
                if y > 1 {
                    return Err(CanError::config(format!("sample {i} label {l} is {y}, not 0/1")));
                }
                if (y == 1) != b.is_some() {
                    return Err(CanError::config(format!(
                        "sample {i} label {l}: boxes must accompany exactly the positive labels"
                    )));
                }
            }
        }
        let mut pos_counts = vec![0; l_count];
        for s in &samples {
            for (c, &y) in pos_counts.iter_mut().zip(&s.labels) {
                *c += y as usize;
            }
        }
        let neg_counts = pos_counts.iter().map(|p| samples.len() - p).collect();
        Ok(Dataset {
            samples,
            label_names,
            pos_counts,
            neg_counts,
            provenance,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn pos_counts(&self) -> &[usize] {
        &self.pos_counts
    }

    pub fn neg_counts(&self) -> &[usize] {
        &self.neg_counts
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Image extent `(H, W)`; `None` for an empty dataset.
    pub fn image_hw(&self) -> Option<(usize, usize)> {
        self.samples.first().map(|s| (s.image.shape()[1], s.image.shape()[2]))
    }

    pub fn group_ids(&self) -> BTreeSet<u32> {
        self.samples.iter().map(|s| s.group_id).collect()
    }

    /// Labels of the selected samples as an `[N, L]` 0/1 tensor.
    pub fn label_tensor(&self, indices: &[usize]) -> Result<Tensor> {
        let data = indices
            .iter()
            .flat_map(|&i| self.samples[i].labels.iter().map(|&y| y as f64))
            .collect();
        Tensor::new(&[indices.len(), self.labels()], data)
    }

    /// Images of the selected samples as `[N, 1, size, size]`, cropped at
    /// the given window per sample.
    pub fn image_batch(&self, indices: &[usize], crop: &[Window]) -> Result<Tensor> {
        let crops = indices
            .iter()
            .zip(crop)
            .map(|(&i, w)| w.apply(&self.samples[i].image))
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack(&crops)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (h, w) = self.image_hw().unwrap_or((0, 0));
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        put_u32(&mut out, DATASET_VERSION);
        put_u32(&mut out, checked_u32(self.len(), "sample count")?);
        put_u32(&mut out, checked_u32(self.labels(), "label count")?);
        put_u32(&mut out, checked_u32(h, "height")?);
        put_u32(&mut out, checked_u32(w, "width")?);
        for s in &self.samples {
            put_u32(&mut out, s.group_id);
            out.extend_from_slice(&s.labels);
            for b in &s.boxes {
                let b = b.unwrap_or(BBox { x: 0, y: 0, w: 0, h: 0 });
                for v in [b.x, b.y, b.w, b.h] {
                    put_u32(&mut out, v);
                }
            }
            for &v in s.image.data() {
                put_f32(&mut out, v as f32);
            }
        }
        let trailer = serde_json::to_vec(&Trailer {
            label_names: self.label_names.clone(),
            provenance: self.provenance.clone(),
        })?;
        put_u32(&mut out, checked_u32(trailer.len(), "trailer length")?);
        out.extend_from_slice(&trailer);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(DATASET_MAGIC)?;
        let version = r.u32("version")?;
        if version != DATASET_VERSION {
            return Err(CanError::Version {
                found: version,
                expected: DATASET_VERSION,
            });
        }
        let n = r.u32("sample count")? as usize;
        let l_count = r.u32("label count")? as usize;
        let h = r.u32("height")? as usize;
        let w = r.u32("width")? as usize;
        if n > 0 && (h == 0 || w == 0) {
            return Err(r.error("zero image extent"));
        }
        let mut samples = Vec::with_capacity(n.min(1 << 20));
        for i in 0..n {
            let group_id = r.u32("group id")?;
            let mut labels = Vec::with_capacity(l_count);
            for _ in 0..l_count {
                let y = r.u8("label byte")?;
                if y > 1 {
                    return Err(r.error(format!("sample {i}: label byte {y} is not 0/1")));
                }
                labels.push(y);
            }
            let mut boxes = Vec::with_capacity(l_count);
            for &y in &labels {
                let (bx, by, bw, bh) = (r.u32("box")?, r.u32("box")?, r.u32("box")?, r.u32("box")?);
                let b = (bw > 0 && bh > 0).then_some(BBox { x: bx, y: by, w: bw, h: bh });
                if (y == 1) != b.is_some() {
                    return Err(r.error(format!("sample {i}: box table disagrees with labels")));
                }
                boxes.push(b);
            }
            let mut data = Vec::with_capacity(h * w);
            for _ in 0..h * w {
                data.push(r.f32("pixel")? as f64);
            }
            samples.push(Sample {
                image: Tensor::new(&[1, h, w], data)?,
                labels,
                boxes,
                group_id,
            });
        }
        let (label_names, provenance) = if r.is_empty() {
            ((0..l_count).map(glyph_name).collect(), String::new())
        } else {
            let len = r.u32("trailer length")? as usize;
            let at = r.offset();
            let raw = r.take(len, "trailer")?;
            let t: Trailer = serde_json::from_slice(raw).map_err(|e| CanError::Parse {
                offset: at,
                message: format!("bad trailer: {e}"),
            })?;
            if t.label_names.len() != l_count {
                return Err(CanError::Parse {
                    offset: at,
                    message: "trailer names a different number of labels".into(),
                });
            }
            if !r.is_empty() {
                return Err(r.error("trailing bytes after dataset"));
            }
            (t.label_names, t.provenance)
        };
        Dataset::new(samples, label_names, provenance)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    fn subset(&self, keep: impl Fn(&Sample) -> bool, tag: &str) -> Result<Dataset> {
        let samples = self.samples.iter().filter(|s| keep(s)).cloned().collect();
        let provenance = serde_json::json!({ "split": tag, "parent": self.provenance }).to_string();
        Dataset::new(samples, self.label_names.clone(), provenance)
    }
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    label_names: Vec<String>,
    provenance: String,
}

/// Square crop window with its top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub top: usize,
    pub left: usize,
    pub size: usize,
}

impl Window {
    pub fn center(hw: (usize, usize), size: usize) -> Self {
        Window {
            top: (hw.0 - size) / 2,
            left: (hw.1 - size) / 2,
            size,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, hw: (usize, usize), size: usize) -> Self {
        Window {
            top: rng.random_range(0..=hw.0 - size),
            left: rng.random_range(0..=hw.1 - size),
            size,
        }
    }

    pub fn apply(&self, image: &Tensor) -> Result<Tensor> {
        let [c, h, w] = match *image.shape() {
            [c, h, w] => [c, h, w],
            ref s => return Err(CanError::shape(format!("crop expects [C, H, W], got {s:?}"))),
        };
        if self.top + self.size > h || self.left + self.size > w {
            return Err(CanError::shape(format!(
                "crop {self:?} exceeds a {h}x{w} image"
            )));
        }
        if self.size == h && self.size == w {
            return Ok(image.clone());
        }
        let mut out = Vec::with_capacity(c * self.size * self.size);
        for ch in 0..c {
            for r in self.top..self.top + self.size {
                let start = (ch * h + r) * w + self.left;
                out.extend_from_slice(&image.data()[start..start + self.size]);
            }
        }
        Tensor::new(&[c, self.size, self.size], out)
    }
}

/// Partition by group id into train/validation/test. Groups are shuffled
/// with `seed` and dealt out by count, so no group straddles two splits.
pub fn split(dataset: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (ft, fv, fe) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fe > 0.0) || ((ft + fv + fe) - 1.0).abs() > 1e-9 {
        return Err(CanError::config(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    let mut groups: Vec<u32> = dataset.group_ids().into_iter().collect();
    let g = groups.len();
    if g < 3 {
        return Err(CanError::config(format!("{g} groups cannot fill three splits")));
    }
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_train = ((ft * g as f64).round() as usize).clamp(1, g - 2);
    let n_val = ((fv * g as f64).round() as usize).clamp(1, g - n_train - 1);
    if n_train + n_val >= g {
        n_train = g - n_val - 1;
    }
    let mut assignment = BTreeMap::new();
    for (i, gid) in groups.into_iter().enumerate() {
        let part = if i < n_train {
            0
        } else if i < n_train + n_val {
            1
        } else {
            2
        };
        assignment.insert(gid, part);
    }
    let pick = |part: u8, tag: &str| dataset.subset(|s| assignment[&s.group_id] == part, tag);
    Ok((pick(0, "train")?, pick(1, "val")?, pick(2, "test")?))
}
