//! Class activation maps from image-level supervision.
//!
//! The classifier consumes the global average of the assembled feature
//! maps, so weighting those maps by one label's classifier row and summing
//! over channels localizes the evidence for that label.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::cross_attention::CanModel;
use crate::data::{BBox, Dataset, Window};
use crate::error::{CanError, Result};
use crate::kernels::{resize_forward, Alignment};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    /// `[H, W]`, in `[0, 1]`.
    pub values: Tensor,
    pub label_index: usize,
    pub image_id: usize,
}

impl HeatMap {
    pub fn hw(&self) -> (usize, usize) {
        (self.values.shape()[0], self.values.shape()[1])
    }

    /// Row-major position of the first maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let data = self.values.data();
        let mut best = 0;
        for (i, &v) in data.iter().enumerate() {
            if v > data[best] {
                best = i;
            }
        }
        let w = self.hw().1;
        (best / w, best % w)
    }
}

/// `Σ_c w_c · features_c` before clamping, `[H, W]`.
pub fn cam_raw(features: &Tensor, weights: &[f64]) -> Result<Tensor> {
    let (c, h, w) = match *features.shape() {
        [c, h, w] => (c, h, w),
        ref s => return Err(CanError::shape(format!("cam expects [C, H, W] features, got {s:?}"))),
    };
    if weights.len() != c {
        return Err(CanError::shape(format!(
            "{} classifier weights for {c} feature channels",
            weights.len()
        )));
    }
    let mut out = vec![0.0; h * w];
    for (plane, &wc) in features.data().chunks(h * w).zip(weights) {
        for (o, v) in out.iter_mut().zip(plane) {
            *o += wc * v;
        }
    }
    Tensor::new(&[h, w], out)
}

fn clamp_and_normalize(mut values: Tensor) -> Tensor {
    for v in values.data_mut() {
        *v = v.max(0.0);
    }
    let m = values.data().iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        for v in values.data_mut() {
            *v /= m;
        }
    }
    values
}

/// Weighted channel sum, negatives clamped to zero, max-normalized.
pub fn cam(features: &Tensor, weights: &[f64]) -> Result<HeatMap> {
    Ok(HeatMap {
        values: clamp_and_normalize(cam_raw(features, weights)?),
        label_index: 0,
        image_id: 0,
    })
}

/// Bilinear (pixel-centre aligned) upsampling to image resolution.
pub fn upsample_heatmap(map: &HeatMap, image_hw: (usize, usize)) -> Result<HeatMap> {
    let src = map.hw();
    if image_hw.0 < src.0 || image_hw.1 < src.1 {
        return Err(CanError::config(format!(
            "cannot upsample a {src:?} map to the smaller {image_hw:?}"
        )));
    }
    let data = resize_forward(map.values.data(), 1, src, image_hw, Alignment::HalfPixel)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Ok(HeatMap {
        values: Tensor::new(&[image_hw.0, image_hw.1], data)?,
        label_index: map.label_index,
        image_id: map.image_id,
    })
}

/// Whether the map's peak falls inside `bbox`.
pub fn localization_hit(map: &HeatMap, bbox: &BBox) -> Result<bool> {
    let (h, w) = map.hw();
    if bbox.w == 0 || bbox.h == 0 {
        return Err(CanError::config(format!("degenerate box {bbox:?}")));
    }
    if (bbox.x + bbox.w) as usize > w || (bbox.y + bbox.h) as usize > h {
        return Err(CanError::config(format!("box {bbox:?} exceeds the {h}x{w} map")));
    }
    let (r, c) = map.argmax();
    Ok(bbox.contains(r, c))
}

/// 8-bit binary PGM (`P5`), values scaled to 0..=255.
pub fn to_pgm(map: &HeatMap) -> Vec<u8> {
    let (h, w) = map.hw();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        map.values
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

/// Outcome of localizing one image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationRecord {
    pub image_id: usize,
    pub label: usize,
    pub label_name: String,
    pub probability: f64,
    /// `(row, col)` of the heat-map peak at model-input resolution.
    pub argmax: (usize, usize),
    /// Ground-truth box in the evaluated (centre-cropped) frame.
    pub bbox: Option<BBox>,
    pub hit: Option<bool>,
}

/// Heat maps for one label over every sample selected by `filter`, at the
/// model's input resolution, paired with their hit verdicts.
pub fn localize_dataset(
    model: &CanModel,
    dataset: &Dataset,
    label: usize,
    mut filter: impl FnMut(usize, &crate::data::Sample) -> bool,
) -> Result<Vec<(HeatMap, LocalizationRecord)>> {
    if label >= model.labels() || dataset.labels() != model.labels() {
        return Err(CanError::config(format!(
            "label {label} is not predicted by a {}-label model",
            model.labels()
        )));
    }
    let Some(hw) = dataset.image_hw() else {
        return Ok(Vec::new());
    };
    let size = model.config.input_hw[0];
    let window = Window::center(hw, size);
    let c = model.classifier.in_dim();
    let weights = &model.classifier.weight.data()[label * c..(label + 1) * c];
    let mut out = Vec::new();
    let chosen: Vec<usize> = dataset
        .samples()
        .iter()
        .enumerate()
        .filter(|(i, s)| filter(*i, s))
        .map(|(i, _)| i)
        .collect();
    for chunk in chosen.chunks(64) {
        let images = dataset.image_batch(chunk, &vec![window; chunk.len()])?;
        let (probs, features) = model.predict_with_features(&images)?;
        for (k, &i) in chunk.iter().enumerate() {
            let mut map = cam(&features.index_outer(k), weights)?;
            map.label_index = label;
            map.image_id = i;
            let map = upsample_heatmap(&map, (size, size))?;
            let bbox = dataset.samples()[i].boxes[label]
                .and_then(|b| b.shifted(window.top, window.left, (size, size)));
            let hit = bbox.map(|b| localization_hit(&map, &b)).transpose()?;
            let record = LocalizationRecord {
                image_id: i,
                label,
                label_name: dataset.label_names()[label].clone(),
                probability: probs.data()[k * model.labels() + label],
                argmax: map.argmax(),
                bbox,
                hit,
            };
            out.push((map, record));
        }
    }
    Ok(out)
}

/// Write `<id>_<label>.pgm` and a JSON sidecar per record into `dir`.
pub fn export(dir: impl AsRef<Path>, results: &[(HeatMap, LocalizationRecord)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (map, rec) in results {
        let stem = format!("{:05}_{}", rec.image_id, rec.label_name);
        fs::write(dir.join(format!("{stem}.pgm")), to_pgm(map))?;
        fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(rec)?,
        )?;
    }
    Ok(())
}
