use crate::scene_sim::CapturedImage;

/// Side of the pooled feature map; features have `POOL_SIDE²` entries.
pub const POOL_SIDE: usize = 8;
pub const FEATURE_DIM: usize = POOL_SIDE * POOL_SIDE;
const STD_EPS: f64 = 1e-6;

/// Pooled, per-image standardized capture features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// 8×8 block mean-pool of the capture, standardized to zero mean and unit
/// (population) variance. A constant image maps to the zero vector.
pub fn extract_features(image: &CapturedImage) -> FeatureVector {
    let values: Vec<f64> = image.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    extract_from_values(&values, image.height, image.width)
}

/// Same as [`extract_features`] on raw row-major values.
pub fn extract_from_values(values: &[f64], height: usize, width: usize) -> FeatureVector {
    let mut pooled = vec![0.0; FEATURE_DIM];
    for by in 0..POOL_SIDE {
        let (y0, y1) = (
            by * height / POOL_SIDE,
            ((by + 1) * height / POOL_SIDE).max(by * height / POOL_SIDE + 1),
        );
        for bx in 0..POOL_SIDE {
            let (x0, x1) = (
                bx * width / POOL_SIDE,
                ((bx + 1) * width / POOL_SIDE).max(bx * width / POOL_SIDE + 1),
            );
            let mut sum = 0.0;
            let mut n = 0usize;
            for y in y0..y1.min(height) {
                for x in x0..x1.min(width) {
                    sum += values[y * width + x];
                    n += 1;
                }
            }
            pooled[by * POOL_SIDE + bx] = if n > 0 { sum / n as f64 } else { 0.0 };
        }
    }
    standardize(pooled)
}

fn standardize(mut v: Vec<f64>) -> FeatureVector {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= STD_EPS {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        v.iter_mut().for_each(|x| *x = (*x - mean) / std);
    }
    FeatureVector(v)
}
