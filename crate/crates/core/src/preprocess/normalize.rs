/// Rescales a slice to zero mean and unit (population) variance. Slices with
/// standard deviation below `1e-8` become all zeros.
pub fn gaussian_normalize(slice: &[f32]) -> Vec<f32> {
    if slice.is_empty() {
        return Vec::new();
    }
    let n = slice.len() as f64;
    let mean = slice.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = slice
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if !(std >= 1e-8) {
        return vec![0.0; slice.len()];
    }
    slice
        .iter()
        .map(|&v| ((v as f64 - mean) / std) as f32)
        .collect()
}
