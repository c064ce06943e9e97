use super::NumError;

/// Temperature-scaled softmax `exp(z_i / T) / sum_j exp(z_j / T)`, max-shifted.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>, NumError> {
    if !(temperature > 0.0) {
        return Err(NumError::NonPositiveTemperature(temperature));
    }
    if temperature == 1.0 {
        return Ok(softmax(logits));
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    Ok(softmax(&scaled))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    out.iter_mut().for_each(|o| *o *= inv);
}

/// `log(sum_j exp(z_j))`, max-shifted.
pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// `-ln softmax(logits)[target]` at temperature 1.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64, NumError> {
    if target >= logits.len() {
        return Err(NumError::TargetOutOfRange { target, n: logits.len() });
    }
    Ok(log_sum_exp(logits) - logits[target])
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}
