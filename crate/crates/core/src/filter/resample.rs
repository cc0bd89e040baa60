//! Weight normalisation, effective sample size and stratified resampling.

use rand::Rng;

/// Normalises log-weights in place into probabilities and returns
/// `log sum exp(log_w)`. Returns `None` if every entry is `-inf` or NaN.
pub fn normalize_log_weights(log_w: &[f64], out: &mut Vec<f64>) -> Option<f64> {
    let max = log_w
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    out.clear();
    out.extend(log_w.iter().map(|&x| if x.is_nan() { 0.0 } else { (x - max).exp() }));
    let s: f64 = out.iter().sum();
    for w in out.iter_mut() {
        *w /= s;
    }
    Some(max + s.ln())
}

/// `1 / sum w_i^2` for normalised weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// One uniform per stratum `[(i + u_i) / n_out]`, inverted through the
/// cumulative weights.
pub fn stratified_resample<R: Rng + ?Sized>(weights: &[f64], n_out: usize, rng: &mut R) -> Vec<usize> {
    let mut idx = Vec::with_capacity(n_out);
    stratified_resample_into(weights, n_out, rng, &mut idx);
    idx
}

pub fn stratified_resample_into<R: Rng + ?Sized>(
    weights: &[f64],
    n_out: usize,
    rng: &mut R,
    idx: &mut Vec<usize>,
) {
    idx.clear();
    let last = weights.len() - 1;
    let mut j = 0;
    let mut cum = weights[0];
    for i in 0..n_out {
        let u = (i as f64 + rng.random::<f64>()) / n_out as f64;
        while u > cum && j < last {
            j += 1;
            cum += weights[j];
        }
        idx.push(j);
    }
}

/// Index drawn proportionally to `weights` from one uniform.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cum += w;
        if u < cum {
            return i;
        }
    }
    weights.len() - 1
}

/// Weighted empirical quantile: the smallest value whose cumulative
/// weight reaches `q`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cum = 0.0;
    for &i in &order {
        cum += weights[i];
        if cum >= q {
            return values[i];
        }
    }
    values[*order.last().expect("nonempty")]
}
