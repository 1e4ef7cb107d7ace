//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the code paths it checks.

#![allow(dead_code)]

/// Straight-line shape simulation of a genome: floor((d - f) / s) + 1 for
/// every conv and pool, zero padding, stop at the first non-positive size.
/// Returns (cells kept, final height, final width, final channels) before
/// the dense tail.
pub fn simulate_shapes(genes: &[u32], input: (i64, i64, i64)) -> (usize, i64, i64, i64) {
    let (mut h, mut w, mut c) = input;
    let mut kept = 0;
    'cells: for cell in genes.chunks(4) {
        let (filters, size, conv_s, pool_s) = (cell[0] as i64, cell[1] as i64, cell[2] as i64, cell[3] as i64);
        if size > 0 {
            let nh = (h - size).div_euclid(conv_s) + 1;
            let nw = (w - size).div_euclid(conv_s) + 1;
            if nh < 1 || nw < 1 {
                break 'cells;
            }
            h = nh;
            w = nw;
            c = filters;
        }
        kept += 1;
        if pool_s > 1 {
            let nh = (h - pool_s).div_euclid(pool_s) + 1;
            let nw = (w - pool_s).div_euclid(pool_s) + 1;
            if nh < 1 || nw < 1 {
                break 'cells;
            }
            h = nh;
            w = nw;
        }
    }
    if h >= 2 && w >= 2 {
        h = (h - 2) / 2 + 1;
        w = (w - 2) / 2 + 1;
    }
    (kept, h, w, c)
}

/// Maximum over every window position of the weighted mean, by direct
/// summation. Shorter-than-window series give their plain mean.
pub fn brute_force_wf(b: &[f64], w: &[f64]) -> f64 {
    if b.len() < w.len() {
        return b.iter().sum::<f64>() / b.len() as f64;
    }
    let den: f64 = w.iter().sum();
    let mut best = f64::NEG_INFINITY;
    for start in 0..=(b.len() - w.len()) {
        let mut num = 0.0;
        for u in 0..w.len() {
            num += w[u] * b[start + u];
        }
        best = best.max(num / den);
    }
    best
}

/// Per-sample counting of accuracy, precision, recall and F-beta.
pub fn naive_metrics(pred: &[bool], truth: &[bool], beta: f64) -> (f64, f64, f64, f64) {
    let mut correct = 0.0;
    let mut tp = 0.0;
    let mut pred_pos = 0.0;
    let mut real_pos = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            correct += 1.0;
        }
        if p && t {
            tp += 1.0;
        }
        if p {
            pred_pos += 1.0;
        }
        if t {
            real_pos += 1.0;
        }
    }
    let acc = correct / pred.len() as f64;
    let prec = if pred_pos > 0.0 { tp / pred_pos } else { 0.0 };
    let rec = if real_pos > 0.0 { tp / real_pos } else { 0.0 };
    let b2 = beta * beta;
    let f = if b2 * prec + rec > 0.0 { (1.0 + b2) * prec * rec / (b2 * prec + rec) } else { 0.0 };
    (acc, prec, rec, f)
}
