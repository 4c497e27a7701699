//! Reference implementations written independently of the library, used as
//! oracles by the integration tests.
#![allow(dead_code)]

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// MASE from nested vectors indexed `[t][c]`, with plain loops.
pub fn brute_mase(forecast: &[Vec<f64>], actual: &[Vec<f64>], context: &[Vec<f64>], lag: usize) -> f64 {
    let channels = actual[0].len();
    let mut total = 0.0;
    for c in 0..channels {
        let mut naive = 0.0;
        for t in lag..context.len() {
            naive += (context[t][c] - context[t - lag][c]).abs();
        }
        naive /= (context.len() - lag) as f64;
        let naive = naive.max(1e-8);
        let mut err = 0.0;
        for t in 0..actual.len() {
            err += (forecast[t][c] - actual[t][c]).abs();
        }
        total += err / actual.len() as f64 / naive;
    }
    total / channels as f64
}

/// Rows `[from, to)` of a matrix as nested vectors.
pub fn rows(x: &ndarray::ArrayView2<'_, f64>, from: usize, to: usize) -> Vec<Vec<f64>> {
    (from..to).map(|t| x.row(t).to_vec()).collect()
}

/// Population mean and standard deviation.
pub fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}
