//! Independent weighted least squares used to check the QR fit.

use phonolearn_core::analytics::Observation;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Weighted least squares through the normal equations, solved by Gaussian
/// elimination with partial pivoting. Returns (beta, R², F).
pub fn normal_equation_oracle(obs: &[Observation]) -> ([f64; 4], f64, f64) {
    let row = |o: &Observation| [1.0, o.pwld, o.word_length, o.existence_code];
    let mut a = [[0.0f64; 5]; 4];
    for o in obs {
        let x = row(o);
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] += o.weight * x[i] * x[j];
            }
            a[i][4] += o.weight * x[i] * o.response;
        }
    }
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for r in 0..4 {
            if r != col {
                let f = a[r][col] / a[col][col];
                let pivot_row = a[col];
                for (x, p) in a[r].iter_mut().zip(pivot_row).skip(col) {
                    *x -= f * p;
                }
            }
        }
    }
    let beta = [
        a[0][4] / a[0][0],
        a[1][4] / a[1][1],
        a[2][4] / a[2][2],
        a[3][4] / a[3][3],
    ];

    let n: f64 = obs.iter().map(|o| o.weight).sum();
    let mean = obs.iter().map(|o| o.weight * o.response).sum::<f64>() / n;
    let sst: f64 = obs
        .iter()
        .map(|o| o.weight * (o.response - mean).powi(2))
        .sum();
    let sse: f64 = obs
        .iter()
        .map(|o| {
            let fit: f64 = row(o).iter().zip(beta).map(|(x, b)| x * b).sum();
            o.weight * (o.response - fit).powi(2)
        })
        .sum();
    let r2 = 1.0 - sse / sst;
    let f = (r2 / 3.0) / ((1.0 - r2) / (n - 4.0));
    (beta, r2, f)
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, beta: Option<[f64; 4]>) -> Vec<Observation> {
    (0..n)
        .map(|_| {
            let pwld = rng.random_range(0..45) as f64 / 15.0;
            let word_length = rng.random_range(1..12) as f64;
            let existence_code = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
            let response = match beta {
                Some(b) => b[0] + b[1] * pwld + b[2] * word_length + b[3] * existence_code,
                None => rng.random_range(0..=10) as f64 / 10.0,
            };
            Observation {
                pwld,
                word_length,
                existence_code,
                response,
                weight: rng.random_range(1..20) as f64,
            }
        })
        .collect()
}
