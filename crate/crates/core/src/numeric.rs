use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1};

/// Index of the largest entry; exact ties go to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_rows(m: &ArrayView2<f64>) -> Vec<usize> {
    m.rows().into_iter().map(argmax).collect()
}

/// In-place softmax with max subtraction. Returns `(max, tail)` with
/// `log Σ exp(row) = max + tail`; callers subtract from `max` first so a
/// tail far below one ulp of `max` is not lost.
pub fn softmax_in_place(mut row: ArrayViewMut1<f64>) -> (f64, f64) {
    let (max, rest) = match row.as_slice_mut() {
        Some(slice) => softmax_parts(slice),
        None => {
            let mut owned = row.to_vec();
            let parts = softmax_parts(&mut owned);
            row.assign(&ArrayView1::from(&owned));
            parts
        }
    };
    (max, rest.ln_1p())
}

/// Softmax over a slice; returns the max and the sum of the non-max
/// exponentials (before normalization).
pub(crate) fn softmax_parts(row: &mut [f64]) -> (f64, f64) {
    let mut top = 0;
    for i in 1..row.len() {
        if row[i] > row[top] {
            top = i;
        }
    }
    let max = row[top];
    // Σ over non-max terms, kept apart so log1p retains tiny tails
    let mut rest = 0.0;
    for (i, v) in row.iter_mut().enumerate() {
        *v = (*v - max).exp();
        if i != top {
            rest += *v;
        }
    }
    let inv = 1.0 / (1.0 + rest);
    row.iter_mut().for_each(|e| *e *= inv);
    (max, rest)
}

/// `count` values evenly spaced in log space from `start` to `end`,
/// endpoints included exactly.
pub fn logspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let (a, b) = (start.log10(), end.log10());
            (0..count)
                .map(|i| {
                    if i == 0 {
                        start
                    } else if i == count - 1 {
                        end
                    } else {
                        10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)
                    }
                })
                .collect()
        }
    }
}
