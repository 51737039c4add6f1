//! Turning window distributions into schedules.

use ndarray::ArrayView2;
use rand::Rng;

use crate::model::{objective_value, schedule_from_sequence, Instance, Schedule};

pub const DEFAULT_SAMPLES: usize = 100;

/// Jobs ordered by window, then by descending tie weight, then by index.
pub fn window_sequence(instance: &Instance, windows: &[usize]) -> Vec<usize> {
    let mut seq: Vec<usize> = (0..instance.n()).collect();
    seq.sort_by(|&a, &b| {
        windows[a]
            .cmp(&windows[b])
            .then_with(|| instance.tie_weight(b).total_cmp(&instance.tie_weight(a)))
            .then(a.cmp(&b))
    });
    seq
}

fn argmax_windows(o: &ArrayView2<f64>) -> Vec<usize> {
    o.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Most likely window per job, then the active schedule of the window order.
pub fn greedy_decode(o: &ArrayView2<f64>, instance: &Instance) -> Schedule {
    schedule_from_sequence(instance, &window_sequence(instance, &argmax_windows(o)))
}

/// Best of the greedy schedule and `k` sampled window assignments.
pub fn sampling_decode<R: Rng + ?Sized>(
    o: &ArrayView2<f64>,
    instance: &Instance,
    rng: &mut R,
    k: usize,
) -> Schedule {
    let mut best = greedy_decode(o, instance);
    let mut best_value = objective_value(instance, &best.starts);
    let mut windows = vec![0usize; instance.n()];
    for _ in 0..k {
        for (j, row) in o.rows().into_iter().enumerate() {
            let u: f64 = rng.random::<f64>() * row.sum();
            let mut acc = 0.0;
            windows[j] = row.len() - 1;
            for (w, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    windows[j] = w;
                    break;
                }
            }
        }
        let s = schedule_from_sequence(instance, &window_sequence(instance, &windows));
        let v = objective_value(instance, &s.starts);
        if v < best_value {
            best_value = v;
            best = s;
        }
    }
    best
}
