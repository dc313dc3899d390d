use ndarray::Array2;

use crate::motion::{NormalizedWindow, FRAME_DIM};
use crate::scalar::Scalar;

/// Frames per summarized chunk.
pub const CHUNK_FRAMES: usize = 30;
/// Statistics per column, in output order.
pub const SUMMARY_STATS: [&str; 5] = ["min", "max", "mean", "std", "median"];
pub const SUMMARY_FEATURES: usize = FRAME_DIM * SUMMARY_STATS.len();

/// One row per one-second chunk; feature `5 * column + stat` in [`SUMMARY_STATS`] order.
///
/// `std` is the population deviation and `median` averages the two middle values.
pub fn featurize_summary_stats<T: Scalar>(w: &NormalizedWindow<T>) -> Array2<f64> {
    let data = w.view();
    let chunks = data.nrows() / CHUNK_FRAMES;
    let mut out = Array2::zeros((chunks, SUMMARY_FEATURES));
    let mut buf = Vec::with_capacity(CHUNK_FRAMES);
    for k in 0..chunks {
        for c in 0..data.ncols() {
            buf.clear();
            buf.extend((k * CHUNK_FRAMES..(k + 1) * CHUNK_FRAMES).map(|r| data[[r, c]].as_f64()));
            let n = buf.len() as f64;
            let mean = buf.iter().sum::<f64>() / n;
            let var = buf.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            buf.sort_by(f64::total_cmp);
            let mid = buf.len() / 2;
            let median = if buf.len() % 2 == 0 { 0.5 * (buf[mid - 1] + buf[mid]) } else { buf[mid] };
            let stats = [buf[0], buf[buf.len() - 1], mean, var.sqrt(), median];
            for (s, v) in stats.into_iter().enumerate() {
                out[[k, c * SUMMARY_STATS.len() + s]] = v;
            }
        }
    }
    out
}
