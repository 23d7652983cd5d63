use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Drops each datagram with probability `loss_rate`, then swaps adjacent
/// pairs with probability `swap_rate`. Arrival times stay in place; only the
/// payloads trade slots, so the stream remains arrival-ordered.
pub fn inject_faults(stream: &[(f64, Vec<u8>)], loss_rate: f64, swap_rate: f64, seed: u64) -> Vec<(f64, Vec<u8>)> {
    let loss_rate = loss_rate.clamp(0.0, 1.0);
    let swap_rate = swap_rate.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(f64, Vec<u8>)> = stream
        .iter()
        .filter(|_| !rng.random_bool(loss_rate))
        .cloned()
        .collect();
    let mut i = 0;
    while i + 1 < out.len() {
        if rng.random_bool(swap_rate) {
            let (head, tail) = out.split_at_mut(i + 1);
            std::mem::swap(&mut head[i].1, &mut tail[0].1);
            i += 2;
        } else {
            i += 1;
        }
    }
    out
}
