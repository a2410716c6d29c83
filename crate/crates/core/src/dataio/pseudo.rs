use crate::dataio::EmbeddingMatrix;
use crate::gradcore::Tensor;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// splitmix64 finalizer. FNV alone barely moves the high bits when keys
/// differ only in their last byte, which made every coordinate of a token
/// nearly equal.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn token_coord(token: &str, j: usize) -> f64 {
    let key = format!("{token}:{j}");
    2.0 * (mix(fnv1a64(key.as_bytes())) as f64 / 18_446_744_073_709_551_616.0) - 1.0
}

/// Deterministic stand-in for a sentence encoder: hashed token vectors,
/// averaged over whitespace tokens and L2-normalized. Empty text maps to
/// the zero vector.
pub fn pseudo_encode(text: &str, d: usize) -> EmbeddingMatrix {
    let d = d.max(1);
    let mut acc = vec![0.0f64; d];
    let mut count = 0usize;
    for token in text.split_whitespace() {
        count += 1;
        for (j, a) in acc.iter_mut().enumerate() {
            *a += token_coord(token, j);
        }
    }
    if count > 0 {
        for a in acc.iter_mut() {
            *a /= count as f64;
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for a in acc.iter_mut() {
                *a /= norm;
            }
        }
    }
    Tensor::matrix(1, d, acc.into_iter().map(|v| v as f32).collect())
}
