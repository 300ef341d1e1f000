use rand::Rng;

/// Glorot/Xavier uniform: `U(−a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng + ?Sized>(values: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    for v in values {
        *v = rng.random_range(-a..a);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bounded_and_seeded() {
        let mut a = vec![0.0; 200];
        let mut b = vec![0.0; 200];
        xavier_uniform(&mut a, 10, 20, &mut ChaCha8Rng::seed_from_u64(1));
        xavier_uniform(&mut b, 10, 20, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(a.iter().all(|v| v.abs() < bound));
    }
}
