//! Incremental prime sieve with membership queries for small multiples of
//! primes.
//!
//! The lacunary constructions need to know whether n equals j*p for some
//! prime p and some j <= r. Sieving is done in growing segments and cached
//! process-wide, so repeated queries over a long scan cost O(1) amortized.

use std::sync::Mutex;
use std::sync::OnceLock;

struct Sieve {
    /// is_prime[i] answers for the integer i; index 0 and 1 are false.
    is_prime: Vec<bool>,
}

impl Sieve {
    fn new() -> Self {
        Sieve { is_prime: vec![false, false] }
    }

    fn grow_to(&mut self, n: usize) {
        let old = self.is_prime.len();
        if n < old {
            return;
        }
        // Grow geometrically so a linear scan over n triggers O(log n) resieves.
        let new_len = (n + 1).max(old * 2).max(64);
        self.is_prime.resize(new_len, true);
        for i in old..new_len {
            self.is_prime[i] = true;
        }
        self.is_prime[0] = false;
        if new_len > 1 {
            self.is_prime[1] = false;
        }
        let mut p = 2usize;
        while p * p < new_len {
            if self.is_prime[p] {
                // Start at max(p*p, first multiple of p inside the new zone).
                let mut m = p * p;
                if m < old {
                    m = old.div_ceil(p) * p;
                }
                while m < new_len {
                    self.is_prime[m] = false;
                    m += p;
                }
            }
            p += 1;
        }
        // Freshly resized cells below old were already correct; the sieve
        // above never unsets a composite back to prime, so state is stable.
    }
}

fn sieve() -> &'static Mutex<Sieve> {
    static SIEVE: OnceLock<Mutex<Sieve>> = OnceLock::new();
    SIEVE.get_or_init(|| Mutex::new(Sieve::new()))
}

/// Is n prime? n up to ~10^8 is practical; the cache grows on demand.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let n = n as usize;
    let mut s = sieve().lock().unwrap();
    s.grow_to(n);
    s.is_prime[n]
}

/// Is n = j * p for some prime p and some 1 <= j <= r?
///
/// Equivalently: is some n/j (over divisors j <= r of n) prime?
pub fn is_small_multiple_of_prime(n: u64, r: u32) -> bool {
    if n < 2 {
        return false;
    }
    for j in 1..=r as u64 {
        if j > n {
            break;
        }
        if n % j == 0 && is_prime(n / j) {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_primes() {
        let primes: Vec<u64> = (0..30).filter(|&n| is_prime(n)).collect();
        assert_eq!(primes, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
    }

    #[test]
    fn sieve_survives_regrowth() {
        assert!(is_prime(97));
        assert!(is_prime(7919));
        assert!(!is_prime(7917));
        assert!(is_prime(104729));
        assert!(!is_prime(104730));
        // Re-query small values after growth.
        assert!(is_prime(2) && is_prime(3) && !is_prime(4));
    }

    #[test]
    fn multiples_of_primes_up_to_r() {
        // r = 1: exactly the primes.
        assert!(is_small_multiple_of_prime(13, 1));
        assert!(!is_small_multiple_of_prime(12, 1));
        // r = 2: primes and their doubles.
        assert!(is_small_multiple_of_prime(26, 2));
        assert!(!is_small_multiple_of_prime(27, 2));
        // 6 = 2*3 with j = 2 <= r, 6/2 = 3 prime.
        assert!(is_small_multiple_of_prime(6, 2));
        assert!(!is_small_multiple_of_prime(1, 3));
        // 9 = 3*3: j = 3 needs r >= 3.
        assert!(!is_small_multiple_of_prime(9, 2));
        assert!(is_small_multiple_of_prime(9, 3));
    }
}
