//! Coverage-guided fuzzing of a miniature tensor compiler.

pub mod coverage;
pub mod fuzz;
pub mod interp;
pub mod ir;
pub mod mutate;
pub mod oracle;
pub mod passes;

/// Deterministically combines two seeds (splitmix64 finalizer over `a ^ f(b)`).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
