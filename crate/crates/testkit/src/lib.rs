//! Test support: oracles written independently of the codecs, proptest
//! generators, and the property suites that both the unit-level property
//! tests and the acceptance runner execute.

pub mod oracles;
pub mod strategies;
pub mod suites;

/// The golden security TEDS block, frozen from [`oracles::security_teds_block`].
pub const GOLDEN_BLOCK_HEX: &str = "00000021030501061002010a01450b01030c010a0d01040e010c0f0101100180110101fe64";

pub fn golden_block() -> Vec<u8> {
    (0..GOLDEN_BLOCK_HEX.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&GOLDEN_BLOCK_HEX[i..i + 2], 16).expect("hex constant"))
        .collect()
}
