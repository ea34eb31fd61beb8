//! Seed derivation for per-device mismatch draws.
//!
//! A child seed is `splitmix64(parent ^ splitmix64(tag))`, applied once per
//! tag. Pixel `(r, c)` of a panel uses tags `[PIXEL, r, c]`, line mirror `r`
//! uses `[LINE, r]`, row mirror `c` uses `[ROW, c]`, and device `k` inside a
//! mirror appends `k`. Seeds depend only on coordinates, so resizing a panel
//! leaves the draws of existing pixels untouched.

pub const PIXEL: u64 = 0x5049_5845_4c00_0001;
pub const LINE: u64 = 0x4c49_4e45_0000_0002;
pub const ROW: u64 = 0x524f_5700_0000_0003;
pub const TRIAL: u64 = 0x5452_4941_4c00_0004;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(parent: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(parent, |s, &t| splitmix64(s ^ splitmix64(t)))
}
