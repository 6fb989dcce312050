//! Arithmetic in Z_{2^31} on native u32 with masking.

pub const RING_BITS: u32 = 31;
pub const RING_MASK: u32 = (1 << RING_BITS) - 1;

#[inline]
pub fn ring_add(a: u32, b: u32) -> u32 {
    a.wrapping_add(b) & RING_MASK
}

#[inline]
pub fn ring_sub(a: u32, b: u32) -> u32 {
    a.wrapping_sub(b) & RING_MASK
}

#[inline]
pub fn ring_mul(a: u32, b: u32) -> u32 {
    a.wrapping_mul(b) & RING_MASK
}

#[inline]
pub fn ring_neg(a: u32) -> u32 {
    0u32.wrapping_sub(a) & RING_MASK
}
