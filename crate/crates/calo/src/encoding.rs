//! Incident energy as a 512-bit condition: the floors of `e`, `10 ln e` and
//! `10 sqrt(e)` as 20-bit most-significant-first blocks, the 60-bit
//! concatenation repeated 8 times, then 32 zero bits.

use crate::error::{CaloError, Result};

pub const BLOCK_BITS: u32 = 20;
pub const REPEATS: usize = 8;
pub const ENCODING_BITS: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEncoding {
    pub bits: Vec<u8>,
    /// The three binned values `(floor(e), floor(10 ln e), floor(10 sqrt e))`.
    pub triple: [u64; 3],
    pub source_energy: f64,
}

impl ConditionEncoding {
    /// The bits as a 512-character string of `0` and `1`.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }
}

fn push_block(bits: &mut Vec<u8>, value: u64) {
    for k in (0..BLOCK_BITS).rev() {
        bits.push(((value >> k) & 1) as u8);
    }
}

pub fn encode_incident_energy(e: f64) -> Result<ConditionEncoding> {
    if !(e >= 1.0 && e.is_finite()) {
        return Err(CaloError::InvalidParameter(format!("incident energy must be >= 1 MeV, got {e}")));
    }
    let triple = [e.floor() as u64, (10.0 * e.ln()).floor() as u64, (10.0 * e.sqrt()).floor() as u64];
    let names = ["floor(e)", "floor(10 ln e)", "floor(10 sqrt e)"];
    for (&value, name) in triple.iter().zip(names) {
        if value >= 1 << BLOCK_BITS {
            return Err(CaloError::Overflow {
                name,
                value,
                bits: BLOCK_BITS,
            });
        }
    }
    let mut block = Vec::with_capacity(3 * BLOCK_BITS as usize);
    for &v in &triple {
        push_block(&mut block, v);
    }
    let mut bits = Vec::with_capacity(ENCODING_BITS);
    for _ in 0..REPEATS {
        bits.extend_from_slice(&block);
    }
    bits.resize(ENCODING_BITS, 0);
    Ok(ConditionEncoding {
        bits,
        triple,
        source_energy: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floors_at_one_mev() {
        assert_eq!(encode_incident_energy(1.0).unwrap().triple, [1, 0, 10]);
    }

    #[test]
    fn floors_at_one_gev() {
        assert_eq!(encode_incident_energy(1000.0).unwrap().triple, [1000, 69, 316]);
    }

    #[test]
    fn layout_of_bits() {
        for e in [1.0, 17.3, 1000.0, 654321.0, 1e6] {
            let c = encode_incident_energy(e).unwrap();
            assert_eq!(c.bits.len(), ENCODING_BITS);
            for r in 1..REPEATS {
                assert_eq!(c.bits[..60], c.bits[r * 60..(r + 1) * 60]);
            }
            assert!(c.bits[480..].iter().all(|&b| b == 0));
        }
    }

    #[test]
    fn overflow_and_range() {
        assert!(matches!(
            encode_incident_energy(f64::from(1u32 << 20)),
            Err(CaloError::Overflow { .. })
        ));
        assert!(encode_incident_energy(0.5).is_err());
    }
}
