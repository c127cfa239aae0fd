use serde::{Deserialize, Serialize};

use super::EncodeError;

/// A vertex code packed into an integer: digit 1 (the coarsest split) sits in
/// the most significant field, each digit occupying `ceil(log2 r)` bits.
pub type Code = u64;

/// Radix and length of a code, and how digits are packed into a [`Code`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeLayout {
    radix: u32,
    digits: u32,
}

impl CodeLayout {
    pub fn new(radix: u32, digits: u32) -> Result<Self, EncodeError> {
        if radix < 2 {
            return Err(EncodeError::InvalidParams(format!("radix {radix} < 2")));
        }
        if radix > 256 {
            return Err(EncodeError::InvalidParams(format!(
                "radix {radix} exceeds 256"
            )));
        }
        if digits < 1 {
            return Err(EncodeError::InvalidParams("code length must be ≥ 1".into()));
        }
        let layout = Self { radix, digits };
        if layout.total_bits() > 64 {
            return Err(EncodeError::InvalidParams(format!(
                "{digits} digits of radix {radix} need {} bits (max 64)",
                layout.total_bits()
            )));
        }
        Ok(layout)
    }

    pub fn binary(digits: u32) -> Result<Self, EncodeError> {
        Self::new(2, digits)
    }

    pub fn radix(&self) -> u32 {
        self.radix
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn bits_per_digit(&self) -> u32 {
        32 - (self.radix - 1).leading_zeros()
    }

    pub fn total_bits(&self) -> u32 {
        self.bits_per_digit() * self.digits
    }

    /// Bytes used by one code in the binary file formats.
    pub fn packed_len(&self) -> usize {
        (self.total_bits() as usize).div_ceil(8)
    }

    /// Number of distinct codes, `r^d`, if it fits in a u64.
    pub fn class_count(&self) -> Option<u64> {
        (self.radix as u64).checked_pow(self.digits)
    }

    pub fn is_power_of_two_radix(&self) -> bool {
        self.radix.is_power_of_two()
    }

    fn digit_mask(&self) -> u64 {
        (1u64 << self.bits_per_digit()) - 1
    }

    /// Digit `j` (1-based, 1 = coarsest).
    pub fn digit(&self, code: Code, j: u32) -> u32 {
        debug_assert!((1..=self.digits).contains(&j));
        let shift = self.bits_per_digit() * (self.digits - j);
        ((code >> shift) & self.digit_mask()) as u32
    }

    pub fn to_digits(&self, code: Code) -> Vec<u32> {
        (1..=self.digits).map(|j| self.digit(code, j)).collect()
    }

    pub fn from_digits(&self, digits: &[u32]) -> Result<Code, EncodeError> {
        if digits.len() != self.digits as usize {
            return Err(EncodeError::LengthMismatch {
                expected: self.digits as usize,
                got: digits.len(),
            });
        }
        let b = self.bits_per_digit();
        let mut code = 0u64;
        for &dg in digits {
            if dg >= self.radix {
                return Err(EncodeError::InvalidParams(format!(
                    "digit {dg} out of range for radix {}",
                    self.radix
                )));
            }
            code = (code << b) | dg as u64;
        }
        Ok(code)
    }

    /// Whether every digit field holds a value below the radix.
    pub fn is_valid(&self, code: Code) -> bool {
        if self.total_bits() < 64 && code >> self.total_bits() != 0 {
            return false;
        }
        (1..=self.digits).all(|j| self.digit(code, j) < self.radix)
    }

    /// The first `j` digits as a code of the `j`-digit layout.
    pub fn prefix(&self, code: Code, j: u32) -> Code {
        debug_assert!(j <= self.digits);
        let drop = self.bits_per_digit() * (self.digits - j);
        if drop >= 64 {
            0
        } else {
            code >> drop
        }
    }

    /// Layout with the same radix and only `j` digits.
    pub fn truncated(&self, j: u32) -> Result<Self, EncodeError> {
        if j == 0 || j > self.digits {
            return Err(EncodeError::InvalidParams(format!(
                "cannot keep {j} of {} digits",
                self.digits
            )));
        }
        Self::new(self.radix, j)
    }

    /// Big-endian packing into `packed_len()` bytes.
    pub fn pack(&self, code: Code, out: &mut Vec<u8>) {
        let n = self.packed_len();
        out.extend_from_slice(&code.to_be_bytes()[8 - n..]);
    }

    pub fn unpack(&self, bytes: &[u8]) -> Code {
        debug_assert_eq!(bytes.len(), self.packed_len());
        let mut buf = [0u8; 8];
        buf[8 - bytes.len()..].copy_from_slice(bytes);
        u64::from_be_bytes(buf)
    }

    /// Hex form used in CSV dumps, zero-padded to the packed width.
    pub fn to_hex(&self, code: Code) -> String {
        format!("{:0width$x}", code, width = self.packed_len() * 2)
    }
}

/// Regroups a binary digit sequence into radix `target_r` digits, most
/// significant bit first within each group.
pub fn radix_convert(bits: &[u32], target_r: u32) -> Result<Vec<u32>, EncodeError> {
    if !target_r.is_power_of_two() || target_r < 2 {
        return Err(EncodeError::NotPowerOfTwo(target_r));
    }
    let group = target_r.trailing_zeros() as usize;
    if bits.len() % group != 0 {
        return Err(EncodeError::IndivisibleLength {
            bits: bits.len(),
            group,
        });
    }
    bits.chunks(group)
        .map(|c| {
            c.iter().try_fold(0u32, |acc, &b| {
                if b > 1 {
                    Err(EncodeError::InvalidParams(format!("{b} is not a bit")))
                } else {
                    Ok((acc << 1) | b)
                }
            })
        })
        .collect()
}

/// Inverse of [`radix_convert`]: expands radix `from_r` digits into bits.
pub fn radix_expand(digits: &[u32], from_r: u32) -> Result<Vec<u32>, EncodeError> {
    if !from_r.is_power_of_two() || from_r < 2 {
        return Err(EncodeError::NotPowerOfTwo(from_r));
    }
    let group = from_r.trailing_zeros();
    let mut out = Vec::with_capacity(digits.len() * group as usize);
    for &d in digits {
        if d >= from_r {
            return Err(EncodeError::InvalidParams(format!(
                "digit {d} out of range for radix {from_r}"
            )));
        }
        for k in (0..group).rev() {
            out.push((d >> k) & 1);
        }
    }
    Ok(out)
}
