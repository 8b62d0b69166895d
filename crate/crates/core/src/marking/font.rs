//! 5x7 bitmap digits. Each row is five bits, most significant bit leftmost.

pub const GLYPH_W: u32 = 5;
pub const GLYPH_H: u32 = 7;

const DIGITS: [[u8; 7]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];

/// Whether glyph pixel `(col, row)` of `digit` is lit.
pub fn lit(digit: u8, col: u32, row: u32) -> bool {
    debug_assert!(digit < 10 && col < GLYPH_W && row < GLYPH_H);
    DIGITS[digit as usize][row as usize] & (1 << (GLYPH_W - 1 - col)) != 0
}

/// Width and height in pixels of `text` rendered at `scale`, one blank
/// column between glyphs.
pub fn text_extent(len: usize, scale: u32) -> (u32, u32) {
    let n = len as u32;
    if n == 0 {
        return (0, 0);
    }
    ((n * GLYPH_W + (n - 1)) * scale, GLYPH_H * scale)
}

/// Lit pixel offsets of a decimal string relative to its top-left corner.
pub fn text_pixels(text: &str, scale: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for (k, ch) in text.bytes().enumerate() {
        let digit = ch.wrapping_sub(b'0');
        if digit > 9 {
            continue;
        }
        let x0 = k as u32 * (GLYPH_W + 1) * scale;
        for row in 0..GLYPH_H {
            for col in 0..GLYPH_W {
                if lit(digit, col, row) {
                    for sy in 0..scale {
                        for sx in 0..scale {
                            out.push((x0 + col * scale + sx, row * scale + sy));
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_digit_is_distinct_and_nonempty() {
        for (a, glyph) in DIGITS.iter().enumerate() {
            assert!(glyph.iter().any(|r| *r != 0));
            for other in &DIGITS[a + 1..] {
                assert_ne!(glyph, other);
            }
        }
    }

    #[test]
    fn extent_of_three_digits() {
        assert_eq!(text_extent(3, 1), (17, 7));
        assert_eq!(text_extent(2, 2), (22, 14));
        assert!(text_pixels("101", 1).iter().all(|&(x, y)| x < 17 && y < 7));
    }
}
