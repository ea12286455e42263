//! Index maps between strings in `Y^n` and Hankel row/column positions.
//!
//! The first lexical order (FLO) treats the first symbol as the least
//! significant digit, so for `m = 2, n = 2` it lists `00, 10, 01, 11`. The last
//! lexical order (LLO) is the usual one, `00, 01, 10, 11`. Hankel rows are
//! indexed in FLO and columns in LLO.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LexKind {
    Flo,
    Llo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexOrder {
    kind: LexKind,
    m: usize,
    n: usize,
    size: usize,
}

impl LexOrder {
    /// Fails with a size-limit error when `m^n` does not fit in `usize`.
    pub fn new(kind: LexKind, m: usize, n: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("alphabet size must be positive".into()));
        }
        let size = u32::try_from(n)
            .ok()
            .and_then(|n| m.checked_pow(n))
            .ok_or_else(|| Error::SizeLimit(format!("{m}^{n} strings overflow the index width")))?;
        Ok(Self { kind, m, n, size })
    }

    pub fn flo(m: usize, n: usize) -> Result<Self> {
        Self::new(LexKind::Flo, m, n)
    }

    pub fn llo(m: usize, n: usize) -> Result<Self> {
        Self::new(LexKind::Llo, m, n)
    }

    pub fn kind(&self) -> LexKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of strings, `m^n`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Same kind and alphabet, length `n + 1`.
    pub fn extended(&self) -> Result<Self> {
        Self::new(self.kind, self.m, self.n + 1)
    }

    fn check_symbol(&self, y: usize) -> Result<()> {
        if y >= self.m {
            return Err(Error::Domain(format!("symbol {y} outside alphabet of size {}", self.m)));
        }
        Ok(())
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.size {
            return Err(Error::Domain(format!("index {index} outside 0..{}", self.size)));
        }
        Ok(())
    }

    pub fn encode(&self, w: &[usize]) -> Result<usize> {
        if w.len() != self.n {
            return Err(Error::Domain(format!("string of length {} in an order of length {}", w.len(), self.n)));
        }
        for &y in w {
            self.check_symbol(y)?;
        }
        let digits: Box<dyn Iterator<Item = &usize>> = match self.kind {
            LexKind::Flo => Box::new(w.iter().rev()),
            LexKind::Llo => Box::new(w.iter()),
        };
        Ok(digits.fold(0, |acc, &y| acc * self.m + y))
    }

    pub fn decode(&self, index: usize) -> Result<Vec<usize>> {
        self.check_index(index)?;
        let mut w = Vec::with_capacity(self.n);
        let mut rest = index;
        for _ in 0..self.n {
            w.push(rest % self.m);
            rest /= self.m;
        }
        // least significant digit first; LLO wants it last
        if self.kind == LexKind::Llo {
            w.reverse();
        }
        Ok(w)
    }

    /// Index of `y u` in the order of length `n + 1`, where `u_index` is the
    /// index of `u` in `self`.
    pub fn prepend_index(&self, y: usize, u_index: usize) -> Result<usize> {
        self.check_symbol(y)?;
        self.check_index(u_index)?;
        Ok(match self.kind {
            LexKind::Flo => y + self.m * u_index,
            LexKind::Llo => y * self.size + u_index,
        })
    }

    /// Index of `u y` in the order of length `n + 1`.
    pub fn append_index(&self, u_index: usize, y: usize) -> Result<usize> {
        self.check_symbol(y)?;
        self.check_index(u_index)?;
        Ok(match self.kind {
            LexKind::Flo => u_index + y * self.size,
            LexKind::Llo => self.m * u_index + y,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Odometer enumeration of `Y^n`, last position fastest.
    fn enumerate(m: usize, n: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut w = vec![0; n];
        loop {
            out.push(w.clone());
            let mut pos = n;
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                w[pos] += 1;
                if w[pos] < m {
                    break;
                }
                w[pos] = 0;
            }
        }
    }

    fn s(text: &str) -> Vec<usize> {
        text.bytes().map(|b| (b - b'0') as usize).collect()
    }

    #[test]
    fn binary_pairs() {
        let flo = LexOrder::flo(2, 2).unwrap();
        let llo = LexOrder::llo(2, 2).unwrap();
        for (i, w) in ["00", "10", "01", "11"].iter().enumerate() {
            assert_eq!(flo.encode(&s(w)).unwrap(), i);
        }
        for (i, w) in ["00", "01", "10", "11"].iter().enumerate() {
            assert_eq!(llo.encode(&s(w)).unwrap(), i);
        }
        assert_eq!(flo.decode(1).unwrap(), s("10"));
        assert_eq!(LexOrder::llo(3, 1).unwrap().decode(2).unwrap(), s("2"));
    }

    #[test]
    fn single_symbol_is_identity() {
        for kind in [LexKind::Flo, LexKind::Llo] {
            let order = LexOrder::new(kind, 3, 1).unwrap();
            for y in 0..3 {
                assert_eq!(order.encode(&[y]).unwrap(), y);
            }
        }
    }

    #[test]
    fn llo_matches_odometer_and_flo_its_reversal() {
        for m in 1..=3 {
            for n in 0..=5 {
                let llo = LexOrder::llo(m, n).unwrap();
                let flo = LexOrder::flo(m, n).unwrap();
                let words = enumerate(m, n);
                assert_eq!(words.len(), llo.size());
                for (i, w) in words.iter().enumerate() {
                    assert_eq!(llo.encode(w).unwrap(), i);
                    assert_eq!(llo.decode(i).unwrap(), *w);
                    let rev: Vec<usize> = w.iter().rev().copied().collect();
                    assert_eq!(flo.encode(&rev).unwrap(), i);
                    assert_eq!(flo.decode(i).unwrap(), rev);
                }
            }
        }
    }

    #[test]
    fn prepend_append_agree_with_encode() {
        for m in 2..=3 {
            for n in 0..4 {
                for kind in [LexKind::Flo, LexKind::Llo] {
                    let short = LexOrder::new(kind, m, n).unwrap();
                    let long = short.extended().unwrap();
                    for u in 0..short.size() {
                        let word = short.decode(u).unwrap();
                        for y in 0..m {
                            let mut yu = vec![y];
                            yu.extend_from_slice(&word);
                            let mut uy = word.clone();
                            uy.push(y);
                            assert_eq!(short.prepend_index(y, u).unwrap(), long.encode(&yu).unwrap());
                            assert_eq!(short.append_index(u, y).unwrap(), long.encode(&uy).unwrap());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn documented_prepend_append_cases() {
        let flo1 = LexOrder::flo(2, 1).unwrap();
        let llo1 = LexOrder::llo(2, 1).unwrap();
        assert_eq!(flo1.prepend_index(1, 0).unwrap(), 1);
        assert_eq!(llo1.prepend_index(1, 0).unwrap(), 2);
        assert_eq!(llo1.append_index(0, 1).unwrap(), 1);
        assert_eq!(flo1.append_index(1, 0).unwrap(), 1);
    }

    #[test]
    fn range_errors() {
        let order = LexOrder::flo(2, 3).unwrap();
        assert!(matches!(order.encode(&[0, 1]), Err(Error::Domain(_))));
        assert!(matches!(order.encode(&[0, 1, 2]), Err(Error::Domain(_))));
        assert!(matches!(order.decode(8), Err(Error::Domain(_))));
        assert!(matches!(order.prepend_index(2, 0), Err(Error::Domain(_))));
        assert!(matches!(LexOrder::flo(2, 64), Err(Error::SizeLimit(_))));
        assert!(LexOrder::flo(2, 63).is_ok());
    }
}
