//! Signed Pauli strings in the symplectic (x, z) representation.
//!
//! A string is `(-1)^neg * tensor_k P(x_k, z_k)` with the Hermitian site
//! convention `P(0,0) = I`, `P(1,0) = X`, `P(0,1) = Z`, `P(1,1) = Y = iXZ`.
//! Products of two such strings carry a power of i; it is even (so the result
//! is again a signed Hermitian string) exactly when the operands commute.
//! The x/z planes are bit-packed 64 sites per word, little-endian.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PauliParseError {
    #[error("pauli string must start with '+' or '-'")]
    MissingSign,
    #[error("invalid pauli letter {0:?} (expected I, X, Y, or Z)")]
    BadLetter(char),
    #[error("empty pauli string")]
    Empty,
}

/// Per-site i-exponent of `P(a,b) * P(c,d) = i^e P(a^c, b^d)`, as three word
/// masks: e = 1 on `ZX`, `XY`, `YZ` (cyclic order), e = 3 on the reversals,
/// e = 0 otherwise. Returns (e1_mask, e3_mask).
#[inline]
fn phase_masks(a: u64, b: u64, c: u64, d: u64) -> (u64, u64) {
    let e1 = (!a & b & c & !d) | (a & !b & c & d) | (a & b & !c & d);
    let e3 = (!a & b & c & d) | (a & !b & !c & d) | (a & b & c & !d);
    (e1, e3)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliString {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    /// Overall sign: true means the string carries a leading minus.
    neg: bool,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        let w = n.div_ceil(64).max(1);
        PauliString { n, x: vec![0; w], z: vec![0; w], neg: false }
    }

    /// Single-site Z with a `+` sign.
    pub fn z_at(n: usize, site: usize) -> Self {
        let mut p = Self::identity(n);
        p.set_site(site, false, true);
        p
    }

    /// Single-site X with a `+` sign.
    pub fn x_at(n: usize, site: usize) -> Self {
        let mut p = Self::identity(n);
        p.set_site(site, true, false);
        p
    }

    pub fn from_planes(n: usize, x: Vec<u64>, z: Vec<u64>, neg: bool) -> Self {
        let w = n.div_ceil(64).max(1);
        assert_eq!(x.len(), w);
        assert_eq!(z.len(), w);
        let p = PauliString { n, x, z, neg };
        debug_assert!(p.tail_clear());
        p
    }

    fn tail_clear(&self) -> bool {
        if self.n % 64 == 0 && self.n > 0 {
            return true;
        }
        let mask = !0u64 << (self.n % 64);
        let last = self.x.len() - 1;
        self.x[last] & mask == 0 && self.z[last] & mask == 0
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn is_negative(&self) -> bool {
        self.neg
    }

    pub fn set_sign(&mut self, neg: bool) {
        self.neg = neg;
    }

    pub fn x_plane(&self) -> &[u64] {
        &self.x
    }

    pub fn z_plane(&self) -> &[u64] {
        &self.z
    }

    /// (x, z) bits at `site`.
    pub fn site(&self, site: usize) -> (bool, bool) {
        assert!(site < self.n);
        let (w, b) = (site / 64, site % 64);
        (self.x[w] >> b & 1 == 1, self.z[w] >> b & 1 == 1)
    }

    pub fn set_site(&mut self, site: usize, x: bool, z: bool) {
        assert!(site < self.n);
        let (w, b) = (site / 64, site % 64);
        self.x[w] = self.x[w] & !(1 << b) | (x as u64) << b;
        self.z[w] = self.z[w] & !(1 << b) | (z as u64) << b;
    }

    /// Number of non-identity sites.
    pub fn weight(&self) -> usize {
        self.x
            .iter()
            .zip(&self.z)
            .map(|(&x, &z)| (x | z).count_ones() as usize)
            .sum()
    }

    pub fn is_identity_up_to_sign(&self) -> bool {
        self.weight() == 0
    }

    /// True iff every non-identity site lies in `sites`.
    pub fn supported_on(&self, sites: &[usize]) -> bool {
        (0..self.n).all(|k| {
            let (x, z) = self.site(k);
            (!x && !z) || sites.contains(&k)
        })
    }

    /// Symplectic product: false = commute, true = anticommute.
    pub fn anticommutes_with(&self, rhs: &PauliString) -> bool {
        assert_eq!(self.n, rhs.n);
        let mut acc = 0u32;
        for k in 0..self.x.len() {
            acc ^= (self.x[k] & rhs.z[k]).count_ones() ^ (self.z[k] & rhs.x[k]).count_ones();
        }
        acc & 1 == 1
    }

    /// Product of two commuting strings (the only case in which the product
    /// is again a signed Hermitian string). Panics on anticommuting operands.
    pub fn mul(&self, rhs: &PauliString) -> PauliString {
        assert_eq!(self.n, rhs.n);
        let mut exp = 2 * (self.neg as u32 + rhs.neg as u32);
        let mut x = vec![0u64; self.x.len()];
        let mut z = vec![0u64; self.z.len()];
        for k in 0..self.x.len() {
            let (e1, e3) = phase_masks(self.x[k], self.z[k], rhs.x[k], rhs.z[k]);
            exp += e1.count_ones() + 3 * e3.count_ones();
            x[k] = self.x[k] ^ rhs.x[k];
            z[k] = self.z[k] ^ rhs.z[k];
        }
        assert!(exp % 2 == 0, "product of anticommuting strings is not Hermitian");
        PauliString { n: self.n, x, z, neg: exp % 4 == 2 }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.neg { "-" } else { "+" })?;
        for k in 0..self.n {
            let c = match self.site(k) {
                (false, false) => 'I',
                (true, false) => 'X',
                (false, true) => 'Z',
                (true, true) => 'Y',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = PauliParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let neg = match chars.next() {
            Some('+') => false,
            Some('-') => true,
            Some(_) => return Err(PauliParseError::MissingSign),
            None => return Err(PauliParseError::Empty),
        };
        let letters: Vec<char> = chars.collect();
        if letters.is_empty() {
            return Err(PauliParseError::Empty);
        }
        let mut p = PauliString::identity(letters.len());
        p.neg = neg;
        for (k, c) in letters.into_iter().enumerate() {
            let (x, z) = match c {
                'I' => (false, false),
                'X' => (true, false),
                'Z' => (false, true),
                'Y' => (true, true),
                other => return Err(PauliParseError::BadLetter(other)),
            };
            p.set_site(k, x, z);
        }
        Ok(p)
    }
}
