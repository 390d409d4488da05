//! Two-qubit Clifford gates represented by their conjugation action.
//!
//! A gate is stored as the four images `U X0 U^dag`, `U Z0 U^dag`,
//! `U X1 U^dag`, `U Z1 U^dag`, each a signed two-qubit Pauli. The bit content
//! of the images forms a 4x4 symplectic matrix over GF(2); the four signs are
//! free, giving the full `720 * 16 = 11520` element group (modulo phase).
//!
//! Uniform sampling draws a symplectic matrix via the transvection
//! construction (a bijection from `[0, 720)` onto Sp(4,2)) plus four uniform
//! sign bits. For fast tableau updates each gate precomputes a 16-entry
//! lookup table mapping the (x_i, z_i, x_j, z_j) input nibble to the output
//! nibble and a sign flip.

use rand::Rng;

use crate::pauli::PauliString;

/// Per-site i-exponent LUT for `P(a,b) * P(c,d)`, indexed by
/// `a | b<<1 | c<<2 | d<<3`. Nonzero only for distinct non-identity letters:
/// 1 on the cyclic order (ZX, XY, YZ), 3 on the reversals.
const MUL_PHASE: [u8; 16] = [0, 0, 0, 0, 0, 0, 1, 3, 0, 3, 0, 1, 0, 1, 3, 0];

/// Signed Pauli on two sites; `x`/`z` use bit 0 for the first site and bit 1
/// for the second. Sign convention matches [`PauliString`] (`Y = iXZ`, so the
/// stored sign is the full prefactor).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TwoQubitPauli {
    pub x: u8,
    pub z: u8,
    pub neg: bool,
}

impl TwoQubitPauli {
    pub const fn identity() -> Self {
        TwoQubitPauli { x: 0, z: 0, neg: false }
    }

    /// Bit content as a symplectic row vector (x0, z0, x1, z1).
    fn row(self) -> u8 {
        (self.x & 1) | (self.z & 1) << 1 | (self.x & 2) << 1 | (self.z & 2) << 2
    }

    fn from_row(row: u8, neg: bool) -> Self {
        TwoQubitPauli {
            x: (row & 1) | (row >> 1) & 2,
            z: (row >> 1) & 1 | (row >> 2) & 2,
            neg,
        }
    }

    pub fn anticommutes_with(self, rhs: TwoQubitPauli) -> bool {
        ((self.x & rhs.z).count_ones() + (self.z & rhs.x).count_ones()) % 2 == 1
    }

    pub fn to_pauli_string(self) -> PauliString {
        let mut p = PauliString::identity(2);
        p.set_site(0, self.x & 1 == 1, self.z & 1 == 1);
        p.set_site(1, self.x & 2 == 2, self.z & 2 == 2);
        p.set_sign(self.neg);
        p
    }

    pub fn from_pauli_string(p: &PauliString) -> Self {
        assert_eq!(p.n_sites(), 2);
        let (x0, z0) = p.site(0);
        let (x1, z1) = p.site(1);
        TwoQubitPauli {
            x: x0 as u8 | (x1 as u8) << 1,
            z: z0 as u8 | (z1 as u8) << 1,
            neg: p.is_negative(),
        }
    }
}

/// Accumulated i-exponent of multiplying `P(bx, bz)` onto `P(ax, az)`
/// (two sites, no signs).
#[inline]
fn mul_exp(ax: u8, az: u8, bx: u8, bz: u8) -> u32 {
    let mut e = 0u32;
    for s in 0..2 {
        let idx = (ax >> s & 1) | (az >> s & 1) << 1 | (bx >> s & 1) << 2 | (bz >> s & 1) << 3;
        e += MUL_PHASE[idx as usize] as u32;
    }
    e
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GateError {
    #[error("gate images do not satisfy the X/Z commutation algebra (not symplectic)")]
    NotSymplectic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CliffordGate {
    /// Conjugation images of X0, Z0, X1, Z1, in that order.
    images: [TwoQubitPauli; 4],
    /// `lut[nibble]` = output nibble (bits 0-3) | sign-flip flag (bit 4),
    /// where the nibble encodes (x_i, z_i, x_j, z_j) of a generator's
    /// restriction to the gate's two sites.
    lut: [u8; 16],
}

impl CliffordGate {
    /// Build a gate from its four conjugation images; fails unless the images
    /// reproduce the commutation algebra of (X0, Z0, X1, Z1).
    pub fn from_images(images: [TwoQubitPauli; 4]) -> Result<Self, GateError> {
        for a in 0..4 {
            for b in a + 1..4 {
                // X and Z on the same qubit anticommute; everything else commutes.
                let want = (a, b) == (0, 1) || (a, b) == (2, 3);
                if images[a].anticommutes_with(images[b]) != want {
                    return Err(GateError::NotSymplectic);
                }
            }
        }
        let mut gate = CliffordGate { images, lut: [0; 16] };
        gate.build_lut();
        Ok(gate)
    }

    /// Conjugation of the input nibble `P(a,b) ox P(c,d)` written as
    /// `i^(ab+cd) X0^a Z0^b X1^c Z1^d`; conjugating replaces each factor by
    /// its image, and the accumulated i-exponent (even for Hermitian input)
    /// folds into the sign flip.
    fn build_lut(&mut self) {
        for nib in 0u8..16 {
            let bits = [nib & 1, nib >> 1 & 1, nib >> 2 & 1, nib >> 3 & 1];
            let mut exp = (bits[0] & bits[1]) as u32 + (bits[2] & bits[3]) as u32;
            let (mut ax, mut az) = (0u8, 0u8);
            for (k, &sel) in bits.iter().enumerate() {
                if sel == 1 {
                    let img = self.images[k];
                    exp += mul_exp(ax, az, img.x, img.z) + 2 * img.neg as u32;
                    ax ^= img.x;
                    az ^= img.z;
                }
            }
            // MUL_PHASE keeps the accumulator in P-normal form per site, so
            // the result is i^exp P(ax, az) with exp necessarily even.
            assert!(exp % 2 == 0, "conjugated Hermitian Pauli must stay Hermitian");
            let out = (ax & 1) | (az & 1) << 1 | (ax & 2) << 1 | (az & 2) << 2;
            self.lut[nib as usize] = out | (((exp % 4 == 2) as u8) << 4);
        }
    }

    /// (output nibble, sign flip) for an input (x_i, z_i, x_j, z_j) nibble.
    #[inline]
    pub(crate) fn lut_entry(&self, nib: u8) -> (u8, bool) {
        let e = self.lut[nib as usize];
        (e & 0x0f, e & 0x10 != 0)
    }

    pub fn images(&self) -> &[TwoQubitPauli; 4] {
        &self.images
    }

    /// Conjugate an arbitrary signed two-qubit Pauli by this gate.
    pub fn conjugate(&self, p: TwoQubitPauli) -> TwoQubitPauli {
        let (out, flip) = self.lut_entry(p.row());
        TwoQubitPauli::from_row(out, p.neg ^ flip)
    }

    /// Uniform two-qubit Clifford: uniform index into the 720-element
    /// symplectic group, then four uniform sign bits (image order X0, Z0,
    /// X1, Z1). Consumes exactly five RNG draws.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let idx = rng.random_range(0..symplectic_group_order(2));
        let rows = symplectic_matrix(idx, 2);
        let images = std::array::from_fn(|k| {
            TwoQubitPauli::from_row(rows[k] as u8, rng.random::<bool>())
        });
        Self::from_images(images).expect("sampled symplectic matrix is valid")
    }

    /// Gate with the inverse conjugation action.
    pub fn inverse(&self) -> Self {
        // Invert the 4x4 bit matrix of image rows over GF(2) via Gauss-Jordan
        // on [M | I] packed into u8 rows (bits 0-3 = M, bits 4-7 = I).
        let mut aug: [u8; 4] = std::array::from_fn(|k| self.images[k].row() | 1 << (4 + k));
        for c in 0..4 {
            let p = (c..4).find(|&r| aug[r] >> c & 1 == 1).expect("symplectic => invertible");
            aug.swap(c, p);
            for r in 0..4 {
                if r != c && aug[r] >> c & 1 == 1 {
                    aug[r] ^= aug[c];
                }
            }
        }
        let images = std::array::from_fn(|k| {
            let row = aug[k] >> 4; // row k of M^-1 = bit content of U^dag B_k U
            // U^dag B_k U = t * P(row) where t is the sign the forward gate
            // produces when conjugating P(row) back onto the basis Pauli B_k.
            let t = self.conjugate(TwoQubitPauli::from_row(row, false));
            debug_assert_eq!(t.row(), basis_row(k));
            TwoQubitPauli::from_row(row, t.neg)
        });
        Self::from_images(images).expect("inverse of symplectic is symplectic")
    }

    // -- fixed gates used in tests and the Python bindings --

    pub fn identity() -> Self {
        Self::from_images(std::array::from_fn(|k| TwoQubitPauli::from_row(basis_row(k), false)))
            .unwrap()
    }

    /// Hadamard on the first site.
    pub fn hadamard_first() -> Self {
        Self::from_images([
            TwoQubitPauli { x: 0, z: 1, neg: false }, // X0 -> Z0
            TwoQubitPauli { x: 1, z: 0, neg: false }, // Z0 -> X0
            TwoQubitPauli { x: 2, z: 0, neg: false },
            TwoQubitPauli { x: 0, z: 2, neg: false },
        ])
        .unwrap()
    }

    /// CNOT with the first site as control.
    pub fn cnot() -> Self {
        Self::from_images([
            TwoQubitPauli { x: 3, z: 0, neg: false }, // X0 -> X0 X1
            TwoQubitPauli { x: 0, z: 1, neg: false }, // Z0 -> Z0
            TwoQubitPauli { x: 2, z: 0, neg: false }, // X1 -> X1
            TwoQubitPauli { x: 0, z: 3, neg: false }, // Z1 -> Z0 Z1
        ])
        .unwrap()
    }

    pub fn swap() -> Self {
        Self::from_images([
            TwoQubitPauli { x: 2, z: 0, neg: false },
            TwoQubitPauli { x: 0, z: 2, neg: false },
            TwoQubitPauli { x: 1, z: 0, neg: false },
            TwoQubitPauli { x: 0, z: 1, neg: false },
        ])
        .unwrap()
    }

    /// Phase gate (S) on the first site: X0 -> Y0, Z0 -> Z0.
    pub fn phase_first() -> Self {
        Self::from_images([
            TwoQubitPauli { x: 1, z: 1, neg: false },
            TwoQubitPauli { x: 0, z: 1, neg: false },
            TwoQubitPauli { x: 2, z: 0, neg: false },
            TwoQubitPauli { x: 0, z: 2, neg: false },
        ])
        .unwrap()
    }
}

/// Symplectic row vector of the k-th basis Pauli (X0, Z0, X1, Z1).
fn basis_row(k: usize) -> u8 {
    1 << k
}

/// Symplectic inner product with adjacent (x, z) bit pairing.
#[inline]
fn sym(u: u32, v: u32) -> u32 {
    let swapped = (v & 0x5555_5555) << 1 | (v & 0xaaaa_aaaa) >> 1;
    (u & swapped).count_ones() & 1
}

/// Transvection `Z_h(v) = v + <v,h> h`.
#[inline]
fn tv(h: u32, v: u32) -> u32 {
    v ^ (sym(v, h) * h)
}

/// |Sp(2n, 2)| = prod_{j=1..n} (2^{2j} - 1) 2^{2j-1}.
pub fn symplectic_group_order(n: u32) -> u64 {
    (1..=n).map(|j| ((1u64 << (2 * j)) - 1) << (2 * j - 1)).product()
}

/// Transvections h1, h2 with `Z_h1 Z_h2 x = y` for nonzero x, y.
fn find_transvection(x: u32, y: u32, n: usize) -> (u32, u32) {
    debug_assert!(x != 0 && y != 0);
    if x == y {
        return (0, 0);
    }
    if sym(x, y) == 1 {
        return (x ^ y, 0);
    }
    // <x,y> = 0 with x != y: route through an intermediate z that pairs with
    // both. Local 2-bit blocks are (v_2j, v_2j+1).
    let block = |v: u32, j: usize| v >> (2 * j) & 3;
    // z with odd local pairing against a 2-bit block b (b nonzero):
    // equal bits -> set the high bit; else swap the bits.
    let pair_block = |b: u32| -> u32 {
        if (b & 1) == (b >> 1) { 0b10 } else { (b & 1) << 1 | b >> 1 }
    };
    for j in 0..n {
        let (xb, yb) = (block(x, j), block(y, j));
        if xb != 0 && yb != 0 {
            let mut zb = xb ^ yb;
            if zb == 0 {
                zb = 0b10 | ((xb & 1 != xb >> 1) as u32);
            }
            let z = zb << (2 * j);
            return (x ^ z, y ^ z);
        }
    }
    let mut z = 0u32;
    for j in 0..n {
        if block(x, j) != 0 && block(y, j) == 0 {
            z |= pair_block(block(x, j)) << (2 * j);
            break;
        }
    }
    for j in 0..n {
        if block(x, j) == 0 && block(y, j) != 0 {
            z |= pair_block(block(y, j)) << (2 * j);
            break;
        }
    }
    (x ^ z, y ^ z)
}

/// The `index`-th element of Sp(2n, 2) under the transvection construction;
/// a bijection from `[0, symplectic_group_order(n))`. Rows are returned as
/// 2n-bit vectors with the (x0, z0, x1, z1, ...) column layout.
pub fn symplectic_matrix(index: u64, n: usize) -> Vec<u32> {
    let nn = 2 * n;
    let s = (1u64 << nn) - 1;
    let f1 = ((index % s) + 1) as u32; // uniform nonzero vector: image of e1
    let rest = index / s;
    let e1 = 1u32;
    let (t0, t1) = find_transvection(e1, f1, n);
    // nn-1 free bits: bit 0 selects whether e2's image is forced to pair with
    // f1 directly; bits 1.. fill the remaining coordinates.
    let bits = (rest % (1 << (nn - 1))) as u32;
    let mut eprime = e1;
    for j in 2..nn {
        eprime |= (bits >> (j - 1) & 1) << j;
    }
    let h0 = tv(t1, tv(t0, eprime));
    let f1_step = if bits & 1 == 1 { 0 } else { f1 };
    let mut rows: Vec<u32> = Vec::with_capacity(nn);
    rows.push(1);
    rows.push(2);
    if n > 1 {
        for r in symplectic_matrix(rest >> (nn - 1), n - 1) {
            rows.push(r << 2);
        }
    }
    for row in rows.iter_mut() {
        let mut v = tv(t0, *row);
        v = tv(t1, v);
        v = tv(h0, v);
        if f1_step != 0 {
            v = tv(f1_step, v);
        }
        *row = v;
    }
    rows
}
