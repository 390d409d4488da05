//! Mixed-state stabilizer tableau.
//!
//! The state is the uniform mixture over the +1 eigenspace of an abelian
//! group of signed Pauli strings: `rho = 2^-L sum_{g in G} g`, stored as an
//! independent generating set. `|G|` generators on `L` sites give purity
//! `Tr rho^2 = 2^(|G| - L)`; the state is pure iff `|G| = L`. Unlike a
//! pure-state CHP tableau there are no destabilizer rows: noise channels can
//! shrink the group, and deterministic measurements are resolved by rank
//! comparison against the generator matrix instead of destabilizer lookups.
//!
//! Planes are bit-packed row-major (64 sites per word); row operations are
//! signed Pauli multiplications so sign bookkeeping rides along with the
//! GF(2) row algebra.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::OnceLock;

use rand::Rng;
use thiserror::Error;

use crate::gate::CliffordGate;
use crate::gf2::{rank_gf2, BitMatrix};
use crate::pauli::PauliString;

/// Global switch for the post-channel invariant validator (mutual
/// commutation, GF(2) independence, |G| <= L). Off by default; enable from
/// tests or with the STABMIX_VALIDATE environment variable.
static VALIDATE_OVERRIDE: AtomicBool = AtomicBool::new(false);
static VALIDATE_ENV: OnceLock<bool> = OnceLock::new();

pub fn set_channel_validation(on: bool) {
    VALIDATE_OVERRIDE.store(on, Ordering::Relaxed);
}

pub fn channel_validation_enabled() -> bool {
    VALIDATE_OVERRIDE.load(Ordering::Relaxed)
        || *VALIDATE_ENV.get_or_init(|| {
            std::env::var("STABMIX_VALIDATE").is_ok_and(|v| v != "0" && !v.is_empty())
        })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TableauError {
    #[error("a stabilizer state needs at least one site")]
    EmptyChain,
    #[error("site {site} out of range for {n} sites")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("two-site gate needs two distinct sites")]
    CoincidentSites,
    #[error("generators must pairwise commute")]
    NonCommutingGenerators,
    #[error("generators must be independent over GF(2)")]
    DependentGenerators,
    #[error("generator acts on {got} sites, state has {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("tableau invariant violated: {0}")]
    InvariantViolated(String),
}

#[derive(Clone, Debug)]
pub struct Tableau {
    n: usize,
    words: usize,
    ngens: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    neg: Vec<bool>,
}

impl Tableau {
    /// `|0...0>`: stabilized by +Z at every site.
    pub fn new_product_state(n: usize) -> Result<Self, TableauError> {
        if n == 0 {
            return Err(TableauError::EmptyChain);
        }
        let words = n.div_ceil(64);
        let mut t = Tableau {
            n,
            words,
            ngens: n,
            x: vec![0; n * words],
            z: vec![0; n * words],
            neg: vec![false; n],
        };
        for k in 0..n {
            t.z[k * words + k / 64] |= 1 << (k % 64);
        }
        Ok(t)
    }

    /// Build from an explicit generating set (must pairwise commute and be
    /// independent over GF(2)).
    pub fn from_generators(n: usize, gens: &[PauliString]) -> Result<Self, TableauError> {
        if n == 0 {
            return Err(TableauError::EmptyChain);
        }
        let words = n.div_ceil(64);
        let mut t =
            Tableau { n, words, ngens: 0, x: Vec::new(), z: Vec::new(), neg: Vec::new() };
        for g in gens {
            if g.n_sites() != n {
                return Err(TableauError::LengthMismatch { got: g.n_sites(), want: n });
            }
            t.push_row(g.x_plane(), g.z_plane(), g.is_negative());
        }
        t.validate()?;
        Ok(t)
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn n_generators(&self) -> usize {
        self.ngens
    }

    /// log2 Tr rho^2 = |G| - L; zero iff pure, negative otherwise.
    pub fn purity_exponent(&self) -> i64 {
        self.ngens as i64 - self.n as i64
    }

    pub fn generator(&self, r: usize) -> PauliString {
        assert!(r < self.ngens);
        PauliString::from_planes(
            self.n,
            self.x_row(r).to_vec(),
            self.z_row(r).to_vec(),
            self.neg[r],
        )
    }

    pub fn generators(&self) -> Vec<PauliString> {
        (0..self.ngens).map(|r| self.generator(r)).collect()
    }

    #[inline]
    fn x_row(&self, r: usize) -> &[u64] {
        &self.x[r * self.words..(r + 1) * self.words]
    }

    #[inline]
    fn z_row(&self, r: usize) -> &[u64] {
        &self.z[r * self.words..(r + 1) * self.words]
    }

    #[inline]
    fn bit(&self, plane_x: bool, r: usize, site: usize) -> bool {
        let w = r * self.words + site / 64;
        let p = if plane_x { &self.x } else { &self.z };
        p[w] >> (site % 64) & 1 == 1
    }

    fn push_row(&mut self, x: &[u64], z: &[u64], neg: bool) {
        self.x.extend_from_slice(x);
        self.z.extend_from_slice(z);
        self.neg.push(neg);
        self.ngens += 1;
    }

    fn push_z_row(&mut self, site: usize, neg: bool) {
        debug_assert!(self.ngens < self.n, "group cannot exceed L independent generators");
        let start = self.x.len();
        self.x.resize(start + self.words, 0);
        self.z.resize(start + self.words, 0);
        self.z[start + site / 64] |= 1 << (site % 64);
        self.neg.push(neg);
        self.ngens += 1;
    }

    fn swap_remove_row(&mut self, r: usize) {
        let last = self.ngens - 1;
        if r != last {
            for k in 0..self.words {
                self.x[r * self.words + k] = self.x[last * self.words + k];
                self.z[r * self.words + k] = self.z[last * self.words + k];
            }
            self.neg[r] = self.neg[last];
        }
        self.x.truncate(last * self.words);
        self.z.truncate(last * self.words);
        self.neg.truncate(last);
        self.ngens = last;
    }

    /// Group-preserving row operation: generator `dst` <- `dst * src`
    /// (signed Pauli product; the rows commute, so the order is immaterial).
    pub fn row_mul(&mut self, dst: usize, src: usize) {
        assert!(dst != src && dst < self.ngens && src < self.ngens);
        let (d0, s0) = (dst * self.words, src * self.words);
        let mut exp = 2 * (self.neg[dst] as u32 + self.neg[src] as u32);
        for k in 0..self.words {
            let (a, b) = (self.x[d0 + k], self.z[d0 + k]);
            let (c, d) = (self.x[s0 + k], self.z[s0 + k]);
            let e1 = (!a & b & c & !d) | (a & !b & c & d) | (a & b & !c & d);
            let e3 = (!a & b & c & d) | (a & !b & !c & d) | (a & b & c & !d);
            exp += e1.count_ones() + 3 * e3.count_ones();
            self.x[d0 + k] = a ^ c;
            self.z[d0 + k] = b ^ d;
        }
        debug_assert!(exp % 2 == 0, "row_mul applied to anticommuting rows");
        self.neg[dst] = exp % 4 == 2;
    }

    fn check_site(&self, site: usize) -> Result<(), TableauError> {
        if site >= self.n {
            return Err(TableauError::SiteOutOfRange { site, n: self.n });
        }
        Ok(())
    }

    /// Conjugate every generator by a two-qubit Clifford acting on sites
    /// (i, j); i is the gate's first slot. The group size never changes.
    pub fn apply_gate(
        &mut self,
        gate: &CliffordGate,
        i: usize,
        j: usize,
    ) -> Result<(), TableauError> {
        self.check_site(i)?;
        self.check_site(j)?;
        if i == j {
            return Err(TableauError::CoincidentSites);
        }
        let (wi, bi) = (i / 64, (i % 64) as u32);
        let (wj, bj) = (j / 64, (j % 64) as u32);
        for r in 0..self.ngens {
            let base = r * self.words;
            let a = (self.x[base + wi] >> bi & 1) as u8;
            let b = (self.z[base + wi] >> bi & 1) as u8;
            let c = (self.x[base + wj] >> bj & 1) as u8;
            let d = (self.z[base + wj] >> bj & 1) as u8;
            let nib = a | b << 1 | c << 2 | d << 3;
            if nib == 0 {
                continue;
            }
            let (out, flip) = gate.lut_entry(nib);
            self.x[base + wi] =
                self.x[base + wi] & !(1u64 << bi) | ((out & 1) as u64) << bi;
            self.z[base + wi] =
                self.z[base + wi] & !(1u64 << bi) | ((out >> 1 & 1) as u64) << bi;
            self.x[base + wj] =
                self.x[base + wj] & !(1u64 << bj) | ((out >> 2 & 1) as u64) << bj;
            self.z[base + wj] =
                self.z[base + wj] & !(1u64 << bj) | ((out >> 3 & 1) as u64) << bj;
            self.neg[r] ^= flip;
        }
        self.post_channel_check();
        Ok(())
    }

    /// Projective Z measurement at `site`. Returns the outcome bit
    /// (false = +1 eigenvalue). Three cases:
    ///
    /// * some generator anticommutes with Z_site: the outcome is a fair
    ///   coin; the lowest-index anticommuting generator is multiplied into
    ///   the other anticommuting ones and then replaced by `(-1)^outcome
    ///   Z_site` (group size unchanged);
    /// * Z_site is in the group up to sign: deterministic outcome, read off
    ///   the representative's sign; state unchanged;
    /// * Z_site commutes with but is independent of the group: fair coin,
    ///   and `(-1)^outcome Z_site` joins the generating set (group grows).
    pub fn measure_z<R: Rng + ?Sized>(
        &mut self,
        site: usize,
        rng: &mut R,
    ) -> Result<bool, TableauError> {
        self.check_site(site)?;
        if let Some(p) = (0..self.ngens).find(|&r| self.bit(true, r, site)) {
            for r in p + 1..self.ngens {
                if self.bit(true, r, site) {
                    self.row_mul(r, p);
                }
            }
            let outcome = rng.random::<bool>();
            let base = p * self.words;
            self.x[base..base + self.words].fill(0);
            self.z[base..base + self.words].fill(0);
            self.z[base + site / 64] |= 1 << (site % 64);
            self.neg[p] = outcome;
            self.post_channel_check();
            return Ok(outcome);
        }
        // Every generator commutes with Z_site.
        match self.z_membership_sign(site) {
            Some(neg) => Ok(neg),
            None => {
                let outcome = rng.random::<bool>();
                self.push_z_row(site, outcome);
                self.post_channel_check();
                Ok(outcome)
            }
        }
    }

    /// Membership of Z_site in the signed group, assuming it commutes with
    /// every generator. `Some(sign)` if `(-1)^sign Z_site` is an element.
    ///
    /// Decided by rank comparison: Z_site is a member iff appending it does
    /// not raise the GF(2) rank. The elimination runs at the signed-Pauli
    /// level, so reducing a scratch copy of Z_site to the identity leaves
    /// the representative's sign behind as the recorded row combination.
    fn z_membership_sign(&self, site: usize) -> Option<bool> {
        // Fast path: a generator is exactly +/-Z_site.
        'rows: for r in 0..self.ngens {
            let (x, z) = (self.x_row(r), self.z_row(r));
            for k in 0..self.words {
                let want_z = if k == site / 64 { 1u64 << (site % 64) } else { 0 };
                if x[k] != 0 || z[k] != want_z {
                    continue 'rows;
                }
            }
            return Some(self.neg[r]);
        }
        // Fast path: nothing in the group touches the site at all, so no
        // product can equal Z_site (supports only shrink by cancellation).
        if (0..self.ngens).all(|r| !self.bit(true, r, site) && !self.bit(false, r, site)) {
            return None;
        }
        let mut scratch = self.clone();
        let pivots = scratch.canonicalize();
        // Reduce a scratch Z_site through the echelon rows; track the sign.
        let mut tx = vec![0u64; self.words];
        let mut tz = vec![0u64; self.words];
        tz[site / 64] |= 1 << (site % 64);
        let mut texp = 0u32;
        for (r, &col) in pivots.iter().enumerate() {
            let (w, b) = if col < self.n {
                (col / 64, col % 64)
            } else {
                ((col - self.n) / 64, (col - self.n) % 64)
            };
            let hit = if col < self.n { tx[w] >> b & 1 == 1 } else { tz[w] >> b & 1 == 1 };
            if !hit {
                continue;
            }
            texp += 2 * scratch.neg[r] as u32;
            let s0 = r * scratch.words;
            for k in 0..self.words {
                let (a, bb) = (tx[k], tz[k]);
                let (c, d) = (scratch.x[s0 + k], scratch.z[s0 + k]);
                let e1 = (!a & bb & c & !d) | (a & !bb & c & d) | (a & bb & !c & d);
                let e3 = (!a & bb & c & d) | (a & !bb & !c & d) | (a & bb & c & !d);
                texp += e1.count_ones() + 3 * e3.count_ones();
                tx[k] = a ^ c;
                tz[k] = bb ^ d;
            }
        }
        if tx.iter().any(|&w| w != 0) || tz.iter().any(|&w| w != 0) {
            return None; // rank(G + Z_site) = rank(G) + 1
        }
        // Z_site * (rows used) = (-1)^b I  =>  (-1)^b Z_site is the element.
        debug_assert!(texp % 2 == 0);
        Some(texp % 4 == 2)
    }

    /// Reset channel at `site`: trace out the site and re-prepare `|0>`.
    /// Row-reduce so at most two generators act on the site (one with an X
    /// component, one pure Z), discard those, and append +Z_site. The group
    /// size changes by -1, 0, or +1; purity can go up.
    pub fn reset(&mut self, site: usize) -> Result<(), TableauError> {
        self.check_site(site)?;
        let xpivot = (0..self.ngens).find(|&r| self.bit(true, r, site));
        if let Some(a) = xpivot {
            for r in a + 1..self.ngens {
                if self.bit(true, r, site) {
                    self.row_mul(r, a);
                }
            }
        }
        let zpivot =
            (0..self.ngens).find(|&r| Some(r) != xpivot && self.bit(false, r, site));
        if let Some(b) = zpivot {
            for r in b + 1..self.ngens {
                if Some(r) != xpivot && self.bit(false, r, site) {
                    self.row_mul(r, b);
                }
            }
        }
        // Discard the higher index first so the lower one stays valid.
        let mut discard = [xpivot, zpivot];
        discard.sort();
        if let Some(hi) = discard[1] {
            self.swap_remove_row(hi);
        }
        if let Some(lo) = discard[0] {
            self.swap_remove_row(lo);
        }
        self.push_z_row(site, false);
        self.post_channel_check();
        Ok(())
    }

    /// Number of generators of the subgroup supported inside `region`:
    /// `|G_region| = |G| - rank(G restricted to the complement's columns)`.
    pub fn subgroup_generator_count(&self, region: &[usize]) -> Result<usize, TableauError> {
        let mask = self.region_mask(region)?;
        let comp: Vec<usize> = (0..self.n).filter(|&k| !mask[k]).collect();
        let mut m = BitMatrix::zeros(self.ngens, 2 * comp.len().max(1));
        for r in 0..self.ngens {
            for (c, &site) in comp.iter().enumerate() {
                m.set(r, c, self.bit(true, r, site));
                m.set(r, comp.len() + c, self.bit(false, r, site));
            }
        }
        Ok(self.ngens - m.rank())
    }

    /// A generating set for the subgroup of elements supported inside
    /// `region`, as full-length signed strings. Row-echelon reduction with
    /// the complement's columns ordered first leaves exactly the rows with
    /// no complement support at the bottom.
    pub fn region_subgroup(&self, region: &[usize]) -> Result<Vec<PauliString>, TableauError> {
        let mask = self.region_mask(region)?;
        let comp: Vec<usize> = (0..self.n).filter(|&k| !mask[k]).collect();
        let mut scratch = self.clone();
        let mut rank = 0usize;
        for (plane_x, site) in
            comp.iter().map(|&s| (true, s)).chain(comp.iter().map(|&s| (false, s)))
        {
            let Some(p) = (rank..scratch.ngens).find(|&r| scratch.bit(plane_x, r, site))
            else {
                continue;
            };
            scratch.swap_rows(rank, p);
            for r in rank + 1..scratch.ngens {
                if scratch.bit(plane_x, r, site) {
                    scratch.row_mul(r, rank);
                }
            }
            rank += 1;
            if rank == scratch.ngens {
                break;
            }
        }
        Ok((rank..scratch.ngens).map(|r| scratch.generator(r)).collect())
    }

    fn region_mask(&self, region: &[usize]) -> Result<Vec<bool>, TableauError> {
        let mut mask = vec![false; self.n];
        for &s in region {
            self.check_site(s)?;
            mask[s] = true;
        }
        Ok(mask)
    }

    /// Reduce to the canonical signed form (RREF over columns x_0..x_{L-1},
    /// z_0..z_{L-1}); returns the pivot column of each row. Two tableaus
    /// describe the same state iff their canonical forms agree exactly
    /// (bit planes and signs).
    pub fn canonicalize(&mut self) -> Vec<usize> {
        let mut pivots = Vec::with_capacity(self.ngens);
        let mut rank = 0usize;
        for col in 0..2 * self.n {
            let plane_x = col < self.n;
            let site = if plane_x { col } else { col - self.n };
            let Some(p) = (rank..self.ngens).find(|&r| self.bit(plane_x, r, site)) else {
                continue;
            };
            self.swap_rows(rank, p);
            for r in 0..self.ngens {
                if r != rank && self.bit(plane_x, r, site) {
                    self.row_mul(r, rank);
                }
            }
            pivots.push(col);
            rank += 1;
            if rank == self.ngens {
                break;
            }
        }
        debug_assert_eq!(rank, self.ngens, "generators must stay independent");
        pivots
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for k in 0..self.words {
            self.x.swap(a * self.words + k, b * self.words + k);
            self.z.swap(a * self.words + k, b * self.words + k);
        }
        self.neg.swap(a, b);
    }

    /// Same stabilizer group (including signs)?
    pub fn group_eq(&self, other: &Tableau) -> bool {
        if self.n != other.n || self.ngens != other.ngens {
            return false;
        }
        let mut a = self.clone();
        let mut b = other.clone();
        a.canonicalize();
        b.canonicalize();
        a.x == b.x && a.z == b.z && a.neg == b.neg
    }

    /// Invariant check: pairwise commutation, GF(2) independence, |G| <= L.
    pub fn validate(&self) -> Result<(), TableauError> {
        if self.ngens > self.n {
            return Err(TableauError::InvariantViolated(format!(
                "{} generators on {} sites",
                self.ngens, self.n
            )));
        }
        for i in 0..self.ngens {
            for j in i + 1..self.ngens {
                let (xi, zi) = (self.x_row(i), self.z_row(i));
                let (xj, zj) = (self.x_row(j), self.z_row(j));
                let mut acc = 0u32;
                for k in 0..self.words {
                    acc ^= (xi[k] & zj[k]).count_ones() ^ (zi[k] & xj[k]).count_ones();
                }
                if acc & 1 == 1 {
                    return Err(TableauError::NonCommutingGenerators);
                }
            }
        }
        let mut m = BitMatrix::zeros(self.ngens, 2 * self.n);
        for r in 0..self.ngens {
            for s in 0..self.n {
                m.set(r, s, self.bit(true, r, s));
                m.set(r, self.n + s, self.bit(false, r, s));
            }
        }
        if rank_gf2(&m) != self.ngens {
            return Err(TableauError::DependentGenerators);
        }
        Ok(())
    }

    #[inline]
    fn post_channel_check(&self) {
        if channel_validation_enabled() {
            if let Err(e) = self.validate() {
                panic!("channel broke a tableau invariant: {e}");
            }
        }
    }
}
