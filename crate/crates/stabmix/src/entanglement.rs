//! Entanglement diagnostics for mixed stabilizer states, all in bits
//! (logarithms base 2).
//!
//! For a stabilizer group `G` on `L` sites and a region `A` with `L_A`
//! sites, the subgroup `G_A` of elements supported inside `A` determines
//! every quantity here:
//!
//! * entropy            `S_A = L_A - |G_A|`  (counts of generators),
//! * mutual information `I(A:B) = |G_{AB}| - |G_A| - |G_B|`,
//! * logarithmic negativity `E_N = rank_GF2(J) / 2`, where
//!   `J_ij = 1` iff the restrictions to `A` of generators `i, j` of
//!   `G_{AB}` anticommute.
//!
//! `J` is an alternating form, so its rank is even and `E_N` integral; it is
//! independent of the generating set because a change of generators acts on
//! `J` by congruence. The bound `E_N <= I/2` holds for every stabilizer
//! state.

use std::ops::Range;

use thiserror::Error;

use crate::gf2::{rank_gf2, BitMatrix};
use crate::pauli::PauliString;
use crate::tableau::{Tableau, TableauError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EntanglementError {
    #[error("bipartition ranges overlap")]
    Overlap,
    #[error("bipartition range end {end} exceeds chain length {n}")]
    OutOfRange { end: usize, n: usize },
    #[error(transparent)]
    Tableau(#[from] TableauError),
}

/// Two disjoint contiguous blocks of sites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bipartition {
    pub a: Range<usize>,
    pub b: Range<usize>,
}

impl Bipartition {
    /// A = left half, B = right half (L must be even for equal halves; any
    /// L >= 2 splits at L/2).
    pub fn half_chain(l: usize) -> Self {
        Bipartition { a: 0..l / 2, b: l / 2..l }
    }

    pub fn validate(&self, n: usize) -> Result<(), EntanglementError> {
        for r in [&self.a, &self.b] {
            if r.end > n {
                return Err(EntanglementError::OutOfRange { end: r.end, n });
            }
        }
        if self.a.start < self.b.end && self.b.start < self.a.end {
            return Err(EntanglementError::Overlap);
        }
        Ok(())
    }

    pub fn a_sites(&self) -> Vec<usize> {
        self.a.clone().collect()
    }

    pub fn b_sites(&self) -> Vec<usize> {
        self.b.clone().collect()
    }

    pub fn union_sites(&self) -> Vec<usize> {
        self.a.clone().chain(self.b.clone()).collect()
    }

    /// Does A union B cover the whole chain?
    fn covers(&self, n: usize) -> bool {
        self.a.len() + self.b.len() == n
    }
}

/// Entanglement entropy of `region` in bits: `|region| - |G_region|`.
/// Exact integer for stabilizer states.
pub fn entropy(t: &Tableau, region: &[usize]) -> Result<u32, TableauError> {
    let count = t.subgroup_generator_count(region)?;
    let mut uniq: Vec<usize> = region.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    Ok((uniq.len() - count) as u32)
}

/// Mutual information `I(A:B) = S_A + S_B - S_AB` between disjoint regions,
/// in bits. The site counts cancel, leaving pure generator counting.
pub fn mutual_information(
    t: &Tableau,
    a: &[usize],
    b: &[usize],
) -> Result<u32, TableauError> {
    let union: Vec<usize> = a.iter().chain(b).copied().collect();
    let g_ab = t.subgroup_generator_count(&union)?;
    let g_a = t.subgroup_generator_count(a)?;
    let g_b = t.subgroup_generator_count(b)?;
    debug_assert!(g_ab >= g_a + g_b);
    Ok((g_ab - g_a - g_b) as u32)
}

/// Logarithmic negativity across the bipartition, in bits: half the GF(2)
/// rank of the anticommutation form of `G_AB` restricted to `A`. Integral
/// (the form is alternating), and invariant under the choice of generators.
pub fn log_negativity(t: &Tableau, bp: &Bipartition) -> Result<f64, EntanglementError> {
    bp.validate(t.n_sites())?;
    let a_sites = bp.a_sites();
    let gens: Vec<PauliString> = if bp.covers(t.n_sites()) {
        t.generators()
    } else {
        t.region_subgroup(&bp.union_sites())?
    };
    let m = gens.len();
    // Restrictions to A, freshly packed: column k = a_sites[k].
    let words = a_sites.len().div_ceil(64).max(1);
    let mut xa = vec![0u64; m * words];
    let mut za = vec![0u64; m * words];
    for (r, g) in gens.iter().enumerate() {
        for (c, &s) in a_sites.iter().enumerate() {
            let (x, z) = g.site(s);
            xa[r * words + c / 64] |= (x as u64) << (c % 64);
            za[r * words + c / 64] |= (z as u64) << (c % 64);
        }
    }
    let mut j = BitMatrix::zeros(m, m.max(1));
    for r in 0..m {
        for s in r + 1..m {
            let mut acc = 0u32;
            for k in 0..words {
                acc ^= (xa[r * words + k] & za[s * words + k]).count_ones()
                    ^ (za[r * words + k] & xa[s * words + k]).count_ones();
            }
            if acc & 1 == 1 {
                j.set(r, s, true);
                j.set(s, r, true);
            }
        }
    }
    let rank = rank_gf2(&j);
    debug_assert!(rank % 2 == 0, "alternating form must have even rank");
    Ok(rank as f64 / 2.0)
}

/// Every readout quantity for one bipartition of one state. Entropies and
/// mutual information are exact generator counts (bits); negativity is in
/// bits and integral for stabilizer states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntanglementReport {
    pub s_a: u32,
    pub s_b: u32,
    pub s_ab: u32,
    pub mutual_information: u32,
    pub log_negativity: f64,
    pub purity_exponent: i64,
}

impl EntanglementReport {
    pub fn compute(t: &Tableau, bp: &Bipartition) -> Result<Self, EntanglementError> {
        bp.validate(t.n_sites())?;
        let a = bp.a_sites();
        let b = bp.b_sites();
        let s_a = entropy(t, &a)?;
        let s_b = entropy(t, &b)?;
        let s_ab = entropy(t, &bp.union_sites())?;
        let mutual = mutual_information(t, &a, &b)?;
        debug_assert_eq!(mutual, s_a + s_b - s_ab);
        let e_n = log_negativity(t, bp)?;
        debug_assert!(2.0 * e_n <= mutual as f64 + 1e-9, "E_N <= I/2 must hold");
        Ok(EntanglementReport {
            s_a,
            s_b,
            s_ab,
            mutual_information: mutual,
            log_negativity: e_n,
            purity_exponent: t.purity_exponent(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::CliffordGate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn bell() -> Tableau {
        Tableau::from_generators(2, &[p("+XX"), p("+ZZ")]).unwrap()
    }

    fn ghz4() -> Tableau {
        Tableau::from_generators(4, &[p("+XXXX"), p("+ZZII"), p("+IZZI"), p("+IIZZ")])
            .unwrap()
    }

    #[test]
    fn product_state_has_no_correlations() {
        let t = Tableau::new_product_state(6).unwrap();
        let r = EntanglementReport::compute(&t, &Bipartition::half_chain(6)).unwrap();
        assert_eq!(
            r,
            EntanglementReport {
                s_a: 0,
                s_b: 0,
                s_ab: 0,
                mutual_information: 0,
                log_negativity: 0.0,
                purity_exponent: 0,
            }
        );
    }

    #[test]
    fn bell_pair_report() {
        let r = EntanglementReport::compute(&bell(), &Bipartition::half_chain(2)).unwrap();
        assert_eq!(r.s_a, 1);
        assert_eq!(r.s_b, 1);
        assert_eq!(r.s_ab, 0);
        assert_eq!(r.mutual_information, 2);
        assert_eq!(r.log_negativity, 1.0);
        assert_eq!(r.purity_exponent, 0);
    }

    #[test]
    fn ghz_half_cut() {
        let r = EntanglementReport::compute(&ghz4(), &Bipartition::half_chain(4)).unwrap();
        assert_eq!(r.s_a, 1);
        assert_eq!(r.s_b, 1);
        assert_eq!(r.s_ab, 0);
        assert_eq!(r.mutual_information, 2);
        assert_eq!(r.log_negativity, 1.0);
    }

    #[test]
    fn classical_correlations_have_zero_negativity() {
        // rho = (|00><00| + |11><11|)/2: one shared bit, no entanglement.
        let t = Tableau::from_generators(2, &[p("+ZZ")]).unwrap();
        let r = EntanglementReport::compute(&t, &Bipartition::half_chain(2)).unwrap();
        assert_eq!(r.s_a, 1);
        assert_eq!(r.s_b, 1);
        assert_eq!(r.s_ab, 1);
        assert_eq!(r.mutual_information, 1);
        assert_eq!(r.log_negativity, 0.0);
        assert_eq!(r.purity_exponent, -1);
    }

    #[test]
    fn maximally_mixed_pair() {
        let t = Tableau::from_generators(2, &[]).unwrap();
        let r = EntanglementReport::compute(&t, &Bipartition::half_chain(2)).unwrap();
        assert_eq!((r.s_a, r.s_b, r.s_ab), (1, 1, 2));
        assert_eq!(r.mutual_information, 0);
        assert_eq!(r.log_negativity, 0.0);
        assert_eq!(r.purity_exponent, -2);
    }

    #[test]
    fn two_bell_pairs_across_the_cut() {
        // Pairs (0,2) and (1,3): half cut sees two ebits.
        let t = Tableau::from_generators(
            4,
            &[p("+XIXI"), p("+ZIZI"), p("+IXIX"), p("+IZIZ")],
        )
        .unwrap();
        let r = EntanglementReport::compute(&t, &Bipartition::half_chain(4)).unwrap();
        assert_eq!(r.mutual_information, 4);
        assert_eq!(r.log_negativity, 2.0);
    }

    #[test]
    fn negativity_is_generator_choice_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let mut t = random_state(&mut rng, 6);
            let bp = Bipartition::half_chain(6);
            let before = EntanglementReport::compute(&t, &bp).unwrap();
            for _ in 0..12 {
                if t.n_generators() < 2 {
                    break;
                }
                let a = rng.random_range(0..t.n_generators());
                let mut b = rng.random_range(0..t.n_generators());
                while b == a {
                    b = rng.random_range(0..t.n_generators());
                }
                t.row_mul(a, b);
            }
            assert_eq!(EntanglementReport::compute(&t, &bp).unwrap(), before);
        }
    }

    #[test]
    fn unentangled_ancilla_leaves_negativity_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..30 {
            let t = random_state(&mut rng, 4);
            let bp = Bipartition { a: 0..2, b: 2..4 };
            let en = log_negativity(&t, &bp).unwrap();
            let i = mutual_information(&t, &bp.a_sites(), &bp.b_sites()).unwrap();
            // Same state plus a fresh |0> at site 4; bipartition unchanged,
            // exercising the non-covering subgroup path.
            let mut gens = t.generators();
            for g in gens.iter_mut() {
                let mut wide = PauliString::identity(5);
                for k in 0..4 {
                    let (x, z) = g.site(k);
                    wide.set_site(k, x, z);
                }
                wide.set_sign(g.is_negative());
                *g = wide;
            }
            gens.push(PauliString::z_at(5, 4));
            let wide = Tableau::from_generators(5, &gens).unwrap();
            assert_eq!(log_negativity(&wide, &bp).unwrap(), en);
            assert_eq!(
                mutual_information(&wide, &bp.a_sites(), &bp.b_sites()).unwrap(),
                i
            );
        }
    }

    #[test]
    fn negativity_bounded_by_half_mutual_information() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let t = random_state(&mut rng, 6);
            let r = EntanglementReport::compute(&t, &Bipartition::half_chain(6)).unwrap();
            assert!(2.0 * r.log_negativity <= r.mutual_information as f64);
        }
    }

    #[test]
    fn bipartition_validation() {
        let t = Tableau::new_product_state(4).unwrap();
        let bad = Bipartition { a: 0..3, b: 2..4 };
        assert_eq!(
            EntanglementReport::compute(&t, &bad).unwrap_err(),
            EntanglementError::Overlap
        );
        let oob = Bipartition { a: 0..2, b: 2..5 };
        assert_eq!(
            EntanglementReport::compute(&t, &oob).unwrap_err(),
            EntanglementError::OutOfRange { end: 5, n: 4 }
        );
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Tableau {
        let mut t = Tableau::new_product_state(n).unwrap();
        for _ in 0..4 * n {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n);
            while j == i {
                j = rng.random_range(0..n);
            }
            t.apply_gate(&CliffordGate::sample(rng), i, j).unwrap();
            if rng.random::<f64>() < 0.25 {
                t.measure_z(rng.random_range(0..n), rng).unwrap();
            }
            if rng.random::<f64>() < 0.15 {
                t.reset(rng.random_range(0..n)).unwrap();
            }
        }
        t
    }
}
