//! Dense density-matrix oracle for small chains (up to [`MAX_DENSE_SITES`]
//! sites).
//!
//! Everything here is computed from the full `2^n x 2^n` density matrix with
//! none of the stabilizer machinery: gates are rebuilt as explicit unitaries
//! from their conjugation images, measurements and resets act as Kraus maps,
//! and entropies/negativity come from eigendecompositions. The oracle can
//! replay a recorded [`EventLog`] (measurement outcomes forced to the
//! recorded values) and compare every observable against a stabilizer
//! tableau, which is how the fast simulator is validated.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::entanglement::{Bipartition, EntanglementError, EntanglementReport};
use crate::event::{Event, EventLog};
use crate::gate::CliffordGate;
use crate::pauli::PauliString;
use crate::tableau::{Tableau, TableauError};

/// Largest chain the dense oracle will represent (`2^8 = 256` dimensional).
pub const MAX_DENSE_SITES: usize = 8;

/// Probabilities below this are treated as exactly zero when forcing a
/// recorded measurement outcome.
const FORCED_OUTCOME_EPS: f64 = 1e-12;

type CMat = DMatrix<Complex<f64>>;
type CVec = DVector<Complex<f64>>;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("dense oracle supports at most {MAX_DENSE_SITES} sites, got {n}")]
    TooLarge { n: usize },
    #[error("density matrix is {rows}x{cols}, want {dim}x{dim} for {n} sites")]
    BadShape { rows: usize, cols: usize, dim: usize, n: usize },
    #[error("matrix is not a density operator: {why}")]
    NotDensity { why: String },
    #[error("region site {site} out of range or repeated (chain length {n})")]
    BadRegion { site: usize, n: usize },
    #[error("forced outcome {outcome} at site {site} has probability {probability:.3e}")]
    ImpossibleOutcome { site: usize, outcome: bool, probability: f64 },
    #[error("replay diverged at event {step}: {source}")]
    ReplayDivergence { step: usize, source: Box<OracleError> },
    #[error("dense and stabilizer values of {quantity} disagree: {dense} vs {stabilizer}")]
    Mismatch { quantity: &'static str, dense: f64, stabilizer: f64 },
    #[error("density matrices deviate by {deviation:.3e} (max entry)")]
    MatrixDeviation { deviation: f64 },
    #[error(transparent)]
    Tableau(#[from] TableauError),
    #[error(transparent)]
    Entanglement(#[from] EntanglementError),
}

/// Dense Pauli matrix. Entry `(g ^ xmask, g)` is
/// `sign * i^(x&z weight) * (-1)^(z&g weight)`: the `Z` part acts first,
/// then `X` flips, and `i^(xz)` is the Hermitian `Y` phase per site.
fn pauli_matrix(p: &PauliString) -> CMat {
    let n = p.n_sites();
    assert!(n <= MAX_DENSE_SITES);
    let dim = 1usize << n;
    let xm = p.x_plane()[0] as usize;
    let zm = p.z_plane()[0] as usize;
    let phase = Complex::i().powu((xm & zm).count_ones())
        * if p.is_negative() { -1.0 } else { 1.0 };
    let mut m = CMat::zeros(dim, dim);
    for g in 0..dim {
        let sgn = if (zm & g).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
        m[(g ^ xm, g)] = phase * sgn;
    }
    m
}

/// Rebuild the 4x4 unitary of a Clifford gate from its conjugation images,
/// up to global phase. `U|00>` spans the joint +1 eigenspace of the two
/// image-Z operators, and `U|l>` follows by applying image-X operators.
fn gate_unitary(gate: &CliffordGate) -> CMat {
    let img: Vec<CMat> = gate
        .images()
        .iter()
        .map(|im| pauli_matrix(&im.to_pauli_string()))
        .collect();
    let id = CMat::identity(4, 4);
    // Rank-1 projector |psi0><psi0| with psi0 = U|00>.
    let proj = ((&id + &img[1]) * (&id + &img[3])).unscale(4.0);
    let col = (0..4)
        .max_by(|&a, &b| {
            proj.column(a).norm().partial_cmp(&proj.column(b).norm()).unwrap()
        })
        .unwrap();
    let psi0: CVec = proj.column(col).unscale(proj.column(col).norm()).into_owned();
    let mut u = CMat::zeros(4, 4);
    for l in 0..4usize {
        let mut psi = psi0.clone();
        if l & 1 == 1 {
            psi = &img[0] * psi;
        }
        if l >> 1 & 1 == 1 {
            psi = &img[2] * psi;
        }
        u.set_column(l, &psi);
    }
    let dev = (&u * u.adjoint() - &id).norm();
    assert!(dev < 1e-9, "reconstructed gate is not unitary (dev {dev:.3e})");
    for (k, b) in [
        PauliString::x_at(2, 0),
        PauliString::z_at(2, 0),
        PauliString::x_at(2, 1),
        PauliString::z_at(2, 1),
    ]
    .iter()
    .enumerate()
    {
        let dev = (&u * pauli_matrix(b) * u.adjoint() - &img[k]).norm();
        assert!(dev < 1e-9, "image {k} not reproduced (dev {dev:.3e})");
    }
    u
}

/// Mixed state of `n <= MAX_DENSE_SITES` qubits as a full density matrix.
/// Site `k` is bit `k` of the computational-basis index.
#[derive(Clone, Debug)]
pub struct DenseState {
    n: usize,
    rho: CMat,
}

impl DenseState {
    pub fn new_product_state(n: usize) -> Result<Self, OracleError> {
        if n > MAX_DENSE_SITES {
            return Err(OracleError::TooLarge { n });
        }
        let dim = 1usize << n;
        let mut rho = CMat::zeros(dim, dim);
        rho[(0, 0)] = Complex::new(1.0, 0.0);
        Ok(DenseState { n, rho })
    }

    pub fn from_density_matrix(n: usize, rho: CMat) -> Result<Self, OracleError> {
        if n > MAX_DENSE_SITES {
            return Err(OracleError::TooLarge { n });
        }
        let dim = 1usize << n;
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(OracleError::BadShape { rows: rho.nrows(), cols: rho.ncols(), dim, n });
        }
        let herm = (&rho - rho.adjoint()).norm();
        if herm > 1e-9 {
            return Err(OracleError::NotDensity { why: format!("not Hermitian (dev {herm:.3e})") });
        }
        let tr = rho.trace();
        if (tr - Complex::new(1.0, 0.0)).norm() > 1e-9 {
            return Err(OracleError::NotDensity { why: format!("trace {tr} != 1") });
        }
        Ok(DenseState { n, rho })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn density_matrix(&self) -> &CMat {
        &self.rho
    }

    fn check_sites(&self, i: usize, j: usize) -> Result<(), TableauError> {
        if i >= self.n || j >= self.n {
            return Err(TableauError::SiteOutOfRange { site: i.max(j), n: self.n });
        }
        if i == j {
            return Err(TableauError::CoincidentSites);
        }
        Ok(())
    }

    /// Conjugate by the gate's unitary, reconstructed from its images and
    /// embedded at sites `(i, j)`; `i` is the gate's first qubit.
    pub fn apply_gate(&mut self, gate: &CliffordGate, i: usize, j: usize) -> Result<(), OracleError> {
        self.check_sites(i, j)?;
        let u4 = gate_unitary(gate);
        let dim = 1usize << self.n;
        let mut full = CMat::zeros(dim, dim);
        for g in 0..dim {
            let l = (g >> i & 1) | (g >> j & 1) << 1;
            let base = g & !(1 << i) & !(1 << j);
            for lp in 0..4usize {
                let gp = base | (lp & 1) << i | (lp >> 1) << j;
                full[(gp, g)] = u4[(lp, l)];
            }
        }
        self.rho = &full * &self.rho * full.adjoint();
        Ok(())
    }

    /// Probability of reading `outcome` in a Z measurement of `site`.
    pub fn outcome_probability(&self, site: usize, outcome: bool) -> f64 {
        let dim = 1usize << self.n;
        (0..dim)
            .filter(|g| (g >> site & 1 == 1) == outcome)
            .map(|g| self.rho[(g, g)].re)
            .sum()
    }

    /// Project onto the recorded outcome and renormalize; an outcome of
    /// (numerically) zero probability means the replayed history cannot have
    /// come from this state.
    pub fn measure_forced(&mut self, site: usize, outcome: bool) -> Result<(), OracleError> {
        if site >= self.n {
            return Err(TableauError::SiteOutOfRange { site, n: self.n }.into());
        }
        let prob = self.outcome_probability(site, outcome);
        if prob < FORCED_OUTCOME_EPS {
            return Err(OracleError::ImpossibleOutcome { site, outcome, probability: prob });
        }
        let dim = 1usize << self.n;
        for g in 0..dim {
            for h in 0..dim {
                let keep = (g >> site & 1 == 1) == outcome && (h >> site & 1 == 1) == outcome;
                if !keep {
                    self.rho[(g, h)] = Complex::new(0.0, 0.0);
                }
            }
        }
        self.rho.unscale_mut(prob);
        Ok(())
    }

    /// Reset channel: trace out the site and reinstall `|0>`. With
    /// `m = 1 << site`, the surviving entries are
    /// `rho'[g, h] = rho[g, h] + rho[g|m, h|m]` for `g, h` with bit clear.
    pub fn reset(&mut self, site: usize) -> Result<(), OracleError> {
        if site >= self.n {
            return Err(TableauError::SiteOutOfRange { site, n: self.n }.into());
        }
        let dim = 1usize << self.n;
        let m = 1usize << site;
        let mut out = CMat::zeros(dim, dim);
        for g in 0..dim {
            if g & m != 0 {
                continue;
            }
            for h in 0..dim {
                if h & m != 0 {
                    continue;
                }
                out[(g, h)] = self.rho[(g, h)] + self.rho[(g | m, h | m)];
            }
        }
        self.rho = out;
        Ok(())
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    /// Reduced state on `keep`, whose k-th entry becomes bit `k` of the new
    /// index. Sites must be distinct and in range.
    pub fn reduced(&self, keep: &[usize]) -> Result<DenseState, OracleError> {
        let mut seen = vec![false; self.n];
        for &s in keep {
            if s >= self.n || seen[s] {
                return Err(OracleError::BadRegion { site: s, n: self.n });
            }
            seen[s] = true;
        }
        let env: Vec<usize> = (0..self.n).filter(|s| !seen[*s]).collect();
        let dim_k = 1usize << keep.len();
        let dim_e = 1usize << env.len();
        let assemble = |k: usize, e: usize| -> usize {
            let mut g = 0usize;
            for (b, &s) in keep.iter().enumerate() {
                g |= (k >> b & 1) << s;
            }
            for (b, &s) in env.iter().enumerate() {
                g |= (e >> b & 1) << s;
            }
            g
        };
        let mut out = CMat::zeros(dim_k, dim_k);
        for gk in 0..dim_k {
            for hk in 0..dim_k {
                let mut acc = Complex::new(0.0, 0.0);
                for e in 0..dim_e {
                    acc += self.rho[(assemble(gk, e), assemble(hk, e))];
                }
                out[(gk, hk)] = acc;
            }
        }
        Ok(DenseState { n: keep.len(), rho: out })
    }

    /// Von Neumann entropy of the region in bits, from the eigenvalues of
    /// the reduced density matrix.
    pub fn entropy(&self, region: &[usize]) -> Result<f64, OracleError> {
        let red = self.reduced(region)?;
        Ok(entropy_of(&red.rho))
    }

    pub fn mutual_information(&self, bp: &Bipartition) -> Result<f64, OracleError> {
        bp.validate(self.n)?;
        Ok(self.entropy(&bp.a_sites())?+ self.entropy(&bp.b_sites())?
            - self.entropy(&bp.union_sites())?)
    }

    /// Logarithmic negativity across `A:B` in bits:
    /// `log2` of the trace norm of the partial transpose over `B` of the
    /// reduced state on `A u B`.
    pub fn log_negativity(&self, bp: &Bipartition) -> Result<f64, OracleError> {
        bp.validate(self.n)?;
        let a = bp.a_sites();
        let order: Vec<usize> = a.iter().copied().chain(bp.b_sites()).collect();
        let red = self.reduced(&order)?;
        let dim = 1usize << order.len();
        let amask = (1usize << a.len()) - 1;
        let bmask = (dim - 1) ^ amask;
        let mut pt = CMat::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                pt[(r, c)] = red.rho[((r & amask) | (c & bmask), (c & amask) | (r & bmask))];
            }
        }
        let herm = hermitize(&pt);
        // Halved because the Hermitian eigenvalues arrive in duplicate.
        let trace_norm: f64 =
            hermitian_eigenvalues(&herm).iter().map(|l| l.abs()).sum::<f64>() / 2.0;
        Ok(trace_norm.log2())
    }

    /// Expand a stabilizer tableau into its density matrix:
    /// `rho = 2^-n * sum over all 2^|G| group elements`.
    pub fn from_tableau(t: &Tableau) -> Result<Self, OracleError> {
        let n = t.n_sites();
        if n > MAX_DENSE_SITES {
            return Err(OracleError::TooLarge { n });
        }
        let gens = t.generators();
        let dim = 1usize << n;
        let mut acc = CMat::zeros(dim, dim);
        for mask in 0u32..1 << gens.len() {
            let mut e = PauliString::identity(n);
            for (k, g) in gens.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    e = e.mul(g);
                }
            }
            acc += pauli_matrix(&e);
        }
        DenseState::from_density_matrix(n, acc.unscale(dim as f64))
    }

    /// Rebuild the state a recorded trajectory ends in, forcing every
    /// measurement to its recorded outcome.
    pub fn replay(n: usize, log: &EventLog) -> Result<Self, OracleError> {
        let mut state = DenseState::new_product_state(n)?;
        for (step, ev) in log.events.iter().enumerate() {
            let res = match ev {
                Event::Gate { i, j, gate } => state.apply_gate(gate, *i, *j),
                Event::Measure { site, outcome } => state.measure_forced(*site, *outcome),
                Event::Reset { site } => state.reset(*site),
            };
            res.map_err(|e| OracleError::ReplayDivergence { step, source: Box::new(e) })?;
        }
        Ok(state)
    }

    /// Check a stabilizer-side entanglement report against this state's own
    /// (dense, eigenvalue-based) observables.
    pub fn verify_report(
        &self,
        report: &EntanglementReport,
        bp: &Bipartition,
        tol: f64,
    ) -> Result<(), OracleError> {
        let checks: [(&'static str, f64, f64); 6] = [
            ("purity", self.purity(), (report.purity_exponent as f64).exp2()),
            ("S_A", self.entropy(&bp.a_sites())?, report.s_a as f64),
            ("S_B", self.entropy(&bp.b_sites())?, report.s_b as f64),
            ("S_AB", self.entropy(&bp.union_sites())?, report.s_ab as f64),
            (
                "mutual information",
                self.mutual_information(bp)?,
                report.mutual_information as f64,
            ),
            ("log negativity", self.log_negativity(bp)?, report.log_negativity),
        ];
        for (quantity, dense, stabilizer) in checks {
            if (dense - stabilizer).abs() > tol {
                return Err(OracleError::Mismatch { quantity, dense, stabilizer });
            }
        }
        Ok(())
    }

    /// Full cross-check against a stabilizer tableau: density matrices must
    /// agree entrywise, and purity, entropies, mutual information, and
    /// negativity must agree within `tol`.
    pub fn verify_against(
        &self,
        t: &Tableau,
        bp: &Bipartition,
        tol: f64,
    ) -> Result<(), OracleError> {
        let reference = DenseState::from_tableau(t)?;
        let deviation = (&self.rho - &reference.rho)
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if deviation > tol {
            return Err(OracleError::MatrixDeviation { deviation });
        }
        self.verify_report(&EntanglementReport::compute(t, bp)?, bp, tol)
    }
}

fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).unscale(2.0)
}

/// Eigenvalues of a Hermitian matrix, each one listed twice.
///
/// Goes through the real symmetric embedding `[[Re, -Im], [Im, Re]]` and a
/// direct Householder-plus-bisection solve. Iterative QR/QL eigensolvers can
/// fail to converge on degenerate spectra — and density matrices of
/// stabilizer states are maximally degenerate — so no iteration with a
/// convergence assumption is allowed here: tridiagonalization is a finite
/// algorithm and Sturm bisection is monotone.
fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let n = m.nrows();
    let dim = 2 * n;
    let mut a = vec![0.0f64; dim * dim];
    for r in 0..n {
        for c in 0..n {
            let v = m[(r, c)];
            a[r * dim + c] = v.re;
            a[r * dim + (c + n)] = -v.im;
            a[(r + n) * dim + c] = v.im;
            a[(r + n) * dim + (c + n)] = v.re;
        }
    }
    let (d, e) = householder_tridiagonal(&mut a, dim);
    tridiagonal_eigenvalues(&d, &e)
}

/// Householder reduction of a real symmetric matrix (row-major, lower
/// triangle used) to tridiagonal form; returns the diagonal and the
/// subdiagonal (`e[0]` is zero padding).
fn householder_tridiagonal(a: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| a[i * n + k].abs()).sum();
            if scale == 0.0 {
                e[i] = a[i * n + l];
            } else {
                for k in 0..=l {
                    a[i * n + k] /= scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                let f = a[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                let mut fsum = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[j * n + k] * a[i * n + k];
                    }
                    for k in j + 1..=l {
                        g += a[k * n + j] * a[i * n + k];
                    }
                    e[j] = g / h;
                    fsum += e[j] * a[i * n + j];
                }
                let hh = fsum / (h + h);
                for j in 0..=l {
                    let f = a[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j * n + k] -= f * e[k] + g * a[i * n + k];
                    }
                }
            }
        } else {
            e[i] = a[i * n + l];
        }
        d[i] = h;
    }
    for i in 0..n {
        d[i] = a[i * n + i];
    }
    e[0] = 0.0;
    (d, e)
}

/// All eigenvalues (ascending) of a symmetric tridiagonal matrix by
/// bisection on the Sturm count.
fn tridiagonal_eigenvalues(d: &[f64], e: &[f64]) -> Vec<f64> {
    let n = d.len();
    let e2: Vec<f64> = e.iter().map(|v| v * v).collect();
    // Smallest admissible pivot, so a zero pivot never divides the next
    // recurrence step (LAPACK's dstebz safeguard).
    let pivmin = f64::MIN_POSITIVE.max(
        e2.iter().cloned().fold(0.0, f64::max) * f64::EPSILON * f64::EPSILON,
    );
    // count(x) = eigenvalues of T below x, read off the sign changes of the
    // sequence q_i = (d_i - x) - e_i^2 / q_{i-1}.
    let count = |x: f64| -> usize {
        let mut cnt = 0;
        let mut q = 1.0f64;
        for i in 0..n {
            q = d[i] - x - if i > 0 { e2[i] / q } else { 0.0 };
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                cnt += 1;
            }
        }
        cnt
    };
    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = e[i].abs() + if i + 1 < n { e[i + 1].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let width = (hi - lo).max(1e-300);
    lo -= 1e-12 * width;
    hi += 1e-12 * width;
    (0..n)
        .map(|k| {
            let (mut a, mut b) = (lo, hi);
            // Invariant: count(a) <= k < count(b).
            while b - a > 1e-14 * (1.0 + a.abs().max(b.abs())) {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break; // interval no longer representable
                }
                if count(mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

fn entropy_of(rho: &CMat) -> f64 {
    // The embedding duplicates every eigenvalue, hence the factor 1/2.
    hermitian_eigenvalues(&hermitize(rho))
        .iter()
        .filter(|&&l| l > 1e-12)
        .map(|&l| -l * l.log2())
        .sum::<f64>()
        / 2.0
}
