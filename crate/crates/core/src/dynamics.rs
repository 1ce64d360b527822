//! Quantum propagation: exact constant-Hamiltonian evolution, fixed-step RK4
//! for time-dependent Schrödinger and Lindblad equations, and fidelities.
//!
//! Units: Hamiltonians are angular frequencies (rad/ns), times are ns.

use num_traits::Zero;

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigenvalues, hermitian_propagator, CMatrix};
use crate::scalar::{Complex, Real};

/// Largest accumulated phase `h * omega_max` of one RK4 substep chosen by
/// [`substeps_for`]. The RK4 amplification factor for an oscillating mode
/// deviates from unit modulus by `x^6 / 72`, so at 0.04 a run of 10^4
/// substeps keeps the norm within a few 1e-8.
pub const MAX_PHASE_PER_SUBSTEP: f64 = 0.04;

/// Norm or trace drift above which an integration is reported as failed.
pub fn drift_limit<R: Real>() -> R {
    R::lit(1e-6).max(R::epsilon().sqrt() * R::lit(4.0))
}

fn hermitian_tolerance<R: Real>() -> R {
    R::lit(1e-9).max(R::epsilon() * R::lit(64.0))
}

/// Substep count so that no RK4 substep accumulates more than
/// [`MAX_PHASE_PER_SUBSTEP`] radians at angular frequency `omega_max`.
pub fn substeps_for<R: Real>(dt: R, omega_max: R) -> usize {
    let phase = (dt * omega_max).abs().as_f64();
    ((phase / MAX_PHASE_PER_SUBSTEP).ceil() as usize).max(1)
}

/// Normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState<R> {
    amplitudes: Vec<Complex<R>>,
    labels: Option<&'static [&'static str]>,
}

impl<R: Real> QuantumState<R> {
    /// Normalizes `amplitudes`; rejects the zero vector.
    pub fn new(amplitudes: Vec<Complex<R>>) -> Result<Self> {
        let norm = l2_norm(&amplitudes);
        if !(norm > R::zero()) || !norm.is_finite() {
            return Err(invalid("state vector has zero or non-finite norm"));
        }
        let amplitudes = amplitudes.into_iter().map(|a| a / norm).collect();
        Ok(Self {
            amplitudes,
            labels: None,
        })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index {index} out of range for dim {dim}");
        let mut amplitudes = vec![Complex::zero(); dim];
        amplitudes[index] = Complex::new(R::one(), R::zero());
        Self {
            amplitudes,
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: &'static [&'static str]) -> Self {
        debug_assert_eq!(labels.len(), self.amplitudes.len());
        self.labels = Some(labels);
        self
    }

    pub(crate) fn from_raw(amplitudes: Vec<Complex<R>>) -> Self {
        Self {
            amplitudes,
            labels: None,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    #[inline]
    pub fn amplitudes(&self) -> &[Complex<R>] {
        &self.amplitudes
    }

    pub fn labels(&self) -> Option<&'static [&'static str]> {
        self.labels
    }

    pub fn norm(&self) -> R {
        l2_norm(&self.amplitudes)
    }

    pub fn populations(&self) -> Vec<R> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<Complex<R>> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .fold(Complex::zero(), |acc, (a, b)| acc + a.conj() * b))
    }
}

fn l2_norm<R: Real>(v: &[Complex<R>]) -> R {
    v.iter().map(|a| a.norm_sqr()).sum::<R>().sqrt()
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Hermitian, unit-trace density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<R> {
    rho: CMatrix<R>,
}

impl<R: Real> DensityMatrix<R> {
    /// Validates Hermiticity and unit trace.
    pub fn new(rho: CMatrix<R>) -> Result<Self> {
        let defect = rho.hermitian_defect();
        if defect > hermitian_tolerance::<R>() {
            return Err(Error::NotHermitian {
                defect: defect.as_f64(),
            });
        }
        let tr = rho.trace();
        if (tr.re - R::one()).abs() > drift_limit::<R>() || tr.im.abs() > drift_limit::<R>() {
            return Err(invalid(format!("density matrix trace {tr} != 1")));
        }
        Ok(Self { rho })
    }

    pub fn pure(psi: &QuantumState<R>) -> Self {
        let a = psi.amplitudes();
        Self {
            rho: CMatrix::from_fn(a.len(), |i, j| a[i] * a[j].conj()),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let p = R::one() / R::from_usize(dim).unwrap();
        Self {
            rho: CMatrix::from_real_diagonal(&vec![p; dim]),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    #[inline]
    pub fn matrix(&self) -> &CMatrix<R> {
        &self.rho
    }

    pub fn trace(&self) -> Complex<R> {
        self.rho.trace()
    }

    pub fn populations(&self) -> Vec<R> {
        (0..self.dim()).map(|i| self.rho[(i, i)].re).collect()
    }

    /// Smallest eigenvalue; negative values beyond roundoff signal loss of positivity.
    pub fn min_eigenvalue(&self) -> R {
        hermitian_eigenvalues(&self.rho)[0]
    }
}

/// Validated Hermitian matrix in rad/ns.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator<R> {
    matrix: CMatrix<R>,
}

impl<R: Real> HermitianOperator<R> {
    /// Rejects matrices whose largest asymmetry exceeds 1e-9 relative to the
    /// largest entry (or one, whichever is larger).
    pub fn new(matrix: CMatrix<R>) -> Result<Self> {
        let scale = matrix
            .as_slice()
            .iter()
            .fold(R::one(), |acc, z| acc.max(z.norm()));
        let defect = matrix.hermitian_defect();
        if defect > hermitian_tolerance::<R>() * scale {
            return Err(Error::NotHermitian {
                defect: defect.as_f64(),
            });
        }
        Ok(Self { matrix })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(dim),
        }
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix<R>) -> Self {
        Self { matrix }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    #[inline]
    pub fn matrix(&self) -> &CMatrix<R> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<R> {
        self.matrix
    }

    pub fn eigenvalues(&self) -> Vec<R> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn spectral_norm(&self) -> R {
        self.eigenvalues()
            .into_iter()
            .fold(R::zero(), |acc, x| acc.max(x.abs()))
    }
}

/// Possibly time-dependent Hamiltonian `H(t)`.
pub trait Hamiltonian<R: Real> {
    fn dim(&self) -> usize;

    /// `out = H(t) v`.
    fn apply(&self, t: R, v: &[Complex<R>], out: &mut [Complex<R>]);

    /// Dense `H(t)`.
    fn operator(&self, t: R) -> HermitianOperator<R> {
        let d = self.dim();
        let mut m = CMatrix::zeros(d);
        let mut e = vec![Complex::zero(); d];
        let mut col = vec![Complex::zero(); d];
        for j in 0..d {
            e.iter_mut().for_each(|x| *x = Complex::zero());
            e[j] = Complex::new(R::one(), R::zero());
            self.apply(t, &e, &mut col);
            for i in 0..d {
                m[(i, j)] = col[i];
            }
        }
        HermitianOperator::from_matrix_unchecked(m)
    }
}

impl<R: Real> Hamiltonian<R> for HermitianOperator<R> {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn apply(&self, _t: R, v: &[Complex<R>], out: &mut [Complex<R>]) {
        self.matrix.mul_vec_into(v, out);
    }

    fn operator(&self, _t: R) -> HermitianOperator<R> {
        self.clone()
    }
}

/// Adapter turning a closure `t -> H(t)` into a [`Hamiltonian`].
pub struct TimeDependent<F> {
    dim: usize,
    f: F,
}

impl<F> TimeDependent<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<R: Real, F: Fn(R) -> HermitianOperator<R>> Hamiltonian<R> for TimeDependent<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, t: R, v: &[Complex<R>], out: &mut [Complex<R>]) {
        (self.f)(t).matrix().mul_vec_into(v, out);
    }

    fn operator(&self, t: R) -> HermitianOperator<R> {
        (self.f)(t)
    }
}

/// Incoherent jump `|to><from|` with rate in 1/ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayChannel<R> {
    pub from: usize,
    pub to: usize,
    pub rate: R,
}

impl<R: Real> DecayChannel<R> {
    pub fn new(from: usize, to: usize, rate: R) -> Result<Self> {
        if from == to {
            return Err(invalid(format!("decay channel {from} -> {to} is a self-loop")));
        }
        if !(rate >= R::zero()) || !rate.is_finite() {
            return Err(invalid(format!("decay rate {rate} must be finite and >= 0")));
        }
        Ok(Self { from, to, rate })
    }
}

/// `exp(-i h dt) psi` via eigendecomposition of `h`.
pub fn evolve_unitary<R: Real>(
    h: &HermitianOperator<R>,
    psi: &QuantumState<R>,
    dt: R,
) -> Result<QuantumState<R>> {
    check_dim(h.dim(), psi.dim())?;
    if !(dt >= R::zero()) {
        return Err(invalid(format!("negative time step {dt}")));
    }
    let u = hermitian_propagator(h.matrix(), dt);
    Ok(QuantumState {
        amplitudes: u.mul_vec(psi.amplitudes()),
        labels: psi.labels,
    })
}

#[inline]
fn axpy_into<R: Real>(out: &mut [Complex<R>], base: &[Complex<R>], a: R, x: &[Complex<R>]) {
    for ((o, &b), &xi) in out.iter_mut().zip(base).zip(x) {
        *o = b + xi * a;
    }
}

/// `k = -i H(t) v`.
#[inline]
fn schrodinger_rhs<R: Real, H: Hamiltonian<R> + ?Sized>(
    h: &H,
    t: R,
    v: &[Complex<R>],
    k: &mut [Complex<R>],
) {
    h.apply(t, v, k);
    for z in k.iter_mut() {
        *z = Complex::new(z.im, -z.re);
    }
}

/// Classic RK4 on `dpsi/dt = -i H(t) psi` over `[t0, t0 + dt]`.
///
/// The result is renormalized when the norm drift stays below [`drift_limit`];
/// larger drift is an [`Error::IntegrationAccuracy`].
pub fn evolve_td_schrodinger<R: Real, H: Hamiltonian<R> + ?Sized>(
    h: &H,
    psi: &QuantumState<R>,
    t0: R,
    dt: R,
    substeps: usize,
) -> Result<QuantumState<R>> {
    check_dim(h.dim(), psi.dim())?;
    if substeps == 0 {
        return Err(invalid("substeps must be >= 1"));
    }
    if !(dt >= R::zero()) {
        return Err(invalid(format!("negative time step {dt}")));
    }
    if dt.is_zero() {
        return Ok(psi.clone());
    }
    let d = psi.dim();
    let step = dt / R::from_usize(substeps).unwrap();
    let half = step * R::lit(0.5);
    let sixth = step / R::lit(6.0);
    let two = R::lit(2.0);

    let mut y = psi.amplitudes.clone();
    let zero = Complex::zero();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![zero; d], vec![zero; d], vec![zero; d], vec![zero; d], vec![zero; d]);
    for n in 0..substeps {
        let t = t0 + step * R::from_usize(n).unwrap();
        schrodinger_rhs(h, t, &y, &mut k1);
        axpy_into(&mut tmp, &y, half, &k1);
        schrodinger_rhs(h, t + half, &tmp, &mut k2);
        axpy_into(&mut tmp, &y, half, &k2);
        schrodinger_rhs(h, t + half, &tmp, &mut k3);
        axpy_into(&mut tmp, &y, step, &k3);
        schrodinger_rhs(h, t + step, &tmp, &mut k4);
        for i in 0..d {
            y[i] = y[i] + (k1[i] + (k2[i] + k3[i]) * two + k4[i]) * sixth;
        }
    }

    let norm = l2_norm(&y);
    let drift = (norm - psi.norm()).abs();
    if !(drift < drift_limit::<R>()) {
        return Err(Error::IntegrationAccuracy {
            quantity: "state norm",
            drift: drift.as_f64(),
            limit: drift_limit::<R>().as_f64(),
        });
    }
    for a in y.iter_mut() {
        *a = *a / norm;
    }
    Ok(QuantumState {
        amplitudes: y,
        labels: psi.labels,
    })
}

/// Precomputed dissipator data for channels of the form `sqrt(rate) |to><from|`.
struct Dissipator<R> {
    /// Total outgoing rate per level.
    out_rate: Vec<R>,
    channels: Vec<DecayChannel<R>>,
}

impl<R: Real> Dissipator<R> {
    fn new(dim: usize, channels: &[DecayChannel<R>]) -> Result<Self> {
        let mut out_rate = vec![R::zero(); dim];
        for ch in channels {
            if ch.from >= dim || ch.to >= dim {
                return Err(invalid(format!(
                    "decay channel {} -> {} outside dimension {dim}",
                    ch.from, ch.to
                )));
            }
            DecayChannel::new(ch.from, ch.to, ch.rate)?;
            out_rate[ch.from] += ch.rate;
        }
        Ok(Self {
            out_rate,
            channels: channels.to_vec(),
        })
    }
}

/// `k = -i[H, rho] - 1/2 sum {L^dag L, rho} + sum L rho L^dag`, assuming Hermitian `rho`.
fn lindblad_rhs<R: Real, H: Hamiltonian<R> + ?Sized>(
    h: &H,
    diss: &Dissipator<R>,
    t: R,
    rho: &[Complex<R>],
    k: &mut [Complex<R>],
    col_in: &mut [Complex<R>],
    col_out: &mut [Complex<R>],
    h_rho: &mut [Complex<R>],
) {
    let d = diss.out_rate.len();
    for j in 0..d {
        for i in 0..d {
            col_in[i] = rho[i * d + j];
        }
        h.apply(t, col_in, col_out);
        for i in 0..d {
            h_rho[i * d + j] = col_out[i];
        }
    }
    let half = R::lit(0.5);
    for i in 0..d {
        for j in 0..d {
            // rho H = (H rho)^dag for Hermitian rho and H.
            let comm = h_rho[i * d + j] - h_rho[j * d + i].conj();
            let coherent = Complex::new(comm.im, -comm.re);
            let damping = rho[i * d + j] * ((diss.out_rate[i] + diss.out_rate[j]) * half);
            k[i * d + j] = coherent - damping;
        }
    }
    for ch in &diss.channels {
        let p = rho[ch.from * d + ch.from];
        k[ch.to * d + ch.to] = k[ch.to * d + ch.to] + p * ch.rate;
    }
}

/// RK4 on the Lindblad master equation with jump operators
/// `L = sqrt(rate) |to><from|`. Trace drift beyond [`drift_limit`] is an error.
pub fn evolve_lindblad<R: Real, H: Hamiltonian<R> + ?Sized>(
    h: &H,
    channels: &[DecayChannel<R>],
    rho: &DensityMatrix<R>,
    t0: R,
    dt: R,
    substeps: usize,
) -> Result<DensityMatrix<R>> {
    check_dim(h.dim(), rho.dim())?;
    if substeps == 0 {
        return Err(invalid("substeps must be >= 1"));
    }
    if !(dt >= R::zero()) {
        return Err(invalid(format!("negative time step {dt}")));
    }
    let d = rho.dim();
    let diss = Dissipator::new(d, channels)?;
    if dt.is_zero() {
        return Ok(rho.clone());
    }
    let n = d * d;
    let step = dt / R::from_usize(substeps).unwrap();
    let half = step * R::lit(0.5);
    let sixth = step / R::lit(6.0);
    let two = R::lit(2.0);
    let zero = Complex::zero();

    let mut y = rho.rho.as_slice().to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
    let (mut ci, mut co, mut hr) = (vec![zero; d], vec![zero; d], vec![zero; n]);
    for s in 0..substeps {
        let t = t0 + step * R::from_usize(s).unwrap();
        lindblad_rhs(h, &diss, t, &y, &mut k1, &mut ci, &mut co, &mut hr);
        axpy_into(&mut tmp, &y, half, &k1);
        lindblad_rhs(h, &diss, t + half, &tmp, &mut k2, &mut ci, &mut co, &mut hr);
        axpy_into(&mut tmp, &y, half, &k2);
        lindblad_rhs(h, &diss, t + half, &tmp, &mut k3, &mut ci, &mut co, &mut hr);
        axpy_into(&mut tmp, &y, step, &k3);
        lindblad_rhs(h, &diss, t + step, &tmp, &mut k4, &mut ci, &mut co, &mut hr);
        for i in 0..n {
            y[i] = y[i] + (k1[i] + (k2[i] + k3[i]) * two + k4[i]) * sixth;
        }
    }

    let mut out = CMatrix::from_rows(y).expect("square");
    // Remove roundoff asymmetry so the Hermitian invariant holds exactly.
    for i in 0..d {
        out[(i, i)].im = R::zero();
        for j in (i + 1)..d {
            let avg = (out[(i, j)] + out[(j, i)].conj()) * R::lit(0.5);
            out[(i, j)] = avg;
            out[(j, i)] = avg.conj();
        }
    }
    let drift = (out.trace().re - rho.trace().re).abs();
    if !(drift < drift_limit::<R>()) {
        return Err(Error::IntegrationAccuracy {
            quantity: "density-matrix trace",
            drift: drift.as_f64(),
            limit: drift_limit::<R>().as_f64(),
        });
    }
    Ok(DensityMatrix { rho: out })
}

/// `|<psi|target>|^2`.
pub fn fidelity<R: Real>(psi: &QuantumState<R>, target: &QuantumState<R>) -> Result<R> {
    Ok(psi.inner(target)?.norm_sqr().min(R::one()))
}

/// `<target|rho|target>`.
pub fn fidelity_density<R: Real>(rho: &DensityMatrix<R>, target: &QuantumState<R>) -> Result<R> {
    check_dim(rho.dim(), target.dim())?;
    let t = target.amplitudes();
    let rt = rho.rho.mul_vec(t);
    let f: Complex<R> = t
        .iter()
        .zip(&rt)
        .fold(Complex::zero(), |acc, (a, b)| acc + a.conj() * b);
    Ok(f.re.max(R::zero()).min(R::one()))
}
