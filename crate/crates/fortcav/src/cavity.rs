//! Strongly coupled atom-cavity system: coupling geometry, weak-drive
//! transmission, and a dense master-equation steady state for when the
//! linearized formula stops being honest.
//!
//! All public rates are linear frequencies in Hz (the same way they are
//! quoted: g₀/2π and friends); conversions to angular frequency happen at the
//! point of use.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::C_LIGHT;

#[derive(Debug, Error)]
pub enum CavityError {
    #[error("{0}")]
    BadParameters(String),
    #[error(
        "mean photon number {mean_photon:.3} is out of the weak-drive regime (< {limit}); \
         use the master-equation solver"
    )]
    WeakDriveInvalid { mean_photon: f64, limit: f64 },
    #[error(
        "top Fock state holds population {top_population:.2e} (> {limit:.0e}); raise n_max"
    )]
    FockCutoff { top_population: f64, limit: f64 },
    #[error("Hilbert dimension {dim} too large for the dense solver (cap {cap})")]
    DimensionTooLarge { dim: usize, cap: usize },
    #[error("steady-state solve failed: {0}")]
    SolveFailed(String),
}

/// One-sided cavity QED parameters. Rates are (rate)/2π in Hz: `g0_hz` the
/// maximal single-atom coupling, `kappa_hz` the field decay rate (half the
/// transmission linewidth), `gamma_hz` the atomic dipole decay rate (half the
/// natural linewidth).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavitySystem {
    pub g0_hz: f64,
    pub kappa_hz: f64,
    pub gamma_hz: f64,
    pub length_m: f64,
    /// Wavelength of the QED mode (the probed transition), nm.
    pub wavelength_nm: f64,
    pub waist_m: f64,
}

impl CavitySystem {
    pub fn new(
        g0_hz: f64,
        kappa_hz: f64,
        gamma_hz: f64,
        length_m: f64,
        wavelength_nm: f64,
        waist_m: f64,
    ) -> Result<Self, CavityError> {
        if !(g0_hz > 0.0 && kappa_hz > 0.0 && gamma_hz > 0.0) {
            return Err(CavityError::BadParameters(format!(
                "rates must be positive, got g0={g0_hz}, kappa={kappa_hz}, gamma={gamma_hz}"
            )));
        }
        if g0_hz <= kappa_hz || g0_hz <= gamma_hz {
            return Err(CavityError::BadParameters(format!(
                "not strongly coupled: g0={g0_hz} must dominate kappa={kappa_hz} and \
                 gamma={gamma_hz}"
            )));
        }
        if !(length_m > 0.0 && wavelength_nm > 0.0 && waist_m > 0.0) {
            return Err(CavityError::BadParameters(
                "length, wavelength and waist must be positive".into(),
            ));
        }
        Ok(CavitySystem { g0_hz, kappa_hz, gamma_hz, length_m, wavelength_nm, waist_m })
    }

    /// The cesium D2 cavity this crate models: (g0, κ, γ)/2π =
    /// (24, 4.2, 2.6) MHz, 43.0 µm long, 23.9 µm waist at 852 nm.
    pub fn cs_d2_default() -> Self {
        CavitySystem {
            g0_hz: 24.0e6,
            kappa_hz: 4.2e6,
            gamma_hz: 2.6e6,
            length_m: 43.0e-6,
            wavelength_nm: 852.347,
            waist_m: 23.9e-6,
        }
    }

    /// Saturation photon number n₀ = γ²/2g₀².
    pub fn critical_photon_number(&self) -> f64 {
        self.gamma_hz * self.gamma_hz / (2.0 * self.g0_hz * self.g0_hz)
    }

    /// Critical atom number N₀ = 2κγ/g₀².
    pub fn critical_atom_number(&self) -> f64 {
        2.0 * self.kappa_hz * self.gamma_hz / (self.g0_hz * self.g0_hz)
    }

    /// Single-atom cooperativity C₁ = g₀²/(κγ) = 2/N₀.
    pub fn cooperativity(&self) -> f64 {
        self.g0_hz * self.g0_hz / (self.kappa_hz * self.gamma_hz)
    }

    pub fn free_spectral_range_hz(&self) -> f64 {
        C_LIGHT / (2.0 * self.length_m)
    }

    /// FSR over the full transmission linewidth 2κ.
    pub fn finesse(&self) -> f64 {
        self.free_spectral_range_hz() / (2.0 * self.kappa_hz)
    }

    /// Longitudinal order of the mode resonant nearest to `wavelength_nm`.
    pub fn longitudinal_order(&self, wavelength_nm: f64) -> i64 {
        (2.0 * self.length_m / (wavelength_nm * 1e-9)).round() as i64
    }

    /// Resonant wavelength (nm) of the longitudinal mode `order`.
    pub fn order_wavelength_nm(&self, order: i64) -> f64 {
        2.0 * self.length_m / (order as f64) * 1e9
    }

    /// Resonant wavelength `orders_below` longitudinal orders below the QED
    /// mode — how the trapping wavelength is registered to the same cavity.
    pub fn registered_wavelength_nm(&self, orders_below: i64) -> f64 {
        let n0 = self.longitudinal_order(self.wavelength_nm);
        self.order_wavelength_nm(n0 - orders_below)
    }

    /// Coupling g(x, ρ) of the standing-wave Gaussian mode; x along the axis
    /// from an antinode. The field amplitude carries exp(−ρ²/w²), not the
    /// intensity Gaussian.
    pub fn coupling_at(&self, x_m: f64, rho_m: f64) -> f64 {
        let k = 2.0 * std::f64::consts::PI / (self.wavelength_nm * 1e-9);
        self.g0_hz
            * (k * x_m).cos()
            * (-rho_m * rho_m / (self.waist_m * self.waist_m)).exp()
    }

    /// |g|/g₀ at successive antinodes of a trapping mode registered
    /// `orders_below` orders down, sites indexed from the common antinode.
    /// The mismatch beats with period ≈ 2·order/orders_below sites.
    pub fn trap_site_couplings(&self, orders_below: i64, n_sites: usize) -> Vec<(f64, f64)> {
        let lambda_f = self.registered_wavelength_nm(orders_below) * 1e-9;
        let k0 = 2.0 * std::f64::consts::PI / (self.wavelength_nm * 1e-9);
        (0..n_sites as i64)
            .map(|j| {
                let x = 0.5 * lambda_f * j as f64;
                (x, (k0 * x).cos().abs())
            })
            .collect()
    }
}

/// Probe drive in the frame of the probe laser: Δ_pc = ω_probe − ω_cavity
/// (Hz), ε the coherent drive amplitude (Hz); the empty cavity settles at
/// |⟨a⟩| = ε/√(κ² + Δ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub probe_detuning_hz: f64,
    pub drive_amp_hz: f64,
}

/// One atom as the transmission calculation sees it: its coupling and the
/// probe-atom detuning Δ_pa = ω_probe − ω_atom (Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomCoupling {
    pub g_hz: f64,
    pub detuning_hz: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeakDriveResponse {
    pub field_amp_re: f64,
    pub field_amp_im: f64,
    pub mean_photon: f64,
    /// Intracavity photon dissipation rate 2κ⟨a†a⟩, photons/s.
    pub photon_flux_per_s: f64,
    /// Transmission relative to the empty cavity under the same drive.
    pub relative_transmission: f64,
}

pub const WEAK_DRIVE_LIMIT: f64 = 0.1;
const FOCK_TAIL_LIMIT: f64 = 1e-6;
const DENSE_DIM_CAP: usize = 40;

fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}

fn weak_drive_amp(system: &CavitySystem, drive: &DriveConfig, atoms: &[AtomCoupling]) -> Complex64 {
    let kappa = two_pi() * system.kappa_hz;
    let dpc = two_pi() * drive.probe_detuning_hz;
    let eps = two_pi() * drive.drive_amp_hz;
    let mut denom = Complex64::new(kappa, -dpc);
    for atom in atoms {
        let g = two_pi() * atom.g_hz;
        let dpa = two_pi() * atom.detuning_hz;
        denom += g * g / Complex64::new(two_pi() * system.gamma_hz, -dpa);
    }
    // The −i makes the linearized amplitude agree in phase with tr(aρ) from
    // the master equation, not just in magnitude.
    Complex64::new(0.0, -1.0) * eps / denom
}

/// Steady-state transmission in the weak-excitation limit. Errs out of the
/// regime where the linearization holds.
pub fn transmission_weak_drive(
    system: &CavitySystem,
    drive: &DriveConfig,
    atoms: &[AtomCoupling],
) -> Result<WeakDriveResponse, CavityError> {
    let amp = weak_drive_amp(system, drive, atoms);
    let empty = weak_drive_amp(system, drive, &[]);
    let mean_photon = amp.norm_sqr();
    if mean_photon.max(empty.norm_sqr()) >= WEAK_DRIVE_LIMIT {
        return Err(CavityError::WeakDriveInvalid {
            mean_photon: mean_photon.max(empty.norm_sqr()),
            limit: WEAK_DRIVE_LIMIT,
        });
    }
    Ok(WeakDriveResponse {
        field_amp_re: amp.re,
        field_amp_im: amp.im,
        mean_photon,
        photon_flux_per_s: 2.0 * two_pi() * system.kappa_hz * mean_photon,
        relative_transmission: mean_photon / empty.norm_sqr(),
    })
}

/// Transmission levels for 0..=max_atoms identically coupled atoms — the
/// plateaus a falling-atom-number record steps through.
pub fn staircase_levels(
    system: &CavitySystem,
    drive: &DriveConfig,
    atom: AtomCoupling,
    max_atoms: usize,
) -> Result<Vec<WeakDriveResponse>, CavityError> {
    (0..=max_atoms)
        .map(|n| {
            let atoms = vec![atom; n];
            transmission_weak_drive(system, drive, &atoms)
        })
        .collect()
}

/// Everything worth keeping from a steady-state density matrix.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyState {
    pub mean_photon: f64,
    pub field_amp_re: f64,
    pub field_amp_im: f64,
    pub photon_flux_per_s: f64,
    pub fock_populations: Vec<f64>,
    pub atom_excitations: Vec<f64>,
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub residual: f64,
}

type CMatrix = DMatrix<Complex64>;

fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Cavity ⊗ atom₁ ⊗ atom₂ ⊗ … operators embedded in the full space.
struct Operators {
    a: CMatrix,
    sigma_minus: Vec<CMatrix>,
    dim: usize,
}

fn build_operators(fock_dim: usize, n_atoms: usize) -> Operators {
    let id2 = CMatrix::identity(2, 2);
    let mut sm_local = CMatrix::zeros(2, 2);
    sm_local[(0, 1)] = Complex64::new(1.0, 0.0); // σ⁻|e⟩ = |g⟩ with |g⟩ first

    let mut a = annihilation(fock_dim);
    for _ in 0..n_atoms {
        a = kron(&a, &id2);
    }
    let mut sigma_minus = Vec::new();
    for i in 0..n_atoms {
        let mut op = CMatrix::identity(fock_dim, fock_dim);
        for j in 0..n_atoms {
            let factor = if i == j { &sm_local } else { &id2 };
            op = kron(&op, factor);
        }
        sigma_minus.push(op);
    }
    Operators { a, sigma_minus, dim: fock_dim * (1 << n_atoms) }
}

/// Dense steady state of the driven Jaynes–Cummings master equation with
/// `atoms.len()` two-level atoms and Fock states 0..=n_max, in the probe
/// frame. Collapse channels are √(2κ)a and √(2γ)σ⁻ per atom.
pub fn steady_state(
    system: &CavitySystem,
    drive: &DriveConfig,
    atoms: &[AtomCoupling],
    n_max: usize,
) -> Result<SteadyState, CavityError> {
    let fock_dim = n_max + 1;
    let ops = build_operators(fock_dim, atoms.len());
    let dim = ops.dim;
    if dim > DENSE_DIM_CAP {
        return Err(CavityError::DimensionTooLarge { dim, cap: DENSE_DIM_CAP });
    }

    let i = Complex64::new(0.0, 1.0);
    let dpc = two_pi() * drive.probe_detuning_hz;
    let eps = two_pi() * drive.drive_amp_hz;
    let kappa = two_pi() * system.kappa_hz;
    let gamma = two_pi() * system.gamma_hz;

    let adag = ops.a.adjoint();
    let mut h = &adag * &ops.a * Complex64::new(-dpc, 0.0);
    h += (&ops.a + &adag) * Complex64::new(eps, 0.0);
    for (atom, sm) in atoms.iter().zip(&ops.sigma_minus) {
        let sp = sm.adjoint();
        let dpa = two_pi() * atom.detuning_hz;
        let g = two_pi() * atom.g_hz;
        h += &sp * sm * Complex64::new(-dpa, 0.0);
        h += (&adag * sm + &ops.a * &sp) * Complex64::new(g, 0.0);
    }

    let mut collapse = vec![ops.a.clone() * Complex64::new((2.0 * kappa).sqrt(), 0.0)];
    for sm in &ops.sigma_minus {
        collapse.push(sm * Complex64::new((2.0 * gamma).sqrt(), 0.0));
    }

    // Column-stacking vectorization: vec(AXB) = (Bᵀ ⊗ A) vec(X).
    let id = CMatrix::identity(dim, dim);
    let mut liouvillian = kron(&id, &h) * (-i);
    liouvillian += kron(&h.transpose(), &id) * i;
    for c in &collapse {
        let cdc = c.adjoint() * c;
        liouvillian += kron(&c.conjugate(), c);
        liouvillian += kron(&id, &cdc) * Complex64::new(-0.5, 0.0);
        liouvillian += kron(&cdc.transpose(), &id) * Complex64::new(-0.5, 0.0);
    }

    // Swap the redundant first row for the trace normalization.
    let mut system_mat = liouvillian.clone();
    for col in 0..dim * dim {
        system_mat[(0, col)] = Complex64::new(0.0, 0.0);
    }
    for k in 0..dim {
        system_mat[(0, k * dim + k)] = Complex64::new(1.0, 0.0);
    }
    let mut rhs = DMatrix::<Complex64>::zeros(dim * dim, 1);
    rhs[(0, 0)] = Complex64::new(1.0, 0.0);

    let lu = system_mat.lu();
    let solution = lu
        .solve(&rhs)
        .ok_or_else(|| CavityError::SolveFailed("singular Liouvillian system".into()))?;

    // Residual against the untouched Liouvillian is the honest check that the
    // row swap did not change the answer.
    let residual = (&liouvillian * &solution).norm();

    let mut rho = CMatrix::zeros(dim, dim);
    for c in 0..dim {
        for r in 0..dim {
            rho[(r, c)] = solution[(c * dim + r, 0)];
        }
    }

    let trace: Complex64 = (0..dim).map(|k| rho[(k, k)]).sum();
    let trace_error = (trace - Complex64::new(1.0, 0.0)).norm();
    let hermiticity_error = (&rho - rho.adjoint()).norm();
    let rho_herm = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let eigvals = rho_herm.clone().symmetric_eigenvalues();
    let min_eigenvalue = eigvals.iter().cloned().fold(f64::INFINITY, f64::min);
    if trace_error > 1e-8 || hermiticity_error > 1e-8 || min_eigenvalue < -1e-8 {
        return Err(CavityError::SolveFailed(format!(
            "steady state is not a density matrix: trace err {trace_error:.2e}, \
             hermiticity err {hermiticity_error:.2e}, min eigenvalue {min_eigenvalue:.2e}"
        )));
    }

    let n_atoms = atoms.len();
    let fock_states = 1 << n_atoms;
    let mut fock_populations = vec![0.0; fock_dim];
    for k in 0..dim {
        fock_populations[k / fock_states] += rho[(k, k)].re;
    }
    let top_population = fock_populations[fock_dim - 1];
    if top_population > FOCK_TAIL_LIMIT {
        return Err(CavityError::FockCutoff { top_population, limit: FOCK_TAIL_LIMIT });
    }

    let mut atom_excitations = vec![0.0; n_atoms];
    for (idx, excitation) in atom_excitations.iter_mut().enumerate() {
        for k in 0..dim {
            // Atom idx is excited when bit (n_atoms-1-idx) of the atomic part
            // is set, matching the kron build order.
            if (k % fock_states) >> (n_atoms - 1 - idx) & 1 == 1 {
                *excitation += rho[(k, k)].re;
            }
        }
    }

    let adag_a = ops.a.adjoint() * &ops.a;
    let mean_photon = (&adag_a * &rho).trace().re;
    let field = (&ops.a * &rho).trace();

    Ok(SteadyState {
        mean_photon,
        field_amp_re: field.re,
        field_amp_im: field.im,
        photon_flux_per_s: 2.0 * kappa * mean_photon,
        fock_populations,
        atom_excitations,
        trace_error,
        hermiticity_error,
        min_eigenvalue,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn sys() -> CavitySystem {
        CavitySystem::cs_d2_default()
    }

    #[test]
    fn critical_numbers_match_quoted_values() {
        let s = sys();
        assert_relative_eq!(s.critical_photon_number(), 0.00587, max_relative = 1e-3);
        assert_relative_eq!(s.critical_atom_number(), 0.0379, max_relative = 1e-3);
        assert_relative_eq!(s.cooperativity(), 2.0 / s.critical_atom_number(), epsilon = 1e-12);
    }

    #[test]
    fn finesse_and_mode_registration() {
        let s = sys();
        assert_relative_eq!(s.finesse(), 4.2e5, max_relative = 0.1);
        let n0 = s.longitudinal_order(s.wavelength_nm);
        assert_eq!(n0, 101);
        let fort = s.registered_wavelength_nm(9);
        assert!(
            (933.6..=937.6).contains(&fort),
            "nine orders below the QED mode lands at {fort} nm"
        );
        assert_relative_eq!(fort, 2.0 * 43.0e-6 / 92.0 * 1e9, epsilon = 1e-9);
    }

    #[test]
    fn coupling_geometry() {
        let s = sys();
        assert_relative_eq!(s.coupling_at(0.0, 0.0), s.g0_hz, epsilon = 1e-9);
        let quarter = s.wavelength_nm * 1e-9 / 4.0;
        assert_abs_diff_eq!(s.coupling_at(quarter, 0.0), 0.0, epsilon = 1e-6);
        assert_relative_eq!(
            s.coupling_at(0.0, s.waist_m),
            s.g0_hz * (-1.0_f64).exp(),
            max_relative = 1e-12
        );

        let sites = s.trap_site_couplings(9, 20);
        // The registration mismatch beats with period 2·92/(2·9) ≈ 10 sites:
        // strong coupling at the common antinode, nearly none five sites out.
        assert_relative_eq!(sites[0].1, 1.0, epsilon = 1e-12);
        assert!(sites[5].1 < 0.2, "site 5 coupling fraction {}", sites[5].1);
        assert!(sites[10].1 > 0.95, "site 10 coupling fraction {}", sites[10].1);
    }

    #[test]
    fn resonant_suppression_matches_closed_form() {
        let s = sys();
        let drive = DriveConfig { probe_detuning_hz: 0.0, drive_amp_hz: 0.05 * s.kappa_hz };
        let atom = AtomCoupling { g_hz: s.g0_hz, detuning_hz: 0.0 };
        let resp = transmission_weak_drive(&s, &drive, &[atom]).unwrap();
        let expected = (1.0 + s.cooperativity()).powi(-2);
        assert_relative_eq!(resp.relative_transmission, expected, max_relative = 1e-12);
        assert_relative_eq!(resp.relative_transmission, 3.4616e-4, max_relative = 1e-4);
    }

    #[test]
    fn atom_enhances_transmission_between_the_normal_modes() {
        let s = sys();
        let drive = DriveConfig { probe_detuning_hz: -20.0e6, drive_amp_hz: 0.05 * s.kappa_hz };
        let atom = AtomCoupling { g_hz: s.g0_hz, detuning_hz: -20.0e6 };
        let resp = transmission_weak_drive(&s, &drive, &[atom]).unwrap();
        assert_relative_eq!(resp.relative_transmission, 3.1792, max_relative = 1e-4);
    }

    #[test]
    fn empty_cavity_lorentzian_halves_at_kappa() {
        let s = sys();
        let on = transmission_weak_drive(
            &s,
            &DriveConfig { probe_detuning_hz: 0.0, drive_amp_hz: 1.0e5 },
            &[],
        )
        .unwrap();
        let off = transmission_weak_drive(
            &s,
            &DriveConfig { probe_detuning_hz: s.kappa_hz, drive_amp_hz: 1.0e5 },
            &[],
        )
        .unwrap();
        assert_relative_eq!(off.mean_photon / on.mean_photon, 0.5, max_relative = 1e-12);
        assert_relative_eq!(
            on.photon_flux_per_s,
            2.0 * two_pi() * s.kappa_hz * on.mean_photon,
            epsilon = 1e-9
        );
    }

    #[test]
    fn vacuum_rabi_peaks_sit_at_plus_minus_g0() {
        let s = sys();
        let atom = AtomCoupling { g_hz: s.g0_hz, detuning_hz: 0.0 };
        let mut best = (0.0, 0.0);
        for k in 0..=600 {
            let delta = -30.0e6 + (k as f64) * 1.0e5;
            let drive = DriveConfig { probe_detuning_hz: delta, drive_amp_hz: 1.0e4 };
            let atoms = [AtomCoupling { detuning_hz: delta, ..atom }];
            let resp = transmission_weak_drive(&s, &drive, &atoms).unwrap();
            if resp.mean_photon > best.1 {
                best = (delta, resp.mean_photon);
            }
        }
        assert!(
            (best.0.abs() - s.g0_hz).abs() < 1.0e6,
            "normal-mode peak at {:.2} MHz",
            best.0 / 1e6
        );
    }

    #[test]
    fn staircase_levels_fall_with_atom_number() {
        let s = sys();
        let drive = DriveConfig { probe_detuning_hz: 0.0, drive_amp_hz: 0.05 * s.kappa_hz };
        let atom = AtomCoupling { g_hz: s.g0_hz, detuning_hz: 0.0 };
        let levels = staircase_levels(&s, &drive, atom, 3).unwrap();
        assert_eq!(levels.len(), 4);
        assert_relative_eq!(levels[0].relative_transmission, 1.0, epsilon = 1e-12);
        for n in 1..=3 {
            assert!(levels[n].mean_photon < levels[n - 1].mean_photon);
            let expected = (1.0 + n as f64 * s.cooperativity()).powi(-2);
            assert_relative_eq!(levels[n].relative_transmission, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn weak_drive_guard_trips() {
        let s = sys();
        let drive = DriveConfig { probe_detuning_hz: 0.0, drive_amp_hz: s.kappa_hz };
        match transmission_weak_drive(&s, &drive, &[]) {
            Err(CavityError::WeakDriveInvalid { mean_photon, .. }) => {
                assert!(mean_photon >= 0.1)
            }
            other => panic!("expected the weak-drive guard, got {other:?}"),
        }
    }

    /// Empty driven cavity is exactly linear: the master equation must land
    /// on the analytic coherent state at any drive strength.
    #[test]
    fn master_equation_reproduces_coherent_state() {
        let s = sys();
        let drive = DriveConfig { probe_detuning_hz: 2.0e6, drive_amp_hz: 0.5 * s.kappa_hz };
        let state = steady_state(&s, &drive, &[], 14).unwrap();

        let kappa = two_pi() * s.kappa_hz;
        let dpc = two_pi() * drive.probe_detuning_hz;
        let eps = two_pi() * drive.drive_amp_hz;
        let alpha = Complex64::new(0.0, -1.0) * eps / Complex64::new(kappa, -dpc);

        assert_abs_diff_eq!(state.field_amp_re, alpha.re, epsilon = 1e-8);
        assert_abs_diff_eq!(state.field_amp_im, alpha.im, epsilon = 1e-8);
        assert_relative_eq!(state.mean_photon, alpha.norm_sqr(), max_relative = 1e-8);
        let nbar = alpha.norm_sqr();
        let mut poisson = (-nbar).exp();
        for n in 0..10 {
            assert_abs_diff_eq!(state.fock_populations[n], poisson, epsilon = 1e-8);
            poisson *= nbar / (n as f64 + 1.0);
        }
        assert!(state.residual < 1e-6, "residual {}", state.residual);
    }

    #[test]
    fn master_equation_agrees_with_weak_drive() {
        let s = sys();
        for delta in [0.0, -10.0e6, -20.0e6, -24.0e6] {
            let drive = DriveConfig { probe_detuning_hz: delta, drive_amp_hz: 0.01 * s.kappa_hz };
            let atoms = [AtomCoupling { g_hz: s.g0_hz, detuning_hz: delta }];
            let weak = transmission_weak_drive(&s, &drive, &atoms).unwrap();
            let state = steady_state(&s, &drive, &atoms, 6).unwrap();
            let weak_amp = Complex64::new(weak.field_amp_re, weak.field_amp_im);
            let me_amp = Complex64::new(state.field_amp_re, state.field_amp_im);
            assert!(
                (me_amp - weak_amp).norm() / weak_amp.norm() < 2e-2,
                "Δ = {delta:.1e}: weak {weak_amp}, master equation {me_amp}"
            );
            assert_relative_eq!(state.mean_photon, weak.mean_photon, max_relative = 2e-2);
        }
    }

    #[test]
    fn master_equation_guards() {
        let s = sys();
        let drive = DriveConfig { probe_detuning_hz: 0.0, drive_amp_hz: 0.5 * s.kappa_hz };
        match steady_state(&s, &drive, &[], 3) {
            Err(CavityError::FockCutoff { top_population, .. }) => {
                assert!(top_population > 1e-6)
            }
            other => panic!("expected a Fock cutoff error, got {other:?}"),
        }
        let atoms = [AtomCoupling { g_hz: 24.0e6, detuning_hz: 0.0 }; 2];
        match steady_state(&s, &drive, &atoms, 12) {
            Err(CavityError::DimensionTooLarge { dim: 52, .. }) => {}
            other => panic!("expected a dimension guard, got {other:?}"),
        }
    }

    #[test]
    fn two_atoms_suppress_more_than_one() {
        let s = sys();
        let drive = DriveConfig { probe_detuning_hz: 0.0, drive_amp_hz: 0.01 * s.kappa_hz };
        let one = [AtomCoupling { g_hz: s.g0_hz, detuning_hz: 0.0 }];
        let two = [AtomCoupling { g_hz: s.g0_hz, detuning_hz: 0.0 }; 2];
        let m1 = steady_state(&s, &drive, &one, 4).unwrap();
        let m2 = steady_state(&s, &drive, &two, 4).unwrap();
        assert!(m2.mean_photon < m1.mean_photon);
        // Both atoms share one symmetric excitation.
        assert_relative_eq!(
            m2.atom_excitations[0],
            m2.atom_excitations[1],
            max_relative = 1e-8
        );
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(CavitySystem::new(2.0e6, 4.2e6, 2.6e6, 43e-6, 852.3, 24e-6).is_err());
        assert!(CavitySystem::new(24.0e6, -4.2e6, 2.6e6, 43e-6, 852.3, 24e-6).is_err());
        assert!(CavitySystem::new(24.0e6, 4.2e6, 2.6e6, 0.0, 852.3, 24e-6).is_err());
    }
}
