#!/usr/bin/env python3
"""Smoke test for the fortcav_py extension module.

Builds the cdylib if needed, imports it, and exercises one representative
call per exposed area. Exits nonzero on the first failure.
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_cdylib() -> Path:
    candidates = [
        REPO / "target" / profile / "libfortcav_py.so"
        for profile in ("release", "debug")
    ]
    existing = [p for p in candidates if p.is_file()]
    if not existing:
        subprocess.run(
            ["cargo", "build", "-p", "fortcav-py"], cwd=REPO, check=True
        )
        existing = [p for p in candidates if p.is_file()]
    return max(existing, key=lambda p: p.stat().st_mtime)


def import_module(tmp: Path):
    target = tmp / "fortcav_py.so"
    shutil.copy2(locate_cdylib(), target)
    sys.path.insert(0, str(tmp))
    import fortcav_py

    return fortcav_py


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main() -> int:
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        fc = import_module(tmp)
        scheme = fc.LevelScheme.cs133()

        # Magic wavelength sits near 935.6 nm and traps the ground state.
        magic = fc.magic_wavelength(scheme)
        assert 933.6 <= magic.wavelength_nm <= 937.6, magic.wavelength_nm
        assert magic.ground_shift_per_intensity < 0
        print(f"PASS magic_wavelength {magic.wavelength_nm:.2f} nm")

        # Shift normalization: the ground shift at the reference equals itself.
        g_ref = fc.ground_shift_hz(scheme, 935.6)
        shifts = fc.manifold_shifts(scheme, 935.6)
        f4 = [s for (f, m, s) in shifts if f == 4.0]
        mean_norm = sum(f4) / len(f4) / g_ref
        assert 0.75 <= mean_norm <= 1.25, mean_norm
        print(f"PASS manifold_shifts f4 mean normalized {mean_norm:.3f}")

        # Cavity anchors: n0, N0 and the resonant suppression.
        sys_ = fc.CavitySystem.cs_d2_default()
        assert close(sys_.critical_photon_number(), 0.00587, 1e-2)
        assert close(sys_.critical_atom_number(), 0.0379, 1e-2)
        print(
            f"PASS critical numbers n0={sys_.critical_photon_number():.5f} "
            f"N0={sys_.critical_atom_number():.4f}"
        )

        scan = fc.transmission_scan(lo_hz=0.0, hi_hz=1.0e6, points=2)
        assert scan["relative_transmission"][0] < 1e-3
        print(f"PASS resonant suppression {scan['relative_transmission'][0]:.2e}")

        levels = fc.staircase_levels(n_max=3)
        fluxes = [row[2] for row in levels]
        assert all(a > b for a, b in zip(fluxes, fluxes[1:])), fluxes
        assert close(levels[0][1], 0.01, 1e-9)  # empty-cavity mean photon
        print(f"PASS staircase levels fall {['%.3g' % f for f in fluxes]}")

        # Trap: 2.3 mK depth reproduces the axial/radial frequencies.
        beam = fc.FortBeam.from_depth_mk(scheme, 2.3)
        trap = beam.trap(scheme)
        nu_ax = trap.axial_frequency_hz()
        nu_rad = trap.radial_frequency_hz()
        assert close(nu_ax, 573.0e3, 0.03), nu_ax
        assert close(nu_rad, 4.8e3, 0.05), nu_rad
        print(f"PASS trap frequencies {nu_ax/1e3:.1f} kHz / {nu_rad/1e3:.2f} kHz")

        # Free fall from 5 mm arrives at ~0.31 m/s.
        v, e_k, transit = fc.free_fall_arrival()
        assert close(v, 0.3132, 0.01), v
        assert transit > 0
        print(f"PASS free fall {v:.3f} m/s, transit {transit*1e6:.0f} us")

        # Repump time constant lands near 0.1 s.
        repump = fc.repump_dynamics(scheme, duration_s=0.5, points=50)
        assert 0.07 <= repump.fitted_tau_s <= 0.13, repump.fitted_tau_s
        assert abs(repump.fitted_tau_s - repump.two_level_tau_s) < 0.02
        print(f"PASS repump tau {repump.fitted_tau_s*1e3:.1f} ms")

        # Multilevel Raman heating stays below its two-state bound.
        rate, stderr, bound = fc.raman_heating(scheme, samples=200, duration_s=2.0)
        assert rate <= bound + 3 * stderr, (rate, stderr, bound)
        print(f"PASS raman heating {rate:.2e}/s below bound {bound:.2f}/s")

        # Records: synthesize a staircase, recover the planted losses.
        flux_levels = [4.0e4, 8.0e4, 1.6e5, 5.28e5]
        record = fc.synthesize_record(flux_levels, [0.25, 0.5, 0.75], 1.0, seed=5)
        assert record.duration_s() == 1.0
        seg = fc.segment_staircase(record, levels_flux_per_s=flux_levels)
        assert seg.atom_numbers == [3, 2, 1, 0], seg.atom_numbers
        assert all(abs(cp - want) <= 5 for cp, want in zip(seg.change_points, [250, 500, 750]))
        print(f"PASS segmentation at bins {seg.change_points}")

        csv_path = tmp / "record.csv"
        record.write_csv(str(csv_path))
        back = fc.PhotonRecord.read_csv(str(csv_path))
        assert back.counts == record.counts
        print("PASS record CSV roundtrip")

        # Survival simulation feeds the standalone fit.
        curve = fc.survival_experiment(scheme, [0.2, 0.9, 1.8], ensemble=150, seed=2)
        assert curve.fitted_tau_s > 0, curve.fitted_tau_s
        assert 0 < curve.capture_probability <= 1
        tau, tau_sigma, p0, dev = fc.fit_lifetime(
            curve.delays_s, [float(s) for s in curve.successes],
            curve.trials,
        )
        assert close(tau, curve.fitted_tau_s, 0.10), (tau, curve.fitted_tau_s)
        print(f"PASS survival tau {curve.fitted_tau_s:.2f} s (refit {tau:.2f} s)")

        # Noiseless fit is exact.
        tau_true, p0_true = 2.4, 0.6
        delays = [0.3, 0.6, 1.2, 2.4, 4.8]
        succ = [1000 * p0_true * math.exp(-d / tau_true) for d in delays]
        tau, _, p0, _ = fc.fit_lifetime(delays, succ, [1000] * 5)
        assert close(tau, tau_true, 1e-4) and close(p0, p0_true, 1e-4)
        print(f"PASS noiseless lifetime fit tau={tau:.4f} s p0={p0:.4f}")

        # Errors surface as ValueError with the module message.
        try:
            fc.magic_wavelength(scheme, lo_nm=880.0, hi_nm=900.0)
        except ValueError as e:
            assert "resonance" in str(e)
            print("PASS module errors raise ValueError")
        else:
            raise AssertionError("expected ValueError for a bracket on a resonance")

    print("ALL SMOKE TESTS PASSED")
    return 0


if __name__ == "__main__":
    sys.exit(main())
