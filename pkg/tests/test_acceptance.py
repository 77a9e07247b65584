"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Tolerances are pinned here and are not to be loosened to make a run pass.
"""

import functools
import json
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from cqmech import algebra as al
from cqmech import barrier as b
from cqmech import cli
from cqmech import constrained as cq
from cqmech import rotor as r
from cqmech import schrodinger as sc

from conftest import ACCEPTANCE_LINES
from oracles import erf_closed_form, smeared_by_quadrature, smeared_gradient, textbook_below

BASELINES = json.loads((Path(__file__).parent / "baselines" / "acceptance.json").read_text())
V = b.BarrierPotential(V0=1.0, L=8.0)
I123 = (1.0, 2.0, 3.0)


def criterion(n, title):
    """Record one PASS/FAIL line for criterion ``n``; the test body returns ``{check: bool}``."""
    def wrap(fn):
        @functools.wraps(fn)
        def test(*args, **kwargs):
            try:
                checks = fn(*args, **kwargs)
            except Exception as exc:
                line = f"criterion {n:2d} FAIL  {title}: {type(exc).__name__}: {exc}"
                ACCEPTANCE_LINES[n] = line
                print(line)
                raise
            failed = [k for k, ok in checks.items() if not ok]
            shown = failed or list(checks)
            line = (f"criterion {n:2d} {'FAIL' if failed else 'PASS'}  {title}: "
                    + ("failed " if failed else "") + "; ".join(shown))
            ACCEPTANCE_LINES[n] = line
            print(line)
            assert not failed, line
        return test
    return wrap


@criterion(1, "transmission resonance and sub-threshold branch")
def test_c01_resonance_and_tunnelling_branch():
    k_res = np.sqrt(1 + (np.pi / 8) ** 2)
    ks = np.linspace(0.001, 0.999, 999)
    below = max(abs(b.t_quantum(k, V) - textbook_below(k)) for k in ks)
    return {
        f"|T(k_res) - 1| = {abs(b.t_quantum(k_res, V) - 1):.1e} <= 1e-12":
            abs(b.t_quantum(k_res, V) - 1) <= 1e-12,
        f"max |T - textbook| below threshold = {below:.1e} <= 1e-12": below <= 1e-12,
    }


@criterion(2, "continuity at k = 1 and packet measurement there")
def test_c02_threshold_continuity():
    lim = b.t_quantum(1.0, V)
    res = sc.transmission_of_packet(400, 1.0, V)
    avg = b.t_quantum_avg(400, 1.0, V)
    return {
        f"|T(1) - 1/17| = {abs(lim - 1 / 17):.1e} <= 1e-9": abs(lim - 1 / 17) <= 1e-9,
        f"|CN {res.transmission:.5f} - avg {avg:.5f}| <= 0.02": abs(res.transmission - avg) <= 0.02,
    }


@criterion(3, "packet oracle agrees with the square-root formula and rejects the linear one")
def test_c03_oracle_agreement():
    kbars = (1.1, 1.3, 1.5, 1.7, 2.0)
    measured = [sc.transmission_of_packet(400, k, V).transmission for k in kbars]
    sqrt_err = [abs(m - b.t_quantum_avg(400, k, V)) for m, k in zip(measured, kbars)]
    lin_err = [abs(m - b.t_quantum_avg(400, k, V, argument="linear")) for m, k in zip(measured, kbars)]
    return {
        f"max sqrt discrepancy {max(sqrt_err):.1e} <= 0.02": max(sqrt_err) <= 0.02,
        f"max linear discrepancy {max(lin_err):.3f} > 0.05": max(lin_err) > 0.05,
    }


@criterion(4, "classical average approaches the ideal step")
def test_c04_classical_limit():
    ks = np.linspace(0.01, 3.0, 600)
    ks = ks[np.abs(ks - 1) >= 0.05]
    err = max(abs(b.t_classical_avg(1e4, k) - b.t_ideal(k)) for k in ks)
    mid = b.t_classical_avg(1e4, 1.0)
    return {
        f"max |T_cm - T_icm| = {err:.1e} <= 1e-3": err <= 1e-3,
        f"|T_cm(1) - 0.5| = {abs(mid - 0.5):.1e} <= 1e-12": abs(mid - 0.5) <= 1e-12,
    }


@criterion(5, "smeared barrier keeps its full height for alpha <= 2")
def test_c05_smeared_potential():
    alphas = (0.01, 0.1, 0.5, 1.0, 1.5, 2.0)
    low = min(b.smeared_potential_max(V, a) for a in alphas)
    xs = np.linspace(-10, 18, 100)
    err = max(abs(float(b.smeared_potential(V, a, x)) - smeared_by_quadrature(a, x))
              for a in (0.5, 2.0, 16.0) for x in xs)
    closed = max(abs(float(b.smeared_potential(V, a, x)) - erf_closed_form(a, x))
                 for a in (0.5, 2.0, 16.0) for x in xs)
    return {
        f"min max V = {low:.6f} >= 0.999": low >= 0.999,
        f"quadrature vs erf {err:.1e} <= 1e-10": err <= 1e-10,
        f"erf form {closed:.1e} <= 1e-10": closed <= 1e-10,
    }


@criterion(6, "constrained flow equals the canonical flow of the smeared Hamiltonian")
def test_c06_constrained_dynamics():
    a = 1.0
    fam = cq.GaussianPacketFamily(a, V)
    t = np.linspace(0, 50, 201)
    z0 = [-10.0, 1.2]
    ref = solve_ivp(lambda _, z: [2 * z[1], -smeared_gradient(a, z[0])], (0, 50), z0,
                    method="DOP853", rtol=1e-13, atol=1e-13, t_eval=t)
    tr = cq.integrate(fam, z0, (0, 50), tol=1e-12, t_eval=t)
    dev = np.max(np.abs(tr.states - ref.y.T), axis=0)
    h0 = tr.energies[0]
    exact_h = np.array([k * k + 1 / (2 * a) + erf_closed_form(a, x) for x, k in tr.states])
    drift = float(np.max(np.abs(exact_h - h0)))

    a4 = 4.0
    vmax = b.smeared_potential_max(V, a4)
    ks4 = [0.6, 0.9, np.sqrt(vmax) - 0.02, np.sqrt(vmax) + 0.02, 1.1, 1.5]
    step_ok = [T for _, T in cq.constrained_curve(a4, ks4, V)] == [float(k * k > vmax) for k in ks4]

    ks = np.linspace(0.1, 2.0, 39)
    ks = ks[np.abs(ks - 1) >= 0.05]
    ideal_ok = [T for _, T in cq.constrained_curve(0.01, ks, V)] == [b.t_ideal(k) for k in ks]
    return {
        f"x deviation {dev[0]:.1e} <= 1e-8": dev[0] <= 1e-8,
        f"k deviation {dev[1]:.1e} <= 1e-8": dev[1] <= 1e-8,
        f"energy drift {drift:.1e} <= 1e-8": drift <= 1e-8,
        "alpha = 4 step at the smeared threshold": step_ok,
        "alpha = 0.01 matches the ideal step": ideal_ok,
    }


@criterion(7, "rotor conservation, Lie-Poisson crosscheck and precession")
def test_c07_rotor():
    s = r.RotorState(r.rotation([1, 1, 0], 0.3), [0.4, 0.9, 0.6])
    P = r.characteristic_period(I123, s)
    t = np.linspace(0, 1000 * P, 2001)
    tr = r.evolve_rotor(I123, s, (0, t[-1]), tol=1e-11, t_eval=t)
    H = np.array([r.classical_hamiltonian(I123, tr.state(i)) for i in range(len(t))])
    Lsq = np.sum(tr.L_body ** 2, axis=1)
    dH = float(np.max(np.abs(H - H[0])) / abs(H[0]))
    dL = float(np.max(np.abs(Lsq - Lsq[0])) / Lsq[0])
    cross = r.lie_poisson_crosscheck(I123, s, (0, 10 * P))

    m = (2.0, 2.0, 1.0)
    top = r.RotorState(np.eye(3), [0.3, 0.4, 1.1])
    Pt = r.characteristic_period(m, top)
    tt = np.linspace(0, 100 * Pt, 4001)
    ptr = r.evolve_rotor(m, top, (0, tt[-1]), tol=1e-11, t_eval=tt)
    prec = abs(r.measured_precession_rate(ptr) - r.symmetric_top_rate(m, 1.1))
    return {
        f"relative H drift {dH:.1e} <= 1e-9": dH <= 1e-9,
        f"relative |L|^2 drift {dL:.1e} <= 1e-9": dL <= 1e-9,
        f"Euler vs Lie-Poisson {cross:.1e} <= 1e-6": cross <= 1e-6,
        f"precession rate error {prec:.1e} <= 1e-6": prec <= 1e-6,
    }


@criterion(8, "rotor orbit geometry at zero angular momentum")
def test_c08_orbit_geometry():
    rma = r.rma_structure_constants()
    info = al.orbit_analysis(rma, r.rma_density(np.diag(I123), np.zeros(3)), rel_tol=1e-9)
    rep = r.orbit_geometry_report(I123)
    jac = rma.jacobi_residual()
    return {
        f"rank {info.rank} == 6": info.rank == 6,
        "kernel spanned by diagonal inertia": rep["kernel_is_diagonal_moments"],
        f"Jacobi residual {jac:.1e} <= 1e-12": jac <= 1e-12,
    }


@criterion(9, "expectation evolution descends to the orbit for the spin-1 fixture")
def test_c09_gauge_claim():
    _, rep = al.load_fixture("spin1")
    Jx, _, Jz = rep.generators
    K = al.FiniteGroupAction.one_parameter(Jz, n=64)
    rho = np.diag([0.5, 0.2, 0.3]).astype(complex)
    rho[0, 2] = rho[2, 0] = 0.25        # z-invariant classical image, non-invariant matrix
    checks = {}
    for name, H in (("Jz^2", Jz @ Jz), ("Jx", Jx)):
        inv = al.energy_invariance_residual(rep, rho, H, K)
        checks[f"{name}: energy invariant on K ({inv:.1e})"] = inv <= 1e-10
        if inv <= 1e-10:
            _, res = al.expectation_evolution_check(rep, rho, H, K)
            checks[f"{name}: evolution residual {res:.1e} <= 1e-10"] = res <= 1e-10
    once = al.gauge_average(rep, rho, K)
    idem = float(np.max(np.abs(al.gauge_average(rep, once, K) - once)))
    checks[f"gauge average idempotence {idem:.1e} <= 1e-12"] = idem <= 1e-12
    return checks


@criterion(10, "scattered packet leaves the Gaussian family")
def test_c10_manifold_departure():
    base = BASELINES["fidelity_after_barrier"]
    g, xb, _ = sc.auto_grid(400, 1.0)
    fresh = sc.fidelity_to_family(g, sc.init_gaussian(g, 400, xb, 1.0), 400)["fidelity"]
    res = sc.transmission_of_packet(base["alpha"], base["kbar"], V)
    after = sc.fidelity_to_family(res.grid, res.state, base["alpha"])["fidelity"]
    return {
        f"fresh fidelity {fresh:.10f} >= 1 - 1e-8": fresh >= 1 - 1e-8,
        f"scattered fidelity {after:.5f} < 0.99": after < 0.99,
        f"matches baseline {base['fidelity']}": abs(after - base["fidelity"]) <= base["abs_tol"],
    }


SMALL = {
    "fig1": {},
    "fig2": {"modes": ["icm", "cm", "qm", "qm_avg", "cqm"], "alphas": [4, "inf"],
             "cqm_alphas": [0.25], "k_grid": {"k_min": 0.55, "k_max": 1.45, "n": 10}},
    "rotor": {"periods": 2, "n_out": 51, "crosscheck_periods": 1,
              "precession": {"moments": [2, 2, 1], "L_body": [0.3, 0.4, 1.1], "periods": 2}},
}


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())
            if p.suffix in (".csv", ".json") and p.name != "manifest.json"}


@criterion(11, "repeated runs are byte-identical")
def test_c11_determinism(tmp_path):
    checks = {}
    for cmd, cfg in SMALL.items():
        path = tmp_path / f"{cmd}.json"
        path.write_text(json.dumps(cfg))
        codes = [cli.main([cmd, "--out", str(tmp_path / cmd / tag), "--config", str(path)])
                 for tag in ("a", "b")]
        a, b_ = (_outputs(tmp_path / cmd / tag) for tag in ("a", "b"))
        checks[f"{cmd} identical ({len(a)} files)"] = codes == [0, 0] and bool(a) and a == b_
    return checks
