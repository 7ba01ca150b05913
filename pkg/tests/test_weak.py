"""Coupling-strength expansion: scalar tracks vs the two-time lattice.

The production path integrates scalar convolution ODEs; the lattice mode
re-integrates the printed two-time row equations and rebuilds the
convolutions by quadrature.  Their agreement (trapezoid-limited) is the main
correctness argument for the scalar reduction.  The third-order row also has
a full closed form, used here as an exact oracle.
"""

import io

import numpy as np
import pytest
from scipy.integrate import quad

from qsdsim.coeffs import channel_tracks
from qsdsim.errors import ConfigError
from qsdsim.model import ModelParams, bath_correlation
from qsdsim.weakcoupling import (
    NOISE_CHANNEL_ORDER,
    ORDERS,
    WeakTrack,
    dump_weak_csv,
    first_order_convolution,
    integrate_weak_coupling,
    lattice_tables,
)

P = ModelParams(omega_s=1.0, lam=0.6, gamma=0.6, Omega=0.0)  # delta = 1


def test_structural_constants():
    assert ORDERS == (1, 3, 5)  # even orders vanish, expansion stops at 5
    assert NOISE_CHANNEL_ORDER == 4


def test_first_order_closed_form_vs_quadrature():
    for t in (0.3, 1.0, 2.7):
        def re(s):
            return (bath_correlation(t, s, P) * np.exp(1j * P.omega_s * (t - s))).real

        def im(s):
            return (bath_correlation(t, s, P) * np.exp(1j * P.omega_s * (t - s))).imag

        ref = quad(re, 0, t, limit=200)[0] + 1j * quad(im, 0, t, limit=200)[0]
        assert abs(first_order_convolution(t, P) - ref) < 1e-10


def test_first_order_long_time_limit():
    p = ModelParams(omega_s=1.0, lam=1.0, gamma=1.0, Omega=0.0)  # delta = 1
    val = first_order_convolution(40.0, p)
    assert val == pytest.approx(0.25 + 0.25j, abs=1e-12)


def test_order_validation():
    with pytest.raises(ConfigError):
        integrate_weak_coupling(P, 2, 0.01, 1.0)
    with pytest.raises(ConfigError):
        integrate_weak_coupling(P, 7, 0.01, 1.0)
    for order in ORDERS:
        track = integrate_weak_coupling(P, order, 0.01, 1.0)
        assert track.order == order


def test_zero_initial_conditions():
    track = integrate_weak_coupling(P, 5, 0.01, 1.0)
    for nm in ("conv1", "conv3", "conv3_stag", "conv4_pair", "conv5", "conv5_stag"):
        assert getattr(track, nm)[0] == 0.0


def test_staggered_mirror_identity():
    # at equal qubit frequencies the staggered third-order convolution obeys
    # the mirrored equation; their sum satisfies a homogeneous linear ODE
    # with zero start, which fixed-step RK4 keeps at exactly zero
    track = integrate_weak_coupling(P, 5, 0.01, 6.0)
    assert np.max(np.abs(track.conv3 + track.conv3_stag)) == 0.0


def test_track_index():
    track = integrate_weak_coupling(P, 1, 0.01, 1.0)
    assert track.index(0.5) == 50
    with pytest.raises(ConfigError):
        track.index(0.503)


def test_lattice_refuses_huge_grids():
    with pytest.raises(ConfigError):
        lattice_tables(P, 0.001, 5.0)


def test_lattice_boundary_values():
    lat = lattice_tables(P, 0.05, 2.0)
    n = lat.grid.size
    for table in (lat.f3, lat.g3, lat.f5, lat.g5):
        assert np.all(np.diag(table) == 0.0)  # rows start at zero on t = s
        assert np.all(np.isnan(table[np.triu_indices(n, k=1)]))  # s > t undefined
    # pair rows start on the staggered convolution
    fine = integrate_weak_coupling(P, 5, 0.025, 2.0)
    for k in (0, 13, 40):
        assert lat.h4p[k, k] == 4.0 * fine.conv3_stag[2 * k]


def test_lattice_pair_row_is_exact_exponential():
    lat = lattice_tables(P, 0.05, 2.0)
    rate = -(P.gamma + 1j * P.Omega) + 2j * P.omega_s
    ratio = lat.h4p[30, 10] / lat.h4p[15, 10]
    assert abs(ratio - np.exp(rate * 0.05 * 15)) < 1e-13


def test_lattice_third_order_row_closed_form():
    # f3(t,s) = e^{i omega (t-s)} (Phi(t) - Phi(s)), Phi the running integral
    # of the first-order convolution (itself in closed form)
    lat = lattice_tables(P, 0.02, 4.0)
    g = P.gamma - 1j * P.delta

    def Phi(t):
        return 0.5 * P.gamma / g * (t + (np.exp(-g * t) - 1.0) / g)

    worst = 0.0
    for k in range(0, lat.grid.size, 10):
        s = lat.grid[: k + 1]
        ref = np.exp(1j * P.omega_s * (lat.grid[k] - s)) * (Phi(lat.grid[k]) - Phi(s))
        worst = max(worst, np.max(np.abs(lat.f3[k, : k + 1] - ref)))
    assert worst < 1e-7


def test_lattice_matches_scalar_tracks():
    lat = lattice_tables(P, 0.02, 4.0)
    sc = integrate_weak_coupling(P, 5, 0.02, 4.0)
    for nm in ("conv3", "conv3_stag", "conv4_pair", "conv5", "conv5_stag"):
        dev = np.max(np.abs(getattr(lat, nm) - getattr(sc, nm)))
        assert dev < 1e-4, (nm, dev)  # trapezoid-limited


def test_channel_assembly_orders():
    track = integrate_weak_coupling(P, 5, 0.01, 2.0)
    lam = P.lam

    a1, s1, src1, dec1 = channel_tracks("weak1", track, P)
    assert np.allclose(a1, lam * track.conv1)
    assert np.all(s1 == 0)
    assert src1 is None and dec1 is None  # first order carries no noise

    a3, s3, src3, dec3 = channel_tracks("weak3", track, P)
    assert np.allclose(a3, lam * track.conv1 + lam**3 * track.conv3)
    assert np.allclose(s3, lam**3 * track.conv3_stag)
    assert src3 is None and dec3 is None  # third order carries no noise

    a5, s5, src5, dec5 = channel_tracks("weak5", track, P)
    assert np.allclose(a5, a3 + lam**5 * track.conv5)
    assert np.allclose(s5, s3 + lam**5 * track.conv5_stag)
    # the expansion's sole noise channel sits at fourth order: pair operator,
    # constant decay rate, source proportional to the staggered convolution
    assert np.allclose(src5, 4.0 * lam**NOISE_CHANNEL_ORDER * track.conv3_stag)
    assert np.allclose(dec5, -(P.gamma + 1j * P.Omega) + 2j * P.omega_s)


def test_channel_assembly_rejects_short_order():
    track3 = integrate_weak_coupling(P, 3, 0.01, 1.0)
    with pytest.raises(ConfigError):
        channel_tracks("weak5", track3, P)


def test_dump_weak_csv():
    track = integrate_weak_coupling(P, 5, 0.25, 1.0)
    buf = io.StringIO()
    dump_weak_csv(track, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0].startswith("t,re_conv1,im_conv1,re_conv3")
    assert len(lines) == 1 + track.grid.size
