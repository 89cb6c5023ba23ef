"""Indicator functions over a (tau, omega) probing grid.

The probing exponential exp(tau * (x.w + i x.w_perp)) grows across the
half-plane {x.w > h}; pairing it with a difference of DN matrices yields
an indicator whose log-growth rate in tau recovers the support function
of the inclusion set.  The least-squares slope of half-log indicator
values over a short tau range is the classical reconstruction that the
learned predictor is compared against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .femsolver import DNMatrix, trig_basis
from .geometry import probe_directions

LOG_FLOOR = 1e-300       # |I| is floored here before taking logs
DEFAULT_QUADRATURE = 1024


@dataclass(frozen=True)
class ProbeGrid:
    """45 unit directions and 10 tau values (0.5 .. 5 in steps of 0.5)."""

    directions: np.ndarray = field(default_factory=probe_directions)
    taus: np.ndarray = field(default_factory=lambda: 0.5 * np.arange(1, 11))


def quadrature_size(order: int, tau: float) -> int:
    """Number of uniform quadrature points resolving the probing
    exponential: at least 8 * (order + ceil(tau * e))."""
    return max(DEFAULT_QUADRATURE, 8 * (order + math.ceil(tau * math.e)))


def calderon_coeffs(
    omega: np.ndarray, tau: float, order: int, num_points: int | None = None
) -> np.ndarray:
    """Boundary-basis coefficients of the probing exponential.

    Entry n is the periodic-trapezoid approximation of the integral of
    exp(tau*(x.w + i*x.w_perp)) * phi_n over the unit circle, with w_perp
    the counterclockwise rotation of w by pi/2.  The integrand is smooth
    and periodic, so the trapezoid rule converges spectrally once the
    point count satisfies quadrature_size.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau > 50:
        raise ValueError("tau > 50 risks overflow of exp(tau) amplitudes")
    q = num_points if num_points is not None else quadrature_size(order, tau)
    omega = np.asarray(omega, dtype=float)
    operp = np.array([-omega[1], omega[0]])
    theta = 2 * np.pi * np.arange(q) / q
    x = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    f = np.exp(tau * (x @ omega) + 1j * tau * (x @ operp))
    basis = trig_basis(order, theta)
    return (basis @ f) * (2 * np.pi / q)


def indicator(dn_sigma: DNMatrix, dn_one: DNMatrix, omega, tau: float) -> complex:
    """Indicator value a^T (L_sigma - L_1) conj(a) for one (omega, tau).

    The basis is real, so conjugation acts only on the data side of the
    pairing; the result is complex in general and |.| is what carries the
    support information.
    """
    if dn_sigma.order != dn_one.order:
        raise ValueError("DN matrices must share the same order")
    a = calderon_coeffs(omega, tau, dn_sigma.order)
    return complex(a @ (dn_sigma.entries - dn_one.entries) @ np.conj(a))


def grid_coefficients(grid: ProbeGrid, order: int) -> np.ndarray:
    """Probing coefficients for every grid cell, shape (n_tau, n_dir, order+1).

    The coefficients depend only on the grid and the truncation order, so
    batch pipelines compute them once and reuse them across phantoms.
    """
    out = np.empty((len(grid.taus), len(grid.directions), order + 1), dtype=complex)
    for j, tau in enumerate(grid.taus):
        for i, omega in enumerate(grid.directions):
            out[j, i] = calderon_coeffs(omega, float(tau), order)
    return out


def indicator_matrix(
    dn_sigma: DNMatrix,
    dn_one: DNMatrix,
    grid: ProbeGrid | None = None,
    coeffs: np.ndarray | None = None,
) -> np.ndarray:
    """Half-log indicator magnitudes over the grid, shape (n_tau, n_dir).

    Entry (j, i) is 0.5 * log(max(|I_{omega_i}(tau_j)|, LOG_FLOOR)); the
    floor keeps degenerate inputs (identical DN matrices) finite.
    """
    if dn_sigma.order != dn_one.order:
        raise ValueError("DN matrices must share the same order")
    grid = grid or ProbeGrid()
    if coeffs is None:
        coeffs = grid_coefficients(grid, dn_sigma.order)
    diff = dn_sigma.entries - dn_one.entries
    vals = np.einsum("jin,nm,jim->ji", coeffs, diff, np.conj(coeffs))
    return 0.5 * np.log(np.maximum(np.abs(vals), LOG_FLOOR))


def ls_slope(taus: np.ndarray, vals: np.ndarray) -> float:
    """Ordinary least-squares slope of vals against taus."""
    taus = np.asarray(taus, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if len(np.unique(taus)) < 2:
        raise ValueError("slope needs at least two distinct tau values")
    t = taus - taus.mean()
    return float(t @ (vals - vals.mean()) / (t @ t))


def ls_support_vector(im: np.ndarray, grid: ProbeGrid | None = None) -> np.ndarray:
    """Column-wise LS slopes of an indicator matrix: the classical support
    estimate (unclamped; small-tau bias makes it overshoot)."""
    grid = grid or ProbeGrid()
    im = np.asarray(im, dtype=float)
    return np.array([ls_slope(grid.taus, im[:, i]) for i in range(im.shape[1])])
