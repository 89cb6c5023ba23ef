"""Complete electrode model: finite electrodes with contact impedances.

Simulates electrode voltage measurements for injected current patterns,
converts adjacent-pair data to the trigonometric basis, and rebuilds DN
matrices from electrode voltages so that measured data can enter the same
indicator pipeline as simulated continuum data.  A plain-text measurement
container (documented in read_measurement_file) carries real or synthetic
data in and out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .femsolver import (
    DiskMesh,
    DNMatrix,
    NDMatrix,
    SolverError,
    dn_analytic_homogeneous,
    dn_from_nd,
    mode_frequency,
    trig_basis,
)
from .geometry import Phantom

MEASUREMENT_MAGIC = "EITMEAS 1"
KIRCHHOFF_TOL = 1e-8
_GROUND_TOL = 1e-12


class MeasurementFormatError(ValueError):
    """A measurement file violates the documented container format."""


@dataclass(frozen=True)
class ElectrodeLayout:
    """Evenly spaced boundary electrodes on the unit circle.

    Electrode l (0-based) is the arc of angular width 2*half_width
    centered at 2*pi*l/count.  radius records the physical tank radius
    that was rescaled to 1.
    """

    count: int = 16
    half_width: float = np.pi / 32
    radius: float = 1.0

    def __post_init__(self):
        if self.count < 4 or self.count % 2 != 0:
            raise ValueError("electrode count must be even and >= 4")
        if not 0 < self.half_width < np.pi / self.count:
            raise ValueError("electrodes must be disjoint (half_width < pi/count)")

    @property
    def centers(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.count) / self.count

    @property
    def arc_length(self) -> float:
        return 2 * self.half_width


def _zeta_array(layout: ElectrodeLayout, zeta) -> np.ndarray:
    z = np.broadcast_to(np.asarray(zeta, dtype=float), (layout.count,)).copy()
    if np.any(z <= 0):
        raise SolverError("contact impedances must be positive")
    return z


@dataclass(frozen=True)
class CEMMeasurement:
    """Current patterns and measured electrode voltages, column per pattern.

    basis is "adjacent" or "trig"; reference optionally holds voltages of
    the homogeneous (inclusion-free) tank under the same currents.
    """

    currents: np.ndarray
    voltages: np.ndarray
    basis: str
    reference: np.ndarray | None = None

    @property
    def electrode_count(self) -> int:
        return self.currents.shape[0]

    @property
    def pattern_count(self) -> int:
        return self.currents.shape[1]


def validate_measurement(meas: CEMMeasurement) -> None:
    """Enforce the Kirchhoff and grounding invariants."""
    if meas.basis not in ("adjacent", "trig"):
        raise MeasurementFormatError(f"unknown pattern basis {meas.basis!r}")
    if meas.voltages.shape != meas.currents.shape:
        raise MeasurementFormatError("current and voltage matrices must agree in shape")
    if meas.reference is not None and meas.reference.shape != meas.currents.shape:
        raise MeasurementFormatError("reference block must match the voltage shape")
    scale = max(1.0, float(np.abs(meas.currents).max()))
    sums = np.abs(meas.currents.sum(axis=0))
    if np.any(sums > KIRCHHOFF_TOL * scale):
        j = int(np.argmax(sums))
        raise MeasurementFormatError(
            f"current column {j} violates Kirchhoff's law (sum {meas.currents[:, j].sum():g})"
        )


def trig_patterns(count: int) -> np.ndarray:
    """Trigonometric current patterns, (count, count-2).

    Column n (1-based) samples cos((n+1)/2 * theta) for odd n and
    sin(n/2 * theta) for even n at the electrode centers.  Pattern
    count-1 is omitted: together with the identically-zero pattern count
    it would exceed the count-1 independent zero-sum vectors.
    """
    if count % 2 != 0 or count < 4:
        raise ValueError("electrode count must be even and >= 4")
    theta = 2 * np.pi * np.arange(count) / count
    cols = []
    for n in range(1, count - 1):
        k = mode_frequency(n)
        cols.append(np.cos(k * theta) if n % 2 == 1 else np.sin(k * theta))
    return np.stack(cols, axis=1)


def adjacent_patterns(count: int) -> np.ndarray:
    """Adjacent-pair injections, (count, count-1): pattern j sends +1 into
    electrode j and -1 into electrode j+1 (cyclic)."""
    if count < 4:
        raise ValueError("need at least 4 electrodes")
    out = np.zeros((count, count - 1))
    for j in range(count - 1):
        out[j, j] = 1.0
        out[(j + 1) % count, j] = -1.0
    return out


def normalized_trig_vectors(count: int, order: int) -> np.ndarray:
    """Discrete trig basis phi_n at the electrode centers, (order, count).

    Orthonormal under the discrete inner product (2*pi/count) * sum."""
    if order > count - 2:
        raise ValueError("order must not exceed count - 2")
    theta = 2 * np.pi * np.arange(count) / count
    return trig_basis(order, theta)[1:]


class CEMFactorization:
    """Factorized CEM system for one (mesh, phantom, layout, zeta).

    The variational form couples the interior P1 field with one constant
    voltage unknown per electrode through the contact-impedance terms; a
    Lagrange multiplier pins sum(V) = 0.  Electrode boundary integrals are
    taken in the angular variable with two-point Gauss rules on each
    (edge intersect electrode) overlap, which is exact for the piecewise
    quadratic integrands.
    """

    def __init__(self, mesh: DiskMesh, phantom: Phantom, layout: ElectrodeLayout, zeta):
        from .femsolver import _stiffness

        self.mesh = mesh
        self.layout = layout
        z = _zeta_array(layout, zeta)
        n = len(mesh.nodes)
        L = layout.count

        k = _stiffness(mesh, phantom).tolil()
        coupling = np.zeros((n, L))
        diag = np.zeros(L)

        th = mesh.boundary_angles
        nb = len(mesh.boundary)
        gauss = 0.5 / math.sqrt(3.0)
        for i in range(nb):
            a = mesh.boundary[i]
            b = mesh.boundary[(i + 1) % nb]
            t0 = th[i]
            t1 = th[(i + 1) % nb] if i + 1 < nb else th[0] + 2 * np.pi
            for l, center in enumerate(self.layout.centers):
                for shift in (-2 * np.pi, 0.0, 2 * np.pi):
                    lo = max(t0, center - layout.half_width + shift)
                    hi = min(t1, center + layout.half_width + shift)
                    if hi <= lo:
                        continue
                    mid, half = 0.5 * (lo + hi), hi - lo
                    for gp in (mid - gauss * half, mid + gauss * half):
                        gw = 0.5 * half / z[l]
                        la = (t1 - gp) / (t1 - t0)
                        lb = (gp - t0) / (t1 - t0)
                        k[a, a] += gw * la * la
                        k[a, b] += gw * la * lb
                        k[b, a] += gw * lb * la
                        k[b, b] += gw * lb * lb
                        coupling[a, l] -= gw * la
                        coupling[b, l] -= gw * lb
                        diag[l] += gw

        ones = np.ones((L, 1))
        system = sp.bmat(
            [
                [k.tocsc(), sp.csc_matrix(coupling), None],
                [sp.csc_matrix(coupling.T), sp.csc_matrix(np.diag(diag)), ones],
                [None, ones.T, None],
            ],
            format="csc",
        )
        try:
            self._lu = spla.splu(system)
        except RuntimeError as exc:
            raise SolverError(f"CEM factorization failed: {exc}") from exc
        self._n = n

    def solve(self, current: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        current = np.asarray(current, dtype=float)
        L = self.layout.count
        if current.shape != (L,):
            raise ValueError(f"current must have shape ({L},)")
        if abs(current.sum()) > KIRCHHOFF_TOL * max(1.0, np.abs(current).max()):
            raise ValueError("current pattern must sum to zero")
        rhs = np.concatenate([np.zeros(self._n), current, [0.0]])
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SolverError("CEM solve produced non-finite values")
        return sol[self._n : self._n + L], sol[: self._n]


def solve_cem(
    mesh: DiskMesh, phantom: Phantom, layout: ElectrodeLayout, zeta, current: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Electrode voltages (sum 0) and interior potential for one pattern."""
    return CEMFactorization(mesh, phantom, layout, zeta).solve(current)


def measure(
    mesh: DiskMesh,
    phantom: Phantom,
    layout: ElectrodeLayout,
    zeta,
    patterns: np.ndarray,
    basis: str | None = None,
) -> CEMMeasurement:
    """Stack solve_cem over the pattern columns into a measurement.

    The basis tag is inferred from the column count (count-2 -> trig,
    count-1 -> adjacent) unless given explicitly.
    """
    patterns = np.asarray(patterns, dtype=float)
    if basis is None:
        cols = patterns.shape[1]
        if cols == layout.count - 2:
            basis = "trig"
        elif cols == layout.count - 1:
            basis = "adjacent"
        else:
            raise ValueError("cannot infer basis tag; pass basis= explicitly")
    fact = CEMFactorization(mesh, phantom, layout, zeta)
    volts = np.stack([fact.solve(col)[0] for col in patterns.T], axis=1)
    meas = CEMMeasurement(patterns, volts, basis)
    validate_measurement(meas)
    return meas


def conversion_matrix(count: int) -> np.ndarray:
    """Basis-transform matrix C, (count-2, count-1): discrete inner products
    (2*pi/count) * sum of the normalized trig vectors against the adjacent
    patterns."""
    trig = normalized_trig_vectors(count, count - 2)
    adj = adjacent_patterns(count)
    return (2 * np.pi / count) * (trig @ adj)


def adjacent_to_trig(v_ad: np.ndarray, conv: np.ndarray) -> np.ndarray:
    """Voltages the tank would show under the trigonometric patterns.

    Expanding each adjacent pattern over the retained discrete trig basis
    gives V_ad = V_hat C with V_hat the responses to the normalized trig
    patterns; with C of full row rank the least-squares solution is
    unique.  The result is rescaled to the unnormalized trig patterns of
    trig_patterns (factor sqrt(pi)) and its columns re-centered to zero
    mean.
    """
    v_ad = np.asarray(v_ad, dtype=float)
    if np.linalg.matrix_rank(conv) < conv.shape[0]:
        raise SolverError("conversion matrix is rank deficient")
    v_hat, *_ = np.linalg.lstsq(conv.T, v_ad.T, rcond=None)
    v_tri = math.sqrt(np.pi) * v_hat.T
    return v_tri - v_tri.mean(axis=0, keepdims=True)


def convert_measurement(meas: CEMMeasurement) -> CEMMeasurement:
    """Adjacent-basis measurement re-expressed under trigonometric patterns."""
    if meas.basis == "trig":
        return meas
    conv = conversion_matrix(meas.electrode_count)
    ref = None if meas.reference is None else adjacent_to_trig(meas.reference, conv)
    return CEMMeasurement(
        trig_patterns(meas.electrode_count),
        adjacent_to_trig(meas.voltages, conv),
        "trig",
        ref,
    )


def _nd_from_trig_voltages(
    currents: np.ndarray, voltages: np.ndarray, layout: ElectrodeLayout, order: int
) -> NDMatrix:
    """Discrete ND matrix: voltage coefficients against current-density
    coefficients, both in the normalized discrete trig basis.

    Electrode currents approximate densities via I_l ~ g(theta_l)*(2pi/L),
    so the density coefficient matrix is plainly phi_hat @ currents while
    the voltage coefficients carry the discrete measure 2pi/L.
    """
    phi = normalized_trig_vectors(layout.count, order)
    dens = phi @ currents
    volt = (2 * np.pi / layout.count) * (phi @ voltages)
    if dens.shape[0] > dens.shape[1] or np.linalg.matrix_rank(dens) < dens.shape[0]:
        raise SolverError("current patterns do not span the requested order")
    sol, *_ = np.linalg.lstsq(dens.T, volt.T, rcond=None)
    return NDMatrix(order, sol.T)


def dn_from_electrode_voltages(
    meas: CEMMeasurement,
    layout: ElectrodeLayout,
    order: int,
    scale: float = 1.0,
    analytic_reference: bool = False,
) -> tuple[DNMatrix, DNMatrix]:
    """DN matrices (inclusion, homogeneous) from a trig-basis measurement.

    The homogeneous map comes from the measurement's reference block when
    present; otherwise the closed-form homogeneous DN matrix is used if
    analytic_reference is set, and an error is raised if not.  scale is a
    multiplicative background calibration applied to the ND matrices
    before inversion (see estimate_background_scale).
    """
    if meas.basis != "trig":
        raise ValueError("measurement must be in the trig basis (see convert_measurement)")
    if order > layout.count - 2:
        raise ValueError("order must not exceed electrode count - 2")
    nd_sigma = _nd_from_trig_voltages(meas.currents, meas.voltages, layout, order)
    dn_sigma = dn_from_nd(NDMatrix(order, scale * nd_sigma.entries))
    if meas.reference is not None:
        nd_ref = _nd_from_trig_voltages(meas.currents, meas.reference, layout, order)
        dn_one = dn_from_nd(NDMatrix(order, scale * nd_ref.entries))
    elif analytic_reference:
        dn_one = dn_analytic_homogeneous(order)
    else:
        raise ValueError(
            "measurement has no reference block; pass analytic_reference=True to fall back"
        )
    return dn_sigma, dn_one


def estimate_background_scale(
    meas: CEMMeasurement, layout: ElectrodeLayout, zeta=None, max_frequency: int = 4
) -> float:
    """Multiplicative factor aligning a homogeneous-tank measurement with
    the unit-background model.

    Fits s minimizing ||s * ND_ref - ND_analytic(sigma == 1)||_F over the
    modes with frequency <= max_frequency.  Saline conductivity and
    instrument units enter the data as one overall factor, so s applied
    to the measured ND matrices calibrates them before differencing.
    zeta is accepted for interface completeness; the fit itself targets
    the analytic continuum reference.
    """
    if meas.reference is not None:
        ref_volt = meas.reference
    else:
        ref_volt = meas.voltages
    order = min(layout.count - 2, 2 * max_frequency)
    nd_ref = _nd_from_trig_voltages(meas.currents, ref_volt, layout, order).entries
    target = np.diag([1.0 / mode_frequency(n) for n in range(1, order + 1)])
    denom = float((nd_ref * nd_ref).sum())
    if denom < 1e-300:
        raise SolverError("degenerate reference measurement (zero ND matrix)")
    return float((nd_ref * target).sum() / denom)


# ---------------------------------------------------------------------------
# measurement file container (UTF-8 text)
#
#   line 1:  EITMEAS 1
#   line 2:  L <int> PATTERNS <int> BASIS <adjacent|trig> REF <0|1>
#   then L rows of the current matrix, L rows of the voltage matrix and,
#   if REF is 1, L rows of reference voltages; rows are space-separated
#   decimals (scientific notation accepted).


def write_measurement_file(path, meas: CEMMeasurement) -> None:
    L, P = meas.currents.shape
    blocks = [meas.currents, meas.voltages]
    if meas.reference is not None:
        blocks.append(meas.reference)
    lines = [
        MEASUREMENT_MAGIC,
        f"L {L} PATTERNS {P} BASIS {meas.basis} REF {0 if meas.reference is None else 1}",
    ]
    for block in blocks:
        for row in block:
            lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_block(lines: list[str], start: int, L: int, P: int, what: str) -> np.ndarray:
    rows = []
    for i in range(L):
        if start + i >= len(lines):
            raise MeasurementFormatError(f"truncated file: {what} block needs {L} rows")
        fields = lines[start + i].split()
        if len(fields) != P:
            raise MeasurementFormatError(
                f"inconsistent dimensions: {what} row {i} has {len(fields)} values, expected {P}"
            )
        try:
            rows.append([float(v) for v in fields])
        except ValueError as exc:
            raise MeasurementFormatError(f"bad decimal in {what} row {i}: {exc}") from exc
    return np.array(rows)


def read_measurement_file(path) -> CEMMeasurement:
    """Parse and validate a measurement container.

    Voltage columns measured against an arbitrary ground are re-centered
    to zero mean (left untouched when already zero-mean to roundoff, so a
    file written by write_measurement_file round-trips bit-exactly).
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0].strip() != MEASUREMENT_MAGIC:
        raise MeasurementFormatError("malformed header: expected 'EITMEAS 1' on line 1")
    fields = lines[1].split() if len(lines) > 1 else []
    if len(fields) != 8 or fields[0] != "L" or fields[2] != "PATTERNS" or fields[4] != "BASIS" or fields[6] != "REF":
        raise MeasurementFormatError("malformed header: expected 'L <n> PATTERNS <n> BASIS <b> REF <0|1>'")
    try:
        L, P = int(fields[1]), int(fields[3])
    except ValueError as exc:
        raise MeasurementFormatError(f"malformed header: {exc}") from exc
    basis, ref_flag = fields[5], fields[7]
    if basis not in ("adjacent", "trig"):
        raise MeasurementFormatError(f"malformed header: unknown basis {basis!r}")
    if ref_flag not in ("0", "1"):
        raise MeasurementFormatError(f"malformed header: REF must be 0 or 1, got {ref_flag!r}")

    currents = _parse_block(lines, 2, L, P, "current")
    voltages = _parse_block(lines, 2 + L, L, P, "voltage")
    reference = None
    if ref_flag == "1":
        reference = _parse_block(lines, 2 + 2 * L, L, P, "reference")
        expected = 2 + 3 * L
    else:
        expected = 2 + 2 * L
    if len(lines) != expected:
        raise MeasurementFormatError(f"inconsistent dimensions: {len(lines)} lines, expected {expected}")

    def recenter(block):
        mean = block.mean(axis=0, keepdims=True)
        tol = _GROUND_TOL * max(1.0, float(np.abs(block).max()))
        return block - np.where(np.abs(mean) > tol, mean, 0.0)

    voltages = recenter(voltages)
    if reference is not None:
        reference = recenter(reference)
    meas = CEMMeasurement(currents, voltages, basis, reference)
    validate_measurement(meas)
    return meas


def ingest_measurement_file(path) -> CEMMeasurement:
    """read_measurement_file under its spec-facing name."""
    return read_measurement_file(path)
