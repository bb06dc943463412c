"""Circuit model of the self-organizing AND/OR gates.

The dynamical state is the 7-vector ``y = (v2, v3, x1, ..., x5)``; the
terminal-1 voltage ``v1`` is held by an ideal generator and is passed
alongside as boundary data.  Everything in this module is a pure function
of its arguments and broadcasts over leading batch axes.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

N_STATE = 7
N_MEM = 5

# VCVG rows in the order V1M, V1R, V2M, V2R, V3M, V3R; columns b1, b2, b3.
VCVG_GAINS = np.array(
    [
        [0.0, -1.0, 1.0],
        [3.0, 1.0, -2.0],
        [-1.0, 0.0, 1.0],
        [1.0, 3.0, -2.0],
        [2.0, 2.0, -1.0],
        [-3.0, -3.0, 5.0],
    ]
)
DC_AND = np.array([1.0, -1.0, 1.0, -1.0, -2.0, 2.0])
DC_OR = -DC_AND
VCVG_NAMES = ("V1M", "V1R", "V2M", "V2R", "V3M", "V3R")
V1M, V1R, V2M, V2R, V3M, V3R = range(6)

# Orientation signs for the AND gate selected by calibrate_orientations();
# the OR gate uses the negation.
DEFAULT_AND_ORIENTATIONS = (1.0, 1.0, 1.0, -1.0, 1.0)

# Reference critical point (v2, v3, x1..x5), unstable for v1 = +1 V (AND)
# and v1 = -1 V (OR).
REFERENCE_POINT = np.array([0.0, 0.0, 1.0, 1.0, 0.75, 1.0, 1.0])


class ModelError(ValueError):
    """Raised for inputs outside the model's domain."""


def theta_coefficients(r_order: int) -> tuple[float, ...]:
    """Coefficients ``a_{r+1} .. a_{2r+1}`` of the order-``r`` smooth step.

    Solved exactly in rational arithmetic from the value and derivative
    matching conditions at ``y = 0`` and ``y = 1``.
    """
    if int(r_order) != r_order or r_order < 1:
        raise ModelError(f"r_order must be a positive integer, got {r_order!r}")
    if r_order > 8:
        raise ModelError("r_order > 8 is not supported (ill-conditioned step)")
    r = int(r_order)
    powers = range(r + 1, 2 * r + 2)
    rows = [[Fraction(1)] * (r + 1) + [Fraction(1)]]
    for ell in range(1, r + 1):
        rows.append([Fraction(comb(i, ell)) for i in powers] + [Fraction(0)])
    n = r + 1
    # Gauss-Jordan elimination; the system is nonsingular for every r.
    for col in range(n):
        piv = next(i for i in range(col, n) if rows[i][col] != 0)
        rows[col], rows[piv] = rows[piv], rows[col]
        p = rows[col][col]
        rows[col] = [v / p for v in rows[col]]
        for i in range(n):
            if i != col and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[col])]
    return tuple(float(rows[i][n]) for i in range(n))


def _poly(y, coeffs, deriv=False):
    # Horner form of sum_j a_j y^(r+1+j) or its derivative
    r = len(coeffs) - 1
    if deriv:
        acc = 0.0
        for j in reversed(range(len(coeffs))):
            acc = acc * y + coeffs[j] * (r + 1 + j)
        return acc * y**r
    acc = 0.0
    for a in reversed(coeffs):
        acc = acc * y + a
    return acc * y ** (r + 1)


def smooth_step(y, coeffs):
    """Piecewise smooth step: 0 below 0, polynomial on [0, 1], 1 above 1."""
    # The polynomial equals 0 at y = 0 and 1 at y = 1 exactly, so evaluating
    # it on the clipped argument reproduces the outer branches.
    return _poly(np.clip(np.asarray(y, dtype=float), 0.0, 1.0), coeffs)


def smooth_step_derivative(y, coeffs):
    # the derivative vanishes at both ends for every r >= 1
    return _poly(np.clip(np.asarray(y, dtype=float), 0.0, 1.0), coeffs, deriv=True)


@dataclass(frozen=True)
class CircuitParams:
    """Physical constants of the gate circuit (SI units)."""

    alpha: float = 60.0
    k: float = 2.0
    v_t: float = 0.1
    r_on: float = 0.01
    r_off: float = 1.0
    capacitance: float = 1e-5
    resistance: float = 1.0
    r_order: int = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ModelError("alpha must be positive")
        if not 0 < self.r_on < self.r_off:
            raise ModelError("need 0 < r_on < r_off")
        if not self.capacitance > 0 or not self.resistance > 0:
            raise ModelError("capacitance and resistance must be positive")
        if not self.v_t > 0:
            raise ModelError("v_t must be positive")
        if int(self.r_order) != self.r_order or self.r_order < 1:
            raise ModelError("r_order must be an integer >= 1")

    @property
    def coeffs(self) -> tuple[float, ...]:
        return _cached_coeffs(int(self.r_order))

    @property
    def memory_ratio(self) -> float:
        return self.r_on / self.r_off

    def with_ratio(self, ratio: float) -> "CircuitParams":
        """Copy with ``r_off = r_on / ratio`` (``r_on`` held fixed)."""
        if not 0 < ratio < 1:
            raise ModelError(f"memory ratio must lie in (0, 1), got {ratio}")
        return dataclasses.replace(self, r_off=self.r_on / ratio)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_COEFF_CACHE: dict[int, tuple[float, ...]] = {}


def _cached_coeffs(r: int) -> tuple[float, ...]:
    if r not in _COEFF_CACHE:
        _COEFF_CACHE[r] = theta_coefficients(r)
    return _COEFF_CACHE[r]


@dataclass(frozen=True)
class GateSpec:
    """Gate kind, VCVG table and memristor orientations."""

    kind: str
    vcvg_coeffs: np.ndarray = field(repr=False)
    orientations: np.ndarray
    logic_high: float = 1.0
    logic_low: float = -1.0

    def __post_init__(self):
        coeffs = np.asarray(self.vcvg_coeffs, dtype=float)
        orient = np.asarray(self.orientations, dtype=float)
        if coeffs.shape != (6, 4):
            raise ModelError("vcvg_coeffs must be 6 x 4 (b1, b2, b3, dc)")
        if orient.shape != (N_MEM,) or not np.all(np.abs(orient) == 1):
            raise ModelError("orientations must be five signs in {+1, -1}")
        object.__setattr__(self, "vcvg_coeffs", coeffs)
        object.__setattr__(self, "orientations", orient)

    @classmethod
    def make(cls, kind: str, and_orientations=DEFAULT_AND_ORIENTATIONS) -> "GateSpec":
        """Build the AND or OR gate from a set of AND orientations."""
        kind = kind.upper()
        s = np.asarray(and_orientations, dtype=float)
        if kind == "AND":
            return cls("AND", np.column_stack([VCVG_GAINS, DC_AND]), s)
        if kind == "OR":
            return cls("OR", np.column_stack([VCVG_GAINS, DC_OR]), -s)
        raise ModelError(f"unknown gate kind {kind!r}")

    @property
    def pinned_v1(self) -> float:
        """Terminal-1 voltage used for the instanton scenarios."""
        return self.logic_high if self.kind == "AND" else self.logic_low

    def truth(self, a: bool, b: bool) -> bool:
        return (a and b) if self.kind == "AND" else (a or b)

    def is_consistent(self, v1, v2, v3, tol: float = 1e-3) -> bool:
        """Whether ``(v1, v2, v3)`` is a truth-table row at the logic levels.

        Terminal 3 is the output, ``v3 = gate(v1, v2)``.
        """
        bits = []
        for v in (v1, v2, v3):
            if abs(v - self.logic_high) <= tol:
                bits.append(True)
            elif abs(v - self.logic_low) <= tol:
                bits.append(False)
            else:
                return False
        return self.truth(bits[0], bits[1]) == bits[2]


@dataclass
class State:
    """Phase-space point: pinned ``v1`` plus the seven dynamical variables."""

    v1: float
    v2: float
    v3: float
    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(N_MEM)

    @classmethod
    def from_vector(cls, v1: float, y) -> "State":
        y = np.asarray(y, dtype=float)
        if y.shape != (N_STATE,):
            raise ModelError(f"state vector must have length {N_STATE}")
        return cls(float(v1), float(y[0]), float(y[1]), y[2:].copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([[self.v2, self.v3], self.x])

    @classmethod
    def reference_point(cls, gate: GateSpec) -> "State":
        return cls.from_vector(gate.pinned_v1, REFERENCE_POINT)


@dataclass
class Derivative:
    dv2: float
    dv3: float
    dx: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([[self.dv2, self.dv3], self.dx])


def conductance(x, params: CircuitParams):
    """Memristor conductance ``1 / ((R_off - R_on) x + R_on)``."""
    den = (params.r_off - params.r_on) * np.asarray(x, dtype=float) + params.r_on
    if np.any(den <= 0):
        raise ModelError("memristor resistance is non-positive (x below its singular value)")
    return 1.0 / den


def conductance_derivative(x, params: CircuitParams):
    g = conductance(x, params)
    return -(params.r_off - params.r_on) * g * g


def window_h(x, v_m, params: CircuitParams):
    """Cutoff window: vanishes at x = 1 for v_m <= 0 and at x = 0 for v_m >= 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(v_m, dtype=float) / (2.0 * params.v_t)
    c = params.coeffs
    return (1.0 - np.exp(-params.k * x)) * smooth_step(y, c) + (
        1.0 - np.exp(-params.k * (1.0 - x))
    ) * smooth_step(-y, c)


def window_h_partials(x, v_m, params: CircuitParams):
    """Partial derivatives ``(dh/dx, dh/dv_m)``."""
    x = np.asarray(x, dtype=float)
    scale = 1.0 / (2.0 * params.v_t)
    y = np.asarray(v_m, dtype=float) * scale
    c, k = params.coeffs, params.k
    up, down = smooth_step(y, c), smooth_step(-y, c)
    e0, e1 = np.exp(-k * x), np.exp(-k * (1.0 - x))
    dh_dx = k * e0 * up - k * e1 * down
    dh_dv = ((1.0 - e0) * smooth_step_derivative(y, c)
             - (1.0 - e1) * smooth_step_derivative(-y, c)) * scale
    return dh_dx, dh_dv


def vcvg_outputs(gate: GateSpec, v1, v2, v3) -> np.ndarray:
    """Generator voltages (V1M, V1R, V2M, V2R, V3M, V3R), stacked on the last axis."""
    v1, v2, v3 = (np.asarray(v, dtype=float) for v in (v1, v2, v3))
    b = gate.vcvg_coeffs
    return (v1[..., None] * b[:, 0] + v2[..., None] * b[:, 1]
            + v3[..., None] * b[:, 2] + b[:, 3])


def _terminal_pairs(v1, v2, v3, vcvg):
    # (first node, second node) of m1..m5
    first = np.stack(np.broadcast_arrays(v1, v2, v3, v1, v2), axis=-1)
    second = np.stack(
        np.broadcast_arrays(vcvg[..., V1M], vcvg[..., V2M], vcvg[..., V3M], v3, v3), axis=-1
    )
    return first, second


def memristor_drops(gate: GateSpec, state: State, vcvg=None) -> np.ndarray:
    """Oriented voltage drops across m1..m5."""
    if vcvg is None:
        vcvg = vcvg_outputs(gate, state.v1, state.v2, state.v3)
    first, second = _terminal_pairs(state.v1, state.v2, state.v3, vcvg)
    return gate.orientations * (first - second)


# Constant d(drop)/d(v2, v3) before orientation signs, rows m1..m5.
def _drop_gradient(gate: GateSpec) -> np.ndarray:
    b = gate.vcvg_coeffs
    raw = np.array(
        [
            [-b[V1M, 1], -b[V1M, 2]],
            [1.0 - b[V2M, 1], -b[V2M, 2]],
            [-b[V3M, 1], 1.0 - b[V3M, 2]],
            [0.0, -1.0],
            [1.0, -1.0],
        ]
    )
    return gate.orientations[:, None] * raw


def mass_matrix(params: CircuitParams) -> np.ndarray:
    c = params.capacitance
    return np.array([[-2.0 * c, 2.0 * c], [-3.0 * c, 4.0 * c]])


def mass_matrix_inverse(params: CircuitParams) -> np.ndarray:
    # closed form of inv([[-2C, 2C], [-3C, 4C]]), det = -2 C^2
    c = params.capacitance
    return np.array([[-2.0, 1.0], [-1.5, 1.0]]) / c


def _unpack(y, v1):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != N_STATE:
        raise ModelError(f"state vector must have length {N_STATE}")
    v1 = np.broadcast_to(np.asarray(v1, dtype=float), y.shape[:-1])
    return v1, y[..., 0], y[..., 1], y[..., 2:]


def node_residuals(gate: GateSpec, params: CircuitParams, y, v1):
    """Right-hand sides of the two nodal equations (amperes)."""
    v1, v2, v3, x = _unpack(y, v1)
    g = conductance(x, params)
    vc = vcvg_outputs(gate, v1, v2, v3)
    rr = params.resistance
    r2 = ((v2 - v3) * g[..., 4] + (v2 - vc[..., V2M]) * g[..., 1]
          + (v2 - vc[..., V2R]) / rr)
    r3 = ((v1 - v3) * g[..., 3] + (vc[..., V3R] - v3) / rr
          + (v2 - v3) * g[..., 4] + (vc[..., V3M] - v3) * g[..., 2])
    return r2, r3


def flow_vector(gate: GateSpec, params: CircuitParams, y, v1) -> np.ndarray:
    """Flow field on state vectors ``y[..., 7]`` with terminal 1 pinned at ``v1``."""
    v1a, v2, v3, x = _unpack(y, v1)
    g = conductance(x, params)
    vc = vcvg_outputs(gate, v1a, v2, v3)
    first, second = _terminal_pairs(v1a, v2, v3, vc)
    drops = gate.orientations * (first - second)
    dx = -params.alpha * window_h(x, drops, params) * g * drops
    rr = params.resistance
    r2 = ((v2 - v3) * g[..., 4] + (v2 - vc[..., V2M]) * g[..., 1]
          + (v2 - vc[..., V2R]) / rr)
    r3 = ((v1a - v3) * g[..., 3] + (vc[..., V3R] - v3) / rr
          + (v2 - v3) * g[..., 4] + (vc[..., V3M] - v3) * g[..., 2])
    minv = mass_matrix_inverse(params)
    dv2 = minv[0, 0] * r2 + minv[0, 1] * r3
    dv3 = minv[1, 0] * r2 + minv[1, 1] * r3
    return np.concatenate([dv2[..., None], dv3[..., None], dx], axis=-1)


def flow(gate: GateSpec, state: State, params: CircuitParams) -> Derivative:
    f = flow_vector(gate, params, state.vector(), state.v1)
    return Derivative(float(f[0]), float(f[1]), f[2:].copy())


def flow_jacobian(gate: GateSpec, params: CircuitParams, y, v1) -> np.ndarray:
    """Analytic Jacobian ``dF/dy`` of :func:`flow_vector`, shape ``(..., 7, 7)``."""
    y = np.asarray(y, dtype=float)
    v1a, v2, v3, x = _unpack(y, v1)
    g = conductance(x, params)
    dg = conductance_derivative(x, params)
    vc = vcvg_outputs(gate, v1a, v2, v3)
    first, second = _terminal_pairs(v1a, v2, v3, vc)
    drops = gate.orientations * (first - second)
    h = window_h(x, drops, params)
    h_x, h_d = window_h_partials(x, drops, params)
    a = params.alpha
    dphi_dx = -a * (h_x * g + h * dg) * drops
    dphi_dd = -a * (h_d * drops + h) * g
    dd = _drop_gradient(gate)
    b = gate.vcvg_coeffs
    rr = params.resistance

    batch = y.shape[:-1]
    jac = np.zeros(batch + (N_STATE, N_STATE))
    # memristor rows
    jac[..., 2:, 0] = dphi_dd * dd[:, 0]
    jac[..., 2:, 1] = dphi_dd * dd[:, 1]
    idx = np.arange(2, N_STATE)
    jac[..., idx, idx] = dphi_dx

    # nodal residual partials
    dr = np.zeros(batch + (2, N_STATE))
    g2, g3, g4, g5 = g[..., 1], g[..., 2], g[..., 3], g[..., 4]
    dr[..., 0, 0] = g5 + g2 * (1.0 - b[V2M, 1]) + (1.0 - b[V2R, 1]) / rr
    dr[..., 0, 1] = -g5 - g2 * b[V2M, 2] - b[V2R, 2] / rr
    dr[..., 0, 3] = (v2 - vc[..., V2M]) * dg[..., 1]
    dr[..., 0, 6] = (v2 - v3) * dg[..., 4]
    dr[..., 1, 0] = b[V3R, 1] / rr + g5 + b[V3M, 1] * g3
    dr[..., 1, 1] = -g4 + (b[V3R, 2] - 1.0) / rr - g5 + (b[V3M, 2] - 1.0) * g3
    dr[..., 1, 4] = (vc[..., V3M] - v3) * dg[..., 2]
    dr[..., 1, 5] = (v1a - v3) * dg[..., 3]
    dr[..., 1, 6] = (v2 - v3) * dg[..., 4]
    jac[..., :2, :] = np.einsum("ij,...jk->...ik", mass_matrix_inverse(params), dr)
    return jac


def solve_shifted(jac, shift, rhs):
    """Solve ``(I - shift * jac) z = rhs`` for Jacobians of this model.

    Memristor rows of the Jacobian only couple to (v2, v3) and to their own
    state, so the system reduces to a 2 x 2 Schur complement.  Batched over
    leading axes.
    """
    a = -shift * np.asarray(jac, dtype=float)
    idx = np.arange(2, N_STATE)
    diag = 1.0 + a[..., idx, idx]
    r = np.asarray(rhs, dtype=float)
    avx = a[..., :2, 2:]                       # voltage rows, x columns
    axv = a[..., 2:, :2] / diag[..., None]     # x rows, voltage columns, scaled
    rx = r[..., 2:] / diag
    s00 = 1.0 + a[..., 0, 0] - np.sum(avx[..., 0, :] * axv[..., :, 0], axis=-1)
    s01 = a[..., 0, 1] - np.sum(avx[..., 0, :] * axv[..., :, 1], axis=-1)
    s10 = a[..., 1, 0] - np.sum(avx[..., 1, :] * axv[..., :, 0], axis=-1)
    s11 = 1.0 + a[..., 1, 1] - np.sum(avx[..., 1, :] * axv[..., :, 1], axis=-1)
    b0 = r[..., 0] - np.sum(avx[..., 0, :] * rx, axis=-1)
    b1 = r[..., 1] - np.sum(avx[..., 1, :] * rx, axis=-1)
    det = s00 * s11 - s01 * s10
    z0 = (s11 * b0 - s01 * b1) / det
    z1 = (s00 * b1 - s10 * b0) / det
    zx = rx - axv[..., :, 0] * z0[..., None] - axv[..., :, 1] * z1[..., None]
    return np.concatenate([z0[..., None], z1[..., None], zx], axis=-1)
