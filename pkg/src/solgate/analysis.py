"""Critical points of the gate flow and their linear stability.

A critical point is classified by the signs of the real parts of the
Jacobian's eigenvalues.  Points of this model sit on continuous families
(memristor states that are free at equilibrium), so several eigenvalues
vanish and the Jacobian can be defective there; :func:`jordan_defect`
counts the nilpotent chains that a sign count alone cannot see.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .dynamics import Trajectory, integrate_ode
from .model import (N_STATE, REFERENCE_POINT, CircuitParams, GateSpec, State,
                    flow_jacobian, flow_vector)

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
X_BOX_SLACK = 1e-9
VOLTAGE_BOX = 5.0
REL_ZERO_TOL = 1e-6


class EigenError(RuntimeError):
    """The eigenvalue iteration did not converge."""


class CalibrationError(RuntimeError):
    """No orientation vector reproduces the reference behavior."""


# --- Jacobian and spectrum --------------------------------------------------

def jacobian(gate: GateSpec, params: CircuitParams, state: State) -> np.ndarray:
    """Analytic 7 x 7 Jacobian of the flow at ``state``."""
    return flow_jacobian(gate, params, state.vector(), state.v1)


def finite_difference_jacobian(fun, y, rel_step: float = 1e-6) -> np.ndarray:
    """Central differences with step ``rel_step * max(1, |y_j|)`` per column."""
    y = np.asarray(y, dtype=float)
    cols = []
    for j in range(len(y)):
        h = rel_step * max(1.0, abs(y[j]))
        e = np.zeros_like(y)
        e[j] = h
        cols.append((fun(y + e) - fun(y - e)) / (2 * h))
    return np.column_stack(cols)


def eigen_spectrum(matrix) -> np.ndarray:
    """Eigenvalues of a dense real matrix, sorted by real part (descending).

    Uses LAPACK's Hessenberg reduction followed by shifted QR iteration.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("eigen_spectrum needs a square matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    try:
        lam = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise EigenError(str(exc)) from exc
    lam = lam.astype(complex)
    order = np.lexsort((-lam.imag, -lam.real))
    return lam[order]


def default_zero_tol(eigenvalues, rel: float = REL_ZERO_TOL) -> float:
    re = np.real(np.asarray(eigenvalues))
    return rel * max(1.0, float(np.max(np.abs(re))) if re.size else 1.0)


def classify_signature(eigenvalues, zero_tol: float | None = None) -> str:
    """Sign string, stable block first: e.g. ``"--+0000"``."""
    re = np.real(np.asarray(eigenvalues))
    tol = default_zero_tol(re) if zero_tol is None else zero_tol
    if tol <= 0:
        raise ValueError("zero_tol must be positive")
    neg = int(np.sum(re < -tol))
    pos = int(np.sum(re > tol))
    return "-" * neg + "+" * pos + "0" * (len(re) - neg - pos)


def _rank(a, rtol=1e-10):
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def jordan_defect(matrix, zero_tol: float | None = None, rtol: float = 1e-10) -> int:
    """Algebraic minus geometric multiplicity of the zero-eigenvalue cluster.

    Each missing eigenvector is a direction of algebraic (linear-in-time)
    growth of the linearized flow even though its eigenvalue is zero.
    """
    a = np.asarray(matrix, dtype=float)
    lam = eigen_spectrum(a)
    tol = default_zero_tol(lam) if zero_tol is None else zero_tol
    n_zero = classify_signature(lam, tol).count("0")
    nullity = a.shape[0] - _rank(a, rtol)
    return max(0, n_zero - nullity)


def stable_unstable_ratio(eigenvalues, zero_tol: float | None = None):
    """``max |Re lambda_stable| / max Re lambda_unstable``; None without both."""
    re = np.real(np.asarray(eigenvalues))
    tol = default_zero_tol(re) if zero_tol is None else zero_tol
    stable, unstable = re[re < -tol], re[re > tol]
    if not stable.size or not unstable.size:
        return None
    return float(np.max(-stable) / np.max(unstable))


def zero_cluster_sensitivity(matrix, rel: float = 2.0**-52, trials: int = 32,
                             seed: int = 0) -> float:
    """Largest |Re lambda| of the zero-eigenvalue cluster under entrywise
    relative perturbations of size ``rel``.

    A defective zero eigenvalue splits like ``sqrt(rel)``, so this measures
    how large a spurious growth rate rounding alone can produce.
    """
    a = np.asarray(matrix, dtype=float)
    lam0 = eigen_spectrum(a)
    tol = default_zero_tol(lam0)
    n_zero = int(np.sum(np.abs(lam0.real) <= tol))
    if n_zero == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        lam = eigen_spectrum(a * (1.0 + rel * rng.standard_normal(a.shape)))
        small = np.sort(np.abs(lam.real))[:n_zero]
        worst = max(worst, float(small.max()))
    return worst


# --- critical points ----------------------------------------------------------

@dataclass
class CriticalPoint:
    state: State
    residual_norm: float
    eigenvalues: np.ndarray
    signature: str
    zero_tol: float
    jordan_defect: int = 0
    consistent: bool = False
    center_x: np.ndarray = field(default_factory=lambda: np.ones(5, dtype=bool))

    @property
    def n_unstable(self) -> int:
        """Exponentially plus algebraically unstable directions."""
        return self.signature.count("+") + self.jordan_defect

    @property
    def stable(self) -> bool:
        return self.n_unstable == 0

    @property
    def label(self) -> str:
        return "consistent" if self.consistent else "spurious"

    @property
    def attractiveness_ratio(self):
        return stable_unstable_ratio(self.eigenvalues, self.zero_tol)

    def vector(self) -> np.ndarray:
        return self.state.vector()

    def key(self) -> np.ndarray:
        """Voltages plus the memristor states that are not free at equilibrium."""
        y = self.vector()
        return np.concatenate([y[:2], np.where(self.center_x, 0.0, y[2:])])

    def distance(self, y) -> float:
        """Distance ignoring center-manifold memristor components."""
        y = np.asarray(y, dtype=float)
        d = np.abs(y[:2] - self.vector()[:2])
        dx = np.abs(y[2:] - self.vector()[2:])[~self.center_x]
        return float(max(d.max(), dx.max() if dx.size else 0.0))


def characterize(gate: GateSpec, params: CircuitParams, y, v1,
                 rel_zero_tol: float = REL_ZERO_TOL) -> CriticalPoint:
    """Spectrum, signature and logic label of the state ``y`` (assumed critical)."""
    y = np.asarray(y, dtype=float)
    jac = flow_jacobian(gate, params, y, v1)
    lam = eigen_spectrum(jac)
    tol = default_zero_tol(lam, rel_zero_tol)
    residual = float(np.max(np.abs(flow_vector(gate, params, y, v1))))
    diag = np.abs(np.diag(jac)[2:])
    return CriticalPoint(
        state=State.from_vector(v1, y),
        residual_norm=residual,
        eigenvalues=lam,
        signature=classify_signature(lam, tol),
        zero_tol=tol,
        jordan_defect=jordan_defect(jac, tol),
        consistent=gate.is_consistent(v1, y[0], y[1]),
        center_x=diag <= tol,
    )


def _in_box(y, slack=X_BOX_SLACK, vmax=VOLTAGE_BOX):
    y = np.asarray(y)
    return (np.all(np.abs(y[..., :2]) <= vmax, axis=-1)
            & np.all((y[..., 2:] >= -slack) & (y[..., 2:] <= 1 + slack), axis=-1))


def levenberg_marquardt(gate: GateSpec, params: CircuitParams, seeds, v1, max_iter: int = 200,
                        tol: float = RESIDUAL_TOL):
    """Damped Gauss-Newton on ``|F|^2 / 2`` for a batch of seeds.

    Voltage rows are weighted by the capacitance (i.e. solved as node
    currents) so both blocks of the residual have comparable scale; the
    memristor states are kept inside [0, 1] by projection.

    Returns
    -------
    y : (m, 7) final iterates
    residual : (m,) max-norm of the unweighted flow
    iterations : (m,) iterations used
    """
    y = np.array(seeds, dtype=float).reshape(-1, N_STATE)
    m = len(y)
    w = np.ones(N_STATE)
    w[:2] = params.capacitance

    def resid(z):
        return flow_vector(gate, params, z, v1)

    f = resid(y)
    cost = np.sum((w * f) ** 2, axis=1)
    mu = np.full(m, 1e-3)
    active = np.max(np.abs(f), axis=1) > tol
    iters = np.zeros(m, dtype=int)
    for _ in range(max_iter):
        if not active.any():
            break
        ia = np.nonzero(active)[0]
        ya, fa = y[ia], w * f[ia]
        ja = w[:, None] * flow_jacobian(gate, params, ya, v1)
        jt = np.swapaxes(ja, -1, -2)
        a = jt @ ja
        g = np.einsum("mij,mj->mi", jt, fa)
        d = np.einsum("mii->mi", a)
        damp = mu[ia, None] * (d + 1e-12 * d.max(axis=1, keepdims=True) + 1e-300)
        a_reg = a + damp[..., None] * np.eye(N_STATE)
        step = -np.linalg.solve(a_reg, g[..., None])[..., 0]
        trial = ya + step
        trial[:, 2:] = np.clip(trial[:, 2:], 0.0, 1.0)
        ft = resid(trial)
        ct = np.sum((w * ft) ** 2, axis=1)
        ok = np.isfinite(ct) & (ct < cost[ia])
        good = ia[ok]
        y[good], f[good], cost[good] = trial[ok], ft[ok], ct[ok]
        mu[good] = np.maximum(mu[good] / 3.0, 1e-12)
        mu[ia[~ok]] *= 4.0
        iters[ia] += 1
        done = (np.max(np.abs(f), axis=1) <= tol) | (mu > 1e12)
        active &= ~done
    return y, np.max(np.abs(f), axis=1), iters


def find_critical_point(gate: GateSpec, params: CircuitParams, seed_state: State,
                        max_iter: int = 200, diagnostics: dict | None = None):
    """Critical point reached from ``seed_state``, or None.

    ``diagnostics`` (if given) receives a ``status`` of ``"converged"``,
    ``"seed-outside-box"``, ``"no-convergence"`` or ``"out-of-box"``.
    """
    diag = {} if diagnostics is None else diagnostics
    seed = seed_state.vector()
    if not _in_box(seed):
        diag.update(status="seed-outside-box", seed=seed.tolist())
        log.info("seed %s lies outside the search box", seed)
        return None
    y, res, iters = levenberg_marquardt(gate, params, seed[None], seed_state.v1, max_iter)
    diag.update(iterations=int(iters[0]), residual=float(res[0]), state=y[0].tolist())
    if res[0] > RESIDUAL_TOL:
        diag["status"] = "no-convergence"
        return None
    if not _in_box(y[0]):
        diag["status"] = "out-of-box"
        log.info("critical point %s discarded: outside the box", y[0])
        return None
    diag["status"] = "converged"
    return characterize(gate, params, y[0], seed_state.v1)


def latin_hypercube_seeds(n: int, seed: int) -> np.ndarray:
    """``n`` seeds over [-5, 5]^2 x [0, 1]^5."""
    u = qmc.LatinHypercube(d=N_STATE, seed=np.random.default_rng(seed)).random(n)
    lo = np.array([-VOLTAGE_BOX] * 2 + [0.0] * 5)
    hi = np.array([VOLTAGE_BOX] * 2 + [1.0] * 5)
    return lo + u * (hi - lo)


def dedupe(points, tol: float = 1e-6):
    """Merge points whose keys (voltages and non-free memristor states) are
    within ``tol`` in the max-norm; result sorted lexicographically by state."""
    points = sorted(points, key=lambda cp: tuple(cp.vector()))
    if not points:
        return []
    keys = np.array([cp.key() for cp in points])
    tree = cKDTree(keys)
    drop = np.zeros(len(points), dtype=bool)
    for i in range(len(points)):
        if drop[i]:
            continue
        for j in tree.query_ball_point(keys[i], tol, p=np.inf):
            if j > i:
                drop[j] = True
    return [cp for cp, d in zip(points, drop) if not d]


def enumerate_critical_points(gate: GateSpec, params: CircuitParams, n_seeds: int, seed: int = 0,
                              v1: float | None = None, seeds=None, batch: int = 2048,
                              max_iter: int = 200):
    """Deduplicated critical points reached from Latin-hypercube seeds."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    v1 = gate.pinned_v1 if v1 is None else v1
    starts = latin_hypercube_seeds(n_seeds, seed) if seeds is None else np.atleast_2d(seeds)
    found = []
    for lo in range(0, len(starts), batch):
        y, res, _ = levenberg_marquardt(gate, params, starts[lo:lo + batch], v1, max_iter)
        for yi in y[(res <= RESIDUAL_TOL) & _in_box(y)]:
            found.append(characterize(gate, params, yi, v1))
    return dedupe(found)


# --- orientations and symmetry --------------------------------------------

def _calibration_run(gate, params, delta_v2=1e-2, t_end=1.0):
    y0 = REFERENCE_POINT.copy()
    y0[0] += delta_v2
    return integrate_ode(gate, params, State.from_vector(1.0, y0), t_end,
                         rel_tol=1e-7, abs_tol=1e-10, record_dt=1e-3)


def calibrate_orientations(params: CircuitParams | None = None, report: list | None = None,
                           t_end: float = 1.0):
    """AND orientation vectors consistent with the reference behavior.

    A candidate survives if (a) the reference point is an exact critical point
    for v1 = 1 V, (b) the run perturbed by 10 mV on v2 settles at
    (v2, v3) = (1, 1) V within 1 mV and (c) no memristor other than x2 and
    x4 moves by more than 1e-3 along that run.
    """
    params = CircuitParams() if params is None else params
    survivors = []
    for signs in itertools.product((1.0, -1.0), repeat=5):
        gate = GateSpec.make("AND", signs)
        entry = {"orientations": list(signs)}
        res = float(np.max(np.abs(flow_vector(gate, params, REFERENCE_POINT, 1.0))))
        entry["residual"] = res
        entry["critical"] = res <= 1e-12
        if entry["critical"]:
            traj = _calibration_run(gate, params, t_end=t_end)
            final = traj.states[-1]
            moved = np.max(np.abs(traj.x - traj.x[0]), axis=0)
            entry["final_voltages"] = final[:2].tolist()
            entry["max_x_change"] = moved.tolist()
            entry["reaches_logic"] = bool(np.all(np.abs(final[:2] - 1.0) <= 1e-3))
            entry["only_x2_x4_move"] = bool(np.all(moved[[0, 2, 4]] <= 1e-3))
            if entry["reaches_logic"] and entry["only_x2_x4_move"]:
                survivors.append(tuple(signs))
        entry["survivor"] = tuple(signs) in survivors
        if report is not None:
            report.append(entry)
    if not survivors:
        raise CalibrationError("no orientation vector reproduces the reference run")
    return survivors


def mirror_state(state: State) -> State:
    """Negate all terminal voltages; memristor states are unchanged."""
    return State(-state.v1, -state.v2, -state.v3, state.x.copy())


def mirror_trajectory(traj: Trajectory) -> Trajectory:
    states = traj.states.copy()
    states[:, :2] *= -1
    return Trajectory(traj.times.copy(), states, -traj.v1, dict(traj.metadata))


# --- linearization ----------------------------------------------------------

def linearized_trajectory(cp: CriticalPoint, state0: State, t, gate: GateSpec | None = None,
                          params: CircuitParams | None = None, jac=None,
                          max_condition: float = 1e8, info: dict | None = None) -> State:
    """Linear prediction ``x_cr + sum_i c_i v_i exp(lambda_i t)`` around ``cp``.

    Falls back to the matrix exponential when the eigenvector basis is
    defective or worse conditioned than ``max_condition``.
    """
    if jac is None:
        if gate is None or params is None:
            raise ValueError("need either jac or (gate, params)")
        jac = flow_jacobian(gate, params, cp.vector(), cp.state.v1)
    jac = np.asarray(jac, dtype=float)
    d0 = state0.vector() - cp.vector()
    lam, vec = np.linalg.eig(jac)
    cond = np.linalg.cond(vec)
    if np.isfinite(cond) and cond < max_condition:
        coef = np.linalg.solve(vec, d0.astype(complex))
        dy = np.real(vec @ (coef * np.exp(lam * t)))
        method = "modal"
    else:
        dy = scipy.linalg.expm(jac * t) @ d0
        method = "expm"
        log.debug("eigenbasis condition %.3g: using the matrix exponential", cond)
    if info is not None:
        info.update(method=method, condition=float(cond))
    return State.from_vector(state0.v1, cp.vector() + dy)


# --- instantons ---------------------------------------------------------------

@dataclass
class InstantonRecord:
    start: CriticalPoint
    end: CriticalPoint
    t_enter: float
    t_exit: float
    peak_v2: float
    peak_v3: float

    @property
    def window(self):
        return (self.t_enter, self.t_exit)


def flow_norms(gate: GateSpec, params: CircuitParams, traj: Trajectory) -> np.ndarray:
    return np.max(np.abs(flow_vector(gate, params, traj.states, traj.v1)), axis=1)


def detect_instanton(traj: Trajectory, critical_points, gate: GateSpec, params: CircuitParams,
                     plateau_fraction: float = 1e-4, match_tol: float = 0.05,
                     diagnostics: dict | None = None):
    """Instanton between two critical points along ``traj``, or None.

    Samples whose flow norm is below ``plateau_fraction`` of the peak are
    plateaus.  The end must be a plateau; the start is the leading plateau,
    or the initial sample when the run begins already moving (a perturbed
    critical point).  Both are matched to the nearest of
    ``critical_points``; a record is returned when they differ and the
    number of unstable directions drops.
    """
    diag = {} if diagnostics is None else diagnostics
    points = list(critical_points)
    norms = flow_norms(gate, params, traj)
    peak = float(norms.max())
    if peak == 0.0:
        diag["status"] = "stationary"
        return None
    thr = plateau_fraction * peak
    moving = norms > thr
    if moving[-1]:
        diag["status"] = "ends-mid-transition"
        log.info("trajectory ends mid-transition (flow %.3g > %.3g)", norms[-1], thr)
        return None
    if not moving.any():
        diag["status"] = "no-transition"
        return None
    idx = np.nonzero(moving)[0]
    i_enter, i_exit = idx[0], idx[-1]
    y_start = traj.states[0]
    y_end = traj.states[-1]
    if not points:
        diag["status"] = "no-candidates"
        return None
    start = min(points, key=lambda cp: cp.distance(y_start))
    end = min(points, key=lambda cp: cp.distance(y_end))
    diag.update(start_distance=start.distance(y_start), end_distance=end.distance(y_end))
    if start.distance(y_start) > match_tol or end.distance(y_end) > match_tol:
        diag["status"] = "unmatched"
        return None
    if start is end:
        diag["status"] = "same-point"
        return None
    if not start.n_unstable > end.n_unstable:
        diag["status"] = "no-reduction"
        return None
    win = traj.states[i_enter:i_exit + 1]
    k2, k3 = np.argmax(np.abs(win[:, 0])), np.argmax(np.abs(win[:, 1]))
    diag["status"] = "found"
    return InstantonRecord(start, end, float(traj.times[i_enter]), float(traj.times[i_exit]),
                           float(win[k2, 0]), float(win[k3, 1]))
