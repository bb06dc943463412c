"""Scenario runners for the gate experiments, and the noise-to-temperature map."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import (CriticalPoint, InstantonRecord, characterize, detect_instanton,
                       find_critical_point, finite_difference_jacobian, eigen_spectrum,
                       stable_unstable_ratio, zero_cluster_sensitivity)
from .dynamics import (IntegrationError, NoiseConfig, NotSettledError, Trajectory,
                       equilibrium_time, integrate_sde_ensemble, integrate_until_settled,
                       max_flow)
from .model import (REFERENCE_POINT, CircuitParams, GateSpec, State, flow_jacobian,
                    flow_vector)

log = logging.getLogger(__name__)

REFERENCE_RATIO = 0.01
PERTURBATION_DELTAS = {"AND": (1e-2, 1e-3, 1e-4), "OR": (1e-2, 5e-3, 5e-4)}
SWEEP_RATIOS = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 0.3, 0.6, 0.9)
NOISE_GAMMAS = (0.01, 1.0, 100.0, 400.0)


# --- temperature ------------------------------------------------------------

@dataclass(frozen=True)
class MaterialModel:
    """Arrhenius vacancy diffusion in the oxide (cgs units, eV)."""

    d0: float = 1e-3
    e_activation: float = 0.5
    length: float = 1e-5
    k_boltzmann: float = 8.617e-5

    def __post_init__(self):
        for name in ("d0", "e_activation", "length", "k_boltzmann"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def gamma_to_temperature(gamma: float, material: MaterialModel | None = None) -> float:
    """Temperature (K) at which vacancy diffusion produces noise intensity ``gamma``.

    ``D = gamma L^2 / 2`` and ``D = D0 exp(-E / (k_B T))``.
    """
    m = MaterialModel() if material is None else material
    d = gamma * m.length**2 / 2.0
    if not 0.0 < d < m.d0:
        raise ValueError(f"diffusion {d:.3g} cm^2/s outside (0, D0 = {m.d0:g})")
    return m.e_activation / (m.k_boltzmann * math.log(m.d0 / d))


# --- instanton scenario -------------------------------------------------------

def initial_state(gate: GateSpec, delta_v2: float, polarity: str = "logical") -> State:
    """Critical point ``{0, 0, 1, 1, 0.75, 1, 1}`` with v2 nudged by ``delta_v2``.

    With ``polarity="logical"`` the nudge points toward the gate's logic-high
    side (``+delta`` for AND, ``-delta`` for OR, the mirror image); with
    ``"raw"`` it is added as given.
    """
    if polarity not in ("logical", "raw"):
        raise ValueError(f"unknown polarity {polarity!r}")
    y = REFERENCE_POINT.copy()
    sign = 1.0 if polarity == "raw" else np.sign(gate.pinned_v1)
    y[0] += sign * delta_v2
    return State.from_vector(gate.pinned_v1, y)


@dataclass
class ScenarioResult:
    trajectory: Trajectory
    start: CriticalPoint
    end: CriticalPoint | None
    instanton: InstantonRecord | None
    report: dict = field(default_factory=dict)


def spectrum_report(gate: GateSpec, params: CircuitParams, cp: CriticalPoint) -> dict:
    """Magnitudes behind a signature, including rounding-level diagnostics."""
    jac = flow_jacobian(gate, params, cp.vector(), cp.state.v1)
    v1 = cp.state.v1
    fd = finite_difference_jacobian(lambda y: flow_vector(gate, params, y, v1), cp.vector())
    lam_fd = eigen_spectrum(fd)
    re = cp.eigenvalues.real
    stable = re[re < -cp.zero_tol]
    return {
        "signature": cp.signature,
        "jordan_defect": cp.jordan_defect,
        "unstable_directions": cp.n_unstable,
        "zero_tol": cp.zero_tol,
        "max_abs_stable": float(np.max(-stable)) if stable.size else None,
        "max_unstable": float(re.max()) if re.max() > cp.zero_tol else None,
        "attractiveness_ratio": cp.attractiveness_ratio,
        "rounding_split": zero_cluster_sensitivity(jac),
        "finite_difference_eigenvalues": lam_fd,
        "finite_difference_ratio": stable_unstable_ratio(lam_fd),
    }


def run_instanton_scenario(gate: GateSpec, delta_v2: float, params: CircuitParams | None = None,
                           *, polarity: str = "logical", t_end: float = 1.0,
                           method: str = "rk45", rel_tol: float = 1e-8, abs_tol: float = 1e-12,
                           record_dt: float = 1e-4, settle_tol: float = 1e-3,
                           max_t_end: float = 1e4) -> ScenarioResult:
    """Perturb the critical point on v2 and follow the gate to equilibrium.

    Raises
    ------
    NotSettledError
        If no stationary state is reached before ``max_t_end``.
    """
    params = CircuitParams() if params is None else params
    state0 = initial_state(gate, delta_v2, polarity)
    traj = integrate_until_settled(gate, params, state0, t_end, settle_tol=settle_tol,
                                   max_t_end=max_t_end, method=method, rel_tol=rel_tol,
                                   abs_tol=abs_tol, record_dt=record_dt)
    start = characterize(gate, params, REFERENCE_POINT, gate.pinned_v1)
    diag: dict = {}
    end = find_critical_point(gate, params, traj.final, diagnostics=diag)
    candidates = [start] + ([end] if end is not None else [])
    inst_diag: dict = {}
    record = detect_instanton(traj, candidates, gate, params, diagnostics=inst_diag)
    report = {
        "gate": gate.kind,
        "delta_v2": delta_v2,
        "polarity": polarity,
        "v1": gate.pinned_v1,
        "t_end": float(traj.times[-1]),
        "final_state": traj.states[-1].tolist(),
        "final_flow_norm": max_flow(gate, params, traj),
        "start": spectrum_report(gate, params, start),
        "end": spectrum_report(gate, params, end) if end is not None else None,
        "end_search": diag.get("status"),
        "instanton": inst_diag.get("status"),
    }
    if record is not None:
        report["window"] = list(record.window)
        report["peak_voltages"] = [record.peak_v2, record.peak_v3]
    return ScenarioResult(traj, start, end, record, report)


# --- threshold mechanism ----------------------------------------------------

@dataclass
class ThresholdResult:
    times: np.ndarray
    v3: np.ndarray
    x4: np.ndarray
    t_exit: float | None
    t_move: float | None
    max_dx4_before_exit: float
    report: dict = field(default_factory=dict)

    @property
    def ordered(self) -> bool:
        """x4 does not move before v3 leaves the logic interval."""
        if self.t_move is None:
            return True
        return self.t_exit is not None and self.t_move >= self.t_exit


def _first_time(times, mask):
    idx = np.nonzero(mask)[0]
    return float(times[idx[0]]) if idx.size else None


def run_threshold_scenario(params: CircuitParams | None = None, delta_v2: float = 1e-2,
                           t_end: float = 0.05, record_dt: float = 1e-6,
                           logic_level: float = 1.0, move_tol: float = 1e-3,
                           **kwargs) -> ThresholdResult:
    """Times at which v3 leaves ``[-1, 1]`` V and at which x4 starts to move (AND)."""
    params = CircuitParams() if params is None else params
    gate = GateSpec.make("AND")
    traj = integrate_until_settled(gate, params, initial_state(gate, delta_v2), t_end,
                                   record_dt=record_dt, max_t_end=t_end, settled=lambda tr: True,
                                   **kwargs)
    v3, x4 = traj.v3, traj.x[:, 3]
    t_exit = _first_time(traj.times, np.abs(v3) > logic_level)
    t_move = _first_time(traj.times, np.abs(x4 - x4[0]) > move_tol)
    before = traj.times < t_exit if t_exit is not None else np.ones(len(traj), bool)
    dx = float(np.max(np.abs(x4[before] - x4[0]))) if before.any() else 0.0
    res = ThresholdResult(traj.times, v3, x4, t_exit, t_move, dx)
    res.report = {"delta_v2": delta_v2, "t_exit": t_exit, "t_move": t_move,
                  "max_dx4_before_exit": dx, "ordered": res.ordered}
    if not res.ordered:
        log.warning("x4 moved at %s before v3 left the logic interval at %s", t_move, t_exit)
    return res


# --- memory sweep -----------------------------------------------------------

@dataclass
class SweepRow:
    ratio: float
    equilibrium_time: float | None
    status: str
    t_end: float | None = None
    final_voltages: tuple | None = None


def sweep_params(params: CircuitParams, ratio: float, resistance_mode: str) -> CircuitParams:
    """Parameters at ``R_on / R_off = ratio`` with R_on held fixed.

    ``"track"`` also sets the load resistance R to R_off so that the
    reference state stays a critical point; ``"fixed"`` keeps R.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    p = params.with_ratio(ratio)
    if resistance_mode == "track":
        return CircuitParams(**{**p.to_dict(), "resistance": p.r_off})
    if resistance_mode == "fixed":
        return p
    raise ValueError(f"unknown resistance mode {resistance_mode!r}")


def _settled_for_band(gate, params, settle_tol):
    # stationary, and the last out-of-band time is well inside the horizon
    def check(tr):
        if max_flow(gate, params, tr) > settle_tol:
            return False
        return equilibrium_time(tr) <= 0.5 * tr.times[-1]
    return check


def equilibrium_scenario(params: CircuitParams, delta_v2: float = 1e-2, t_end: float = 0.5,
                         method: str = "rosenbrock", rel_tol: float = 1e-8,
                         abs_tol: float = 1e-12, settle_tol: float = 1e-3,
                         max_t_end: float = 1e4, record_dt: float = 1e-5):
    """Equilibrium time of the perturbed AND run, and its trajectory."""
    gate = GateSpec.make("AND")
    traj = integrate_until_settled(gate, params, initial_state(gate, delta_v2), t_end,
                                   settled=_settled_for_band(gate, params, settle_tol),
                                   max_t_end=max_t_end, method=method, rel_tol=rel_tol,
                                   abs_tol=abs_tol, record_dt=record_dt)
    return equilibrium_time(traj, gate=gate, params=params, flow_tol=settle_tol), traj


def sweep_memory_ratio(ratios=SWEEP_RATIOS, params: CircuitParams | None = None,
                       resistance_mode: str = "track", **kwargs) -> list[SweepRow]:
    """Equilibrium time of the perturbed AND run for each memory ratio.

    Runs that diverge or never settle are kept as rows with a status.
    """
    params = CircuitParams() if params is None else params
    rows = []
    for ratio in sorted(ratios):
        p = sweep_params(params, ratio, resistance_mode)
        try:
            t_eq, traj = equilibrium_scenario(p, **kwargs)
        except IntegrationError as exc:
            log.info("ratio %g diverged: %s", ratio, exc)
            rows.append(SweepRow(ratio, None, "diverged"))
            continue
        except NotSettledError as exc:
            log.info("ratio %g did not settle: %s", ratio, exc)
            rows.append(SweepRow(ratio, None, "not-settled"))
            continue
        rows.append(SweepRow(ratio, t_eq, "ok", float(traj.times[-1]),
                             tuple(traj.states[-1, :2].tolist())))
    return rows


# --- noise ensembles ----------------------------------------------------------

@dataclass
class EnsembleStats:
    times: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_runs: int
    clamp_fraction: float
    final: np.ndarray
    gamma: float
    seed: int
    horizon: float

    @property
    def final_mean(self) -> np.ndarray:
        return self.final.mean(axis=0)

    @property
    def peak_std_time(self) -> float:
        return float(self.times[np.argmax(self.std.max(axis=1))])


_HORIZON_CACHE: dict = {}


def noiseless_horizon(params: CircuitParams | None = None, **kwargs) -> float:
    """Equilibrium time of the noiseless reference run (cached per parameter set)."""
    params = CircuitParams() if params is None else params
    key = (params, tuple(sorted(kwargs.items())))
    if key not in _HORIZON_CACHE:
        _HORIZON_CACHE[key] = equilibrium_scenario(params, **kwargs)[0]
    return _HORIZON_CACHE[key]


def run_noise_ensemble(gamma: float, n_runs: int = 100, seed: int = 0,
                       params: CircuitParams | None = None, dt: float = 1e-6,
                       horizon: float | None = None, record_dt: float = 1e-4,
                       delta_v2: float = 1e-2, project: bool = True) -> EnsembleStats:
    """Mean and spread of v2, v3 over ``n_runs`` noisy AND runs.

    The horizon defaults to the noiseless equilibrium time.
    """
    params = CircuitParams() if params is None else params
    if not math.isclose(params.memory_ratio, REFERENCE_RATIO, rel_tol=1e-12):
        raise ValueError(f"noise ensembles use R_on/R_off = {REFERENCE_RATIO}")
    horizon = noiseless_horizon(params) if horizon is None else horizon
    gate = GateSpec.make("AND")
    noise = NoiseConfig(gamma, dt=dt, seed=seed, n_runs=n_runs, project=project)
    ens = integrate_sde_ensemble(gate, params, initial_state(gate, delta_v2), horizon, noise,
                                 record_dt=record_dt)
    v = ens.states[:, :, :2]
    # shifted data: identical runs give an exactly zero spread
    std = (v - v[:1]).std(axis=0)
    return EnsembleStats(ens.times, v.mean(axis=0), std, n_runs,
                         float(ens.clamp_fraction.mean()), v[:, -1].copy(), gamma, seed,
                         horizon)
