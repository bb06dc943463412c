"""Time integration of the gate flow: deterministic and stochastic."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45

from .model import (N_STATE, CircuitParams, GateSpec, ModelError, State, flow_jacobian,
                    flow_vector, solve_shifted)

ROS2_GAMMA = 1.0 + 1.0 / np.sqrt(2.0)
X_SLICE = slice(2, N_STATE)


class IntegrationError(RuntimeError):
    """Step-size underflow, non-finite state or a failed implicit solve."""


class NotSettledError(RuntimeError):
    """The trajectory has not reached a stationary state at its last sample."""


@dataclass
class Trajectory:
    """Recorded solution: ``states[i]`` is the 7-vector at ``times[i]``."""

    times: np.ndarray
    states: np.ndarray
    v1: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float).reshape(-1, N_STATE)
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def v2(self):
        return self.states[:, 0]

    @property
    def v3(self):
        return self.states[:, 1]

    @property
    def x(self):
        return self.states[:, X_SLICE]

    def state(self, i: int) -> State:
        return State.from_vector(self.v1, self.states[i])

    @property
    def final(self) -> State:
        return self.state(-1)

    def truncated(self, t_max: float) -> "Trajectory":
        keep = self.times <= t_max
        return Trajectory(self.times[keep], self.states[keep], self.v1, dict(self.metadata))


@dataclass(frozen=True)
class NoiseConfig:
    """White-noise intensity ``gamma`` (1/s) on the memristor states."""

    gamma: float
    dt: float = 1e-6
    seed: int = 0
    n_runs: int = 1
    project: bool = True

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    """Independent stream for one ensemble member, fixed by (seed, run_index)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(run_index),)))


def _record_grid(t0, t_end, record_dt):
    n = int(np.floor((t_end - t0) / record_dt + 1e-9))
    grid = t0 + record_dt * np.arange(n + 1)
    if t_end - grid[-1] > 1e-12 * max(1.0, abs(t_end)):
        grid = np.append(grid, t_end)
    else:
        grid[-1] = t_end
    return grid


def _check_finite(y, t):
    if not np.all(np.isfinite(y)):
        raise IntegrationError(f"non-finite state at t = {t:.6g}")


def _hermite(t0, y0, f0, t1, y1, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _solve_rk45(rhs, y0, t0, t_end, grid, rel_tol, abs_tol, max_steps):
    solver = RK45(lambda t, y: rhs(y), t0, y0, t_end, rtol=rel_tol, atol=abs_tol)
    out = np.empty((len(grid), len(y0)))
    out[0] = y0
    k = 1
    steps = 0
    while solver.status == "running":
        msg = solver.step()
        steps += 1
        if solver.status == "failed":
            raise IntegrationError(f"explicit integrator failed at t = {solver.t:.6g}: {msg}")
        _check_finite(solver.y, solver.t)
        if steps > max_steps:
            raise IntegrationError(f"step budget of {max_steps} exhausted at t = {solver.t:.6g}")
        if k < len(grid) and grid[k] <= solver.t:
            dense = solver.dense_output()
            while k < len(grid) and grid[k] <= solver.t:
                out[k] = solver.y if grid[k] == solver.t else dense(grid[k])
                k += 1
    out[k:] = solver.y
    return out, {"steps": steps, "nfev": solver.nfev}


def _solve_ros2(rhs, jac, y0, t0, t_end, grid, rel_tol, abs_tol, dt, max_steps):
    """Two-stage L-stable Rosenbrock scheme, fixed step if ``dt`` is given."""
    eye = np.eye(len(y0))
    out = np.empty((len(grid), len(y0)))
    out[0] = y0
    k = 1
    t, y = t0, np.array(y0, dtype=float)
    f = rhs(y)
    adaptive = dt is None
    h = (dt if dt is not None else min(1e-7, (t_end - t0) / 10))
    steps = rejected = 0
    while t < t_end:
        if steps > max_steps:
            raise IntegrationError(f"step budget of {max_steps} exhausted at t = {t:.6g}")
        h = min(h, t_end - t)
        lu = np.linalg.inv(eye - ROS2_GAMMA * h * jac(y))
        k1 = lu @ f
        k2 = lu @ (rhs(y + h * k1) - 2.0 * k1)
        y_new = y + h * (1.5 * k1 + 0.5 * k2)
        if adaptive:
            scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            err = np.sqrt(np.mean((0.5 * h * (k1 + k2) / scale) ** 2))
            if not np.isfinite(err) or err > 1.0:
                rejected += 1
                h *= max(0.2, 0.8 / np.sqrt(err)) if np.isfinite(err) else 0.2
                if h < 1e-14 * max(1.0, abs(t)):
                    raise IntegrationError(f"step size underflow at t = {t:.6g}")
                continue
        f_new = rhs(y_new)
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
            if adaptive:
                rejected += 1
                h *= 0.2
                continue
            raise IntegrationError(f"non-finite state at t = {t + h:.6g}")
        t_new = t + h
        while k < len(grid) and grid[k] <= t_new + 1e-15 * max(1.0, t_new):
            out[k] = _hermite(t, y, f, t_new, y_new, f_new, grid[k])
            k += 1
        t, y, f = t_new, y_new, f_new
        steps += 1
        if adaptive:
            h *= min(5.0, max(0.2, 0.8 / np.sqrt(max(err, 1e-12))))
    out[k:] = y
    return out, {"steps": steps, "rejected": rejected, "nfev": 2 * steps}


def solve_ode(rhs, y0, t_end, *, jac=None, method="rk45", rel_tol=1e-8, abs_tol=1e-12,
              record_dt=None, dt=None, t_start=0.0, max_steps=5_000_000):
    """Integrate ``y' = rhs(y)`` and sample the solution on a uniform grid.

    Parameters
    ----------
    rhs, jac : callable
        Autonomous right-hand side and its Jacobian (``jac`` is needed for
        the Rosenbrock method only).
    method : {"rk45", "rosenbrock"}
        ``"rk45"`` is the adaptive Dormand-Prince embedded pair;
        ``"rosenbrock"`` is a linearly-implicit second-order scheme, run
        at fixed step ``dt`` or adaptively when ``dt`` is None.
    record_dt : float, optional
        Sampling interval of the returned grid (default ``t_end / 1000``).

    Returns
    -------
    times, states, info
    """
    if not 1e-12 <= rel_tol <= 1e-3 or not 1e-14 <= abs_tol <= 1e-3:
        raise ValueError("tolerances must lie in [1e-12, 1e-3] (abs_tol down to 1e-14)")
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    y0 = np.asarray(y0, dtype=float)
    _check_finite(y0, t_start)
    record_dt = (t_end - t_start) / 1000 if record_dt is None else record_dt
    grid = _record_grid(t_start, t_end, record_dt)
    if method == "rk45":
        states, info = _solve_rk45(rhs, y0, t_start, t_end, grid, rel_tol, abs_tol, max_steps)
    elif method == "rosenbrock":
        if jac is None:
            raise ValueError("the Rosenbrock method needs a Jacobian")
        states, info = _solve_ros2(rhs, jac, y0, t_start, t_end, grid, rel_tol, abs_tol, dt,
                                   max_steps)
    else:
        raise ValueError(f"unknown method {method!r}")
    return grid, states, info


def _guarded(fun):
    # Trial stages outside the conductance domain become NaN, which both
    # integrators treat as a rejected step.
    def wrapped(y):
        try:
            return fun(y)
        except ModelError:
            return np.full(np.shape(y), np.nan)
    return wrapped


def integrate_ode(gate: GateSpec, params: CircuitParams, state0: State, t_end: float,
                  rel_tol: float = 1e-8, abs_tol: float = 1e-12, method: str = "rk45",
                  record_dt: float = 1e-4, dt: float | None = None,
                  t_start: float = 0.0) -> Trajectory:
    """Deterministic trajectory of the gate from ``state0`` over ``[t_start, t_end]``."""
    v1 = state0.v1
    times, states, info = solve_ode(
        _guarded(lambda y: flow_vector(gate, params, y, v1)),
        state0.vector(), t_end,
        jac=_guarded(lambda y: flow_jacobian(gate, params, y, v1)),
        method=method, rel_tol=rel_tol, abs_tol=abs_tol, record_dt=record_dt, dt=dt,
        t_start=t_start,
    )
    meta = {"integrator": method, "rel_tol": rel_tol, "abs_tol": abs_tol, "dt": dt,
            "record_dt": record_dt, "gate": gate.kind, **info}
    return Trajectory(times, states, v1, meta)


def max_flow(gate: GateSpec, params: CircuitParams, traj: Trajectory) -> float:
    """``max |F|`` at the last recorded state."""
    return float(np.max(np.abs(flow_vector(gate, params, traj.states[-1], traj.v1))))


def integrate_until_settled(gate: GateSpec, params: CircuitParams, state0: State, t_end: float,
                            settle_tol: float = 1e-3, max_t_end: float = 1e4,
                            max_samples: int = 4000, settled=None, **kwargs) -> Trajectory:
    """Integrate over ``[0, t_end]``, then keep doubling the horizon until the
    final state is stationary (``max |F| <= settle_tol``).

    Continuation segments are recorded on at most ``max_samples`` points
    each.  ``settled(traj)`` may replace the stationarity test.

    Raises
    ------
    NotSettledError
        If the horizon would exceed ``max_t_end``.
    """
    check = settled or (lambda tr: max_flow(gate, params, tr) <= settle_tol)
    traj = integrate_ode(gate, params, state0, t_end, **kwargs)
    record_dt = kwargs.pop("record_dt", 1e-4)
    times, states = [traj.times], [traj.states]
    t0 = t_end
    while not check(traj):
        t1 = 2.0 * t0
        if t1 > max_t_end:
            raise NotSettledError(
                f"flow norm {max_flow(gate, params, traj):.3g} at t = {t0:.6g} "
                f"(horizon limit {max_t_end:g})")
        seg = integrate_ode(gate, params, traj.final, t1, t_start=t0,
                            record_dt=max(record_dt, (t1 - t0) / max_samples), **kwargs)
        times.append(seg.times[1:])
        states.append(seg.states[1:])
        traj = Trajectory(np.concatenate(times), np.concatenate(states), state0.v1,
                          dict(seg.metadata))
        t0 = t1
    traj.metadata.update(t_end=t0, settle_tol=settle_tol)
    return traj


# --- stochastic -----------------------------------------------------------

_NOISE_BLOCK = 2048


class _NoiseSource:
    """Per-run normal increments, drawn in blocks from independent streams.

    Blocks are read sequentially from each run's generator, so the values
    do not depend on the block size.
    """

    def __init__(self, rngs, width):
        self.rngs = rngs
        self.width = width
        self.buf = None
        self.pos = _NOISE_BLOCK

    def next(self):
        if self.pos == _NOISE_BLOCK:
            self.buf = np.stack([g.standard_normal((_NOISE_BLOCK, self.width)) for g in self.rngs],
                                axis=1)
            self.pos = 0
        z = self.buf[self.pos]
        self.pos += 1
        return z


def _dense_shifted_solve(jac, shift, rhs):
    eye = np.eye(rhs.shape[-1])
    return np.linalg.solve(eye - shift * jac, rhs[..., None])[..., 0]


def solve_sde(drift, drift_jac, y0, t_end, dt, noise_scale, rngs, *, record_dt=None,
              lower=None, upper=None, newton_tol=1e-10, max_newton=12,
              shifted_solve=_dense_shifted_solve):
    """Drift-implicit Euler-Maruyama for a batch of independent runs.

    Each step solves ``z = y + dt * drift(z)`` by Newton's method and then adds
    ``noise_scale * sqrt(dt) * N(0, 1)`` componentwise.  Components with zero
    ``noise_scale`` receive no noise.  If ``lower``/``upper`` are given the
    state is clipped onto the box after each step.

    Parameters
    ----------
    drift, drift_jac : callable
        Batched drift ``(m, d) -> (m, d)`` and Jacobian ``(m, d) -> (m, d, d)``.
    y0 : array, shape (m, d)
    noise_scale : array, shape (d,)
        Square root of the white-noise intensity per component.
    rngs : sequence of numpy Generators, one per run.
    shifted_solve : callable
        ``(jac, dt, r) -> z`` solving ``(I - dt jac) z = r``; the default is a
        dense batched solve.

    Returns
    -------
    times : (n,)
    states : (m, n, d)
    clamp_fraction : (m,) fraction of noisy component updates that were clipped.
    """
    y = np.array(y0, dtype=float)
    m, d = y.shape
    if len(rngs) != m:
        raise ValueError("need one generator per run")
    noise_scale = np.broadcast_to(np.asarray(noise_scale, dtype=float), (d,))
    noisy = np.nonzero(noise_scale > 0)[0]
    record_dt = (t_end / 1000) if record_dt is None else record_dt
    stride = max(1, int(round(record_dt / dt)))
    n_steps = int(round(t_end / dt))
    n_rec = n_steps // stride + 1
    times = np.arange(n_rec) * stride * dt
    out = np.empty((m, n_rec, d))
    out[:, 0] = y
    source = _NoiseSource(rngs, len(noisy)) if len(noisy) else None
    amp = noise_scale[noisy] * np.sqrt(dt)
    clamped = np.zeros(m)
    for step in range(1, n_steps + 1):
        # simplified Newton: Jacobian evaluated once per step at the old state
        jac = drift_jac(y)
        z = y + shifted_solve(jac, dt, dt * drift(y))
        # convergence is judged per run so that a run's arithmetic never
        # depends on which other runs share its batch
        active = np.arange(m)
        for _ in range(max_newton):
            za = z[active]
            if not np.all(np.isfinite(za)):
                raise IntegrationError(f"non-finite drift solve at t = {step * dt:.6g}")
            delta = shifted_solve(jac[active], dt, za - y[active] - dt * drift(za))
            za -= delta
            z[active] = za
            done = np.max(np.abs(delta), axis=1) <= newton_tol * (1.0 + np.max(np.abs(za), axis=1))
            active = active[~done]
            if not active.size:
                break
        else:
            raise IntegrationError(
                f"drift solve did not converge at t = {step * dt:.6g}; reduce dt")
        if source is not None:
            z[:, noisy] += amp * source.next()
        if lower is not None or upper is not None:
            clipped = np.clip(z, lower, upper)
            clamped += np.count_nonzero(clipped[:, noisy] != z[:, noisy], axis=1)
            z = clipped
        y = z
        if step % stride == 0:
            out[:, step // stride] = y
    total = max(1, n_steps * len(noisy))
    return times, out, clamped / total


@dataclass
class Ensemble:
    """Stochastic runs sharing one time grid; ``states`` is (runs, times, 7)."""

    times: np.ndarray
    states: np.ndarray
    v1: float
    clamp_fraction: np.ndarray
    metadata: dict = field(default_factory=dict)

    def run(self, i: int) -> Trajectory:
        meta = dict(self.metadata, run_index=i, clamp_fraction=float(self.clamp_fraction[i]))
        return Trajectory(self.times, self.states[i], self.v1, meta)


def integrate_sde_ensemble(gate: GateSpec, params: CircuitParams, state0: State, t_end: float,
                           noise: NoiseConfig, record_dt: float = 1e-4,
                           run_indices=None) -> Ensemble:
    """``noise.n_runs`` independent runs of the noisy gate, advanced together."""
    indices = list(range(noise.n_runs)) if run_indices is None else list(run_indices)
    v1 = state0.v1
    y0 = np.tile(state0.vector(), (len(indices), 1))
    scale = np.zeros(N_STATE)
    scale[X_SLICE] = np.sqrt(noise.gamma)
    lower = upper = None
    if noise.project:
        lower = np.full(N_STATE, -np.inf)
        upper = np.full(N_STATE, np.inf)
        lower[X_SLICE], upper[X_SLICE] = 0.0, 1.0
    times, states, clamp = solve_sde(
        lambda y: flow_vector(gate, params, y, v1),
        lambda y: flow_jacobian(gate, params, y, v1),
        y0, t_end, noise.dt, scale, [run_rng(noise.seed, i) for i in indices],
        record_dt=record_dt, lower=lower, upper=upper, shifted_solve=solve_shifted,
    )
    meta = {"integrator": "drift-implicit Euler-Maruyama", "dt": noise.dt, "gamma": noise.gamma,
            "seed": noise.seed, "project": noise.project, "gate": gate.kind,
            "run_indices": indices}
    return Ensemble(times, states, v1, clamp, meta)


def integrate_sde(gate: GateSpec, params: CircuitParams, state0: State, t_end: float,
                  noise: NoiseConfig, record_dt: float = 1e-4, run_index: int = 0) -> Trajectory:
    """Single stochastic trajectory (run ``run_index`` of the seeded ensemble)."""
    ens = integrate_sde_ensemble(gate, params, state0, t_end, noise, record_dt, [run_index])
    traj = ens.run(0)
    traj.metadata["run_index"] = run_index
    return traj


def equilibrium_time(traj: Trajectory, band_fraction: float = 0.01, v_floor: float = 0.01,
                     gate: GateSpec | None = None, params: CircuitParams | None = None,
                     flow_tol: float = 1e-3) -> float:
    """Last recorded time at which v2 or v3 lies outside the settling band.

    The band is ``band_fraction * max(|v(t_end)|, v_floor)`` around the final
    value.  When ``gate`` and ``params`` are given, the final state must also
    be stationary (``max |F| <= flow_tol``).
    """
    if gate is not None and params is not None:
        f = flow_vector(gate, params, traj.states[-1], traj.v1)
        if np.max(np.abs(f)) > flow_tol:
            raise NotSettledError(
                f"flow norm {np.max(np.abs(f)):.3g} at t = {traj.times[-1]:.6g}")
    v = traj.states[:, :2]
    final = v[-1]
    band = band_fraction * np.maximum(np.abs(final), v_floor)
    outside = np.any(np.abs(v - final) > band, axis=1)
    if not outside.any():
        return 0.0
    return float(traj.times[np.nonzero(outside)[0][-1]])
