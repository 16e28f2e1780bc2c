"""Goal-dynamics SDE: drift/diffusion, Euler-Maruyama simulation, and
exact per-step transition densities.

The SDE is dx = (a*sqrt(x) - sigma2*x - u) ds + (sigma1 - sigma2*x) dW,
discretized as x_{j+1} = x_j + mu_j*dt + sigma_j*w_j*sqrt(dt) with one
standard-normal draw per step. States are clamped at 0 (absorb-and-continue)
because sqrt(x) is undefined below 0; clamp events are recorded per step.

Noise is counter-based: the draw for (seed, path_index, step_index) is a
pure function of those three integers (SplitMix64-style bit mixing feeding
a Box-Muller transform), so per-path streams are bit-reproducible and
independent of batch layout, chunking, and thread count.
"""

from __future__ import annotations

import concurrent.futures
import math
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import ModelParams, State

PolicyFn = Callable[[float, np.ndarray], np.ndarray | float]

STEP_TOL = 1e-9

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 2.0 ** -53


class DegenerateDensityError(ValueError):
    """Transition density requested where the diffusion vanishes."""


class ClampedPathError(ValueError):
    """Path density requested for a trajectory that hit the x = 0 clamp."""


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def step_normals(seed: int, first_path: int, n_paths: int, step: int) -> np.ndarray:
    """Standard-normal draws for paths [first_path, first_path + n_paths) at one step.

    Pure function of (seed, path_index, step_index); random access in both
    path and step, which is what makes chunked/threaded simulation
    bit-stable.
    """
    mask = 0xFFFFFFFFFFFFFFFF
    paths = np.arange(first_path, first_path + n_paths, dtype=np.uint64)
    base = _mix64(np.uint64(seed & mask) + _GOLDEN * (paths + np.uint64(1)))
    # Scalar offsets wrap in Python int space; numpy scalar uint64 multiplies
    # would emit spurious overflow warnings.
    off_a = np.uint64((0x9E3779B97F4A7C15 * (2 * step + 1)) & mask)
    off_b = np.uint64((0x9E3779B97F4A7C15 * (2 * step + 2)) & mask)
    za = _mix64(base + off_a)
    zb = _mix64(base + off_b)
    # u1 in (0, 1] keeps the log finite; u2 in [0, 1).
    u1 = ((za >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
    u2 = (zb >> np.uint64(11)).astype(np.float64) * _INV53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class Path:
    """One discretized trajectory.

    times[k] = k*dt; states[k] >= 0; clamped[k] marks steps where the raw
    Euler-Maruyama update went negative and was absorbed at 0.
    """

    seed: int
    dt: float
    times: np.ndarray
    states: np.ndarray
    clamped: np.ndarray

    def __post_init__(self) -> None:
        if len(self.times) != len(self.states) or len(self.times) != len(self.clamped):
            raise ValueError("times, states and clamped must have equal length")
        if len(self.times) == 0 or self.times[0] != 0.0:
            raise ValueError("times must start at 0")
        if len(self.times) > 1 and np.abs(np.diff(self.times) - self.dt).max() > 1e-12:
            raise ValueError("times must be uniformly spaced by dt")
        if np.any(self.states < 0.0):
            raise ValueError("states must be nonnegative")

    @property
    def clamp_count(self) -> int:
        return int(np.count_nonzero(self.clamped))


def drift(state: State, u: float, model: ModelParams) -> float:
    """a*sqrt(x) - sigma2*x - u."""
    return model.a * math.sqrt(state.x) - model.sigma2 * state.x - u


def diffusion(state: State, model: ModelParams) -> float:
    """sigma1 - sigma2*x (sign may be negative; squared wherever used)."""
    return model.sigma1 - model.sigma2 * state.x


def _drift_arr(x: np.ndarray, u: np.ndarray | float, model: ModelParams) -> np.ndarray:
    # max(x, 0) keeps the sqrt defined when the pre-clamp diagnostic mode
    # lets states go negative; clamped simulation never sees x < 0.
    return model.a * np.sqrt(np.maximum(x, 0.0)) - model.sigma2 * x - u


def _diffusion_arr(x: np.ndarray, model: ModelParams) -> np.ndarray:
    return model.sigma1 - model.sigma2 * x


def em_step(state: State, u: float, model: ModelParams, dt: float, noise: float) -> float:
    """One Euler-Maruyama update, clamped at 0."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    raw = state.x + drift(state, u, model) * dt + diffusion(state, model) * math.sqrt(dt) * noise
    return max(0.0, raw)


def n_steps_for(horizon: float, dt: float) -> int:
    """round(horizon/dt), requiring horizon to be an integer multiple of dt."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = round(horizon / dt)
    if n < 1 or abs(n * dt - horizon) > STEP_TOL * max(1.0, abs(horizon)):
        raise ValueError(
            f"horizon {horizon} is not a positive integer multiple of dt {dt}"
        )
    return n


def _as_control_array(value: np.ndarray | float, n: int) -> np.ndarray:
    u = np.clip(np.asarray(value, dtype=np.float64), 0.0, 1.0)
    return np.broadcast_to(u, (n,))


def simulate_chunk(
    x0: float,
    policy: PolicyFn,
    model: ModelParams,
    dt: float,
    n_steps: int,
    seed: int,
    first_path: int,
    n_paths: int,
    clamp: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate a contiguous block of paths, vectorized across the block.

    Returns (states, clamped) with shapes (n_paths, n_steps+1) and
    (n_paths, n_steps+1). With clamp=False the raw pre-clamp recursion is
    produced (used by moment-law validation); clamp flags then mark where
    clamping would have occurred.
    """
    states = np.empty((n_paths, n_steps + 1), dtype=np.float64)
    clamped = np.zeros((n_paths, n_steps + 1), dtype=bool)
    x = np.full(n_paths, float(x0))
    states[:, 0] = x
    sqrt_dt = math.sqrt(dt)
    for j in range(n_steps):
        s_j = j * dt
        u = _as_control_array(policy(s_j, x), n_paths)
        w = step_normals(seed, first_path, n_paths, j)
        raw = x + _drift_arr(x, u, model) * dt + _diffusion_arr(x, model) * sqrt_dt * w
        hit = raw < 0.0
        clamped[:, j + 1] = hit
        x = np.maximum(raw, 0.0) if clamp else raw
        states[:, j + 1] = x
    return states, clamped


def _worker_count() -> int:
    env = os.environ.get("STUBBORN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def simulate_batch(
    x0: float,
    policy: PolicyFn,
    model: ModelParams,
    dt: float,
    horizon: float,
    seed: int,
    n_paths: int,
    clamp: bool = True,
    chunk_size: int = 16384,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate n_paths trajectories; returns (states, clamped) matrices.

    Chunk boundaries are a fixed function of n_paths/chunk_size, and each
    path's noise is keyed by its absolute index, so results are identical
    for any worker count. Chunks are reassembled in path-index order.
    """
    n_steps = n_steps_for(horizon, dt)
    chunks = [
        (lo, min(lo + chunk_size, n_paths)) for lo in range(0, n_paths, chunk_size)
    ]
    workers = min(_worker_count(), len(chunks))
    states = np.empty((n_paths, n_steps + 1), dtype=np.float64)
    clamped = np.empty((n_paths, n_steps + 1), dtype=bool)
    if workers <= 1:
        for lo, hi in chunks:
            states[lo:hi], clamped[lo:hi] = simulate_chunk(
                x0, policy, model, dt, n_steps, seed, lo, hi - lo, clamp
            )
        return states, clamped
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(
                simulate_chunk, x0, policy, model, dt, n_steps, seed, lo, hi - lo, clamp
            ): (lo, hi)
            for lo, hi in chunks
        }
        for fut, (lo, hi) in futures.items():
            states[lo:hi], clamped[lo:hi] = fut.result()
    return states, clamped


def simulate_final(
    x0: float,
    policy: PolicyFn,
    model: ModelParams,
    dt: float,
    horizon: float,
    seed: int,
    n_paths: int,
    clamp: bool = True,
    chunk_size: int = 16384,
) -> tuple[np.ndarray, np.ndarray]:
    """Final states and per-path clamp flags without storing trajectories.

    Streaming counterpart of simulate_batch for moment statistics at large
    path counts; memory O(chunk_size).
    """
    n_steps = n_steps_for(horizon, dt)
    sqrt_dt = math.sqrt(dt)
    final = np.empty(n_paths)
    clamp_any = np.zeros(n_paths, dtype=bool)
    for lo in range(0, n_paths, chunk_size):
        hi = min(lo + chunk_size, n_paths)
        m = hi - lo
        x = np.full(m, float(x0))
        hit = np.zeros(m, dtype=bool)
        for j in range(n_steps):
            u = _as_control_array(policy(j * dt, x), m)
            w = step_normals(seed, lo, m, j)
            raw = x + _drift_arr(x, u, model) * dt + _diffusion_arr(x, model) * sqrt_dt * w
            hit |= raw < 0.0
            x = np.maximum(raw, 0.0) if clamp else raw
        final[lo:hi] = x
        clamp_any[lo:hi] = hit
    return final, clamp_any


def simulate_path(
    x0: float,
    policy: PolicyFn,
    model: ModelParams,
    dt: float,
    horizon: float,
    seed: int,
    path_index: int = 0,
) -> Path:
    """Simulate a single path; bit-reproducible given (seed, dt, x0, params, policy)."""
    n_steps = n_steps_for(horizon, dt)
    states, clamped = simulate_chunk(
        x0, policy, model, dt, n_steps, seed, path_index, 1
    )
    times = np.arange(n_steps + 1, dtype=np.float64) * dt
    return Path(seed=seed, dt=dt, times=times, states=states[0], clamped=clamped[0])


def em_transition_logdensity(
    x_next: float, state: State, u: float, model: ModelParams, dt: float
) -> float:
    """Log density of x_next under one unclamped Euler-Maruyama step.

    The step is Gaussian with mean x + mu*dt and variance sigma^2*dt; a
    vanishing diffusion has no density.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    sig = diffusion(state, model)
    if sig == 0.0:
        raise DegenerateDensityError("degenerate transition density")
    mean = state.x + drift(state, u, model) * dt
    var = sig * sig * dt
    return -0.5 * math.log(2.0 * math.pi * var) - 0.5 * (x_next - mean) ** 2 / var


def path_logdensity(path: Path, policy: PolicyFn, model: ModelParams) -> float:
    """Sum of per-step Gaussian log densities along an unclamped path."""
    if path.clamp_count > 0:
        raise ClampedPathError("path density undefined: clamped steps present")
    total = 0.0
    for k in range(len(path.times) - 1):
        s_k = float(path.times[k])
        x_k = float(path.states[k])
        u_k = float(np.clip(policy(s_k, np.asarray(x_k)), 0.0, 1.0))
        total += em_transition_logdensity(
            float(path.states[k + 1]), State(s=s_k, x=x_k), u_k, model, path.dt
        )
    return total


def paths_to_csv(paths: Sequence[Path], out_path: str) -> None:
    """Write paths as CSV rows `path_id,step,s,x,clamped` (clamped in {0,1})."""
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("path_id,step,s,x,clamped\n")
        for pid, path in enumerate(paths):
            for k in range(len(path.times)):
                fh.write(
                    f"{pid},{k},{float(path.times[k])!r},{float(path.states[k])!r},"
                    f"{1 if path.clamped[k] else 0}\n"
                )
