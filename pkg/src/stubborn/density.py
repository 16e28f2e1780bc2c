"""Gaussian-reduced transition-kernel updates for the state density.

Both updates evolve a normalized density grid Psi_s(x) by a small time
increment eps using a local quadratic (Laplace) model of the Lagrangian f
with a = f_xx/2 and b = f_x:

* kernel_step applies the pointwise multiplier sqrt(pi/(eps*a)) * exp(eps*E)
  (optionally with the gradient correction term (x - b/(2a)) * dPsi/dx),
  then renormalizes numerically.
* schrodinger_step applies the pointwise exponential-Euler update
  Psi <- Psi * exp(eps*E) and renormalizes.

The growth exponent E depends on kernel_exponent_mode: "rederived" uses
b^2/(4a) - f (the value the completed square actually produces, confirmed
by quadrature), "paper" uses b^2/(4a^2) - f as printed.  With the gradient
term off and a constant over the grid, the two updates agree after
normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lagrangian import DerivativeBundle, derivatives
from .model import LagrangeParams, ModeFlags, ModelParams, PayoffParams, State

BOUNDARY_MASS_LIMIT = 1e-6
NORMALIZATION_TOL = 1e-9

# fields(s, x_grid) -> (f, f_x, f_xx) arrays over the grid
FieldFn = Callable[[float, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


class DegenerateLaplaceError(ValueError):
    """Laplace expansion requested where f_xx vanishes."""


class KernelError(ValueError):
    """Kernel update not normalizable (a <= 0 somewhere on the grid)."""


@dataclass(frozen=True)
class DensityGrid:
    x_grid: np.ndarray
    psi: np.ndarray
    s: float
    normalized: bool
    warning: str | None = None

    def __post_init__(self) -> None:
        if len(self.x_grid) != len(self.psi):
            raise ValueError("x_grid and psi must have equal length")
        if len(self.x_grid) < 4:
            raise ValueError("grid needs at least 4 points")
        if np.any(np.diff(self.x_grid) <= 0.0):
            raise ValueError("x_grid must be strictly increasing")
        if np.any(self.psi < 0.0):
            raise ValueError("psi must be nonnegative")
        if self.normalized:
            total = float(np.trapezoid(self.psi, self.x_grid))
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise ValueError(f"normalized grid integrates to {total}, not 1")

    def mass(self) -> float:
        return float(np.trapezoid(self.psi, self.x_grid))


def gaussian_density_grid(x_grid: np.ndarray, center: float, width: float, s: float = 0.0) -> DensityGrid:
    """Normalized Gaussian bump with zeroed endpoints, for initial conditions."""
    x = np.asarray(x_grid, dtype=np.float64)
    psi = np.exp(-0.5 * ((x - center) / width) ** 2)
    psi[0] = 0.0
    psi[-1] = 0.0
    psi /= np.trapezoid(psi, x)
    return DensityGrid(x_grid=x, psi=psi, s=s, normalized=True)


def gaussian_integral_closed(q: float, lambda_coef: float, eps: float, beta_pow: float) -> float:
    """Closed form of int exp{-q*xi^2/(eps*B) + lambda*eps*xi/B} dxi with B = (1+beta)^t.

    Equals exp{lambda^2*eps^3 / (4*q*B)} * sqrt(eps*pi*B / q).
    """
    if q <= 0.0:
        raise ValueError("q must be positive")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if beta_pow <= 0.0:
        raise ValueError("beta_pow must be positive")
    exponent = lambda_coef**2 * eps**3 / (4.0 * q * beta_pow)
    return math.exp(exponent) * math.sqrt(eps * math.pi * beta_pow / q)


def laplace_from_bundle(bundle: DerivativeBundle) -> tuple[float, float]:
    """(a, b) = (f_xx / 2, f_x) of the local quadratic model."""
    if bundle.f_xx == 0.0:
        raise DegenerateLaplaceError("degenerate Laplace expansion")
    return 0.5 * bundle.f_xx, bundle.f_x


def laplace_coefficients(
    state: State,
    u: float,
    model: ModelParams,
    payoff: PayoffParams,
    lagrange: LagrangeParams,
    modes: ModeFlags = ModeFlags(),
) -> tuple[float, float]:
    """(a, b) at (s, x, u) under the selected derivative mode."""
    bundle = derivatives(state, u, model, payoff, lagrange, mode=modes.derivative_mode)
    return laplace_from_bundle(bundle)


def model_fields(
    u: float,
    model: ModelParams,
    payoff: PayoffParams,
    lagrange: LagrangeParams,
    modes: ModeFlags = ModeFlags(),
    Mbar: float | None = None,
) -> FieldFn:
    """FieldFn that evaluates (f, f_x, f_xx) of the model Lagrangian at fixed u."""

    def fields(s: float, x_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = len(x_grid)
        f = np.empty(n)
        fx = np.empty(n)
        fxx = np.empty(n)
        for i, x in enumerate(x_grid):
            b = derivatives(
                State(s=s, x=float(x)), u, model, payoff, lagrange,
                mode=modes.derivative_mode, Mbar=Mbar,
            )
            f[i], fx[i], fxx[i] = b.f, b.f_x, b.f_xx
        return f, fx, fxx

    return fields


def _growth_exponent(
    f: np.ndarray, a: np.ndarray, b: np.ndarray, kernel_exponent_mode: str
) -> np.ndarray:
    if kernel_exponent_mode == "rederived":
        return b * b / (4.0 * a) - f
    if kernel_exponent_mode == "paper":
        return b * b / (4.0 * a * a) - f
    raise ValueError("kernel_exponent_mode must be 'paper' or 'rederived'")


def _check_positive_a(a: np.ndarray) -> None:
    bad = np.flatnonzero(a <= 0.0)
    if bad.size:
        raise KernelError(f"kernel not normalizable at grid point {int(bad[0])}")


def _finish_step(
    raw: np.ndarray, x: np.ndarray, s_next: float
) -> DensityGrid:
    raw = np.maximum(raw, 0.0)
    total = float(np.trapezoid(raw, x))
    if total <= 0.0:
        raise KernelError("kernel update annihilated all mass")
    warning = None
    boundary = float(
        np.trapezoid(raw[:2], x[:2]) + np.trapezoid(raw[-2:], x[-2:])
    )
    if boundary / total > BOUNDARY_MASS_LIMIT:
        warning = (
            f"boundary mass fraction {boundary / total:.3e} exceeds "
            f"{BOUNDARY_MASS_LIMIT:.0e}; widen the grid"
        )
    raw[0] = 0.0
    raw[-1] = 0.0
    psi = raw / np.trapezoid(raw, x)
    return DensityGrid(x_grid=x, psi=psi, s=s_next, normalized=True, warning=warning)


def kernel_step(
    grid: DensityGrid,
    eps: float,
    fields: FieldFn,
    kernel_exponent_mode: str = "rederived",
    gradient_correction: bool = False,
) -> DensityGrid:
    """One Gaussian-reduced kernel update of the density grid.

    The pointwise multiplier is sqrt(pi/(eps*a)) * exp(eps*E); the optional
    gradient correction adds (x - b/(2a)) * dPsi/dx under the same
    multiplier.  The normalizer is numeric: the output integrates to 1.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if not grid.normalized:
        raise ValueError("input grid must be normalized")
    x = grid.x_grid
    f, fx, fxx = fields(grid.s, x)
    a = 0.5 * fxx
    _check_positive_a(a)
    b = fx
    E = _growth_exponent(f, a, b, kernel_exponent_mode)
    # Shift the exponent by its max before exponentiating; the constant is
    # absorbed by the normalizer and protects against overflow.
    mult = np.sqrt(math.pi / (eps * a)) * np.exp(eps * (E - E.max()))
    raw = mult * grid.psi
    if gradient_correction:
        dpsi = np.gradient(grid.psi, x)
        raw = raw + mult * (x - b / (2.0 * a)) * dpsi
    return _finish_step(raw, x, grid.s + eps)


def schrodinger_step(
    grid: DensityGrid,
    eps: float,
    fields: FieldFn,
    kernel_exponent_mode: str = "rederived",
) -> DensityGrid:
    """One exponential-Euler update Psi <- Psi * exp(eps*E), renormalized."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if not grid.normalized:
        raise ValueError("input grid must be normalized")
    x = grid.x_grid
    f, fx, fxx = fields(grid.s, x)
    a = 0.5 * fxx
    _check_positive_a(a)
    E = _growth_exponent(f, a, fx, kernel_exponent_mode)
    raw = grid.psi * np.exp(eps * (E - E.max()))
    return _finish_step(raw, x, grid.s + eps)
