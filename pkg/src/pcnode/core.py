"""IPHS model contract, Forward-Euler rollouts and thermodynamic checkers.

A dynamics model here is any object with

* ``n`` and ``m`` (state and input dimensions),
* ``rhs(x, u)`` returning dx/dt, batched over leading axes and written with
  the dispatching primitives of :mod:`pcnode.autodiff`,

plus, when the model has the structure, ``hamiltonian_grad(x)``,
``conservative_rhs(x)`` (the R J dH/dx part with W and u switched off) and
``entropy_rate(x)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from . import autodiff as ad


class ModelError(Exception):
    """Base class for errors raised by model evaluation."""


class DimensionError(ModelError, ValueError):
    def __init__(self, what: str, expected: int, got: int):
        super().__init__(f"{what} dimension mismatch: expected {expected}, got {got}")
        self.what, self.expected, self.got = what, expected, got


class NonFiniteStateError(ModelError, FloatingPointError):
    def __init__(self, message: str, state=None, step: int | None = None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.state = None if state is None else np.array(state)
        self.step = step


class UnsupportedCapabilityError(ModelError, TypeError):
    pass


class PhysicsViolationError(ModelError):
    pass


@runtime_checkable
class DynamicsModel(Protocol):
    n: int
    m: int

    def rhs(self, x, u): ...


# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SkewSymmetricMatrix:
    """Antisymmetric matrix stored by its strict upper triangle.

    ``upper`` maps (i, j) with i < j to M[i, j]; M[j, i] is its negation and
    the diagonal is zero, so M + M.T == 0 holds exactly.
    """

    dim: int
    upper: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        for i, j in self.upper:
            if not 0 <= i < j < self.dim:
                raise ValueError(f"entry ({i}, {j}) is not strictly upper-triangular in dim {self.dim}")

    def materialize(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for (i, j), v in self.upper.items():
            out[i, j] = v
            out[j, i] = -v
        return out

    def __matmul__(self, vec):
        return self.materialize() @ np.asarray(vec, dtype=float)

    def scaled(self, factor: float) -> "SkewSymmetricMatrix":
        return SkewSymmetricMatrix(self.dim, {k: factor * v for k, v in self.upper.items()})

    @staticmethod
    def sum(terms: Sequence["SkewSymmetricMatrix"], dim: int) -> "SkewSymmetricMatrix":
        upper: dict[tuple[int, int], float] = {}
        for t in terms:
            for k, v in t.upper.items():
                upper[k] = upper.get(k, 0.0) + v
        return SkewSymmetricMatrix(dim, upper)


# --------------------------------------------------------------------------

def _check_dims(model, x, u):
    xs = ad.value_of(x).shape
    if not xs or xs[-1] != model.n:
        raise DimensionError("state", model.n, xs[-1] if xs else 0)
    us = np.shape(u)
    if model.m == 0:
        if us and us[-1] not in (0,):
            raise DimensionError("input", 0, us[-1])
    elif not us or us[-1] != model.m:
        raise DimensionError("input", model.m, us[-1] if us else 0)


def fe_step(model, x, u, h: float):
    """One explicit Euler step x + h * rhs(x, u)."""
    if h < 0:
        raise ValueError("step size h must be non-negative")
    _check_dims(model, x, u)
    xv = ad.value_of(x)
    if not np.all(np.isfinite(xv)):
        raise NonFiniteStateError("non-finite state", xv)
    if h == 0:
        return x
    f = model.rhs(x, u)
    if not np.all(np.isfinite(ad.value_of(f))):
        raise NonFiniteStateError("rhs is not finite", xv)
    return x + h * f


def fe_rollout(model, x0, inputs, h: float) -> list:
    """States x_0 .. x_L of the Euler recursion driven by ``inputs`` (L rows)."""
    states = [x0]
    x = x0
    for i, u in enumerate(inputs):
        try:
            x = fe_step(model, x, u, h)
        except NonFiniteStateError as err:
            raise NonFiniteStateError(str(err), err.state, step=i) from None
        states.append(x)
    return states


def rollout_array(model, x0, inputs, h: float) -> np.ndarray:
    """fe_rollout on plain arrays, stacked as (L+1, ..., n)."""
    return np.stack(fe_rollout(model, np.asarray(x0, dtype=float), np.asarray(inputs, dtype=float), h))


# --------------------------------------------------------------------------
# invariant checkers: return residuals, tolerances belong to the caller

def _require(model, name):
    if not callable(getattr(model, name, None)):
        raise UnsupportedCapabilityError(f"{type(model).__name__} provides no {name}()")


def check_energy_conservation(model, x, tol: float | None = None) -> float:
    """|dH/dx . f_c(x)| where f_c is the conservative part of the dynamics."""
    _require(model, "hamiltonian_grad")
    _require(model, "conservative_rhs")
    x = np.asarray(x, dtype=float)
    g = np.asarray(model.hamiltonian_grad(x))
    f = np.asarray(model.conservative_rhs(x))
    residual = float(np.max(np.abs(np.sum(g * f, axis=-1))))
    if tol is not None and residual > tol:
        raise PhysicsViolationError(f"energy residual {residual:.3e} exceeds {tol:.3e}")
    return residual


def energy_power_scale(model, x) -> float:
    """Sum of |dH/dx_i * f_i|, the natural scale for the energy residual."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(model.hamiltonian_grad(x))
    f = np.asarray(model.conservative_rhs(x))
    return float(np.max(np.sum(np.abs(g * f), axis=-1)))


def check_entropy_production(model, x) -> float:
    """Entropy production rate with exogenous inputs switched off."""
    _require(model, "entropy_rate")
    return float(np.min(np.asarray(model.entropy_rate(np.asarray(x, dtype=float)))))


def check_monotonicity(model, x, u_lo, u_hi) -> bool:
    u_lo = np.asarray(u_lo, dtype=float)
    u_hi = np.asarray(u_hi, dtype=float)
    if np.any(u_lo > u_hi):
        raise ValueError("u_lo must be elementwise <= u_hi")
    x = np.asarray(x, dtype=float)
    _check_dims(model, x, u_lo)
    return bool(np.all(np.asarray(model.rhs(x, u_hi)) >= np.asarray(model.rhs(x, u_lo))))


@dataclass(frozen=True)
class LinearTestModel:
    """dx/dt = a x (+ b u), the scalar sanity model used in tests and examples."""

    a: float = -1.0
    b: float = 0.0
    n: int = 1
    m: int = 1

    def rhs(self, x, u):
        return self.a * x + self.b * np.asarray(u, dtype=float)
