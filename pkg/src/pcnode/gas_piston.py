"""Gas-piston system: analytic ground truth and the learnable IPHS variant.

State x = [S, V, q, p] (entropy J/K, gas volume m^3, piston position m,
momentum kg m/s), input u = external force (N).  Both models share

    dx/dt = [R J0 + J1] dH/dx + G u,   R = gamma * dH/dp

with J0 coupling entropy to momentum, J1 = J1(alpha, beta) coupling volume
and position to momentum, and G = e_p.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math
from typing import ClassVar

import numpy as np

from . import autodiff as ad
from .core import ModelError

R_GAS = 8.314  # J/(mol K)

J0 = np.array([[0.0, 0.0, 0.0, 1.0],
               [0.0, 0.0, 0.0, 0.0],
               [0.0, 0.0, 0.0, 0.0],
               [-1.0, 0.0, 0.0, 0.0]])
G = np.array([0.0, 0.0, 0.0, 1.0])
STATE_LABELS = ["S[J/K]", "V[m3]", "q[m]", "p[kg*m/s]"]
INPUT_LABELS = ["u[N]"]


def j1_matrix(alpha: float, beta: float) -> np.ndarray:
    return np.array([[0.0, 0.0, 0.0, 0.0],
                     [0.0, 0.0, 0.0, alpha],
                     [0.0, 0.0, 0.0, beta],
                     [0.0, -alpha, -beta, 0.0]])


class PistonBottomError(ModelError, ValueError):
    pass


def assemble_rhs(grad, gamma, alpha, beta, u=0.0, input_gain=1.0):
    """(R J0 + J1(alpha, beta)) grad + G u with R = gamma * grad_p, written out by component."""
    g_s, g_v, g_q, g_p = grad[..., 0], grad[..., 1], grad[..., 2], grad[..., 3]
    r = gamma * g_p
    s_dot = r * g_p
    v_dot = alpha * g_p
    q_dot = beta * g_p
    p_dot = -r * g_s - alpha * g_v - beta * g_q + input_gain * u
    return ad.stack([s_dot, v_dot, q_dot, p_dot], axis=-1)


@dataclass(frozen=True)
class GasPistonTruth:
    """Analytic gas-piston IPHS.

    The gas side needs constants the experiment description leaves open; the
    defaults describe air at one atmosphere in the initial volume.
    """

    mass: float = 5.0
    alpha: float = 0.033
    beta: float = 1.0
    mu: float = 1.0
    k_spring: float = 10.0
    T0: float = 290.0
    S0: float = 0.0
    V0: float = 0.001
    P0: float = 101325.0
    c_v: float = 718.0
    molar_mass: float = 0.029
    r_gas: float = R_GAS
    n: ClassVar[int] = 4
    m: ClassVar[int] = 1

    def __post_init__(self):
        for name in ("mass", "alpha", "beta", "mu", "k_spring", "T0", "V0", "P0", "c_v", "molar_mass", "r_gas"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_mol(self) -> float:
        return self.P0 * self.V0 / (self.r_gas * self.T0)

    @property
    def m_gas(self) -> float:
        return self.n_mol * self.molar_mass

    @property
    def heat_capacity(self) -> float:
        """m_gas c_v in J/K."""
        return self.m_gas * self.c_v

    @property
    def x0(self) -> np.ndarray:
        return np.array([self.S0, self.V0, 0.3, 0.0])

    def temperature(self, S, V):
        V = np.asarray(V, dtype=float)
        if np.any(V <= 0):
            raise PistonBottomError("gas volume reached zero (piston at the bottom)")
        expo = (np.asarray(S, dtype=float) - self.S0) / self.heat_capacity
        return self.T0 * np.exp(expo) * (V / self.V0) ** (-self.n_mol * self.r_gas / self.heat_capacity)

    def pressure(self, S, V):
        return self.n_mol * self.r_gas * self.temperature(S, V) / np.asarray(V, dtype=float)

    def hamiltonian(self, x):
        x = np.asarray(x, dtype=float)
        S, V, q, p = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        return self.heat_capacity * self.temperature(S, V) + 0.5 * self.k_spring * q * q + p * p / (2 * self.mass)

    def hamiltonian_grad(self, x):
        x = np.asarray(x, dtype=float)
        S, V, q, p = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        return np.stack([self.temperature(S, V), -self.pressure(S, V), self.k_spring * q, p / self.mass], axis=-1)

    def gamma(self, x):
        """gamma = mu / T makes R = gamma dH/dp equal to mu v / T."""
        x = np.asarray(x, dtype=float)
        T = self.temperature(x[..., 0], x[..., 1])
        assert np.all(T > 0)
        return self.mu / T

    def rhs(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)[..., 0]
        if x.ndim == 1:
            return self._rhs_single(x, float(u))
        return assemble_rhs(self.hamiltonian_grad(x), self.gamma(x), self.alpha, self.beta, u)

    def _rhs_single(self, x, u: float) -> np.ndarray:
        # scalar arithmetic; numpy call overhead dominates for one 4-vector
        S, V, q, p = (float(c) for c in x)
        if V <= 0:
            raise PistonBottomError("gas volume reached zero (piston at the bottom)")
        mc = self.heat_capacity
        nr = self.n_mol * self.r_gas
        T = self.T0 * math.exp((S - self.S0) / mc) * (V / self.V0) ** (-nr / mc)
        P = nr * T / V
        v = p / self.mass
        return np.array([self.mu * v * v / T, self.alpha * v, self.beta * v,
                         -self.mu * v + self.alpha * P - self.beta * self.k_spring * q + u])

    def conservative_rhs(self, x):
        x = np.asarray(x, dtype=float)
        return assemble_rhs(self.hamiltonian_grad(x), self.gamma(x), self.alpha, self.beta)

    def entropy_rate(self, x):
        x = np.asarray(x, dtype=float)
        v = x[..., 3] / self.mass
        return self.mu * v * v / self.temperature(x[..., 0], x[..., 1])

    def constants(self) -> dict:
        out = {k: getattr(self, k) for k in ("mass", "alpha", "beta", "mu", "k_spring", "T0", "S0", "V0",
                                             "P0", "c_v", "molar_mass", "r_gas")}
        out.update(n_mol=self.n_mol, m_gas=self.m_gas)
        return out


# --------------------------------------------------------------------------
# learnable model

def hamiltonian(K, b, x):
    """Single-layer log-cosh Hamiltonian: sum_k log cosh((K x + b)_k)."""
    return ad.total(ad.log_cosh(ad.matmul(x, ad.transpose(K)) + b), axis=-1)


def hamiltonian_grad(K, b, x):
    """Closed-form gradient K^T tanh(K x + b)."""
    return ad.matmul(ad.tanh(ad.matmul(x, ad.transpose(K)) + b), K)


def gamma_eval(w, c, scale, x, grad):
    """scale * sigmoid(w . [x, grad] + c), strictly inside (0, scale)."""
    z = ad.concatenate([x, grad], axis=-1)
    return scale * ad.sigmoid(ad.matmul(z, w) + c)


@dataclass(frozen=True)
class LearnedGasPiston:
    """IPHS gas piston with neural Hamiltonian and neural gamma.

    The model evolves standardized coordinates z = (x - shift) / scale; the
    structure is unchanged under this diagonal change of coordinates, and the
    input enters through G / scale_p.
    """

    H_K: object
    H_b: object
    gamma_w: object
    gamma_b: object
    j1: object
    gamma_scale: float = 10.0
    shift: np.ndarray = field(default_factory=lambda: np.zeros(4))
    scale: np.ndarray = field(default_factory=lambda: np.ones(4))
    kind: str = field(default="gas", init=False)
    n: int = field(default=4, init=False)
    m: int = field(default=1, init=False)

    @classmethod
    def initialize(cls, n_hidden: int = 16, seed: int = 0, gamma_scale: float = 10.0,
                   shift=None, scale=None, j1_init=(0.5, 0.5)) -> "LearnedGasPiston":
        rng = np.random.default_rng(seed)
        return cls(
            H_K=rng.uniform(-0.5, 0.5, (n_hidden, 4)),
            H_b=rng.uniform(-0.5, 0.5, n_hidden),
            gamma_w=rng.uniform(-0.5, 0.5, 8),
            gamma_b=np.array(rng.uniform(-0.5, 0.5)),
            j1=np.array(j1_init, dtype=float),
            gamma_scale=float(gamma_scale),
            shift=np.zeros(4) if shift is None else np.asarray(shift, dtype=float),
            scale=np.ones(4) if scale is None else np.asarray(scale, dtype=float),
        )

    @property
    def n_hidden(self) -> int:
        return ad.value_of(self.H_K).shape[0]

    @property
    def j1_alpha(self):
        return self.j1[0]

    @property
    def j1_beta(self):
        return self.j1[1]

    def hamiltonian(self, x):
        return hamiltonian(self.H_K, self.H_b, x)

    def hamiltonian_grad(self, x):
        return hamiltonian_grad(self.H_K, self.H_b, x)

    def gamma(self, x, grad=None):
        grad = self.hamiltonian_grad(x) if grad is None else grad
        return gamma_eval(self.gamma_w, self.gamma_b, self.gamma_scale, x, grad)

    def rhs(self, x, u):
        grad = self.hamiltonian_grad(x)
        gamma = self.gamma(x, grad)
        u = np.asarray(u, dtype=float)[..., 0]
        return assemble_rhs(grad, gamma, self.j1_alpha, self.j1_beta, u, 1.0 / self.scale[3])

    def conservative_rhs(self, x):
        grad = self.hamiltonian_grad(x)
        return assemble_rhs(grad, self.gamma(x, grad), self.j1_alpha, self.j1_beta)

    def entropy_rate(self, x):
        """gamma (dH/dp)^2 in standardized units (same sign as the physical rate)."""
        grad = ad.value_of(self.hamiltonian_grad(x))
        g = ad.value_of(self.gamma(x, grad))
        return g * grad[..., 3] * grad[..., 3]

    def encode(self, z):
        return (np.asarray(z, dtype=float) - self.shift) / self.scale

    def observe(self, x):
        return x * self.scale + self.shift

    def parameters(self) -> ad.ParameterVector:
        return ad.ParameterVector.from_arrays({
            "H_K": ad.value_of(self.H_K), "H_b": ad.value_of(self.H_b),
            "gamma_w": ad.value_of(self.gamma_w), "gamma_b": ad.value_of(self.gamma_b),
            "j1": ad.value_of(self.j1),
        })

    def with_parameters(self, flat) -> "LearnedGasPiston":
        parts = self.parameters().unpack(flat)
        return replace(self, **parts)

    def l1_groups(self) -> tuple[str, ...]:
        return ("j1",)

    def effective_group(self, name: str):
        return getattr(self, name)

    def effective_parameters(self) -> dict[str, np.ndarray]:
        return {"j1_alpha": np.array([ad.value_of(self.j1)[0]]), "j1_beta": np.array([ad.value_of(self.j1)[1]])}

    def constrained_groups(self) -> tuple[str, ...]:
        return ()

    def to_config(self) -> dict:
        return {"kind": "gas", "n_hidden": self.n_hidden, "gamma_scale": self.gamma_scale,
                "shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_config(cls, cfg: dict, values=None) -> "LearnedGasPiston":
        model = cls.initialize(int(cfg["n_hidden"]), gamma_scale=cfg["gamma_scale"],
                               shift=cfg["shift"], scale=cfg["scale"])
        return model if values is None else model.with_parameters(np.asarray(values, dtype=float))
