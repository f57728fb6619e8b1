"""Hamiltonian model: block-structured states, coupling potentials, energies.

The system couples n harmonic oscillators with frequencies omega_j >= 1/eps
to a slow subsystem (block 0, frequency 0):

    H = H_osc + H_slow,
    H_osc  = sum_j 1/2 (|p_j|^2 + omega_j^2 |q_j|^2),
    H_slow = 1/2 |p_0|^2 + U(q).

Potentials expose exact derivative tensors at slow-only base points; the
modulation machinery needs them up to order N+2 and closed forms keep the
defect measurements free of differentiation noise.
"""

from __future__ import annotations

import dataclasses
from functools import cached_property

import numpy as np

__all__ = [
    "BlockVector",
    "DimensionMismatchError",
    "EnergyBreakdown",
    "LinearCubicPotential",
    "Potential",
    "SystemConfig",
    "ZeroPotential",
    "acceleration",
    "energies",
    "energy_series",
    "example_potential",
    "EXAMPLE_CUBIC_WEIGHTS",
]


class DimensionMismatchError(ValueError):
    """Block structure of an argument does not match the system's."""


class BlockVector:
    """Positions q or momenta p as n+1 blocks, block j a vector in R^{d_j}.

    Immutable after construction; blocks are read-only float arrays.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks):
        bs = []
        for b in blocks:
            arr = np.array(b, dtype=float, copy=True).reshape(-1)
            if arr.size == 0:
                raise ValueError("empty block")
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite entries in block vector")
            arr.setflags(write=False)
            bs.append(arr)
        if not bs:
            raise ValueError("need at least the slow block")
        self.blocks = tuple(bs)

    @classmethod
    def from_flat(cls, flat, dims):
        flat = np.asarray(flat, dtype=float)
        if flat.size != sum(dims):
            raise DimensionMismatchError(
                f"flat vector of size {flat.size} vs dims {tuple(dims)}")
        out = []
        o = 0
        for d in dims:
            out.append(flat[o:o + d])
            o += d
        return cls(out)

    @property
    def dims(self):
        return tuple(b.size for b in self.blocks)

    @property
    def n_fast(self):
        return len(self.blocks) - 1

    def flat(self):
        return np.concatenate(self.blocks)

    def __getitem__(self, j):
        return self.blocks[j]

    def __len__(self):
        return len(self.blocks)

    def __repr__(self):
        return f"BlockVector({[b.tolist() for b in self.blocks]})"


class Potential:
    """Smooth coupling potential U(q).

    Subclasses implement the value, per-block gradients and, for the
    modulation machinery, exact derivative tensors at slow-only base
    points (q_0, 0, ..., 0).
    """

    def value(self, q: BlockVector) -> float:
        raise NotImplementedError

    def gradient(self, q: BlockVector, j: int) -> np.ndarray:
        raise NotImplementedError

    def derivative_form(self, q0, indices) -> np.ndarray:
        """m-th derivative tensor of U at (q0, 0, ..., 0).

        indices is a tuple (j_1, ..., j_m); the result has shape
        (d_{j_1}, ..., d_{j_m}) and is symmetric under permutation of the
        index/axis pairs.  Contract with complex vectors by multilinearity.
        """
        raise NotImplementedError

    # --- flat-coordinate helpers used by the integrators -----------------

    def gradient_flat(self, q_flat, dims):
        q = BlockVector.from_flat(q_flat, dims)
        return np.concatenate([self.gradient(q, j) for j in range(len(dims))])

    def value_flat(self, q_flat, dims):
        return self.value(BlockVector.from_flat(q_flat, dims))

    def value_many(self, Q, dims):
        """Values along rows of Q (samples x total dof)."""
        return np.array([self.value_flat(row, dims) for row in Q])

    def kernel_params(self, dims):
        """(cubic_weights, quad_diag) flat arrays when the potential is in
        the quadratic-plus-cubic-form family the compiled kernels cover,
        else None."""
        return None


class ZeroPotential(Potential):
    """U identically zero (decoupled oscillators).

    Pass dims when derivative tensors are needed (they are zero arrays of
    the right shapes).
    """

    def __init__(self, dims=None):
        self.dims = None if dims is None else tuple(int(d) for d in dims)

    def value(self, q):
        return 0.0

    def gradient(self, q, j):
        return np.zeros_like(q[j])

    def derivative_form(self, q0, indices):
        if self.dims is None:
            raise ValueError("ZeroPotential needs dims for derivative tensors")
        return np.zeros(tuple(self.dims[j] for j in indices))

    def value_many(self, Q, dims):
        return np.zeros(np.asarray(Q).shape[0])

    def kernel_params(self, dims):
        D = sum(dims)
        return np.zeros(D), np.zeros(D)


class LinearCubicPotential(Potential):
    """U(q) = 1/2 sum_j kappa_j |q_j|^2 + (sum_j w_j . q_j)^3.

    Covers the numerical test problem (kappa = (1, 0, ..., 0)) and its
    decoupled variants.  All derivative tensors are closed-form; orders
    above three vanish.
    """

    def __init__(self, weights, quad_coeffs):
        self.weights = tuple(np.array(w, dtype=float).reshape(-1) for w in weights)
        self.quad = tuple(float(k) for k in quad_coeffs)
        if len(self.weights) != len(self.quad):
            raise ValueError("weights and quad_coeffs must have one entry per block")

    @property
    def dims(self):
        return tuple(w.size for w in self.weights)

    def _s(self, q):
        return sum(float(np.dot(w, q[j])) for j, w in enumerate(self.weights))

    def value(self, q):
        s = self._s(q)
        quad = sum(0.5 * k * float(np.dot(q[j], q[j]))
                   for j, k in enumerate(self.quad) if k != 0.0)
        return quad + s ** 3

    def gradient(self, q, j):
        s = self._s(q)
        return 3.0 * s * s * self.weights[j] + self.quad[j] * np.asarray(q[j])

    def derivative_form(self, q0, indices):
        # complex base points are admitted by polynomial continuation
        q0 = np.atleast_1d(np.asarray(q0))
        m = len(indices)
        dims = self.dims
        shape = tuple(dims[j] for j in indices)
        if m == 0:
            s0 = np.dot(self.weights[0], q0)
            return np.array(0.5 * self.quad[0] * np.dot(q0, q0) + s0 ** 3)
        if m > 3:
            return np.zeros(shape)
        s0 = np.dot(self.weights[0], q0)
        ws = [self.weights[j] for j in indices]
        if m == 1:
            out = 3.0 * s0 * s0 * ws[0]
            if indices[0] == 0:
                out = out + self.quad[0] * q0
            return out
        if m == 2:
            out = 6.0 * s0 * np.multiply.outer(ws[0], ws[1])
            if indices[0] == indices[1]:
                out = out + self.quad[indices[0]] * np.eye(dims[indices[0]])
            return out
        return 6.0 * np.multiply.outer(np.multiply.outer(ws[0], ws[1]), ws[2])

    # flat fast paths

    def _flat_w(self, dims):
        if tuple(dims) != self.dims:
            raise DimensionMismatchError("potential dims do not match system dims")
        w = np.concatenate(self.weights)
        quad = np.concatenate([np.full(d, k) for d, k in zip(dims, self.quad)])
        return w, quad

    def gradient_flat(self, q_flat, dims):
        w, quad = self._flat_w(dims)
        s = float(np.dot(w, q_flat))
        return 3.0 * s * s * w + quad * np.asarray(q_flat)

    def value_flat(self, q_flat, dims):
        w, quad = self._flat_w(dims)
        s = float(np.dot(w, q_flat))
        return 0.5 * float(np.dot(quad * q_flat, q_flat)) + s ** 3

    def value_many(self, Q, dims):
        w, quad = self._flat_w(dims)
        s = Q @ w
        return 0.5 * np.einsum("si,si->s", Q * quad, Q) + s ** 3

    def kernel_params(self, dims):
        return self._flat_w(dims)


#: cubic weights on the fast blocks of the reference experiment's potential
EXAMPLE_CUBIC_WEIGHTS = (1.0, 1.0, 2.0, 3.0, 1.0, 1.0, 3.0)


def example_potential(a: float, epsilon: float) -> LinearCubicPotential:
    """Coupling potential of the reference experiments,

        U(q) = 1/2 q_0^2 + (a q_0 + q_1 + q_2 + 2 q_3 + 3 q_4 + q_5 + q_6 + 3 q_7)^3,

    with the coupling strength a.  epsilon parameterises the experiment
    family alongside a (the formula itself does not involve it).
    """
    del epsilon
    weights = [np.array([float(a)])] + [np.array([c]) for c in EXAMPLE_CUBIC_WEIGHTS]
    return LinearCubicPotential(weights, (1.0,) + (0.0,) * len(EXAMPLE_CUBIC_WEIGHTS))


@dataclasses.dataclass(frozen=True)
class SystemConfig:
    """Immutable description of one oscillatory system."""

    n: int
    dims: tuple
    epsilon: float
    omega: np.ndarray
    potential: Potential
    monitor_radius: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        om = np.array(self.omega, dtype=float)
        om.setflags(write=False)
        object.__setattr__(self, "omega", om)
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.n < 1 or len(self.dims) != self.n + 1:
            raise ValueError("need dims for blocks 0..n")
        if om.shape != (self.n,):
            raise ValueError("omega must list the n fast frequencies")
        if np.any(om < (1.0 / self.epsilon) * (1.0 - 1e-12)):
            raise ValueError("fast frequencies must satisfy omega_j >= 1/epsilon")
        if not self.monitor_radius > 0:
            raise ValueError("monitor_radius must be positive")
        if any(d < 1 for d in self.dims):
            raise ValueError("block dimensions must be >= 1")

    @cached_property
    def omega_flat(self):
        """Per-dof frequency vector (0 on the slow block)."""
        parts = [np.zeros(self.dims[0])]
        parts += [np.full(self.dims[j + 1], self.omega[j]) for j in range(self.n)]
        out = np.concatenate(parts)
        out.setflags(write=False)
        return out

    @cached_property
    def total_dim(self):
        return sum(self.dims)

    def check_state(self, v: BlockVector, name="state"):
        if v.dims != self.dims:
            raise DimensionMismatchError(
                f"{name} has blocks {v.dims}, system expects {self.dims}")


@dataclasses.dataclass(frozen=True)
class EnergyBreakdown:
    """Per-mode oscillatory energies and the H_osc / H_slow / H split."""

    per_mode: np.ndarray
    oscillatory: float
    slow: float
    total: float


def acceleration(q: BlockVector, config: SystemConfig) -> BlockVector:
    """Right-hand side of qdd_j = -omega_j^2 q_j - grad_j U(q) (omega_0 = 0)."""
    config.check_state(q, "q")
    out = []
    for j in range(config.n + 1):
        om = 0.0 if j == 0 else config.omega[j - 1]
        out.append(-om * om * q[j] - config.potential.gradient(q, j))
    return BlockVector(out)


def energies(p: BlockVector, q: BlockVector, config: SystemConfig) -> EnergyBreakdown:
    """Energy split at a phase-space point."""
    config.check_state(p, "p")
    config.check_state(q, "q")
    per_mode = np.array([
        0.5 * (float(np.dot(p[j + 1], p[j + 1]))
               + config.omega[j] ** 2 * float(np.dot(q[j + 1], q[j + 1])))
        for j in range(config.n)
    ])
    osc = float(np.sum(per_mode))
    slow = 0.5 * float(np.dot(p[0], p[0])) + config.potential.value(q)
    return EnergyBreakdown(per_mode=per_mode, oscillatory=osc, slow=slow,
                           total=osc + slow)


def energy_series(P, Q, config: SystemConfig):
    """Vectorised energy split along sampled states (rows of P, Q).

    Returns (per_mode[s, j], h_osc[s], h_slow[s], h_total[s]).
    """
    P = np.asarray(P)
    Q = np.asarray(Q)
    per_mode = np.empty((P.shape[0], config.n))
    o = config.dims[0]
    for j in range(config.n):
        d = config.dims[j + 1]
        sl = slice(o, o + d)
        per_mode[:, j] = 0.5 * (np.sum(P[:, sl] ** 2, axis=1)
                                + config.omega[j] ** 2 * np.sum(Q[:, sl] ** 2, axis=1))
        o += d
    h_osc = per_mode.sum(axis=1)
    u = config.potential.value_many(Q, config.dims)
    h_slow = 0.5 * np.sum(P[:, :config.dims[0]] ** 2, axis=1) + u
    return per_mode, h_osc, h_slow, h_osc + h_slow
