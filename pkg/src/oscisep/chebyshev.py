"""Chebyshev series on [0, 1] for smooth complex vector-valued functions.

Collocation uses the degree-D first-kind point set; values <-> coefficients
via the exact discrete orthogonality transform, derivatives and
antiderivatives via numpy.polynomial.chebyshev with the [0,1] -> [-1,1]
chain factors.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import chebyshev as C

__all__ = ["CoeffFunction", "cheb_nodes"]

_node_cache = {}
_fit_cache = {}


def cheb_nodes(degree: int) -> np.ndarray:
    """Collocation nodes in [0, 1] (first-kind points, ascending)."""
    if degree not in _node_cache:
        theta = np.pi * (2 * np.arange(degree + 1) + 1) / (2 * (degree + 1))
        x = np.cos(theta)[::-1].copy()
        _node_cache[degree] = (x + 1.0) / 2.0
    return _node_cache[degree]


def _fit_matrix(degree: int) -> np.ndarray:
    """W with coeffs = W @ values-at-nodes (exact for degree <= D)."""
    if degree not in _fit_cache:
        tau = cheb_nodes(degree)
        x = 2.0 * tau - 1.0
        theta = np.arccos(x)
        k = np.arange(degree + 1)[:, None]
        W = 2.0 / (degree + 1) * np.cos(k * theta[None, :])
        W[0] *= 0.5
        _fit_cache[degree] = W
    return _fit_cache[degree]


class CoeffFunction:
    """A complex vector-valued function of tau in [0, 1] as a Chebyshev
    series of degree D; supports evaluation, d/dtau and antidifferentiation.
    """

    __slots__ = ("coef", "fit_degree")

    def __init__(self, coef, fit_degree=None):
        coef = np.atleast_1d(np.asarray(coef, dtype=complex))
        if coef.ndim == 1:
            coef = coef[:, None]
        self.coef = coef
        # nominal degree of the collocation fit that produced this series
        # (None when assembled directly from coefficients)
        self.fit_degree = fit_degree

    # --- constructors -----------------------------------------------------

    @classmethod
    def from_values(cls, values, degree=None, chop=1e-14):
        """Fit from values at cheb_nodes(degree); values shape (D+1,) or
        (D+1, dim).

        Coefficients below chop * max|coef| are zeroed: the transform's
        roundoff tail would otherwise be amplified ~k^4 by repeated
        differentiation.
        """
        values = np.atleast_1d(np.asarray(values, dtype=complex))
        if values.ndim == 1:
            values = values[:, None]
        D = values.shape[0] - 1 if degree is None else degree
        if values.shape[0] != D + 1:
            raise ValueError("value rows must match degree+1 nodes")
        coef = _fit_matrix(D) @ values
        if chop:
            # the transform's roundoff floor grows ~D*eps; chop below it
            thresh = max(chop, 10.0 * (D + 1) * np.finfo(float).eps)
            top = np.abs(coef).max()
            if top > 0.0:
                coef[np.abs(coef) < thresh * top] = 0.0
                nz = np.nonzero(np.any(coef != 0.0, axis=1))[0]
                last = int(nz[-1]) if nz.size else 0
                coef = coef[:last + 1]
        return cls(coef, fit_degree=D)

    @classmethod
    def from_callable(cls, f, degree, dim=None):
        tau = cheb_nodes(degree)
        vals = np.array([np.atleast_1d(f(t)) for t in tau], dtype=complex)
        return cls.from_values(vals, degree)

    @classmethod
    def constant(cls, vec, degree):
        vec = np.atleast_1d(np.asarray(vec, dtype=complex))
        coef = np.zeros((degree + 1, vec.size), dtype=complex)
        coef[0] = vec
        return cls(coef)

    @classmethod
    def zero(cls, degree, dim):
        return cls(np.zeros((degree + 1, dim), dtype=complex))

    # --- basic properties ---------------------------------------------------

    @property
    def degree(self):
        return self.coef.shape[0] - 1

    @property
    def dim(self):
        return self.coef.shape[1]

    def values(self):
        """Values at the collocation nodes, shape (D+1, dim)."""
        return self.eval(cheb_nodes(self.degree))

    def eval(self, tau):
        """Evaluate at scalar or array tau in [0, 1]."""
        tau = np.asarray(tau, dtype=float)
        x = 2.0 * tau - 1.0
        out = C.chebval(x, self.coef, tensor=True)  # (dim,) + tau.shape
        return np.moveaxis(out, 0, -1) if tau.ndim else out

    # --- calculus -----------------------------------------------------------

    def derivative(self, m=1):
        if self.degree == 0:
            return CoeffFunction(np.zeros_like(self.coef), self.fit_degree)
        c = C.chebder(self.coef, m=m, scl=2.0, axis=0)
        if c.shape[0] == 0:
            c = np.zeros((1, self.dim), dtype=complex)
        return CoeffFunction(c, self.fit_degree)

    def antiderivative(self):
        """F with dF/dtau = self and F(0) = 0."""
        c = C.chebint(self.coef, m=1, lbnd=-1.0, scl=0.5, axis=0)
        return CoeffFunction(c, self.fit_degree)

    # --- algebra ------------------------------------------------------------

    def __add__(self, other):
        a, b = self.coef, other.coef
        n = max(a.shape[0], b.shape[0])
        out = np.zeros((n, self.dim), dtype=complex)
        out[:a.shape[0]] += a
        out[:b.shape[0]] += b
        fd = self.fit_degree if self.fit_degree == other.fit_degree else None
        return CoeffFunction(out, fd)

    def __sub__(self, other):
        return self + (other * -1.0)

    def __mul__(self, scalar):
        return CoeffFunction(self.coef * scalar, self.fit_degree)

    __rmul__ = __mul__

    def conj(self):
        """Conjugate function: coefficients conjugated (tau is real)."""
        return CoeffFunction(np.conj(self.coef), self.fit_degree)

    def real_part(self):
        return CoeffFunction(np.real(self.coef).astype(complex), self.fit_degree)

    # --- diagnostics ---------------------------------------------------------

    def tail_ratio(self):
        """max |coef| in the last 10% of rows over max |coef| overall; small
        values mean the function is resolved at this degree.

        A series the fit chopped well below its nominal degree already
        proved its decay; its (trimmed) top rows are content, not tail.
        """
        mags = np.abs(self.coef)
        top = mags.max()
        if top == 0.0:
            return 0.0
        if self.fit_degree is not None and \
                self.coef.shape[0] <= 0.9 * (self.fit_degree + 1):
            return 0.0
        ntail = max(1, (self.degree + 1) // 10)
        return float(mags[-ntail:].max() / top)

    def is_resolved(self, tol=1e-10):
        return self.tail_ratio() <= tol

    def sup_norm(self, samples=513):
        tt = np.linspace(0.0, 1.0, samples)
        return float(np.max(np.linalg.norm(self.eval(tt), axis=-1)))
