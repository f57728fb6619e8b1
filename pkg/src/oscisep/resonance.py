"""Integer-lattice analysis of the frequency vector.

Finds the gap in the logarithms of |k.omega| (pigeonhole over width-mu
slots), collects the almost-resonant set R, modifies the frequencies by the
minimal-norm shift that turns almost-resonances into exact resonances, and
reduces multi-indices modulo the resonance module M via an exact integer
echelon basis.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

__all__ = [
    "GapResult",
    "IntegerLattice",
    "MultiIndex",
    "ResonanceData",
    "almost_resonant_set",
    "build_resonance_data",
    "enumerate_multi_indices",
    "find_gap",
    "modify_frequencies",
    "module_membership",
    "reduce_to_representative",
    "representatives",
]


@dataclasses.dataclass(frozen=True)
class MultiIndex:
    """k in Z^n with its l1 norm cached."""

    k: tuple
    norm: int = dataclasses.field(default=-1)

    def __post_init__(self):
        k = tuple(int(v) for v in self.k)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "norm", sum(abs(v) for v in k))

    @classmethod
    def of(cls, seq):
        return cls(tuple(seq))

    @classmethod
    def unit(cls, j, n):
        """<j>: the j-th unit vector in Z^n (1-based fast-mode index)."""
        k = [0] * n
        k[j - 1] = 1
        return cls(tuple(k))

    def dot(self, v):
        return float(sum(ki * vi for ki, vi in zip(self.k, v)))

    def __neg__(self):
        return MultiIndex(tuple(-v for v in self.k))

    def __add__(self, other):
        return MultiIndex(tuple(a + b for a, b in zip(self.k, other.k)))

    def __sub__(self, other):
        return MultiIndex(tuple(a - b for a, b in zip(self.k, other.k)))

    def __len__(self):
        return len(self.k)


def enumerate_multi_indices(n: int, r: int):
    """All k in Z^n with ||k||_1 <= r, in lexicographic order."""
    if n < 1 or r < 0:
        raise ValueError("need n >= 1 and r >= 0")
    out = []

    def rec(prefix, budget):
        if len(prefix) == n - 1:
            for v in range(-budget, budget + 1):
                out.append(MultiIndex(tuple(prefix) + (v,)))
            return
        for v in range(-budget, budget + 1):
            rec(prefix + [v], budget - abs(v))

    rec([], r)
    return out


@dataclasses.dataclass(frozen=True)
class GapResult:
    """Outcome of the gap search over log-values a_i = log_{1/eps}|k.omega|."""

    alpha: float
    mu: float
    m_count: int
    occupied: np.ndarray      # sorted log-values of the nonzero |k.omega|
    band_lo: float            # largest occupied value below alpha (0 if none)
    band_hi: float            # smallest occupied value above alpha (1 if none)

    @property
    def effective_mu(self):
        """Width of the empty band above alpha; governs per-sweep gains and
        hence the iteration budget (the worst case 1/(4M+4) is far smaller)."""
        return self.band_hi - self.alpha


def find_gap(omega, epsilon: float, n: int, N: int) -> GapResult:
    """Lowest width-mu slot [alpha, alpha+mu] in [mu, 1/4] free of log-values.

    mu = 1/(4M+4) with M the number of multi-indices of norm <= N+1; exact
    resonances (k.omega = 0) carry no log-value and are excluded.
    """
    omega = np.asarray(omega, dtype=float)
    idx = enumerate_multi_indices(n, N + 1)
    m_count = len(idx)
    mu = 1.0 / (4 * m_count + 4)
    log_inv_eps = math.log(1.0 / epsilon)
    logs = []
    for k in idx:
        v = abs(k.dot(omega))
        if v != 0.0:
            logs.append(math.log(v) / log_inv_eps)
    occ = np.array(sorted(logs))

    alpha = None
    for i in range(1, m_count + 1):
        lo = i * mu
        hi = (i + 1) * mu
        if not np.any((occ >= lo) & (occ <= hi)):
            alpha = lo
            break
    if alpha is None:  # pigeonhole guarantees a free slot
        raise RuntimeError("no free gap slot found; this cannot happen")

    above = occ[occ > alpha]
    below = occ[occ < alpha]
    band_hi = float(above[0]) if above.size else 1.0
    band_lo = float(below[-1]) if below.size else 0.0
    return GapResult(alpha=alpha, mu=mu, m_count=m_count, occupied=occ,
                     band_lo=band_lo, band_hi=band_hi)


def almost_resonant_set(omega, epsilon: float, alpha: float, N: int):
    """R = {k : |k.omega| <= eps^-alpha, ||k|| <= N+1} in enumeration order."""
    omega = np.asarray(omega, dtype=float)
    thresh = epsilon ** (-alpha)
    return [k for k in enumerate_multi_indices(len(omega), N + 1)
            if abs(k.dot(omega)) <= thresh]


def _xgcd(a, b):
    x, nx = 1, 0
    y, ny = 0, 1
    g, ng = a, b
    while ng:
        q = g // ng
        x, nx = nx, x - q * nx
        y, ny = ny, y - q * ny
        g, ng = ng, g - q * ng
    return x, y, g


class IntegerLattice:
    """Integer span of generator vectors, kept as a row-echelon (Hermite
    normal form) basis with exact integer arithmetic."""

    def __init__(self, dim: int, generators=()):
        self.dim = dim
        self._rows: list = []
        for g in generators:
            self.add(g)

    @staticmethod
    def _pivot(row):
        for j, v in enumerate(row):
            if v:
                return j
        return None

    def add(self, vec):
        v = [int(x) for x in vec]
        if len(v) != self.dim:
            raise ValueError("generator has wrong dimension")
        for _ in range(self.dim + 1):
            j = self._pivot(v)
            if j is None:
                self._normalise()
                return
            # find the row owning pivot column j, if any
            owner = None
            for i, row in enumerate(self._rows):
                pj = self._pivot(row)
                if pj == j:
                    owner = i
                    break
                if pj > j:
                    break
            if owner is None:
                if v[j] < 0:
                    v = [-x for x in v]
                pos = 0
                while pos < len(self._rows) and self._pivot(self._rows[pos]) < j:
                    pos += 1
                self._rows.insert(pos, v)
                self._normalise()
                return
            row = self._rows[owner]
            a, b = row[j], v[j]
            if b % a == 0:
                q = b // a
                v = [x - q * y for x, y in zip(v, row)]
            else:
                x, y, g = _xgcd(a, b)
                new_row = [x * r + y * w for r, w in zip(row, v)]
                v = [(a // g) * w - (b // g) * r for r, w in zip(row, v)]
                self._rows[owner] = new_row
        raise RuntimeError("lattice insertion failed to terminate")

    def _normalise(self):
        # make pivots positive and reduce pivot columns in the other rows
        for i, row in enumerate(self._rows):
            j = self._pivot(row)
            if row[j] < 0:
                self._rows[i] = [-x for x in row]
        for i in range(len(self._rows) - 1, -1, -1):
            j = self._pivot(self._rows[i])
            a = self._rows[i][j]
            for ii in range(i):
                b = self._rows[ii][j]
                q = b // a
                if q:
                    self._rows[ii] = [x - q * y
                                      for x, y in zip(self._rows[ii], self._rows[i])]

    def __contains__(self, vec):
        v = [int(x) for x in (vec.k if isinstance(vec, MultiIndex) else vec)]
        if len(v) != self.dim:
            return False
        rows_by_pivot = {self._pivot(r): r for r in self._rows}
        for j in range(self.dim):
            if v[j] == 0:
                continue
            row = rows_by_pivot.get(j)
            if row is None or v[j] % row[j] != 0:
                return False
            q = v[j] // row[j]
            v = [x - q * y for x, y in zip(v, row)]
        return True

    @property
    def basis(self):
        """The HNF rows (tuples); empty for the trivial lattice."""
        return tuple(tuple(r) for r in self._rows)

    @property
    def rank(self):
        return len(self._rows)


def modify_frequencies(R, omega, epsilon: float, alpha: float):
    """Minimal-norm shift theta with k.(omega+theta) = 0 on a maximal
    independent subset of R; returns (theta, varpi, basis)."""
    omega = np.asarray(omega, dtype=float)
    n = len(omega)
    basis = []
    ortho = []
    for k in R:
        if k.norm == 0:
            continue
        v = np.array(k.k, dtype=float)
        r = v.copy()
        for b in ortho:
            r -= np.dot(r, b) * b
        if np.linalg.norm(r) > 1e-9 * np.linalg.norm(v):
            basis.append(k)
            ortho.append(r / np.linalg.norm(r))
    if not basis:
        return np.zeros(n), omega.copy(), []
    B = np.array([k.k for k in basis], dtype=float)
    rhs = -(B @ omega)
    theta, *_ = np.linalg.lstsq(B, rhs, rcond=None)
    varpi = omega + theta
    return theta, varpi, basis


def module_membership(k: MultiIndex, data: "ResonanceData") -> bool:
    """True iff k is an integer combination of the almost-resonant set."""
    return k in data.lattice


def _class_key(k: MultiIndex):
    return (k.norm, k.k)


def representatives(data: "ResonanceData", N: int):
    """K = minimal-norm representatives (norm <= N) of Z^n / M, closed under
    negation, ties broken lexicographically."""
    members = enumerate_multi_indices(len(data.omega), N)
    classes = []  # list of lists
    for k in members:
        for cls in classes:
            if (k - cls[0]) in data.lattice:
                cls.append(k)
                break
        else:
            classes.append([k])
    reps = {}
    assigned = {}
    for cls in classes:
        key0 = min(_class_key(k) for k in cls)
        if key0 in assigned:
            continue
        rep = min(cls, key=_class_key)
        neg_cls = None
        for other in classes:
            if (other[0] + cls[0]) in data.lattice:
                neg_cls = other
                break
        if neg_cls is cls and rep.norm > 0:
            # a self-negated nonzero class cannot have a negation-consistent
            # single representative; keep both signs
            reps[rep.k] = rep
            reps[(-rep).k] = -rep
            assigned[key0] = True
            continue
        reps[rep.k] = rep
        assigned[key0] = True
        if neg_cls is not None:
            neg_key = min(_class_key(k) for k in neg_cls)
            if neg_key not in assigned:
                reps[(-rep).k] = -rep
                assigned[neg_key] = True
    out = sorted(reps.values(), key=_class_key)
    return out


def reduce_to_representative(k: MultiIndex, data: "ResonanceData", radius=None):
    """Minimal-norm element of k + M by bounded search over integer
    combinations of the HNF basis (ties broken lexicographically)."""
    rows = data.lattice.basis
    if not rows:
        return k
    if radius is None:
        radius = k.norm + 2
    import itertools

    best = k
    for coeffs in itertools.product(range(-radius, radius + 1), repeat=len(rows)):
        cand = tuple(k.k[i] - sum(c * r[i] for c, r in zip(coeffs, rows))
                     for i in range(len(k.k)))
        m = MultiIndex(cand)
        if _class_key(m) < _class_key(best):
            best = m
    if (k - best) not in data.lattice:
        raise RuntimeError("representative reduction left the class")
    return best


@dataclasses.dataclass(frozen=True)
class ResonanceData:
    """Everything derived from (omega, epsilon, N): gap, R, shifts, module."""

    epsilon: float
    omega: np.ndarray
    N: int
    gap: GapResult
    R: tuple
    basis: tuple
    theta: np.ndarray
    varpi: np.ndarray
    lattice: IntegerLattice
    K_set: tuple

    @property
    def theta_norm_scaled(self):
        """||theta|| * eps^alpha, the empirical stand-in for the shift-size
        constant."""
        return float(np.linalg.norm(self.theta)) * self.epsilon ** self.gap.alpha

    @property
    def n(self):
        return len(self.omega)

    def varpi_block(self, j: int) -> float:
        """Modified frequency of block j (0 for the slow block)."""
        return 0.0 if j == 0 else float(self.varpi[j - 1])

    def theta_block(self, j: int) -> float:
        return 0.0 if j == 0 else float(self.theta[j - 1])

    def k_dot_varpi(self, k: MultiIndex) -> float:
        return k.dot(self.varpi)

    def in_module(self, k: MultiIndex) -> bool:
        return k in self.lattice

    def diagonal_rep(self, j: int) -> MultiIndex:
        """Representative in K of the class of <j>."""
        unit = MultiIndex.unit(j, self.n)
        for k in self.K_set:
            if (k - unit) in self.lattice:
                return k
        raise RuntimeError(f"no representative of <{j}> in K")


def build_resonance_data(omega, epsilon: float, N: int) -> ResonanceData:
    """Run the full pipeline: gap, R, modified frequencies, module, K."""
    omega = np.asarray(omega, dtype=float)
    n = len(omega)
    gap = find_gap(omega, epsilon, n, N)
    R = almost_resonant_set(omega, epsilon, gap.alpha, N)
    theta, varpi, basis = modify_frequencies(R, omega, epsilon, gap.alpha)
    lattice = IntegerLattice(n, (k.k for k in R if k.norm > 0))
    data = ResonanceData(
        epsilon=epsilon, omega=omega, N=N, gap=gap, R=tuple(R),
        basis=tuple(basis), theta=theta, varpi=varpi, lattice=lattice,
        K_set=(),
    )
    data = dataclasses.replace(data, K_set=tuple(representatives(data, N)))

    # construction-time sanity: 0 in R, negation closure, exactness on R
    assert any(k.norm == 0 for k in R)
    kset = {k.k for k in R}
    assert all((-k).k in kset for k in R)
    tol = 1e-10 / epsilon
    for k in R:
        assert abs(k.dot(varpi)) <= tol, "modified frequencies not resonant on R"
    return data
