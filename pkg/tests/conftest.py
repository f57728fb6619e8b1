import os

import numpy as np
import pytest

from oscisep import _kernels
from oscisep.model import BlockVector, SystemConfig, ZeroPotential, example_potential


def reference_eps_omega(eps):
    return np.array([1.0, 1.0 + eps ** 2, 1.0 + eps, 1.0 + eps ** 0.75,
                     1.0 + eps ** (2.0 / 3.0), 1.0 + eps ** 0.5, 2.0])


def reference_system(eps, a, monitor_radius=2.0):
    return SystemConfig(n=7, dims=(1,) * 8, epsilon=eps,
                        omega=reference_eps_omega(eps) / eps,
                        potential=example_potential(a, eps),
                        monitor_radius=monitor_radius)


def reference_state(eps):
    q = BlockVector([[1.0], [0.3 * eps], [0.4 * eps], [0.7 * eps],
                     [-1.1 * eps], [0.4 * eps], [-0.6 * eps], [-0.7 * eps]])
    p = BlockVector([[-0.2], [0.6], [0.7], [-0.9], [-0.9], [0.4], [-1.1], [0.8]])
    return p, q


#: widely spaced eps*omega list with no almost-resonances at these scales
GENERIC_EPS_OMEGA = np.array([1.0, 1.1, 1.3, 1.7, 1.9, 2.3, 2.9])


def generic_free_system(eps=0.005):
    """Decoupled oscillators (U = 0) with non-resonant frequencies."""
    return SystemConfig(n=7, dims=(1,) * 8, epsilon=eps,
                        omega=GENERIC_EPS_OMEGA / eps,
                        potential=ZeroPotential(dims=(1,) * 8))


def long_tier_enabled():
    """Multi-1e9-step runs need the compiled kernels (or an explicit opt-in)."""
    return _kernels.HAVE_COMPILED or bool(os.environ.get("OSCISEP_LONG"))


requires_long_tier = pytest.mark.skipif(
    not long_tier_enabled(),
    reason="long-tier run needs the compiled kernels (set OSCISEP_LONG=1 to force)")
