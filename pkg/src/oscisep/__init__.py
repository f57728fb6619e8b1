"""oscisep: long-time energy separation in multiscale oscillatory
Hamiltonian systems; simulation, resonance analysis and modulated
Fourier expansions."""

__version__ = "0.1.0"
