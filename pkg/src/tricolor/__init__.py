"""Monte Carlo study of the disordered tricolored Z2 x Z2 lattice gauge theory."""

__version__ = "0.1.0"
