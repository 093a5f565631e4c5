"""Pinned physical constants (SI)."""

HBAR = 1.0545718e-34        # J s
K_B = 1.380649e-23          # J / K
C_LIGHT = 2.99792458e8      # m / s
TWO_PI = 6.283185307179586
