"""Physical model parameters and their standing assumptions."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class ModelParams:
    """Constants of the compressible co-rotation FENE model.

    The Mach, Deborah and coupling constants as well as the polymer
    relaxation constants are normalised to one and not stored.

    Parameters
    ----------
    mu : float
        Shear viscosity, ``mu > 0``.
    mu_prime : float
        Second viscosity, with ``2 * mu + mu_prime > 0``.
    gamma : float
        Adiabatic exponent of the pressure law ``P = a * rho**gamma``, ``gamma >= 1``.
    a : float
        Pressure prefactor, ``a > 0``.
    k : float
        Exponent of the FENE potential ``U(R) = -k log(1 - |R|^2)``, ``k > 0``.
    d : int
        Spatial dimension (2 for nonlinear runs, 2 or 3 for the linear analysis).
    """

    mu: float = 1.0
    mu_prime: float = 0.0
    gamma: float = 2.0
    a: float = 1.0
    k: float = 1.0
    d: int = 2

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise ParameterError(f"mu must be positive, got {self.mu}")
        if not 2.0 * self.mu + self.mu_prime > 0:
            raise ParameterError(
                f"2*mu + mu_prime must be positive, got {2.0 * self.mu + self.mu_prime}")
        if not self.gamma >= 1:
            raise ParameterError(f"gamma must be >= 1, got {self.gamma}")
        if not self.a > 0:
            raise ParameterError(f"a must be positive, got {self.a}")
        if not self.k > 0:
            raise ParameterError(f"k must be positive, got {self.k}")
        if self.d not in (2, 3):
            raise ParameterError(f"d must be 2 or 3, got {self.d}")

    @property
    def sound_speed_sq(self) -> float:
        """Linearised pressure coefficient ``P'(1) = a * gamma``."""
        return self.a * self.gamma

    @property
    def nu(self) -> float:
        """Longitudinal viscosity ``2 * mu + mu_prime``."""
        return 2.0 * self.mu + self.mu_prime
