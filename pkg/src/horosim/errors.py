"""Exception types raised by horosim."""

from __future__ import annotations

import numpy as np


class HorosimError(Exception):
    """Base class for all package errors."""


class LatticeError(HorosimError, ValueError):
    pass


class FieldOverflowError(HorosimError, ArithmeticError):
    """A field value makes an exponential overflow float64."""

    def __init__(self, message: str, site: int | None = None):
        super().__init__(message if site is None else f"{message} (site {site})")
        self.site = site


class FactorizationError(HorosimError, np.linalg.LinAlgError):
    """Symmetric factorization failed; ``site`` is the first offending pivot."""

    def __init__(self, message: str, site: int | None = None):
        super().__init__(message if site is None else f"{message} (site {site})")
        self.site = site


class ObservableError(HorosimError, FloatingPointError):
    """A chain produced a non-finite observable value."""

    def __init__(self, name: str, sweep: int):
        super().__init__(f"observable {name!r} is not finite at sweep {sweep}")
        self.name = name
        self.sweep = sweep


class EffectiveSampleSizeError(HorosimError, RuntimeError):
    pass
