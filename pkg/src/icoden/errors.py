"""Exception types raised across the package."""


class ICODENError(Exception):
    """Base class for all package errors."""


class DataError(ICODENError, ValueError):
    """Malformed input file or a violated observation invariant."""


class SolverError(ICODENError, ArithmeticError):
    """The ODE integrator hit its step cap or produced a non-finite state."""


class LikelihoodError(ICODENError, ArithmeticError):
    """A likelihood term is undefined (non-monotone hazards, zero probability)."""


class TrainingError(ICODENError, ArithmeticError):
    """Training produced a non-finite loss."""


class ConfigError(ICODENError, ValueError):
    """Invalid or unknown configuration values."""
