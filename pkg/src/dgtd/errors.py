"""Exception types raised by the library."""


class DgtdError(Exception):
    """Base class for all library errors."""


class ErgodicityError(DgtdError):
    """The Markov chain has no unique, strictly positive stationary distribution."""


class RankError(DgtdError):
    """A feature matrix is not of full column rank."""


class ConnectivityError(DgtdError):
    """The communication graph is not connected."""


class SingularSystemError(DgtdError):
    """A linear system required by the model assumptions is singular."""


class ConsistencyError(DgtdError):
    """An identity that must hold by construction was violated numerically."""


class DivergenceError(DgtdError):
    """An iteration or integration left the configured stability bound."""


class ConfigError(DgtdError):
    """An experiment configuration failed validation."""
