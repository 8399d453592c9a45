"""Exception types raised by mwu_lab."""


class MWULabError(Exception):
    """Base class for all library errors."""


class GameValidationError(MWULabError, ValueError):
    """A game description violates a structural invariant."""


class ProfileError(MWULabError, ValueError):
    """A mixed or pure profile does not fit the game."""


class InadmissibleRate(MWULabError, ValueError):
    """A learning rate makes the update rule ill-defined."""


class DegenerateDenominator(MWULabError, ArithmeticError):
    """A Baum-Eagon block denominator is not strictly positive."""


class NegativeCoefficient(MWULabError, ValueError):
    """A polynomial that must have nonnegative coefficients does not."""


class PolynomialTooLarge(MWULabError, ValueError):
    """Symbolic expansion would exceed the configured monomial cap."""


class NoSignChange(MWULabError, ValueError):
    """A bracket does not straddle a root."""


class CollapsedOrbit(MWULabError, ArithmeticError):
    """A candidate periodic orbit has coinciding points."""


class DegenerateMap(MWULabError, ValueError):
    """F^k(x) - x vanishes on most of the grid, so roots are not isolated."""


class AsymmetricGame(MWULabError, ValueError):
    """A symmetric reduction was requested for a game that is not symmetric."""
