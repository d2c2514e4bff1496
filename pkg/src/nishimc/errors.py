"""Exception hierarchy shared by all nishimc modules."""


class NishimcError(Exception):
    """Base class for all package-specific errors."""


# prior construction
class EmptySupport(NishimcError):
    pass


class NegativeWeight(NishimcError):
    pass


class DuplicateAtom(NishimcError):
    pass


# scalar channel / solvers
class DegenerateWeight(NishimcError):
    pass


class NoConvergence(NishimcError):
    pass


# covariance algebra
class CriticalPoint(NishimcError):
    """Requested covariance at a pole of the closed form (mu1 or mu2 == 1)."""


class Singular(NishimcError):
    pass


# model / sampler / observables
class BadDimension(NishimcError):
    pass


class TooLarge(NishimcError):
    pass


class BadF(NishimcError):
    pass


class InsufficientData(NishimcError):
    pass


# harness
class ConfigError(NishimcError):
    pass


class IoError(NishimcError):
    pass
