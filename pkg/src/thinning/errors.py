"""Exception hierarchy shared by the samplers and thinning maps."""


class ThinningError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ThinningError, ValueError):
    """A parameter lies outside the domain of the construction."""


class InsufficientAtoms(ThinningError):
    pass


class DegenerateMass(ThinningError):
    pass


class InsufficientLength(ThinningError):
    pass


class ShortfallAfterThinning(ThinningError):
    pass


class ZeroAtom(ThinningError, ValueError):
    pass


class DivergentNormalization(ThinningError):
    pass


class IndexOverflow(ThinningError):
    """The leader left the sampled window of points."""


class UnsupportedSpec(ThinningError, TypeError):
    pass


class ZeroSelection(ThinningError):
    """Every atom was deselected, so the entropy term is log(0)."""


class InsufficientData(ThinningError):
    pass
