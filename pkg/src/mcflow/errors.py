"""Exception types raised by the library."""


class McflowError(Exception):
    """Base class for all library errors."""


class NotLipschitz(McflowError, ValueError):
    """Input field fails the 1-Lipschitz check required by redistancing."""

    def __init__(self, report):
        self.report = report
        super().__init__(
            f"field is not 1-Lipschitz: worst excess {report.worst_excess:.3e} "
            f"between cells {report.worst_pair}"
        )


class BadTheta(McflowError, ValueError):
    pass


class GeometryMismatch(McflowError, ValueError):
    pass


class WrongDimension(McflowError, ValueError):
    pass


class HypothesisViolated(McflowError, ValueError):
    """A lemma's hypothesis (e.g. eps <= R/8) does not hold for the requested point."""


class Extinct(McflowError):
    """A sign class became empty after diffusion.

    ``sign`` is ``"negative"`` when the negative set vanished and
    ``"positive"`` when the complement did.
    """

    def __init__(self, sign: str):
        self.sign = sign
        super().__init__(f"{sign} set is empty")


class PhaseVanished(McflowError):
    def __init__(self, labels):
        self.labels = list(labels)
        super().__init__(f"phases vanished: {self.labels}")
