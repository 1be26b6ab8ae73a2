"""Exception hierarchy shared by every module of the package."""


class DslpError(Exception):
    """Base class for all errors raised by this package."""


# polynomials and rational functions
class ZeroPolynomial(DslpError):
    pass


class ConstantPolynomial(DslpError):
    pass


class PoleOnEvaluationPoint(DslpError):
    pass


class ImproperTransferFunction(DslpError):
    pass


class AlgebraicLoop(DslpError):
    pass


class DimensionMismatch(DslpError, ValueError):
    pass


# signals
class ZeroInitialState(DslpError, ValueError):
    pass


class NonMaximalLength(DslpError):
    pass


class NegativeSigma(DslpError, ValueError):
    pass


class EmptySignal(DslpError, ValueError):
    pass


class NonFiniteSignal(DslpError, ValueError):
    pass


class LengthMismatch(DslpError, ValueError):
    pass


# loops and stability
class UnstableLoop(DslpError):
    def __init__(self, message, poles=()):
        super().__init__(message)
        self.poles = tuple(poles)


class IllPosedLoop(DslpError):
    pass


# estimation
class InfeasibleConstraints(DslpError):
    pass


class SingularRk(DslpError):
    def __init__(self, omega, cond):
        super().__init__(f"R(e^jw) is singular at w={omega:.6g} (cond={cond:.3g})")
        self.omega = omega
        self.cond = cond


class SingularCorrection(DslpError):
    def __init__(self, omega):
        super().__init__(f"I + D_k G is singular at w={omega:.6g}")
        self.omega = omega


class IllPosedRealization(DslpError):
    pass


class SingularTransform(DslpError):
    pass


class NominalNotStabilized(DslpError):
    def __init__(self, message, poles=()):
        super().__init__(message)
        self.poles = tuple(poles)


class UnstableFilter(DslpError):
    def __init__(self, message, poles=()):
        super().__init__(message)
        self.poles = tuple(poles)


# metrics
class TooFewPoints(DslpError, ValueError):
    pass


class ZeroReferenceValue(DslpError):
    pass


class SingularClosedLoop(DslpError):
    def __init__(self, omega):
        super().__init__(f"I - G K is singular at w={omega:.6g}")
        self.omega = omega


class IllPosedInterconnection(DslpError):
    pass


# harness
class ConfigError(DslpError):
    pass


class LengthTooShort(DslpError, ValueError):
    pass


class MalformedResults(DslpError):
    pass


class RankDeficientRegressor(UserWarning):
    """Warning: a least-squares regressor lost column rank; min-norm solution used."""
