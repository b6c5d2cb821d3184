"""Exception hierarchy shared by every module."""


class GenfunError(Exception):
    """Base class for all library errors."""


class InvalidArgument(GenfunError, ValueError):
    pass


class UnsupportedOrder(GenfunError, ValueError):
    """Requested derivative exceeds the declared smoothness."""


class OrderViolation(GenfunError):
    """A kernel moment that should vanish does not.

    ``multi_index`` names the offending moment.
    """

    def __init__(self, message, multi_index=None, value=None):
        super().__init__(message)
        self.multi_index = multi_index
        self.value = value


class IntegrandError(GenfunError, FloatingPointError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class AssumptionViolation(GenfunError):
    """Model does not satisfy a structural requirement (e.g. continuous F_x)."""


class NotInPhiC(AssumptionViolation):
    """Conditioning density vanishes where a transformed test function needs it."""


class DivergenceSuspected(GenfunError):
    """Partition-of-unity tail did not decay within the member budget."""


class NumericFailure(GenfunError, ArithmeticError):
    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class UnsupportedCombination(GenfunError):
    """No oracle exists for the requested model/pairing combination."""


class ConfigError(GenfunError, ValueError):
    pass
