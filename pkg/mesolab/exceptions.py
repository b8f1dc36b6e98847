from django.core.exceptions import ImproperlyConfigured

CONFIG_ERROR_EXIT = 2
NUMERICAL_ERROR_EXIT = 3
ACCEPTANCE_ERROR_EXIT = 4


class MesolabError(Exception):
    pass


class ConfigurationError(MesolabError, ImproperlyConfigured):
    """
    A preset, experiment id or measure that cannot be used as given.
    """


class NumericalError(MesolabError, ArithmeticError):
    pass


class DegenerateParameterError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    pass


class ResonanceError(NumericalError):
    pass


class FitError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class DeterminantError(NumericalError):
    pass


class EnvelopeError(NumericalError):
    """
    The rejection envelope fell below the target density; this is a bug in the
    envelope construction, never bad luck.
    """


class IndexOverflowError(NumericalError, OverflowError):
    pass


class PolynomialOverflowError(NumericalError, OverflowError):
    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(
            "p_{0} reached {1:.3e}; the recurrence overflowed".format(index, value)
        )


def exit_code_for(error):
    if isinstance(error, ImproperlyConfigured):
        return CONFIG_ERROR_EXIT
    if isinstance(error, NumericalError):
        return NUMERICAL_ERROR_EXIT
    return 1
