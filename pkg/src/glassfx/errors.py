"""Exception types shared across the package.

Every error carries the name of the module that raised it so the command
line front end can print module-tagged messages.
"""


class GlassfxError(Exception):
    """Base class for all package errors."""

    module = "glassfx"

    def __str__(self):
        return f"{self.module}: {super().__str__()}"


class MarketDataError(GlassfxError, ValueError):
    module = "market-data"


class QuoteFormatError(MarketDataError):
    """A quote file line could not be parsed."""

    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class NoOriginError(MarketDataError):
    """No admissible time origin exists for the requested lag."""


class ObservableError(GlassfxError, ValueError):
    module = "observables"


class ModelError(GlassfxError, ValueError):
    module = "trapmodel"


class GridError(ModelError):
    """The price grid is too coarse or too narrow for the requested time."""


class SimulationError(GlassfxError, ValueError):
    module = "ctrw-sim"


class FitError(GlassfxError, ValueError):
    module = "fitkit"
