class SpecError(ValueError):
    """Invalid model specification or term definition."""


class DataError(ValueError):
    """Malformed input data; the message names the file and cell."""


class LeakageError(ValueError):
    """A model term would read information from the held-out wave."""

    def __init__(self, terms, message=None):
        self.terms = list(terms)
        names = ", ".join(t.label() for t in self.terms)
        super().__init__(message or f"terms read the held-out wave: {names}")
