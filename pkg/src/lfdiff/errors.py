"""Exception types shared across the package."""


class LFError(ValueError):
    """Invalid input to a light-field operation (shape, range, index)."""


class DegenerateRegionError(LFError):
    """Region has too little texture for displacement estimation."""


class NumericalAbort(RuntimeError):
    """Non-finite values appeared during sampling or training."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({extra})"
