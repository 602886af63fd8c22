class CommuneError(Exception):
    """Base class for every error raised by this package."""


class GraphError(CommuneError, ValueError):
    pass


class ParseError(CommuneError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SpectralError(CommuneError, RuntimeError):
    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (max residual {residual:.3e})"
        super().__init__(message)


class TrainingError(CommuneError, RuntimeError):
    """Raised when training produces a non-finite loss or activation."""

    def __init__(self, message, epoch=None, losses=None):
        self.epoch = epoch
        self.losses = list(losses) if losses is not None else []
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
