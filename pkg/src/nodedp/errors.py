"""Exception types shared across the package."""


class NodeDPError(Exception):
    """Base class for package errors."""


class ParseError(NodeDPError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class GraphIntegrityError(NodeDPError):
    """Graph structure violates an invariant (dangling edge, duplicate id, ...)."""


class ConfigError(NodeDPError):
    """Invalid configuration value."""


class AccountantOverflowError(NodeDPError):
    """A privacy bound became non-finite; raised instead of returning infinity."""


class CalibrationError(NodeDPError):
    """Target epsilon unreachable within the sigma search bracket."""


class TrainingDivergedError(NodeDPError):
    """Loss became non-finite during training; carries the iteration index."""

    def __init__(self, iteration, message="loss became non-finite"):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
