"""Exception hierarchy shared across the package."""


class ReproError(Exception):
    """Base class for every error raised by repro_mcts."""


class ContractError(ReproError):
    """A caller broke a documented precondition."""


class ConfigError(ReproError, ValueError):
    """Invalid search or level configuration."""


class SpecError(ReproError, ValueError):
    """A sim-app or scripted-oracle file failed to parse or validate.

    ``issues`` holds every violation found, each prefixed with its location.
    """

    def __init__(self, issues):
        if isinstance(issues, str):
            issues = [issues]
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


class DeterminismError(ReproError):
    """State recovery by replay produced an observation that differs from the record."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SubtreeExhausted(ReproError):
    """No eligible child remains under a node."""


class RetryableParseError(ReproError, ValueError):
    """An oracle response did not match the required output grammar."""


class OracleError(ReproError):
    """Hard oracle failure; the iteration that triggered it is aborted."""


class TransportError(OracleError):
    pass


class AuthError(OracleError):
    pass


class RetryExhaustedError(OracleError):
    def __init__(self, message, attempts):
        super().__init__(message)
        self.attempts = attempts
