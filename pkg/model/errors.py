class BufsimError(Exception):
    """Base class for every error raised by the simulator."""


class SchedulingError(BufsimError):
    pass


class ConfigError(BufsimError, ValueError):
    """Invalid scenario or model configuration; `key` names the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class AnalysisError(BufsimError, ValueError):
    pass


class ReportMismatchError(BufsimError):
    pass
