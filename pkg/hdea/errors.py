class HDEAError(Exception):
    """Base class for every categorized failure raised by hdea."""

    category = "error"
    exit_code = 1


class ConfigurationError(HDEAError):
    category = "configuration"
    exit_code = 2


class ParameterError(ConfigurationError, ValueError):
    category = "parameter"


class RepresentationError(HDEAError, ValueError):
    category = "representation"
    exit_code = 3


class LandscapeParseError(HDEAError, ValueError):
    category = "parse"
    exit_code = 4

    def __init__(self, message: str, position: str):
        super().__init__(f"{message} (at {position})")
        self.position = position


class EvaluationError(HDEAError):
    category = "evaluation"
    exit_code = 5

    def __init__(self, message: str, stderr_excerpt: str = ""):
        if stderr_excerpt:
            message = f"{message}\nEvaluator stderr:\n{stderr_excerpt}"
        super().__init__(message)
        self.stderr_excerpt = stderr_excerpt


class ProtocolError(HDEAError):
    category = "protocol"
    exit_code = 6


class StatisticsError(HDEAError, ValueError):
    category = "statistics"
    exit_code = 7
