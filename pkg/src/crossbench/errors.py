"""Exception hierarchy shared across the workbench."""

from __future__ import annotations


class CrossbenchError(Exception):
    """Base class for all workbench errors."""


class ValidationError(CrossbenchError, ValueError):
    """Input data violates a documented invariant."""


class QuestionnaireError(ValidationError):
    pass


class PersonaParseError(ValidationError):
    """A persona document is malformed or structurally incomplete."""


class ManifestError(CrossbenchError):
    """Clip tree is incomplete; ``problems`` lists every missing item."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("manifest incomplete: " + "; ".join(self.problems))


class ContractViolation(CrossbenchError, ValueError):
    """A state-machine precondition was broken by the caller."""


class ReplyFormatError(ValidationError):
    """An oracle reply could not be parsed into the expected fields."""


class ConfigError(CrossbenchError):
    """Fatal configuration problem (e.g. missing credential)."""


class TransportError(CrossbenchError):
    """Retryable failure talking to a remote oracle."""


class OracleUnavailable(CrossbenchError):
    """Transport kept failing after all retries."""


class TrialError(CrossbenchError):
    """A trial could not be completed; ``log`` holds the partial trial."""

    def __init__(self, message: str, log=None):
        super().__init__(message)
        self.log = log


class PersonaGenerationError(CrossbenchError):
    pass


class ExtractionError(CrossbenchError):
    """External media tool failed; ``output`` carries its stderr/stdout."""

    def __init__(self, message: str, output: str = ""):
        super().__init__(message if not output else f"{message}\n{output}")
        self.output = output


class SchemaError(ValidationError):
    pass


class DataError(ValidationError):
    pass


class DesignError(CrossbenchError, ValueError):
    """Statistical design cannot support the requested analysis."""


class PreconditionError(CrossbenchError, ValueError):
    pass
