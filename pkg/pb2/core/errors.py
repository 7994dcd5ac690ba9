"""Exception hierarchy shared by every pb2 module."""


class PB2Error(Exception):
    """Base class for all errors raised by pb2."""


class MissingDimension(PB2Error, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"config is missing dimension {self.name!r}"


class OutOfBounds(PB2Error, ValueError):
    pass


class DimMismatch(PB2Error, ValueError):
    pass


class TimeOrder(PB2Error, ValueError):
    pass


class NumericalFailure(PB2Error):
    pass


class NoCandidates(PB2Error):
    pass


class Unsupported(PB2Error):
    pass


class TrainerFailure(PB2Error):
    def __init__(self, agent_id: int, round_: int, cause: BaseException):
        super().__init__(f"trainer failed for agent {agent_id} at round {round_}: {cause}")
        self.agent_id = agent_id
        self.round = round_


class StorageError(PB2Error):
    pass


class ParseError(PB2Error):
    def __init__(self, path, line_number: int, reason: str):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = path
        self.line_number = line_number


class ResumeMismatch(PB2Error):
    pass


class ConfigError(PB2Error):
    pass
