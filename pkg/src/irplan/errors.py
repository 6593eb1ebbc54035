"""Exception hierarchy shared across the package."""

from __future__ import annotations


class IRPlanError(Exception):
    """Base class for all errors raised by irplan."""


class ParseError(IRPlanError, ValueError):
    pass


class MissingField(ParseError):
    def __init__(self, name: str):
        super().__init__(f"missing field: {name}")
        self.name = name


class MalformedValue(ParseError):
    def __init__(self, name: str, value: object):
        super().__init__(f"field {name!r} is not a Boolean literal: {value!r}")
        self.name = name
        self.value = value


class MalformedObject(ParseError):
    pass


class UnrecognizedLine(ParseError):
    def __init__(self, line: str):
        super().__init__(f"not an alert record: {line!r}")
        self.line = line


class SchemaError(IRPlanError, ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class TemplateError(SchemaError):
    pass


class EpisodeFinished(IRPlanError):
    pass


class MissingContext(IRPlanError, KeyError):
    def __init__(self, section: str):
        super().__init__(section)
        self.section = section

    def __str__(self) -> str:
        return f"prompt context lacks section: {self.section}"


class BackendError(IRPlanError):
    pass


class Transport(BackendError):
    def __init__(self, status: int | None, body: str):
        super().__init__(f"transport failure (status={status}): {body[:200]}")
        self.status = status
        self.body = body


class Timeout(BackendError):
    pass


class UnscriptedPrompt(BackendError, KeyError):
    def __init__(self, fingerprint: str):
        super().__init__(fingerprint)
        self.fingerprint = fingerprint

    def __str__(self) -> str:
        return f"no scripted response for prompt {self.fingerprint[:16]}"


class CassetteMiss(BackendError):
    pass


class SimulationParseError(IRPlanError):
    pass


class NoViableCandidates(IRPlanError):
    pass


class EmptyCandidates(IRPlanError, ValueError):
    pass


class EmptySample(IRPlanError, ValueError):
    pass


class JudgmentMismatch(IRPlanError, ValueError):
    pass


class ConfigError(IRPlanError, ValueError):
    pass
