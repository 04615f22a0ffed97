"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class TexmlError(Exception):
    """Base class for all conversion errors."""


class Located(TexmlError):
    """An error that may carry a 1-based source line and column."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.message = message
        self.line = line
        self.column = column

    def where(self) -> str:
        if self.line is None:
            return ""
        return f"{self.line}:{self.column}"

    def __str__(self) -> str:
        loc = self.where()
        return f"{loc}: {self.message}" if loc else self.message


# tokenizer

class TokenizerError(Located):
    pass


class InvalidCharacter(TokenizerError):
    pass


class UnterminatedControlSequence(TokenizerError):
    pass


# engine

class EngineError(Located):
    pass


class BadParameterIndex(EngineError):
    pass


class RunawayArgument(EngineError):
    pass


class UnbalancedConditional(EngineError):
    pass


class UnbalancedGroup(EngineError):
    pass


class UndefinedControlSequence(EngineError):
    pass


class MissingUnit(EngineError):
    pass


class NumberTooLarge(EngineError):
    pass


class ArithmeticOverflow(EngineError):
    pass


class ExpansionLimitExceeded(EngineError):
    pass


class ConversionTimeout(EngineError):
    pass


class ProfilerDisabled(TexmlError):
    pass


class FatalConversionError(Located):
    """Wraps the unrecoverable error that stopped a conversion."""

    def __init__(self, cause: Exception, line: int | None = None, column: int | None = None):
        super().__init__(f"{type(cause).__name__}: {getattr(cause, 'message', cause)}", line, column)
        self.cause = cause


# bindings

class BindingParseError(TexmlError):
    def __init__(self, file: str, line: int | None, message: str):
        super().__init__(f"{file}:{line if line is not None else '?'}: {message}")
        self.file = file
        self.line = line
        self.message = message


class ConstructorTemplateInvalid(TexmlError):
    pass


# document model

class SchemaViolation(TexmlError):
    pass


# math

class MathError(TexmlError):
    pass


class UnbalancedScripts(MathError):
    pass


class UnknownMathCommand(MathError):
    pass


# graphics

class GraphicsError(TexmlError):
    pass


class NoCurrentPoint(GraphicsError):
    pass


class EmptyPath(GraphicsError):
    pass


# postprocessing and packaging

class UnmappedElement(TexmlError):
    pass


class IoError(TexmlError):
    pass


class MetadataInvalid(TexmlError):
    pass


class ManifestCollision(TexmlError):
    pass


class NotAZip(TexmlError):
    pass
