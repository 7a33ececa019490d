# core/errors.py
from __future__ import annotations
from typing import Optional


class AnchorLabError(Exception):
    """Base de todos os erros da biblioteca."""


class ParameterError(AnchorLabError, ValueError):
    pass


class ContractViolation(AnchorLabError, ValueError):
    pass


class ConfigError(AnchorLabError, ValueError):
    pass


class ParseError(AnchorLabError, ValueError):
    pass


class UnsupportedOperatorError(AnchorLabError, NotImplementedError):
    pass


class ConsistencyError(AnchorLabError, RuntimeError):
    """Formas algebricamente equivalentes divergiram além da tolerância."""


class SingularSystemError(AnchorLabError, ArithmeticError):
    pass


class SynthesisError(SingularSystemError):
    def __init__(self, msg: str, column: Optional[int] = None):
        super().__init__(msg)
        self.column = column
