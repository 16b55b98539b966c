#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Exception types shared across the planner toolkit."""
from typing import Any, Dict, Optional


class HlasError(Exception):
    """Base class for toolkit errors."""


class DomainError(HlasError, ValueError):
    """A numerical precondition does not hold (singularity, out-of-range input)."""


class ConfigValidationError(HlasError, ValueError):
    """A config value failed validation. `field` is the dotted path of the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericalFailure(HlasError, RuntimeError):
    """Non-finite network output, loss or parameter."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)


class CheckpointMismatch(HlasError, ValueError):
    """Checkpoint does not match the configured architecture or observation scales."""


class OracleFailure(HlasError, AssertionError):
    """A self-check exceeded its tolerance."""
