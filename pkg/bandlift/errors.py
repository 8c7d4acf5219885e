"""
Error handling utilities for BandLift.

This module provides the exception hierarchy used across the package, user-friendly
error messages for the command line, and the exit-code mapping of the CLI.
"""

import functools
import logging
import sys
import traceback
from typing import Any, Callable

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class BandLiftError(Exception):
    """Base exception for BandLift operations."""

    exit_code = EXIT_USAGE
    error_type = "unexpected"

    def __init__(
        self,
        message: str,
        user_message: str | None = None,
        suggestions: list[str] | None = None,
    ):
        self.user_message = user_message or message
        self.suggestions = suggestions or []
        super().__init__(message)


class ValidationError(BandLiftError):
    """Invalid arguments, shapes or configuration values."""

    error_type = "validation"


class UsageError(BandLiftError):
    """Command-line misuse."""

    error_type = "usage"


class AudioFileError(BandLiftError):
    """Unreadable, malformed or unsupported audio files."""

    exit_code = EXIT_DATA
    error_type = "audio_file"


class ManifestError(BandLiftError):
    """Dataset manifest problems."""

    exit_code = EXIT_DATA
    error_type = "manifest"


class CheckpointError(BandLiftError):
    """Checkpoint files that cannot be read or do not match the configuration."""

    exit_code = EXIT_DATA
    error_type = "checkpoint"


class NumericalError(BandLiftError):
    """Non-finite values during training or inference."""

    exit_code = EXIT_NUMERICAL
    error_type = "numerical"

    def __init__(
        self,
        message: str,
        snapshot: dict[str, Any] | None = None,
        user_message: str | None = None,
        suggestions: list[str] | None = None,
    ):
        self.snapshot = snapshot or {}
        super().__init__(message, user_message=user_message, suggestions=suggestions)


def get_friendly_error_message(
    error_type: str, details: str | None = None
) -> dict[str, Any]:
    """
    Get user-friendly error messages for common error types.

    Args:
        error_type: Type of error (e.g., 'audio_file', 'checkpoint', etc.)
        details: Additional error details

    Returns:
        Dict with 'message' and 'suggestions' keys
    """
    error_messages = {
        "validation": {
            "message": "Some input values are not valid for this operation.",
            "suggestions": [
                "Check sample rates: inputs must lie between 4 kHz and 48 kHz",
                "Check that the config file matches the preset you trained with",
                "Run with LOG_LEVEL=DEBUG to see the offending value",
            ],
        },
        "usage": {
            "message": "The command was called with missing or conflicting options.",
            "suggestions": [
                "Run 'bandlift <command> --help' for the list of options",
                "Pass rates as a comma-separated list, e.g. --rates 4000,8000",
            ],
        },
        "audio_file": {
            "message": "We couldn't read one of the audio files.",
            "suggestions": [
                "Only mono WAV files (PCM 16-bit or 32-bit float) are supported",
                "Downmix multi-channel recordings before processing",
                "Check that the path exists and is readable",
            ],
        },
        "manifest": {
            "message": "The dataset manifest could not be used.",
            "suggestions": [
                "List one audio path per line, optionally followed by a TAB and a duration",
                "Relative paths are resolved against the manifest's directory",
                "Make sure at least one listed file is a readable 48 kHz WAV",
            ],
        },
        "checkpoint": {
            "message": "The checkpoint does not match the expected model.",
            "suggestions": [
                "Resume with the same config file that produced the checkpoint",
                "Check that the file was written completely",
            ],
        },
        "numerical": {
            "message": "Training produced non-finite values and was stopped.",
            "suggestions": [
                "Lower the learning rate in the experiment config",
                "Resume from the last good checkpoint",
                "Inspect the diagnostic snapshot in the log",
            ],
        },
    }

    error_info = error_messages.get(
        error_type,
        {
            "message": f"An unexpected error occurred: {details or 'Unknown error'}",
            "suggestions": ["Run again with LOG_LEVEL=DEBUG and report the traceback"],
        },
    )

    if details and error_type in error_messages:
        error_info = {**error_info, "details": details}

    return error_info


def show_error_with_help(error_type: str, details: str | None = None) -> None:
    """
    Print a user-friendly error message with helpful suggestions to stderr.

    Args:
        error_type: Type of error
        details: Additional error details
    """
    error_info = get_friendly_error_message(error_type, details)

    print(f"error: {error_info['message']}", file=sys.stderr)
    for suggestion in error_info["suggestions"]:
        print(f"  - {suggestion}", file=sys.stderr)
    if "details" in error_info:
        print(f"  details: {error_info['details']}", file=sys.stderr)


def log_error_for_support(error: Exception, context: str | None = None) -> None:
    """
    Log error details for support while keeping user messages friendly.

    Args:
        error: The exception that occurred
        context: Additional context about where the error occurred
    """
    error_details = {
        "error_type": type(error).__name__,
        "error_message": str(error),
        "context": context,
    }
    if isinstance(error, NumericalError):
        error_details["snapshot"] = error.snapshot

    logger.error(
        f"BandLift error in {context}: {error}", exc_info=True, extra=error_details
    )


def _show_traceback_if_debugging() -> None:
    # bandlift.config imports this module
    from bandlift.config import get_config

    if get_config().debug_mode:
        traceback.print_exc(file=sys.stderr)


def handle_common_errors(func: Callable[..., int]) -> Callable[..., int]:
    """
    Decorator turning exceptions of a CLI command into friendly messages and exit codes.
    """

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> int:
        try:
            return func(*args, **kwargs)
        except BandLiftError as e:
            show_error_with_help(e.error_type, e.user_message)
            _show_traceback_if_debugging()
            log_error_for_support(e, func.__name__)
            return e.exit_code
        except FileNotFoundError as e:
            show_error_with_help("audio_file", str(e))
            _show_traceback_if_debugging()
            log_error_for_support(e, func.__name__)
            return EXIT_DATA
        except Exception as e:
            show_error_with_help("unexpected", str(e))
            _show_traceback_if_debugging()
            log_error_for_support(e, func.__name__)
            return EXIT_DATA

    return wrapper
