import hashlib
import json
import re
import sys
import traceback
from contextlib import contextmanager
from importlib.metadata import PackageNotFoundError
from importlib.metadata import version as pkg_version
from pathlib import Path
from typing import Any, Iterator, Literal, LiteralString, Optional, Sequence, Union

from .errors import MechanismError
from .log import Logger

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MAX_ITERS = 2
EXIT_VERIFICATION = 3
EXIT_UNEXPECTED = 4


def get_base_type(ann: Any) -> Any:
    """Recursively extract the base type from complex type annotations.

    Args:
        ann (Any): The type annotation to process.
    Returns:
        Any: The base type extracted from the annotation.
    """
    origin = getattr(ann, "__origin__", None)
    if origin is Optional:
        return get_base_type(ann.__args__[0])

    if origin is Union:
        non_none_args = [arg for arg in ann.__args__ if arg is not type(None)]
        if len(non_none_args) == 1:
            return get_base_type(non_none_args[0])

    if origin in (list, Sequence, tuple):
        elem = getattr(ann, "__args__", (str,))[0]
        return get_base_type(elem)

    if origin is Literal or origin is LiteralString:
        return type(ann.__args__[0])  # pyright: ignore[reportUnknownVariableType]

    return ann


def package_version(name: str) -> str:
    try:
        return pkg_version(name)
    except PackageNotFoundError:
        return "0+unknown"


def canonical_json(data: Any) -> str:
    """JSON text with sorted keys, stable across runs for equal data."""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def sha256_hex(data: Any) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def locate_key(path: Path, query: str) -> Optional[int]:
    """1-based line of a dotted key in a TOML or JSON config file, None when it does not appear.

    Each segment is searched from the line of the previous one, as a table header (`[types.s]`)
    or as a key (`s = ...`, `"s": ...`).
    """
    try:
        lines = path.read_text().splitlines()
    except OSError:
        return None

    start = 0
    segments = query.split(".")
    for depth, segment in enumerate(segments):
        name = re.escape(segment)
        key = re.compile(rf'^\s*"?{name}"?\s*[:=]')
        header = re.compile(rf"^\s*\[[^\]]*\b{name}\b[^\]]*\]")
        last = depth == len(segments) - 1
        found = next(
            (no for no in range(start, len(lines)) if key.match(lines[no]) or (not last and header.match(lines[no]))),
            None,
        )
        if found is None:
            return None
        start = found
    return start + 1


@contextmanager
def handle_exception(logger: Logger) -> Iterator[None]:
    """Turn errors escaping a pipeline stage into a message on stderr and an exit code.

    Known mechanism errors exit with code 1, anything else with code 4 and a pointer to the log.

    Args:
        logger (Logger): Logger instance for error logging.

    Yields:
        None: This context manager doesn't yield any value.
    """
    try:
        yield
    except MechanismError as exc_instance:
        logger.error(
            "Stage failed",
            extra={"context": "handle_exception", "error": str(exc_instance), "type": type(exc_instance).__name__},
        )
        print(f"Error: {exc_instance}", file=sys.stderr)
        sys.exit(EXIT_INPUT)
    except Exception as exc_instance:
        logger.critical(
            "An unhandled exception occurred",
            extra={
                "context": "handle_exception",
                "error": str(exc_instance),
                "traceback": traceback.format_exception(type(exc_instance), exc_instance, exc_instance.__traceback__),
                "type": str(type(exc_instance)),
            },
        )
        print(
            "An unexpected error occurred: {error}. Check details in {log_path}.".format(
                error=str(exc_instance), log_path=logger.log_path
            ),
            file=sys.stderr,
        )
        sys.exit(EXIT_UNEXPECTED)
