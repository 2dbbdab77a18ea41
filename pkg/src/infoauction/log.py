import logging
import logging.handlers
import os
import sys
from pathlib import Path
from typing import Any


class Logger(logging.LoggerAdapter[Any]):
    """A singleton logger class for the application."""

    def __init__(self, log_name: str = "infoauction", log_level: int = logging.DEBUG):
        logger = logging.getLogger(log_name)
        logger.setLevel(log_level)

        if not any(isinstance(h, logging.handlers.RotatingFileHandler) for h in logger.handlers):
            formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")

            log_dir = Path(os.environ.get("INFOAUCTION_LOG_DIR", Path.home() / ".infoauction"))
            log_dir.mkdir(parents=True, exist_ok=True)

            fh = logging.handlers.RotatingFileHandler(
                log_dir / "infoauction.log",
                maxBytes=20 * 1024**2,  # 20 MB
                backupCount=1,
            )
            fh.setLevel(log_level)
            fh.setFormatter(formatter)
            logger.addHandler(fh)

        super().__init__(logger)

    @property
    def log_path(self) -> Path | None:
        """Get the path to the log file."""
        handlers = self.logger.handlers
        for handler in handlers:
            if isinstance(handler, logging.handlers.RotatingFileHandler):
                return Path(handler.baseFilename)
        return None

    def set_verbose(self, verbose: bool):
        """Mirror log records on stderr, at DEBUG when verbose and WARNING otherwise.

        Args:
            verbose (bool): Whether to stream debug records.
        """
        stream = next(
            (
                h
                for h in self.logger.handlers
                if isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
            ),
            None,
        )
        if stream is None:
            stream = logging.StreamHandler(sys.stderr)
            stream.setFormatter(logging.Formatter("%(levelname)s - %(message)s"))
            self.logger.addHandler(stream)
        stream.setLevel(logging.DEBUG if verbose else logging.WARNING)

    def process(self, msg: str, kwargs: Any):
        if "extra" in kwargs:
            msg = f"{msg} - {str(kwargs['extra'])}"
        return msg, kwargs


logger = Logger()
