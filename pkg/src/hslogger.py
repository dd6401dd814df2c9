__all__ = ["Logger", "logger"]

import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from version import __app_name__

FILE_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
CONSOLE_FORMAT = "%(levelname)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
BANNER_WIDTH = 60


class Logger:
    INFO = logging.INFO
    DEBUG = logging.DEBUG
    WARNING = logging.WARNING
    ERROR = logging.ERROR
    CRITICAL = logging.CRITICAL

    def __init__(self):
        self.logger = logging.getLogger(__app_name__)
        self.logger.propagate = False

    def _stream_handler(self, stream, log_level):
        handler = logging.StreamHandler(stream)
        handler.setLevel(log_level)
        handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
        return handler

    def setup(
        self,
        log_file_path,
        log_level=logging.INFO,
        stdout_enabled=False,
        stdout_only=False,
    ):
        for handler in self.logger.handlers:
            handler.close()
        self.logger.handlers.clear()
        self.logger.setLevel(log_level)

        # Reports land next to the log, so the log directory is the output directory
        if not stdout_only:
            try:
                Path(log_file_path).parent.mkdir(parents=True, exist_ok=True)
                file_handler = logging.FileHandler(log_file_path)
                file_handler.setLevel(log_level)
                file_handler.setFormatter(logging.Formatter(FILE_FORMAT, DATE_FORMAT))
                self.logger.addHandler(file_handler)
                self.logger.debug(f"Logging to {log_file_path}")
            except OSError as e:
                self.logger.addHandler(self._stream_handler(sys.stderr, log_level))
                self.logger.error(
                    f"Failed to initialize file logging to {log_file_path}: {e}"
                )
                self.logger.error("Falling back to stderr logging")

        if stdout_enabled or stdout_only:
            self.logger.addHandler(self._stream_handler(sys.stdout, log_level))

    @contextmanager
    def quiet(self, level=logging.WARNING):
        """Raise the threshold to `level` for the duration, e.g. across replications."""
        previous = self.logger.level
        self.logger.setLevel(max(previous, level))
        try:
            yield self
        finally:
            self.logger.setLevel(previous)

    def banner(self, title):
        self.info(f" {title} ".center(BANNER_WIDTH, "*"))

    def block(self, text, level=logging.INFO):
        """Log multi-line text (rendered tables, option dumps) one line at a time."""
        if self.logger.isEnabledFor(level):
            for line in text.splitlines():
                self.logger.log(level, line)

    def debug(self, message):
        if self.logger.isEnabledFor(logging.DEBUG):
            self.logger.debug(message)

    def info(self, message):
        if self.logger.isEnabledFor(logging.INFO):
            self.logger.info(message)

    def warning(self, message):
        if self.logger.isEnabledFor(logging.WARNING):
            self.logger.warning(message)

    def error(self, message):
        if self.logger.isEnabledFor(logging.ERROR):
            self.logger.error(message)

    def critical(self, message):
        self.logger.critical(message)


logger = Logger()
