import logging

from hdea.settings.config_loader import section

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class CustomLogger:
    _file_handler = None

    @classmethod
    def _log_settings(cls):
        settings = section("logging")
        level = logging.getLevelName(str(settings.get("level", "INFO")).upper())
        if not isinstance(level, int):
            level = logging.INFO
        return level, settings.get("file", "run.log")

    @classmethod
    def _shared_file_handler(cls, log_file_path, level):
        # One handler for all loggers of the process. Append mode, since joblib
        # workers open the same file concurrently.
        if cls._file_handler is None:
            cls._file_handler = logging.FileHandler(log_file_path, mode="a")
            cls._file_handler.setLevel(level)
            cls._file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        return cls._file_handler

    @classmethod
    def get_logger(cls, name):
        """
        Return a logger object with specified name.

        Parameters:
            name (str): The name of the logger.

        Returns:
            logging.Logger: The logger object.

        Note:
            The logger handles DEBUG and above. Console output goes to stderr at
            the configured level (settings [logging] level); stdout stays free
            for the evaluator protocol. When [logging] file is non-empty, all
            loggers share one file handler writing to that path.
        """
        logger = logging.getLogger(name)
        logger.setLevel(logging.DEBUG)

        if not logger.handlers:
            level, log_file_path = cls._log_settings()

            if log_file_path:
                logger.addHandler(cls._shared_file_handler(log_file_path, level))

            stream_handler = logging.StreamHandler()
            stream_handler.setLevel(level)
            stream_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            logger.addHandler(stream_handler)

        return logger

    @classmethod
    def reset_log_file(cls):
        """Truncate the configured log file. Called once at CLI start."""
        _, log_file_path = cls._log_settings()
        if log_file_path:
            with open(log_file_path, "w"):
                pass
