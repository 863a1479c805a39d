import sys
from os.path import dirname, abspath, join, exists
from dynaconf import Dynaconf

from hdea.errors import ConfigurationError

SETTINGS_FILES = [
    "evolution_defaults.toml",
    "external_protocol.toml",
    "logging.toml",
]


class SingletonSettings:
    _instance = None

    def __new__(cls, *args, **kwargs):
        if not cls._instance:
            cls._instance = super(SingletonSettings, cls).__new__(cls, *args, **kwargs)
        return cls._instance

    def __init__(self):
        """
        Load the package defaults once per process.

        The TOML files shipped next to this module hold the protocol defaults
        (population sizes, operator rates, evaluator timeout, logging). Values
        can be overridden with HDEA_-prefixed environment variables, e.g.
        HDEA_LOGGING__LEVEL=DEBUG.

        Raises:
            FileNotFoundError: If any of the bundled settings files is missing.
        """
        if not hasattr(self, "settings"):
            base_dir = getattr(sys, "_MEIPASS", dirname(abspath(__file__)))

            settings_files = [join(base_dir, f) for f in SETTINGS_FILES]

            for file_path in settings_files:
                if not exists(file_path):
                    raise FileNotFoundError(f"Settings file not found: {file_path}")

            self.settings = Dynaconf(
                envvar_prefix="HDEA", merge_enabled=True, settings_files=settings_files
            )


def get_settings():
    return SingletonSettings().settings


def _lower_keys(value):
    if isinstance(value, dict):
        return {str(k).lower(): _lower_keys(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_lower_keys(v) for v in value]
    return value


def section(name: str) -> dict:
    """Return one table of the package defaults as a plain dict with lower-case keys."""
    return _lower_keys(dict(get_settings().get(name, {}) or {}))


def load_config_file(path: str) -> dict:
    """
    Read a user TOML configuration (run config or experiment plan).

    Parameters:
        path (str): Path to the TOML file.

    Returns:
        dict: The file's tables as plain dicts with lower-case keys.

    Raises:
        ConfigurationError: If the file does not exist or cannot be parsed.
    """
    if not exists(path):
        raise ConfigurationError(f"Config file not found at {path}")
    try:
        config = Dynaconf(
            envvar_prefix=False, environments=False, settings_files=[abspath(path)]
        )
        data = config.as_dict()
    except Exception as e:
        raise ConfigurationError(f"Could not read config file {path}: {e}") from e
    return _lower_keys(data)
