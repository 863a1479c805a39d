import os
import sys


def get_version():
    """
    Read the package version from version.txt.

    Returns:
        str: The version string, stripped of whitespace.
    """
    base_path = getattr(sys, "_MEIPASS", None) or os.path.dirname(__file__)
    with open(os.path.join(base_path, "version.txt"), "r") as file:
        return file.read().strip()


__version__ = get_version()
