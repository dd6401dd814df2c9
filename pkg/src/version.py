"""Version and application metadata"""

import subprocess
from pathlib import Path

# DO NOT EDIT THIS NEXT LINE! It will be updated automatically by bump-my-version
__version__ = "0.4.0"

# Application name - single source of truth
__app_name__ = "hdsens"

# Application description - single source of truth
__app_description__ = (
    "Sensitivity analysis for AIPW estimates with high-dimensional nuisance models"
)

# License information - single source of truth
__license__ = "Released under the MIT License https://opensource.org/license/mit"


def describe_version():
    """
    Return a git-describe style version string, e.g. "0.4.0-3-gabc1234".

    Falls back to the plain package version outside a git checkout.
    """
    try:
        result = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            check=False,
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).parent,
        )
    except (subprocess.TimeoutExpired, FileNotFoundError, OSError):
        return __version__

    output = result.stdout.strip()
    if result.returncode != 0 or not output:
        return __version__
    if output.startswith(("v", __version__)):
        return output.lstrip("v")
    return f"{__version__}+g{output}"
