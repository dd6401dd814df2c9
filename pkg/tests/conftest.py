"""
Pytest configuration and shared fixtures
"""

import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

# Add src directory to path so we can import modules
sys.path.insert(0, str(Path(__file__).parent / ".." / "src"))

from hsconfig import initialize_config  # noqa: E402
from tests.test_helpers import make_study_frame  # noqa: E402


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files"""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    shutil.rmtree(temp_dir)


@pytest.fixture(autouse=True)
def default_config():
    """Every test starts from the built-in defaults"""
    yield initialize_config()
    initialize_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def study_frame():
    """Observational study with two numerics, one categorical and two binaries"""
    return make_study_frame(n=400, seed=2024)


@pytest.fixture
def study_csv(temp_dir, study_frame):
    path = Path(temp_dir) / "study.csv"
    study_frame.to_csv(path, index=False)
    return path


@pytest.fixture
def study_config(temp_dir, study_csv):
    """Configuration file pointing at the study CSV, writing into temp_dir/out"""
    path = Path(temp_dir) / "study.toml"
    path.write_text(
        f"""
logLevel = 10

[data]
input = "{study_csv.as_posix()}"
treatment = "treated"
outcome = "outcome"
numeric = ["age", "visits"]
categorical = ["school"]
binary = ["married", "urban"]

[expansion]
degree = 2
interactions = 2

[model]
cvFolds = 5

[sensitivity]
rho1 = [-0.2, 0.2]
rho0 = [-0.1, 0.1]
gridSize = 5
sigma = "naive"
targets = ["ate", "mean_y1_given_t0", "mean_y0_given_t1"]

[bounds]
step = 0.05
limit = 0.95
sigma = "naive"

[output]
directory = "{(Path(temp_dir) / 'out').as_posix()}"
seed = 11
"""
    )
    return path
