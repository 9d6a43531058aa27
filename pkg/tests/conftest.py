from pathlib import Path

import numpy as np
import pytest
from dotenv import load_dotenv

from dartfx.hypertime.dataset import Dataset
from dartfx.hypertime.synthetic import daily_cosine, daily_rhythm, linear_field


@pytest.fixture(scope="session", autouse=True)
def load_env():
    dotenv_path = Path(__file__).parent / "../.env"  # Construct path from current test file dir
    load_dotenv(dotenv_path=dotenv_path)


@pytest.fixture
def write_text(tmp_path):
    """Write ``content`` to ``tmp_path/name`` and return the path."""

    def _write(name: str, content: str) -> Path:
        path = tmp_path / name
        path.write_text(content, encoding="utf-8")
        return path

    return _write


@pytest.fixture(scope="session")
def daily_data() -> Dataset:
    return daily_rhythm(weeks=3, step=600.0, noise=0.1, seed=42)


@pytest.fixture(scope="session")
def cosine_data() -> Dataset:
    return daily_cosine(days=14, step=300.0)


@pytest.fixture(scope="session")
def field_data() -> Dataset:
    return linear_field(count=1500, seed=7)


@pytest.fixture
def blobs_2d() -> np.ndarray:
    rng = np.random.default_rng(3)
    return np.vstack([rng.normal((0.0, 0.0), 0.3, (150, 2)), rng.normal((5.0, 5.0), 0.3, (150, 2))])
