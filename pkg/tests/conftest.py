import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))


def pytest_configure(config) -> None:
    config.addinivalue_line("markers", "slow: exhaustive counts that take tens of seconds")
