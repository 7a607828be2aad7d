import sys
from pathlib import Path

# allow cross-test imports (shared mesh builders live in test_geometry)
sys.path.insert(0, str(Path(__file__).parent))


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full acceptance-criteria checks")
