import os

# Size numba's thread pool before it is imported anywhere, so thread-count
# tests really run with several workers even on small machines.
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(4, os.cpu_count() or 1)))

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from hypothesis import settings  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def max_rel_err(got, want) -> float:
    """max |got - want| / max |want|: relative to the largest reference entry."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    scale = np.max(np.abs(want)) if want.size else 0.0
    diff = np.max(np.abs(got - want)) if want.size else 0.0
    return float(diff / scale) if scale > 0 else float(diff)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_training():
    """History of the default 25-epoch synthetic run (about 15 min on one core)."""
    from dilconv.demo.train import TrainConfig, train
    return train(TrainConfig())


_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record and print one acceptance line, then assert on it."""
    def check(criterion: int, name: str, ok: bool, detail: str) -> None:
        line = f"criterion {criterion} {'PASS' if ok else 'FAIL'} {name}: {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
