import math
from contextlib import contextmanager

import numpy as np
import pytest

from eternal_lab import SpatialDomain, build_grid, heat_spec

H = math.pi / 100
DT = 1e-3

_CRITERIA = {}


def mu_h(h: float) -> float:
    """Principal eigenvalue of the three-point Laplacian on (0, pi)."""
    return 4.0 / h**2 * math.sin(h / 2) ** 2


def ie_rate(lam: float, dt: float = DT) -> float:
    return math.log1p(dt * lam) / dt


@pytest.fixture(scope="session")
def grid():
    return build_grid(SpatialDomain.interval(0.0, math.pi, origin=math.pi / 2), H)


@pytest.fixture(scope="session")
def heat():
    return heat_spec()


@pytest.fixture(scope="session")
def y(grid):
    return grid.nodes[:, 0]


@pytest.fixture
def criterion(request):
    """Record the outcome of an acceptance criterion for the terminal summary."""

    @contextmanager
    def record(number: int, title: str, detail=lambda: ""):
        try:
            yield
        except BaseException:
            _CRITERIA[number] = ("FAIL", title, detail())
            print(f"\nACCEPTANCE {number:2d} FAIL  {title}  {detail()}")
            raise
        _CRITERIA[number] = ("PASS", title, detail())
        print(f"\nACCEPTANCE {number:2d} PASS  {title}  {detail()}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}  {detail}")


def sine_dense_laplacian(n: int, h: float) -> np.ndarray:
    """Independent dense three-point matrix for -u'' with zero end values."""
    return (2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h**2


@pytest.fixture(scope="session")
def bundled_run(tmp_path_factory):
    """Run the bundled suite once through the command line; return ``(out_dir, exit_code, stdout)``."""
    import io
    from contextlib import redirect_stdout

    from eternal_lab.cli import main

    out = tmp_path_factory.mktemp("bundled") / "run"
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(["run", "heat_interval.json", "--out", str(out), "--workers", "4"])
    return out, code, buf.getvalue()
