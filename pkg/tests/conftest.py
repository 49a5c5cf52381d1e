import numpy as np
import pytest

from qpspec.lattice import ProjectionMatrix
from qpspec.potential import SQRT5

P_SQRT5 = ProjectionMatrix([[SQRT5, 1.0]])
P_THETA = ProjectionMatrix([[2 * np.cos(np.pi / 12), 2 * np.sin(np.pi / 12)]])
P_MOIRE = ProjectionMatrix([[1.0, 0.0, SQRT5, 0.0], [0.0, 1.0, 0.0, SQRT5]])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_complex(rng, size):
    return rng.standard_normal(size) + 1j * rng.standard_normal(size)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" and outcome != "error":
                continue
            for name, value in getattr(rep, "user_properties", []):
                if name.startswith("criterion"):
                    lines.append((int(name.split()[1]), f"{name}: {value}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
