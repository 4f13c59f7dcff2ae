import numpy as np
import pytest

# criterion number -> (title, passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"criterion {number:2d} [{title}]: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])

from jmfem.benchmarks import make_benchmark
from jmfem.mesh import refine_uniform
from jmfem.study import solve_level


def random_triangles(rng, n, min_area=0.05):
    """Positively oriented random triangles ``(n, 3, 2)`` that are not too flat."""
    out = []
    while len(out) < n:
        p = rng.uniform(-1.0, 1.0, size=(3, 2))
        d1, d2 = p[1] - p[0], p[2] - p[0]
        area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
        if abs(area) < min_area:
            continue
        out.append(p if area > 0 else p[[0, 2, 1]])
    return np.array(out)


@pytest.fixture(scope="session")
def manufactured_levels():
    """Uniform manufactured runs at nu = 0.3, levels 0..3 from n = 4."""
    b = make_benchmark("manufactured", 1.0, 0.3)
    mesh = b.base_mesh()
    out = []
    for level in range(4):
        if level:
            mesh = refine_uniform(mesh)
        out.append(solve_level(b, mesh))
    return b, out
