import numpy as np
import pytest

from wavetopo.mesh import BoundarySegment, Tag, generate_rect_mesh, tag_boundaries


def cantilever_mesh(nx=8, ny=4, width=1.0, height=0.5):
    mesh = generate_rect_mesh(width, height, nx, ny)
    return tag_boundaries(mesh, [
        BoundarySegment(Tag.GAMMA_U, "x", 0.0, 0.0, height),
        BoundarySegment(Tag.GAMMA_T, "x", width, 0.25 * height, 0.75 * height),
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
