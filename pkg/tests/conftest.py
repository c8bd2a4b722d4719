import numpy as np
import pytest

from hima.harness import drop_high_missing, make_semisynthetic, mri_like_mask, simulate_ar1
from hima.types import IncompleteMatrix

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Collects one summary line per acceptance criterion."""

    def emit(tag: str, passed: bool, detail: str):
        line = f"{tag:4s} {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_matrix(values, mask=None):
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = ~np.isnan(values)
    n, p = values.shape
    return IncompleteMatrix(values, mask, [f"s{i}" for i in range(n)], [f"v{j}" for j in range(p)])


def semisynthetic_ar1(seed: int, n: int = 58, p: int = 600, rho: float = 0.5, t_max: int = 8):
    """AR(1) data with MRI-like base missingness, filtered, then semi-synthetically masked.

    Returns the filtered pre-mask matrix (the evaluation reference), the masked
    matrix, the mask plan and the hidden cells.
    """
    rng = np.random.default_rng(seed)
    Y = simulate_ar1(n, p, rho, rng)
    mask = mri_like_mask(n, p, rng)
    original, _ = drop_high_missing(make_matrix(np.where(mask, Y, np.nan), mask))
    masked, plan, truth = make_semisynthetic(original, t_max, seed)
    return original, masked, plan, truth
