import numpy as np
import pytest

from fadeswitch.dataset import LabeledWindow, SplitDataset, fit_normalization
from fadeswitch.timeseries import AttenuationSeries


def step_series(n_low: int, n_high: int, low=0.0, high=10.0, rate=10.0, gid="step"):
    return AttenuationSeries(gid, np.r_[np.full(n_low, low), np.full(n_high, high)], rate)


def separable_split(n_per_class=150, L=21, seed=0):
    """Constant-0 negatives and constant-20 dB positives (alpha = 5)."""
    rng = np.random.default_rng(seed)

    def make(n, level, label, start):
        return [LabeledWindow(np.full(L, level), label, start + k) for k in range(n)]

    def part(n, start):
        ws = make(n, 0.0, False, start) + make(n, 20.0, True, start + n)
        return [ws[i] for i in rng.permutation(len(ws))]

    train = part(n_per_class, 0)
    val = part(max(n_per_class // 5, 1), 10_000)
    test = part(max(n_per_class // 5, 1), 20_000)
    return SplitDataset(train, val, test, fit_normalization(train))


@pytest.fixture
def separable():
    return separable_split()


ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
