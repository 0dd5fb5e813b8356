from fractions import Fraction

import numpy as np
import pytest

from ibcaan import autodiff as ad

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def brute_force_eer(bona, spoof) -> float:
    """Exhaustive threshold sweep with exact rational arithmetic."""
    bona = [float(b) for b in bona]
    spoof = [float(s) for s in spoof]
    best = None
    for t in sorted(set(bona) | set(spoof)):
        far = Fraction(sum(1 for s in spoof if s >= t), len(spoof))
        frr = Fraction(sum(1 for b in bona if b < t), len(bona))
        key = (abs(far - frr), far + frr)
        if best is None or key < best[0]:
            best = (key, (far + frr) / 2)
    return float(best[1])


def grad_check_error(fn, arrays, step=1e-5) -> float:
    """Worst norm-wise relative error between tape gradients and central differences.

    ``fn`` maps a list of Tensors to a scalar Tensor.  The error for one
    input is ``max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-8)``.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    leaves = [ad.Tensor(a, requires_grad=True) for a in arrays]
    with ad.Tape() as tape:
        loss = fn(leaves)
    analytic = tape.backward(loss, leaves)

    worst = 0.0
    for i, a in enumerate(arrays):
        def f(v, i=i):
            args = [ad.Tensor(v if j == i else arrays[j]) for j in range(len(arrays))]
            return fn(args).item()
        numeric = ad.numeric_grad(f, a, step)
        scale = max(np.max(np.abs(analytic[i]), initial=0.0), np.max(np.abs(numeric), initial=0.0), 1e-8)
        worst = max(worst, float(np.max(np.abs(analytic[i] - numeric), initial=0.0) / scale))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
