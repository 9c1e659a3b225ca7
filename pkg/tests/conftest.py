import numpy as np
import pytest

from gatelab.linalg import Prng
from gatelab.network import NetConfig, Variant, build_net

ALL_VARIANTS = list(Variant)
SOFT_VARIANTS = [v for v in Variant if v.soft]
HARD_VARIANTS = [v for v in Variant if not v.soft]


def make_net(variant, d_in=2, w=3, d=3, n=4, seed=0, **kw):
    """Network plus a batch of inputs in [-1, 1]; FRG nets are registered on that batch."""
    cfg = NetConfig(d_in, w, d, variant, **kw)
    rng = Prng(seed)
    x = rng.spawn(20).uniform((d_in, n), -1.0, 1.0)
    net = build_net(cfg, rng, x)
    index = np.arange(n) if variant is Variant.FRG else None
    return net, x, index


@pytest.fixture
def rng():
    return Prng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report(capsys):
    """Print one acceptance line immediately and keep it for the end-of-run summary."""
    def emit(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
