import numpy as np
import pytest

from maxim.autodiff import ParamStore, Tensor, precision
from maxim.nn import init_params


def bind_f64(module, seed=0, **overrides):
    """Bind ``module`` to fresh float64 parameters; ``overrides`` maps names to values."""
    with precision(np.float64):
        store = init_params(module, seed, dtype=np.float64)
    for name, value in overrides.items():
        store.assign(name, np.broadcast_to(value, store[name].shape).astype(np.float64))
    module.bind(store)
    return store


def t64(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad, dtype=np.float64)


def rebind(module, store: ParamStore, **values):
    """Copy of ``store`` with some entries replaced, bound to ``module``."""
    out = store.copy()
    for name, v in values.items():
        out.assign(name, np.broadcast_to(v, out[name].shape).astype(out[name].dtype))
    module.bind(out)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, repeated in the terminal summary
CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA[number] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
