import numpy as np
import pytest

from travelcvx import pipeline
from travelcvx.config import ForwardConfig, PhantomConfig, RunConfig, TruncationConfig
from travelcvx.forward import DomainSpec

SMALL = DomainSpec(nx=17, ny=17, nz_below=5, nz=17, n_sources=5)


def small_config(N=2, K=2, kind="bump", **kw):
    return RunConfig(domain=SMALL, phantom=PhantomConfig(kind=kind),
                     forward=ForwardConfig(refine=1, order=2),
                     truncation=TruncationConfig(N=N, K=K), **kw)


_cache = {}


def small_case(N=2, K=2, kind="bump"):
    """(cfg, simulation, problem), cached per (N, K, kind)."""
    key = (N, K, kind)
    if key not in _cache:
        cfg = small_config(N, K, kind)
        sim = pipeline.simulate(cfg)
        _cache[key] = (cfg, sim, pipeline.build_problem(cfg, sim.data))
    return _cache[key]


@pytest.fixture
def case22():
    return small_case(2, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
