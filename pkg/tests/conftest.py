import pytest

from leakagesim import metrics
from leakagesim.circuit import run
from leakagesim.config import SimConfig
from leakagesim.topology import TopologyKind


@pytest.fixture(scope="session")
def hch5_run():
    return run(SimConfig(topology=TopologyKind.HCH5_D2))


@pytest.fixture(scope="session")
def h4_run():
    return run(SimConfig(topology=TopologyKind.H4_UNIPOLAR))


def _headline(result):
    cfg = result.config
    return {
        "leakage_rms": metrics.rms(result["i_cm"].window(cfg.blanking)),
        "cmv_max_deviation": metrics.cmv_flatness(result["v_cm"], cfg.v_dc_ref,
                                                  blanking=cfg.blanking)[0],
    }


@pytest.fixture(scope="session")
def headline():
    """Headline metrics of a run (cached per config) without keeping waveforms."""
    cache = {}

    def get(cfg: SimConfig):
        if cfg not in cache:
            cache[cfg] = _headline(run(cfg))
        return cache[cfg]

    return get


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record one acceptance verdict line and fail the test when it is red."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
