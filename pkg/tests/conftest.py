import copy

import pytest

from zonesim.config import SMALL, build_config


def deep_merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def small_config(**sections):
    """The small test device with some sections overridden."""
    return build_config(deep_merge(SMALL, sections))


@pytest.fixture
def small():
    return small_config()


# acceptance criteria register their outcome here; printed after the run
CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(CRITERIA):
        ok, line = CRITERIA[cid]
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {line}")
