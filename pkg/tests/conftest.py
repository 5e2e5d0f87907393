import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def rank_r(rng, N, n, r, scale=1.0):
    return scale * rng.standard_normal((N, r)) @ rng.standard_normal((r, n))


_checks = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    props = dict(report.user_properties)
    if "check" in props:
        ok, detail = _checks.get(props["check"], (True, []))
        _checks[props["check"]] = (ok and report.passed, detail + [props.get("detail", "")])


def pytest_terminal_summary(terminalreporter):
    if not _checks:
        return
    terminalreporter.section("acceptance")
    for name in sorted(_checks, key=lambda c: int(c.split()[0])):
        ok, detail = _checks[name]
        line = "; ".join(d for d in detail if d)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {line}")
