"""Collects per-criterion outcomes of the acceptance suite and prints them at the end."""

import pytest

_OUTCOMES = {}
_NOTES = {}
CRITERIA = {
    1: "numerical core matches brute-force oracles",
    2: "finite-difference gradient suite",
    3: "conservation and labelling invariants",
    4: "SFTT overfits a 10-sample subset",
    5: "synthetic benchmark at p=16",
    6: "resolution sweep p=16 vs p=32",
    7: "binary vs multi-label per type",
    8: "determinism and metric re-derivation",
}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    ok = _OUTCOMES.setdefault(n, True)
    if report.when == "call" or report.failed:
        _OUTCOMES[n] = ok and report.passed


@pytest.fixture
def note(request):
    """``note("text")`` attaches a measurement to the test's criterion line."""
    marker = request.node.get_closest_marker("criterion")
    n = marker.args[0] if marker else 0
    return lambda text: _NOTES.setdefault(n, []).append(text)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        status = "PASS" if _OUTCOMES[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}  {CRITERIA.get(n, '')}")
        for text in _NOTES.get(n, []):
            terminalreporter.write_line(f"    {text}")
