"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_RESULTS: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, text): acceptance criterion id and summary")


def _criterion(item):
    m = item.get_closest_marker("criterion")
    return (m.args[0], m.args[1]) if m else None


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = _criterion(item)
    if crit is None:
        return
    cid, text = crit
    entry = _RESULTS.setdefault(cid, {"text": text, "passed": True, "ran": False, "notes": []})
    if rep.when == "call":
        entry["ran"] = True
    if rep.failed:
        entry["passed"] = False
    if rep.when == "teardown":
        entry["notes"].extend(v for k, v in item.user_properties if k == "measured")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: [int(p) if p.isdigit() else p for p in c.replace(".", " ").split()]):
        e = _RESULTS[cid]
        status = "PASS" if e["passed"] and e["ran"] else "FAIL"
        line = f"{status}  [{cid}] {e['text']}"
        if e["notes"]:
            line += "  (" + "; ".join(e["notes"]) + ")"
        tr.write_line(line)
