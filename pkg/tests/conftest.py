"""Collects acceptance outcomes and prints one line per criterion."""

_RESULTS: dict[int, dict] = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    # record the test body, plus setup only when a fixture failed
    if call.when != "call" and not (call.when == "setup" and call.excinfo):
        return
    number, label = marker.args
    entry = _RESULTS.setdefault(number, {"label": label, "ok": True, "failed": []})
    if call.excinfo is not None:
        entry["ok"] = False
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "PASS" if entry["ok"] else "FAIL"
        line = f"[{status}] criterion {number}: {entry['label']}"
        if entry["failed"]:
            line += f"  (failed: {', '.join(entry['failed'])})"
        terminalreporter.write_line(line)
