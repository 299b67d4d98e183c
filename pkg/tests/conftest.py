"""Prints one PASS/FAIL line per acceptance criterion after every run.

Pytest captures stdout from passing tests, so the reports printed inside
tests/test_acceptance.py are only visible with -s. This summary hook reads
the test outcomes instead, so the per-criterion verdict always appears,
including for a criterion that errors before reaching its own report line.
"""

import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_([a-z0-9_]+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # idx -> [name, no report failed, a call-phase report passed]
    state = {}
    for reports in terminalreporter.stats.values():
        for report in reports:
            nodeid = getattr(report, "nodeid", "") or ""
            match = _CRITERION.search(nodeid)
            if match is None:
                continue
            idx = int(match.group(1))
            entry = state.setdefault(idx, [match.group(2), True, False])
            if getattr(report, "outcome", "") == "passed":
                if getattr(report, "when", "") == "call":
                    entry[2] = True
            else:
                entry[1] = False
    if not state:
        return
    terminalreporter.section("acceptance criteria")
    for idx in sorted(state):
        name, clean, call_passed = state[idx]
        verdict = "PASS" if clean and call_passed else "FAIL"
        terminalreporter.write_line(f"[acceptance {idx}] {name}: {verdict}")
