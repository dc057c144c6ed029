"""Shared test configuration.

Pins numeric libraries to one thread (set before numpy ever loads) and
prints a one-line PASS/FAIL verdict per acceptance criterion at the end
of the session.
"""

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)_([a-z0-9_]+)")

# measured values the acceptance tests want echoed next to their verdict
# (e.g. the EA-vs-baseline fitness gap); keyed by criterion number
_CRITERION_NOTES: dict[int, str] = {}


@pytest.fixture(scope="session")
def criterion_notes():
    return _CRITERION_NOTES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = {}
    for outcome, status in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            match = _CRITERION.search(getattr(report, "nodeid", ""))
            if match:
                num = int(match.group(1))
                label = match.group(2).replace("_", " ")
                # a FAIL verdict must not be overwritten by a later PASS entry
                if verdicts.get(num, (None, "PASS"))[1] != "FAIL":
                    verdicts[num] = (label, status)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for num in sorted(verdicts):
            label, status = verdicts[num]
            note = _CRITERION_NOTES.get(num)
            suffix = f" ({note})" if note else ""
            terminalreporter.write_line(
                f"criterion {num:02d} [{status}] {label}{suffix}"
            )
