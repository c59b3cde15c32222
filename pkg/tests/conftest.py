import sys

import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Emit one visible pass/fail line per acceptance criterion."""
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    label = getattr(item.function, "_criterion", None)
    if label:
        status = "PASS" if report.passed else "FAIL"
        print(f"ACCEPTANCE {label}: {status}", file=sys.__stdout__)


def criterion(label):
    def mark(fn):
        fn._criterion = label
        return fn

    return mark
