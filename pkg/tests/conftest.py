"""Prints a one-line verdict per numbered acceptance check after the run."""

import re

_PATTERN = re.compile(r"test_acceptance\.py.*::test_criterion_(\d+)")

_LABELS = {
    1: "end-to-end correction halves held-out WER inside the runtime budget",
    2: "clean input passes through nearly untouched",
    3: "beam decoder matches the exhaustive oracle on random instances",
    4: "alignment EM log-likelihood never decreases",
    5: "phrase extraction equals the consistency-predicate enumeration",
    6: "weight-tuning line search is at least as good as a dense grid",
    7: "smoothed trigram normalizes and survives the ARPA round trip",
    8: "neural gradients check out and source context beats plain history",
    9: "WER matches the recursive oracle and BLEU edge cases hold",
    10: "corrections land on the hard half of the test set",
}

_results: dict[int, bool] = {}


def pytest_runtest_logreport(report):
    match = _PATTERN.search(report.nodeid)
    if not match:
        return
    number = int(match.group(1))
    if report.failed:
        _results[number] = False
    elif report.when == "call" and report.passed:
        _results.setdefault(number, True)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance checklist")
    for number in sorted(_results):
        verdict = "PASS" if _results[number] else "FAIL"
        terminalreporter.write_line(
            f"criterion {number:2d}: {verdict}  {_LABELS.get(number, '')}"
        )
