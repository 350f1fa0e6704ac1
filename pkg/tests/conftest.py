from acceptance_log import CRITERIA, VERDICTS


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in CRITERIA:
            terminalreporter.write_line(VERDICTS.get(n, f"criterion {n:>2}: FAIL  did not run to a verdict"))
