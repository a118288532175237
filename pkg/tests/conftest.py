def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance  # noqa: F401  (populated only when collected)
    lines = test_acceptance.REPORT
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
