import acceptance_report


def pytest_terminal_summary(terminalreporter):
    if acceptance_report.LINES:
        terminalreporter.section("acceptance summary")
        for line in acceptance_report.LINES:
            terminalreporter.write_line(line)
