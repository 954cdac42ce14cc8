def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "xfailed", "xpassed"):
        for report in terminalreporter.stats.get(outcome, []):
            lines.extend(v for k, v in getattr(report, "user_properties", []) if k == "acceptance")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
