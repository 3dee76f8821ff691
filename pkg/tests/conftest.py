ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")

    def key(line):
        label = line.split()[1].rstrip(":")
        return int(label.rstrip("abcdef")), label

    for line in sorted(ACCEPTANCE_LINES, key=key):
        terminalreporter.write_line(line)
