import re

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") not in ("call", "setup") or "test_acceptance" not in rep.nodeid:
                continue
            m = _CRITERION.search(rep.nodeid)
            if m and (rep.when == "call" or rep.failed):
                lines.append((int(m.group(1)), m.group(2), "PASS" if rep.passed else "FAIL"))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, status in sorted(set(lines)):
        terminalreporter.write_line(f"criterion {num:2d} {status}  {name.replace('_', ' ')}")
