"""Shared pytest plumbing: the acceptance report block.

Acceptance tests register one line per shipping criterion; the summary
prints them all at the end of the run so the gate is readable at a
glance even inside a long -v listing.
"""

ACCEPTANCE: list = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE.append((name, ok, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        status = "PASS" if ok else "FAIL"
        line = f"{status}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
