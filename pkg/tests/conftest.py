def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL line per acceptance criterion."""
    from test_acceptance import CRITERIA

    outcome = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if rep.nodeid.startswith("tests/test_acceptance.py::") and rep.when in ("call", "setup"):
                name = rep.nodeid.split("::")[-1]
                if status != "passed" or name not in outcome:
                    outcome[name] = "PASS" if status == "passed" else "FAIL"
    if not outcome:
        return
    terminalreporter.section("acceptance criteria")
    for name, label in CRITERIA.items():
        terminalreporter.write_line(f"{outcome.get(name, 'NOT RUN'):7s} {label}")
