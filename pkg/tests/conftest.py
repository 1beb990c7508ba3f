"""Shared pytest hooks.

Acceptance tests record ``criterion`` and ``detail`` properties; the terminal
summary turns them into one pass/fail line per criterion.
"""


def pytest_terminal_summary(terminalreporter):
    lines = {}
    for outcome in ("passed", "failed", "skipped", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(report, "user_properties", []))
            if "criterion" not in props:
                continue
            if report.when != "call" and outcome == "passed":
                continue
            status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP", "error": "FAIL"}[outcome]
            if status == "PASS" and props.get("warning"):
                status = "PASS (warning)"
            detail = props.get("detail", "")
            if status == "SKIP" and isinstance(report.longrepr, tuple):
                detail = report.longrepr[2]
            lines[int(props["criterion"])] = f"criterion {props['criterion']:>2}: {status:<14} {detail}"
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
