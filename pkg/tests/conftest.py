def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when != "call" or "test_acceptance" not in rep.nodeid:
                continue
            props = dict(rep.user_properties)
            name = props.get("criterion", rep.nodeid.split("::")[-1])
            status = "PASS" if rep.passed else "FAIL"
            lines.append((name, f"{name}: {status}  {props.get('detail', '')}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: int(t[0][2:]) if t[0][2:].isdigit() else 99):
            terminalreporter.write_line(line)
