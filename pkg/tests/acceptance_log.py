"""Shared store for acceptance result lines, printed by conftest at session end."""
LINES = {}


def record(key, passed, label, detail):
    line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
    if passed is None:
        line = f"INFO  {label}: {detail}"
    LINES[key] = line
    print(line)
    return line
