import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from hypothesis import HealthCheck, settings  # noqa: E402

settings.register_profile("lightray", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lightray")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("]")[1].split()[0])):
        terminalreporter.write_line(line)
