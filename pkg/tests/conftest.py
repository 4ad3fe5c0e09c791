from hypothesis import settings

settings.register_profile("perflab", deadline=None, max_examples=60)
settings.load_profile("perflab")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
