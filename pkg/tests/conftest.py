import warnings

import pytest

# weight_norm's deprecation notice is noise for every model construction
warnings.filterwarnings("ignore", message=".*weight_norm.*", category=FutureWarning)

ACCEPTANCE = {}


class Recorder:
    def __init__(self, title):
        self.title = title
        self.details = []
        self.passed = False

    def check(self, ok, detail):
        self.details.append(detail if ok else f"FAILED {detail}")
        assert ok, detail


@pytest.fixture
def criterion(request):
    """Named acceptance criterion; ``check(ok, detail)`` asserts and records."""
    marker = request.node.get_closest_marker("criterion")
    rec = Recorder(marker.args[0] if marker else request.node.name)
    ACCEPTANCE[request.node.nodeid] = rec
    return rec


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(title): acceptance criterion title for the summary")


def pytest_runtest_logreport(report):
    if report.when == "call" and report.nodeid in ACCEPTANCE:
        ACCEPTANCE[report.nodeid].passed = report.passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for rec in sorted(ACCEPTANCE.values(), key=lambda r: r.title):
        status = "PASS" if rec.passed else "FAIL"
        terminalreporter.write_line(f"{status}  {rec.title}: {'; '.join(rec.details)}")
