import pytest

from uvsplat.mesh import build_uv_index
from uvsplat.scenes import unit_square_plane, uv_sphere


@pytest.fixture(scope="session")
def sphere_index():
    return build_uv_index(uv_sphere())


@pytest.fixture(scope="session")
def plane_index():
    return build_uv_index(unit_square_plane())


_verdicts = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if report.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
    verdict = "PASS" if report.passed else "FAIL"
    line = f"criterion {number:>2} {verdict}  {title}: {detail}"
    _verdicts.append((number, line))


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_verdicts):
            terminalreporter.write_line(line)
