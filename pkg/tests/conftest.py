import pytest

_RESULTS = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    cid = props.get("criterion")
    if cid is None:
        return
    _RESULTS[cid] = (report.passed, props.get("title", ""), props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_RESULTS):
        ok, title, detail = _RESULTS[cid]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{cid:>2}] {title}: {detail}")


@pytest.fixture
def criterion(request):
    """Attach an id/title to the test and return a setter for the detail line."""
    marker = request.node.get_closest_marker("acceptance")
    cid, title = marker.args
    request.node.user_properties.append(("criterion", cid))
    request.node.user_properties.append(("title", title))

    def detail(text):
        request.node.user_properties.append(("detail", text))
        print(f"[{cid}] {title}: {text}")

    return detail
