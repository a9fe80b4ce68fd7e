import numpy as np
import pytest

from viewpcl.geometry import Intrinsics, Pose, ViewRecord
from viewpcl.scenebundle import SynthSpec, precompute_overlaps, synth_scene

INJECTION_SITE = (1, 19)


def make_view(view_id, depth, fx=64.0, fy=None, cx=None, cy=None, pose=None):
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    intr = Intrinsics(fx, fy or fx, w / 2.0 if cx is None else cx, h / 2.0 if cy is None else cy)
    return ViewRecord(view_id, intr, pose or Pose.identity(), depth)


def translated(tx, ty=0.0, tz=0.0):
    return Pose(np.eye(3), np.array([tx, ty, tz]))


@pytest.fixture(scope="session")
def consistent_bundle():
    return synth_scene(SynthSpec())


@pytest.fixture(scope="session")
def consistent_overlaps(consistent_bundle):
    return precompute_overlaps(consistent_bundle)


@pytest.fixture(scope="session")
def injected_bundle():
    view, sp = INJECTION_SITE
    return synth_scene(SynthSpec(inject={"view": view, "superpixel": sp}))


@pytest.fixture(scope="session")
def injected_overlaps(injected_bundle):
    return precompute_overlaps(injected_bundle)


# acceptance summary: one line per criterion at the end of the run

_criteria: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if not marker:
        return
    num, title = marker
    if report.when == "call" or report.outcome != "passed":
        prev = _criteria.get(num, (title, "PASS"))[1]
        status = "PASS" if report.passed and prev == "PASS" else "FAIL"
        _criteria[num] = (title, status)


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", (m.args[0], m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, status = _criteria[num]
        terminalreporter.write_line(f"[{status}] criterion {num:2d}: {title}")
