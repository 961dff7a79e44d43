import time

import pytest

from emosynth.dataset import DatasetExample, example_id_for
from emosynth.gateway import Gateway, MockBackend
from emosynth.pipeline import fixtures

_acceptance: dict[int, dict] = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    n = marker.kwargs["criterion"]
    entry = _acceptance.setdefault(n, {"name": marker.kwargs["name"], "passed": True, "seconds": 0.0})
    entry["seconds"] += call.duration
    if call.excinfo is not None:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        e = _acceptance[n]
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2} {status}  {e['name']}  ({e['seconds']:.2f}s)")


@pytest.fixture
def mock_gateway():
    return Gateway(MockBackend(fixtures.bundled_dir()), concurrency=4, retries=0, backoff=0)


@pytest.fixture
def blade_runner():
    return fixtures.plot_record()


def make_example(
    labels: dict[str, float],
    primary: str | None = None,
    plot_id: str = "p0",
    actor: str = "A",
    ordinal: int = 1,
    orig: str = "an utterance",
    rewr: str | None = None,
    context: str | None = None,
) -> DatasetExample:
    primary = primary or next(iter(labels), "neutral")
    soft = [{"name": k, "expressiveness": v, "explanation": "", "raw_label": k} for k, v in labels.items()]
    return DatasetExample(
        example_id=example_id_for(plot_id, actor, ordinal),
        plot_id=plot_id,
        actor=actor,
        ordinal=ordinal,
        primary_emotion=primary,
        utterance_orig=orig,
        utterance_rewr=rewr,
        context_orig=context,
        context_clean=context,
        labels={k: v for k, v in labels.items() if v >= 0.3},
        soft_labels=soft,
        raw_labels=list(labels),
    )


@pytest.fixture
def example_factory():
    return make_example


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start
