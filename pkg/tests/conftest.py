import pytest

from kpcanet.ingest import write_idx_images, write_idx_labels
from kpcanet.synthetic import oriented_stripes


def write_idx_set(directory, name, data):
    write_idx_images(directory / f"{name}-images.idx", data.images)
    write_idx_labels(directory / f"{name}-labels.idx", data.labels)
    (directory / f"{name}.manifest").write_text(
        f"name = {name}\nsource = idx_pair\nimages = {name}-images.idx\nlabels = {name}-labels.idx\n"
        f"class_count = {data.class_count}\n")
    return directory / f"{name}.manifest"


@pytest.fixture(autouse=True)
def _run_in_tmp(tmp_path, monkeypatch):
    # default output directories are relative to the working directory
    monkeypatch.chdir(tmp_path)


SMALL_NET = """\
stages = 2
patch_rows = 5
patch_cols = 5
filters_per_stage = 4, 4
block_rows = 8
block_cols = 8
train_patch_budget = 500
seed = 7
"""


@pytest.fixture
def stripes_run(tmp_path):
    """A directory holding stripes train/test IDX sets, their manifests and a run config."""
    write_idx_set(tmp_path, "train", oriented_stripes(40, seed=11))
    write_idx_set(tmp_path, "test", oriented_stripes(20, seed=12))
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SMALL_NET + "train_data = train.manifest\ntest_data = test.manifest\noutput_dir = out\n")
    return tmp_path


def write_config(path, extra="", net=SMALL_NET):
    path.write_text(net + extra)
    return path



# One line per acceptance criterion, echoed in the terminal summary so the
# verdicts are visible even when pytest captures stdout.
ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {criterion} [{title}]: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
