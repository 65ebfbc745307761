"""Shared fixtures. The synthetic pipeline is trained and backtested once per session."""
import re
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from diffmpc.cli import MODEL_FILES, cmd_backtest, cmd_train
from diffmpc.config import load_config
from diffmpc.diffusion import TrainConfig
from diffmpc.persist import load_model

ROOT = Path(__file__).resolve().parents[1]
SYNTH_CONFIG = ROOT / "configs" / "synthetic.ini"

# a model small enough to train in about a second
TINY = TrainConfig(epochs=6, batch_size=16, hidden_size=8, T=10, context_len=24, batches_per_epoch=8,
                   pred_len=8, width=16)


@dataclass
class Pipeline:
    cfg: object
    reports: list
    out_dir: Path
    elapsed: float

    def model(self, kind):
        return load_model(self.cfg.model_dir / MODEL_FILES[kind])


def relocated_config(src: Path, dest_dir: Path) -> Path:
    """Copy a run config, pointing its output and model directories into ``dest_dir``."""
    text = src.read_text()
    text = re.sub(r"(?m)^output_dir\s*=.*$", f"output_dir = {dest_dir / 'out'}", text)
    text = re.sub(r"(?m)^model_dir\s*=.*$", f"model_dir = {dest_dir / 'models'}", text)
    path = dest_dir / src.name
    path.write_text(text)
    return path


def run_pipeline(dest_dir: Path) -> Pipeline:
    cfg = load_config(relocated_config(SYNTH_CONFIG, dest_dir))
    start = time.perf_counter()
    cmd_train(cfg)
    reports = cmd_backtest(cfg)
    return Pipeline(cfg, reports, cfg.output_dir, time.perf_counter() - start)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("pipeline"))


@pytest.fixture(scope="session")
def timegrad_model(pipeline):
    return pipeline.model("timegrad")


# one verdict line per acceptance criterion, echoed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[criterion])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
