"""Shared fixtures. Training-dependent tests reuse one session-scoped matrix
of desk-scale runs, trained through the real CLI in parallel subprocesses.

Set QUIETWALK_TEST_RUNS to a writable directory to cache the trained runs
across pytest invocations (a run is reused only if its manifest hash matches).
"""

import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest
import yaml

REPO = Path(__file__).resolve().parent.parent
DESK_CONFIG = REPO / "configs" / "desk.yaml"
SEEDS = (0, 1, 2)

# (mode, seed, extra overrides)
TRAIN_MATRIX = (
    [("cncp", s, []) for s in SEEDS]
    + [("conc", s, []) for s in SEEDS]
    + [("rc", s, []) for s in SEEDS]
    + [("oracle_morl:0", s, []) for s in SEEDS]
    + [("oracle_morl:1", s, ["--set", "trainer.iterations=240"]) for s in SEEDS]
    + [("oracle_morl:4", s, ["--set", "trainer.iterations=240"]) for s in SEEDS]
    + [("oracle_safe:0", 0, [])]
    + [("oracle_safe:1", 0, ["--set", "trainer.iterations=240"])]
    + [("ppo", 0, [])]
)


def run_dir(root: Path, mode: str, seed: int) -> Path:
    return root / f"{mode.replace(':', '_')}_s{seed}"


def _train_one(root: Path, mode: str, seed: int, extra):
    out = run_dir(root, mode, seed)
    ckpt = out / "checkpoint.npz"
    if ckpt.exists():
        return
    env = dict(os.environ)
    env["OPENBLAS_NUM_THREADS"] = "1"
    env["OMP_NUM_THREADS"] = "1"
    cmd = [
        sys.executable, "-m", "quietwalk.cli", "train",
        "--config", str(DESK_CONFIG), "--mode", mode,
        "--seed", str(seed), "--out", str(out), *extra,
    ]
    subprocess.run(cmd, check=True, env=env, capture_output=True, text=True)


def _eval_runs(root: Path, label: str, runs):
    out = root / f"eval_{label}.jsonl"
    if out.exists():
        return out
    cmd = [sys.executable, "-m", "quietwalk.cli", "eval", "--config", str(DESK_CONFIG),
           "--method", label, "--out", str(out)]
    for mode, seed in runs:
        cmd += ["--checkpoint", str(run_dir(root, mode, seed) / "checkpoint.npz")]
    subprocess.run(cmd, check=True, capture_output=True, text=True)
    return out


def _matrix_fingerprint() -> str:
    import hashlib

    import quietwalk

    payload = DESK_CONFIG.read_bytes() + repr(TRAIN_MATRIX).encode()
    payload += quietwalk.__version__.encode()
    return hashlib.sha256(payload).hexdigest()[:16]


@pytest.fixture(scope="session")
def trained_runs(tmp_path_factory):
    """Trains the full desk-scale matrix once; returns the artifact root."""
    cache = os.environ.get("QUIETWALK_TEST_RUNS")
    root = Path(cache) if cache else tmp_path_factory.mktemp("qw_runs")
    root.mkdir(parents=True, exist_ok=True)

    stamp = root / "matrix.fingerprint"
    fingerprint = _matrix_fingerprint()
    if not stamp.exists() or stamp.read_text() != fingerprint:
        for stale in root.iterdir():
            if stale.is_dir():
                import shutil

                shutil.rmtree(stale)
            else:
                stale.unlink()
        stamp.write_text(fingerprint)

    workers = max(1, (os.cpu_count() or 1))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_train_one, root, mode, seed, extra)
            for mode, seed, extra in TRAIN_MATRIX
        ]
        for f in futures:
            f.result()

    _eval_runs(root, "cncp", [("cncp", s) for s in SEEDS])
    _eval_runs(root, "conc", [("conc", s) for s in SEEDS])
    _eval_runs(root, "rc", [("rc", s) for s in SEEDS])
    _eval_runs(root, "ppo", [("oracle_morl:0", s) for s in SEEDS])
    for beta in (0, 1, 4):
        _eval_runs(root, f"morl{beta}", [(f"oracle_morl:{beta}", s) for s in SEEDS])
    return root


@pytest.fixture(scope="session")
def desk_config():
    return yaml.safe_load(DESK_CONFIG.read_text())
