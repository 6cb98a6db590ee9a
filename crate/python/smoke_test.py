#!/usr/bin/env python3
"""Smoke test for the diskill_py extension module.

Builds the cdylib with cargo, stages it as an importable module, and
exercises the main surfaces: statistics, motion primitives, kinematics,
environment evaluation, a tiny training run, and policy inference.

Run from the repository root:

    python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_and_import():
    subprocess.run(
        ["cargo", "build", "-p", "diskill-py", "--release"],
        cwd=ROOT,
        check=True,
    )
    stage = Path(tempfile.mkdtemp(prefix="diskill_py_"))
    built = ROOT / "target" / "release" / "libdiskill_py.so"
    if not built.exists():  # e.g. macOS
        built = ROOT / "target" / "release" / "libdiskill_py.dylib"
    shutil.copy(built, stage / "diskill_py.so")
    sys.path.insert(0, str(stage))
    import diskill_py

    return diskill_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    dp = build_and_import()

    # Statistics: interquartile mean and bootstrap intervals.
    approx(dp.iqm([1, 2, 3, 4, 5, 6, 7, 8]), 4.5, 1e-12)
    ci = dp.stratified_bootstrap_ci([[1.0, 2.0]] * 5, n_boot=200, seed=1)
    approx(ci[0][0], 1.0, 1e-12)
    approx(ci[1][1], 2.0, 1e-12)

    # Motion primitives: rows of the basis matrix sum to one, and zero
    # weights stay at the start position.
    phi = dp.rbf_basis(5, 40)
    for row in phi:
        approx(sum(row), 1.0, 1e-12)
    q, dq = dp.mp_trajectory([0.0] * 6, n_basis=3, steps=30, dt=0.05, q0=[0.3, -0.4])
    assert all(approx(row[0], 0.3, 1e-12) is None for row in q)
    assert all(v == 0.0 for row in dq for v in row)

    # Kinematics.
    tip = dp.forward_kinematics(2, 0.5, [math.pi / 2, -math.pi / 2])
    approx(tip[0], 0.5, 1e-12)
    approx(tip[1], 0.5, 1e-12)

    # Environment: resting on the goal scores zero; the sparse terminal
    # term prices pure distance at -200 per meter.
    env = dp.Env.desk_reacher()
    assert env.context_dim == 2 and env.param_dim > 0
    r = env.evaluate([1.0, 0.0], [0.0] * env.param_dim)
    approx(r["episodic_return"], 0.0, 1e-9)
    assert r["success"]
    r = env.evaluate([0.7, 0.0], [0.0] * env.param_dim)
    approx(r["episodic_return"], -60.0, 1e-9)

    contexts = env.sample_contexts(64, seed=3)
    assert len(contexts) == 64
    assert all(c[0] ** 2 + c[1] ** 2 <= 1.0 + 1e-12 for c in contexts)

    # A tiny training run plus policy inference.
    workdir = Path(tempfile.mkdtemp(prefix="diskill_run_"))
    config = f"""
[env]
kind = reacher
n_links = 2
link_length = 0.5
horizon = 50
dt = 0.05
n_basis = 3

[model]
n_experts = 2
expert_hidden = 12
energy_hidden = 8
critic_hidden = 12

[update]
samples_per_expert = 6
epochs = 10
critic_epochs = 10
energy_epochs = 10

[run]
iterations = 3
env_batch_size = 48
seed = 7
log_path = {workdir}/log.csv
checkpoint_path = {workdir}/ckpt.txt
"""
    log_path, ckpt_path = dp.train(config)
    log = Path(log_path).read_text().strip().splitlines()
    assert len(log) == 4, f"expected header + 3 rows, got {len(log)} lines"

    policy = dp.Policy.load(ckpt_path)
    assert policy.n_experts == 2
    g = policy.gating([0.4, 0.1])
    approx(sum(g), 1.0, 1e-9)
    o1, t1 = policy.act([0.4, 0.1], seed=0, deterministic=True)
    o2, t2 = policy.act([0.4, 0.1], seed=99, deterministic=True)
    assert o1 == o2 and t1 == t2, "deterministic act must ignore the seed"
    rollout = policy.rollout([0.4, 0.1], seed=1)
    assert "episodic_return" in rollout and 0 <= rollout["expert"] < 2

    counts = policy.activity_counts(n_grid=50, threshold=0.2)
    assert len(counts) == 50 and all(1 <= c <= 2 for c in counts)

    print("smoke test passed")


if __name__ == "__main__":
    main()
