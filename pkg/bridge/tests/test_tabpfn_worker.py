"""TabPFN worker: graceful degradation, plus replication when installed."""

import csv
import importlib.util
import shutil
import subprocess
import sys

import pytest

HAS_TABPFN = importlib.util.find_spec("tabpfn") is not None
CRTKIT = shutil.which("crtkit")
WORKER_CMD = f"{sys.executable} -m crt_bridge.tabpfn_worker"


@pytest.mark.skipif(HAS_TABPFN, reason="tabpfn installed; error path not reachable")
def test_missing_dependency_exits_cleanly():
    result = subprocess.run(
        [sys.executable, "-m", "crt_bridge.tabpfn_worker"],
        input="", capture_output=True, text=True,
    )
    assert result.returncode == 1
    assert "tabpfn is not installed" in result.stderr


@pytest.mark.skipif(
    not (HAS_TABPFN and CRTKIT), reason="needs tabpfn and the crtkit CLI"
)
def test_tabpfn_replicates_sparse_linear_power(tmp_path):
    # Optional, hardware permitting: 3 repeats of linear_sparse at n=300.
    rejected_relevant = 0
    rejected_irrelevant = 0
    for repeat in range(3):
        data = tmp_path / f"sparse{repeat}.csv"
        generate = subprocess.run(
            [CRTKIT, "generate", "--dgp", "linear_sparse", "--n", "300",
             "--seed", str(100 + repeat), "--out", str(data)],
            capture_output=True, text=True,
        )
        assert generate.returncode == 0, generate.stderr
        results = tmp_path / f"results{repeat}.csv"
        test = subprocess.run(
            [CRTKIT, "test", "--data", str(data),
             "--truth", str(data.with_suffix("").with_suffix(".truth.json")),
             "--y-model", "external", "--sampler", "external",
             "--bridge-cmd", WORKER_CMD, "--B", "99",
             "--seed", str(repeat), "--out", str(results)],
            capture_output=True, text=True,
        )
        assert test.returncode == 0, test.stderr
        with open(results, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["reject"] == "true":
                    if int(row["feature"]) < 3:
                        rejected_relevant += 1
                    else:
                        rejected_irrelevant += 1
    power = rejected_relevant / 9
    type1 = rejected_irrelevant / 21
    print(f"[{'PASS' if power == 1.0 and type1 <= 0.10 else 'FAIL'}] criterion 10: "
          f"tabpfn replication (power={power:.2f}, type1={type1:.2f})")
    assert power == 1.0
    assert type1 <= 0.10
