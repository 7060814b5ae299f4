import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

CACHE = Path(__file__).parent / ".cache"


def write_curves(path, omegas, fom, rom, err):
    with open(path, "w") as fh:
        fh.write("omega,sigma_fom,sigma_rom,sigma_err\n")
        for row in zip(omegas, fom, rom, err):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_samples(path, omegas):
    with open(path, "w") as fh:
        fh.write("omega\n")
        for w in omegas:
            fh.write(f"{float(w)!r}\n")


@pytest.fixture()
def synthetic_run(tmp_path):
    """Three-level run directory with hand-made curves and samples."""
    omegas = np.logspace(-4, 4, 60)
    gammas = [0.25, 0.125, 0.0625]
    iterations = []
    for k, gamma in enumerate(gammas, start=1):
        fom = 1.0 / np.sqrt(1.0 + omegas**2)
        rom = fom * (1.0 - gamma)
        err = np.abs(fom - rom) + 1e-12
        write_curves(tmp_path / f"level_{k:02d}_curves.csv", omegas, fom, rom, err)
        samples = np.logspace(-3, 3, 5 + k)
        write_samples(tmp_path / f"level_{k:02d}_samples.csv", samples)
        iterations.append(
            {
                "gamma": gamma,
                "n_samples": 5 + k,
                "loss": 0.0,
                "opt_iters": 10,
                "grad_norm": 0.0,
                "seconds": 0.1,
                "stagnated": False,
            }
        )
    report = {
        "iterations": iterations,
        "final_gamma": gammas[-1],
        "theta_len": 42,
        "final_hinf": 0.07,
        "growth_aborted": False,
        "seed": 0,
    }
    (tmp_path / "report.json").write_text(json.dumps(report, indent=2))
    write_samples(tmp_path / "samples.csv", np.logspace(-3, 3, 8))
    return tmp_path


def _generate_run(r: int) -> Path:
    """Produce (or reuse) a real benchmark run via the phred CLI."""
    run_dir = CACHE / f"run_r{r}"
    report = run_dir / "report.json"
    if report.exists():
        return run_dir
    CACHE.mkdir(exist_ok=True)
    sys_dir = CACHE / "system"
    if not (sys_dir / "system.meta").exists():
        subprocess.run(
            [sys.executable, "-m", "phred", "generate", "--masses", "50",
             "--inputs", "2", "--out", str(sys_dir)],
            check=True,
        )
    subprocess.run(
        [sys.executable, "-m", "phred", "reduce", "--system", str(sys_dir),
         "--r", str(r), "--out", str(run_dir), "--opt-maxiter", "800"],
        check=True,
    )
    return run_dir


@pytest.fixture(scope="session")
def real_run_r8():
    override = os.environ.get("PHRED_PLOTS_RUN_R8")
    if override:
        return Path(override)
    return _generate_run(8)


@pytest.fixture(scope="session")
def real_run_r20():
    override = os.environ.get("PHRED_PLOTS_RUN_R20")
    if override:
        return Path(override)
    return _generate_run(20)
