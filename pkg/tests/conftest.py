import numpy as np
import pytest

from counterfact.oracle import FactorDgpSpec, simulate_panel
from counterfact.panel import Panel
from counterfact.scm import ScmConfig

# small optimisation budget for tests that only need a valid fit
FAST = ScmConfig(restarts=2, max_evals=20)
UNIFORM = ScmConfig(v_mode="uniform")


@pytest.fixture
def sim_panel():
    return simulate_panel(FactorDgpSpec(J=10, T=30, T0=19, r=2, noise_sigma=0.05, seed=7))


@pytest.fixture
def toy_panel():
    y = np.array([
        [1.0, 2.0, 3.0, 4.0],
        [1.0, 2.0, 3.0, 3.0],
        [2.0, 3.0, 4.0, 5.0],
        [0.5, 1.0, 1.5, 2.0],
    ])
    return Panel(["T", "A", "B", "C"], [2000, 2001, 2002, 2003], y, "T", 3)


def write_long(path, units, times, columns: dict):
    """Write a long CSV; ``columns`` maps name -> (units x times) array."""
    names = list(columns)
    lines = ["unit,time," + ",".join(names)]
    for i, u in enumerate(units):
        for j, t in enumerate(times):
            lines.append(f"{u},{t}," + ",".join(repr(float(columns[n][i][j])) for n in names))
    path.write_text("\n".join(lines) + "\n")
    return path
