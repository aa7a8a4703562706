"""Smoke test for the `mesbench` extension module.

Build first, then run from the repository root:

    cargo build --release -p mesbench-py --features extension-module
    python3 python/smoke_test.py

The script copies target/release/libmesbench.so next to itself as
mesbench.so when the module is not already importable.
"""

import importlib
import math
import shutil
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent


def load():
    try:
        return importlib.import_module("mesbench")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        for name in ("libmesbench.so", "libmesbench.dylib"):
            built = ROOT / "target" / profile / name
            if built.exists():
                shutil.copyfile(built, HERE / "mesbench.so")
                sys.path.insert(0, str(HERE))
                return importlib.import_module("mesbench")
    sys.exit("mesbench extension not built; see the module docstring")


def main():
    mb = load()

    assert "case_label" in mb.preset("case2")
    assert abs(mb.relative_performance(100.0, 125.0) - 80.0) < 1e-12
    assert mb.mape([1.0, 2.0], [1.1, 1.8]) > 0.0

    price = mb.synthetic_series("case1", "x_el", seed=3)
    assert len(price) == 35040 and min(price) > 0.0

    env = mb.Env("case2", seed=1)
    obs = env.reset(start=0, soc=0.5)
    assert len(obs) == env.obs_dim
    total = 0.0
    for _ in range(96):
        obs, reward, done, cost, comfort = env.step([0.0] * env.action_dim)
        assert math.isfinite(reward) and math.isfinite(cost) and comfort >= 0.0
        total += reward
    assert not done

    discrete = mb.Env("case2", seed=1, levels=5)
    discrete.reset()
    discrete.step([2.0] * discrete.action_dim)

    try:
        env.step([0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("wrong action width accepted")

    j = mb.mpc_objective("case1", start=0, steps=48, horizon=48, control=24)
    assert j > 0.0

    print(f"mesbench smoke test ok: day reward {total:.4f}, LMPC objective {j:.2f}")


if __name__ == "__main__":
    main()
