"""Distance between two nearby flows measured by the relative entropy.

Two free-decay runs start from plate waves of slightly different amplitude.
The relative entropy between them is printed over time together with the
relative energy residual, which should stay below its tolerance.
"""
import numpy as np

from fsiplate import SchemeConfig, run
from fsiplate.cli_io import build_config, initial_data
from fsiplate.diagnostics import relative_energy_residual, relative_entropy


def trajectory(amplitude):
    cfg = build_config({"scenario": "free_decay", "grid": {"nx": 16, "nz": 16},
                        "plate": {"alpha": 1.0},
                        "initial": {"recipe": "plate_wave", "amplitude": amplitude}})
    traj = run(initial_data(cfg), SchemeConfig(dt=0.02, t_end=0.4), cfg.params, cfg.model,
               fixed_dt=True)
    return traj, cfg


def main():
    a, cfg = trajectory(0.05)
    b, _ = trajectory(0.06)
    for k in range(0, len(a), 5):
        rep = relative_entropy(a[k], b[k], cfg.params, cfg.model)
        print(f"t = {a[k].time:4.2f}  relative entropy = {rep.total:.4e}")
    res = relative_energy_residual(a, b, cfg.params, cfg.model)
    print(f"largest residual {np.max(res.residual):.3e}:", "ok" if res.passed else "VIOLATED")


if __name__ == "__main__":
    main()
