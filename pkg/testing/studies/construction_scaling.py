#!/usr/bin/env python3
"""
Initial data construction
=========================

Checks that the closeness of constructed data to AdS scales linearly in the
amplitude, and that the outgoing constraint residual converges as the data
grid is refined.
"""

import math

from _common import banner, save_results, verdict_line

from src.config.settings import Settings
from src.models.geometry import Cosmology
from src.models.matter import BumpProfile
from src.services.initial_data import InitialDataService, construct_from_profile, make_construction_profile

AMPLITUDES = (1e-2, 5e-3)
SCALING_TOLERANCE = 0.3
MIN_ORDER = 1.8
FAMILY = BumpProfile(amp=1.0, vc=math.pi / 2, vw=0.5, pc=1.0, pw=0.3, lc=0.5, lw=0.2)


def build(amp: float, nodes: int):
    settings = Settings(data_nodes=nodes, log_level="WARNING")
    cosmo = Cosmology(cosmological_constant=-3.0, v_infinity=math.pi)
    cp = make_construction_profile(FAMILY.scaled(amp), cosmo, settings)
    return construct_from_profile(cp, settings=settings), InitialDataService(settings)


def main() -> int:
    banner("[RUNNING] Initial data construction study")

    estimates = []
    for amp in AMPLITUDES:
        data, service = build(amp, 1024)
        e = service.construction_estimates(data)
        print(f"[STATS] eps={amp:g}: sup difference={e.sup_difference:.4e} energy flux={e.energy_flux:.4e}")
        estimates.append({"epsilon": amp, **e.model_dump()})

    expected = AMPLITUDES[0] / AMPLITUDES[1]
    ratios = {name: estimates[0][name] / estimates[1][name] for name in ("sup_difference", "energy_flux")}

    residuals = []
    for nodes in (256, 512, 1024):
        data, service = build(AMPLITUDES[0], nodes)
        residuals.append(service.validate(data).constraint_residual)
        print(f"[STATS] {nodes} nodes: constraint residual={residuals[-1]:.3e}")
    orders = [math.log2(a / b) for a, b in zip(residuals[:-1], residuals[1:])]

    checks = [verdict_line(abs(ratio / expected - 1.0) <= SCALING_TOLERANCE, f"{name} scales linearly ({ratio:.3f})")
              for name, ratio in ratios.items()]
    checks.append(verdict_line(min(orders) >= MIN_ORDER, f"Constraint residual order {min(orders):.2f}"))
    save_results("construction_scaling", {"estimates": estimates, "ratios": ratios, "residuals": residuals,
                                          "orders": orders, "passed": all(checks)})
    return 0 if all(checks) else 1


if __name__ == "__main__":
    raise SystemExit(main())
