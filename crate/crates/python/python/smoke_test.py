"""Smoke test for the iontransport extension module.

Build first:

    cargo build -p iontransport-python --release --features extension-module
    cp target/release/libiontransport.so crates/python/python/iontransport.so
    python3 crates/python/python/smoke_test.py
"""

import cmath
import math
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import iontransport as it  # noqa: E402

KHZ = 2 * math.pi * 1e3


def main():
    assert "fig2_topleft" in it.preset_names()

    chain = it.Chain([435.0, 439.5, 445.0])
    c12 = chain.couplings[0][1] / KHZ
    assert abs(c12 - 1.45) < 0.02, c12
    assert abs(chain.mean_spacing() * 1e6 - 41.0) < 2.0
    assert chain.n_ions == 3 and len(chain.mode_frequencies()) == 3
    print(repr(chain), f"c12 = {c12:.4f} kHz")

    run = it.evolve_preset("fig2_bottomleft")
    p3 = max(row[2] for row in run["populations"])
    assert 0.01 <= p3 <= 0.03, p3
    assert run["filtered"] is None
    print(f"noiseless max P3 = {p3:.5f}")

    small = it.evolve_preset("fig2_topleft", seed=3, trajectories=40)
    assert all(abs(sum(row) - 1.0) < 1e-9 for row in small["populations"])

    shift = it.raman_shift_amplitude(
        2 * math.pi * 100e9, 2 * math.pi * 200e6, 2 * math.pi * 2e9, 2 * math.pi * 10e6, 0.3, 2 * math.pi * 400e3
    )
    print(f"Raman shift {shift / KHZ:.4f} kHz")
    assert 18.0 <= abs(shift) / KHZ <= 20.0

    mu = complex(0.4, -0.3)
    alpha = 1.2
    readings = [it.displaced_occupation(0.9, mu, cmath.rect(alpha, th)) for th in (0, 2 * math.pi / 3, -2 * math.pi / 3)]
    assert abs(it.reconstruct_first_moment(*readings, alpha) - mu) < 1e-12

    times = [i * 20e-6 for i in range(501)]
    values = [(1 - math.exp(-t / 4e-3)) / 3 for t in times]
    gamma, p_inf, _ = it.fit_relaxation(times, values)
    assert abs(gamma - 250.0) < 1e-6 and abs(p_inf - 1 / 3) < 1e-9

    with tempfile.TemporaryDirectory() as out:
        result = it.run("laser", out, preset_name="paper_params")
        assert not result["success"]
        assert Path(result["manifest"]).exists()

    try:
        it.Chain([435.0], isotope="99Xx")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown isotope accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
