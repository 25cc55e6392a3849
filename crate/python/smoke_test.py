"""Smoke test for the zerospring extension.

Build first:  maturin develop -m crates/python/Cargo.toml
"""
import math
import os
import tempfile

import zerospring as zs


def track(n=60, dt=1.0 / 30.0):
    return [
        [math.sin(5 * k * dt), 0.5 * math.cos(9 * k * dt), math.sin(2 * k * dt) * math.cos(7 * k * dt)]
        for k in range(n)
    ]


def main():
    assert zs.sinhc(0.0) == 1.0 and zs.h_over(0.0) == 1.0 / 3.0
    assert abs(zs.sinc_e(math.pi)) < 1e-15

    p = zs.SpringParams(100.0, 2.0)
    assert p.regime() == "underdamped" and p.discriminant() == -396.0
    assert zs.classify(1.0, 2.0)[0] == "critical"

    dt = 1.0 / 30.0
    target = track()
    xs, vs = zs.step_sequence(target, dt, 150.0, 4.0)
    assert len(xs) == len(target) == len(vs)
    be = zs.be_simulate(target, dt, 150.0, 4.0, substeps=4000)
    err = max(abs(a - b) for u, w in zip(xs, be) for a, b in zip(u, w))
    assert err < 1e-3, err

    truth, spiked = zs.synth_truth(target, dt, 150.0, 4.0, substeps=1000)
    assert spiked == []
    loss, dks, dkd = zs.loss_and_gradient(target, truth, dt, 150.0, 4.0)
    h = 1e-6 * 150.0
    lp, _, _ = zs.loss_and_gradient(target, truth, dt, 150.0 + h, 4.0)
    lm, _, _ = zs.loss_and_gradient(target, truth, dt, 150.0 - h, 4.0)
    assert abs((lp - lm) / (2 * h) - dks) <= 1e-4 * abs(dks) + 1e-12

    fit = zs.fit_particle(target, truth, dt, seed=1)
    assert abs(fit.ks / 150.0 - 1) < 0.05 and abs(fit.kd / 4.0 - 1) < 0.05, fit

    dirty, frames = zs.synth_truth(target, dt, 150.0, 4.0, substeps=1000, spike_fraction=0.1, spike_magnitude=0.3, seed=2)
    robust = zs.robust_refit(target, dirty, dt, drop_fraction=0.1)
    assert len(robust.dropped_frames) == len(frames) == 6
    assert abs(robust.ks / 150.0 - 1) < 0.1, robust

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "t.traj")
        zs.write_trajectory(path, [target, xs], dt, kind="output")
        dt2, kind, per = zs.read_trajectory(path)
        assert dt2 == dt and kind == "output" and per[1] == [list(x) for x in xs]
        try:
            zs.read_trajectory(os.path.join(d, "missing"))
            raise AssertionError("expected IOError")
        except OSError:
            pass

    print("smoke test ok:", fit)


if __name__ == "__main__":
    main()
