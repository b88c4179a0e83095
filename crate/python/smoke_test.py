"""Smoke test for the `poco` extension module.

Build it first, e.g. `maturin develop -m crates/python/Cargo.toml`, or
`cargo build --release -p poco-python --features extension-module` and copy
`target/release/libpoco.so` to `poco.so` somewhere on PYTHONPATH.
"""

import json
import math

import poco


def check_projection():
    box = poco.BoxSet([-1.0, 0.0], [1.0, 2.0])
    assert box.dim == 2
    assert box.project([3.0, -4.0]) == [1.0, 0.0]
    assert box.contains([0.5, 1.0])
    assert not box.contains([0.5, 3.0])
    assert math.isclose(box.diameter(), math.sqrt(8.0))
    try:
        box.project([1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("dimension mismatch was accepted")


def check_steppers():
    box = poco.BoxSet([-1.0] * 3, [1.0] * 3)
    x = poco.ogd_step([0.0, 0.0, 0.0], [1.0, -4.0, 0.0], 0.5, box)
    assert x == [-0.5, 1.0, 0.0]
    s = poco.sigma_ogd_step([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 1.0, 2.0, 0.1, box)
    assert s == [-0.5, 0.0, 0.0]
    played, secondary = poco.omd_step([0.0] * 3, [1.0, 0.0, 0.0], [0.0] * 3, 0.25, box)
    assert played == secondary == [-0.25, 0.0, 0.0]


def check_forecast_and_gates():
    truth = [3.0, -1.0]
    g = poco.forecast(truth, 0.1, mode="fixed-radius-sphere", seed=7)
    err = math.dist(g, truth)
    assert abs(err - 0.1) < 1e-12, err
    assert poco.forecast(truth, 0.1, seed=7) == g

    box = poco.BoxSet([-10.0, -10.0], [10.0, 10.0])
    loss = poco.Loss.quadratic([1.0, 2.0], 2.0)
    x_bar = [4.0, -3.0]
    g = poco.forecast(loss.gradient(x_bar), 0.05, seed=1)
    verdict = poco.fixed_step_gate(x_bar, g, 0.05, 1e-3, loss.lipschitz, box)
    assert verdict["fired"], verdict
    assert loss.value(verdict["candidate"]) <= loss.value(x_bar) - 1e-3

    weak = poco.fixed_step_gate(x_bar, [0.01, 0.0], 0.05, 1e-3, 2.0, box)
    assert not weak["fired"] and weak["reason"] == "norm-gate-failed"
    assert weak["candidate"] == x_bar

    # On a strictly convex loss the test only passes when the forecast slope
    # is much shallower than the current one.
    rejected = poco.backtracking_search(loss, x_bar, g, 0.05, 1e-6, box)
    assert not rejected["fired"] and rejected["reason"] == "armijo-exhausted"
    assert rejected["candidate"] == x_bar
    shallow = [0.1 * v for v in loss.gradient(x_bar)]
    bt = poco.backtracking_search(loss, x_bar, shallow, 0.05, 1e-6, box)
    assert bt["fired"] and 0.0 < bt["step"] <= 1.0, bt
    assert loss.value(bt["candidate"]) < loss.value(x_bar) - 2e-6


def check_losses_and_oracle():
    box = poco.BoxSet([-0.1] * 4, [0.1] * 4)
    reg = poco.Loss.regulation(0.2, 0.005, [0.3, -0.2, 0.0, 0.1])
    assert math.isclose(reg.lipschitz, 2 * 4 + 2 * 0.005)
    x, value, converged = reg.minimize(box)
    assert converged and box.contains(x, 1e-12)
    assert value <= reg.value(box.center()) + 1e-12
    cur = poco.Loss.curtailment(0.2, 5e-5, [0.0] * 4)
    assert cur.lipschitz is None
    assert cur.value([0.05] * 4) < cur.value([0.0] * 4)


def check_counter_and_bounds():
    counter = poco.PredictiveCounter(0.5)
    counter.update([1.0], [0.0])
    counter.update([0.1], [0.0])
    assert (counter.count, counter.rounds, counter.nu) == (1, 2, 0.5)
    oco = poco.ogd_bound(1.0, 2.0, 3.0, 100)
    assert math.isclose(oco, (1.75 + 2.0 + 3.0) * 10.0)
    assert math.isclose(poco.poco_bound(oco, 100, 0.5, 0.1), oco - 5.0)
    assert math.isclose(poco.pocob_bound(oco, 100, 0.5, 0.1), oco - 10.0)
    assert math.isclose(poco.sigma_ogd_bound(2.0, 4.0), 10.0)


def check_experiment():
    summary, csv_text = poco.run("regulation", seed=3, rounds=50, epsilon=[0.1, 0.01])
    data = json.loads(summary)
    assert data["rounds"] == 50 and data["seed"] == 3
    names = [a["name"] for a in data["algorithms"]]
    assert names == ["sogd", "poco_e0.1", "poco_e0.01", "omd_e0.1", "omd_e0.01"], names
    assert len(csv_text.splitlines()) == 51
    again, _ = poco.run("regulation", config_toml="seed = 3\nT = 50\nepsilon = [0.1, 0.01]\n")
    assert again == summary
    try:
        poco.run("weather")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown scenario was accepted")


if __name__ == "__main__":
    for check in [
        check_projection,
        check_steppers,
        check_forecast_and_gates,
        check_losses_and_oracle,
        check_counter_and_bounds,
        check_experiment,
    ]:
        check()
        print(f"ok  {check.__name__}")
