"""Import the compiled module and exercise each binding once."""

import math

import qlink_py


def main():
    names = qlink_py.presets()
    assert names == ["l6", "l11", "l23", "l33"], names

    assert abs(qlink_py.fidelity_bound(0.804) - 0.826) < 1e-3
    c, err = qlink_py.interference_contrast(10.0, 300.0, 290.0)
    assert abs(c - (1 - 2 * 10 / 590)) < 1e-12 and err > 0

    h1 = qlink_py.config_hash(preset="l6")
    assert h1 == qlink_py.config_hash(preset="l6") and h1 != qlink_py.config_hash(preset="l33")

    budget = qlink_py.rate_budget(preset="l6")
    assert abs(budget["repetition_rate"] / 30.8e3 - 1) < 0.05, budget

    summary = qlink_py.simulate(preset="l6", events=50, seed=3)
    assert summary["events"] == 50
    assert summary["psi_plus"] + summary["psi_minus"] == 50
    assert 0.5 < summary["mean_fidelity"] <= 1.0
    again = qlink_py.simulate(preset="l6", events=50, seed=3)
    assert again == summary

    sampled = qlink_py.simulate(preset="l6", mode="sampled-clicks", events=20, seed=5)
    assert sampled["events"] == 20

    rows = qlink_py.fidelity_table(trajectories=1000)
    assert [r["name"] for r in rows] == names
    assert all(math.isfinite(r["fidelity"]) for r in rows)
    assert rows[0]["fidelity"] > rows[-1]["fidelity"]

    try:
        qlink_py.simulate(preset="l99")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
