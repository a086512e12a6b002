"""Smoke test for the dgselect extension module.

Build and install first:

    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
"""

import math
import os
import tempfile

import dgselect as dg


def main():
    env = dg.synth_environment(4, 60, 5, 2, shift_scale=1.0, seed=3)
    assert env.n_domains == 4 and env.num_classes == 2 and env.feature_dim == 5
    assert len(env) == 240
    train, test = env.split(0.8, 1)
    assert len(train) + len(test) == len(env)

    model = dg.train_linear(train, 1.0)
    metrics = model.evaluate(test)
    assert 0.0 <= metrics["accuracy"] <= 1.0
    xs, ys = test.domain("d0")
    assert model.predict(xs[0]) in (0, 1)

    b = dg.theorem1_bound(0.1, 0.02, 0.05, 100, 5, 0.05)
    assert abs(b["value"] - 2.2443) < 1e-4 and b["vacuous"]
    assert dg.worst_case_transform(0.25, 0.5) == 0.75

    pts = [[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]
    exact = dg.linear_rad_exhaustive(pts, 1.0)
    closed = dg.linear_rad_closed_form(pts, 1.0)
    assert exact <= closed + 1e-12
    assert abs(dg.spectral_norm([[3.0, 0.0], [0.0, 1.0]]) - 3.0) < 1e-9

    sel = dg.domain_wise_cv(train, [-2, 0, 2], seed=0)
    assert sel["chosen_log2"] in (-2, 0, 2)
    assert math.isclose(sel["ln_c_selected"], math.log(sel["chosen_c"]))

    ckpts = dg.train_mlp(train, steps=20, checkpoint_every=10, hidden=8, batch_size=16)
    assert [c["step"] for c in ckpts] == [0, 10, 20]

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "env.csv")
        env.to_csv(path)
        again = dg.Environment.from_csv(path)
        assert again.domain("d1") == env.domain("d1")

    try:
        dg.theorem1_bound(0.1, 0.02, 0.05, 100, 5, 0.9)
    except ValueError:
        pass
    else:
        raise AssertionError("delta outside (0, 0.5) must be rejected")

    print("dgselect smoke test passed")


if __name__ == "__main__":
    main()
