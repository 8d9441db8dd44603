"""Smoke test for the `grane` extension module.

Build first:  maturin develop -m crates/py/Cargo.toml
Then run:     python python/smoke_test.py
"""

import json
import math
import pathlib

import grane

ROOT = pathlib.Path(__file__).resolve().parent.parent


def g2():
    inf = (None, None)
    return grane.QuadraticGame([2.0, 2.0], [-2.0, 0.0], [[0.0, 1.0], [-1.0, 0.0]], [inf, inf])


def check_game():
    game = g2()
    assert game.n == 2
    x = game.equilibrium()
    assert max(abs(v) for v in game.gradient(x)) < 1e-10
    assert abs(x[0] - 0.8) < 1e-10 and abs(x[1] - 0.4) < 1e-10, x
    consts = game.constants()
    assert consts["mu_f"] > 0 and min(consts["l_own"]) >= consts["mu_f"]
    again = grane.QuadraticGame.from_json(game.to_json())
    assert again.gradient([1.0, -1.0]) == game.gradient([1.0, -1.0])


def check_network():
    tree = grane.Graph.random_tree(12, seed=3)
    assert tree.n == 12 and len(tree.edges) == 11 and tree.is_connected()
    for w in (grane.MixingMatrix.lazy_laplacian(tree), grane.MixingMatrix.metropolis(tree)):
        assert w.validate(tree) == []
        for row in w.weights:
            assert abs(sum(row) - 1.0) < 1e-12
        assert 0.0 < w.lambda_min_nonzero <= 1.0 + 1e-12


def check_solvers():
    game = g2()
    w = grane.MixingMatrix.lazy_laplacian(grane.Graph.path(2))
    consts = grane.augmented_constants(game, w, alpha=1.0)
    assert abs(consts["gamma"] - 6.4721) < 1e-4, consts
    plain = grane.solve(game, w, "grane", max_iters=2000)
    fast = grane.solve(game, w, "acc-grane", max_iters=2000)
    for out in (plain, fast):
        final = out["normalized_residual"][-1][1]
        assert final < 1e-6, final
        for row in out["x"]:
            assert all(abs(a - b) < 1e-5 for a, b in zip(row, out["equilibrium"]))
    try:
        grane.solve(game, w, "nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown algorithm accepted")


def check_experiment():
    cfg = json.loads((ROOT / "configs" / "g2.json").read_text())
    summary = grane.run_experiment(json.dumps(cfg))
    names = [r["name"] for r in summary["runs"]]
    assert names == ["grane", "acc-grane", "centralized"], names
    for run in summary["runs"]:
        assert math.isfinite(run["final"]["normalized_residual"])


if __name__ == "__main__":
    check_game()
    check_network()
    check_solvers()
    check_experiment()
    print("python smoke test: ok")
