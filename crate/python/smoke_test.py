"""Smoke test for the pybddmp extension module.

Build and place the module next to this file, then run it:

    cargo build -p bddmp-python --release
    cp target/release/libpybddmp.so python/pybddmp$(python3 -c "import sysconfig; print(sysconfig.get_config_var('EXT_SUFFIX'))")
    python3 python/smoke_test.py
"""

import json
import math

import pybddmp

SIMPLEX = """Minimize
 obj: x1 + 2 x3 + 3 x7
Subject To
 s: x1 + x3 + x7 = 1
Binary
 x1 x3 x7
End
"""


def check_bdd():
    bdd = pybddmp.Bdd([(0, 1), (1, 1), (2, 1)], "=", 1)
    assert bdd.num_nodes == 5, bdd.num_nodes
    assert sorted(bdd.solutions()) == [[False, False, True], [False, True, False], [True, False, False]]
    token = bdd.checkpoint()
    assert bdd.fix(1, True)
    assert bdd.num_nodes == 3
    assert bdd.solutions() == [[False, True, False]]
    assert sorted(bdd.forced_literals()) == [(0, False), (1, True), (2, False)]
    bdd.rollback(token)
    assert bdd.num_nodes == 5
    assert bdd.to_dot().startswith("digraph")


def check_solve():
    inst = pybddmp.parse_lp(SIMPLEX)
    assert (inst.num_vars, inst.num_constraints) == (3, 1)
    result = pybddmp.solve(inst, deterministic=True)
    assert result.termination == "solved", result
    assert result.lower_bound == 1.0 and result.upper_bound == 1.0
    assert result.solution == [True, False, False]
    report = json.loads(result.report_json)
    assert report["upper_bound"] == 1.0
    assert pybddmp.brute_force(inst) == (1.0, [True, False, False])

    bad = pybddmp.parse_lp("Minimize\n x + y\nSubject To\n a: x + y >= 1\n b: x + y <= 0\nBinary\n x y\nEnd\n")
    result = pybddmp.solve(bad)
    assert result.exit_code == 2 and math.isinf(result.lower_bound)


def check_generate():
    mrf = pybddmp.generate("mrf", seed=0, nodes=3, labels=2)
    assert (mrf.num_vars, mrf.num_constraints) == (14, 13)
    again = pybddmp.parse_lp(mrf.to_lp())
    assert again.var_names == mrf.var_names
    optimum, _ = pybddmp.brute_force(mrf)
    result = pybddmp.solve(mrf, node_budget=10_000)
    assert result.lower_bound <= optimum + 1e-6
    assert result.upper_bound is None or result.upper_bound >= optimum - 1e-6
    lbs = [lb for _, _, lb in result.trace]
    assert all(b >= a - 1e-9 for a, b in zip(lbs, lbs[1:]))

    ilp = pybddmp.generate("random_ilp", seed=1, vars=6, cons=3)
    assert ilp.num_vars == 6
    try:
        pybddmp.generate("mrf", nodes=0)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")


if __name__ == "__main__":
    check_bdd()
    check_solve()
    check_generate()
    print("python smoke test: ok")
