"""Smoke test for the pyhbvm extension module."""

import json

import pyhbvm


def main():
    spec = pyhbvm.Spec(4, 2)
    tab = spec.tableau()
    assert tab.stages() == 4 and tab.rank() == 2
    assert abs(sum(tab.b) - 1.0) < 1e-14
    for row, c in zip(tab.A, tab.c):
        assert abs(sum(row) - c) < 1e-14

    back = pyhbvm.Tableau.from_json(tab.to_json())
    assert back.max_abs_diff(tab) == 0.0
    rec = json.loads(tab.to_json())
    assert rec["k"] == 4 and rec["s"] == 2 and rec["family"] == "gauss"

    eig = sorted(tab.eigenvalues(), key=abs)
    assert abs(eig[0]) < 1e-10 and abs(eig[1]) < 1e-10

    iso = spec.isospectral_check()
    assert iso["zero_count"] == 2, iso
    assert spec.invariant_subspace_residual() < 1e-10

    r = tab.stability_function(complex(-1.0, 2.0))
    assert abs(r) <= 1.0
    scan = tab.stability_scan()
    assert scan["max_axis_deviation"] < 1e-10, scan

    x, w = pyhbvm.gauss_system(3)
    assert abs(sum(w) - 1.0) < 1e-15 and len(x) == 3
    assert abs(pyhbvm.eval_orthonormal(1, 0.3) - 1.0) < 1e-15

    out = pyhbvm.integrate("sextic", pyhbvm.Spec(6, 2), 0.1, 200)
    assert out["relative_drift"] < 1e-11, out["relative_drift"]
    assert out["csv"].splitlines()[0] == "t,y_1,y_2,H,iters"

    study = pyhbvm.order_study("kepler", pyhbvm.Spec(4, 2), levels=4)
    assert 3.8 <= study["slope"] <= 4.2, study["slope"]

    report = pyhbvm.verify_sweep(smax=2, kmax=4)
    assert report and all(e["passed"] for e in report)

    try:
        pyhbvm.Spec(3, 2, "custom", [0.2, 0.5, 0.8])
    except pyhbvm.InvalidInput:
        pass
    else:
        raise AssertionError("expected InvalidInput")

    print(f"ok: {len(report)} specs verified, kepler slope {study['slope']:.3f}")


if __name__ == "__main__":
    main()
