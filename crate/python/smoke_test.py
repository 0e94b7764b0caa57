"""Smoke test for the hermite_fpf extension module.

Build and install first:
    pip install --no-build-isolation -e crates/python
Then run:
    python python/smoke_test.py
"""

import json
import math
import pathlib
import tempfile

import hermite_fpf as hf


def check(cond, what):
    if not cond:
        raise AssertionError(what)
    print(f"ok  {what}")


def main():
    h = hf.hermite_functions(2, 0.0)
    check(abs(h[0] - math.pi ** -0.25) < 1e-14, "H0(0) = pi^(-1/4)")
    check(abs(h[1]) < 1e-15, "H1(0) = 0")
    d = hf.hermite_derivatives(1, 0.0)
    check(abs(d[1] - math.sqrt(2.0) * math.pi ** -0.25) < 1e-12, "H1'(0)")

    kde = hf.Kde([-1.0, 1.0], 1.0)
    check(abs(kde(0.0) - 0.241971) < 1e-6, "two-particle KDE at 0")

    mix = hf.GaussianMixture.bimodal()
    xs = mix.sample(200, 3)
    check(len(xs) == 200, "mixture sample size")

    gain = hf.galerkin_gain(xs, order=7, bandwidth=0.5)
    check(0.0 <= gain.row0_residual < 0.05, "row-0 truncation residual small")
    check(len(gain.coefficients) == 8, "M + 1 coefficients")
    check(math.isfinite(gain(0.3)) and math.isfinite(gain.control(0.3)), "gain and control finite")

    gauss = hf.GaussianMixture.gaussian(0.0, 0.5)
    exact = gauss.exact_gain([-1.0, 0.0, 1.0])
    check(all(abs(k - 0.5) < 1e-10 for k in exact), "exact gain of N(0, 0.5) is 0.5")

    check(abs(hf.constant_gain([-1.0, 1.0]) - 1.0) < 1e-15, "constant gain example")
    gains, converged, _ = hf.diffusion_map_gain(xs[:50], hf.Observation.constant(1.5))
    check(converged and max(abs(g) for g in gains) < 1e-12, "constant h gives zero DM gain")

    truth = hf.simulate_bistable(t_final=5.0, seed=7)
    check(len(truth) == 501, "truth length")
    rmses = []
    for method in ("hermite_galerkin", "constant", "diffusion_map"):
        out = hf.fpf_run(truth, method=method, seed=7)
        check(len(out.estimates) == len(truth), f"{method} estimate length")
        again = hf.fpf_run(truth, method=method, seed=7)
        check(again.estimates == out.estimates, f"{method} rerun identical")
        rmses.append(out.rmse)
    check(hf.armse(rmses) > 0.0, "armse positive")
    check(abs(hf.loglog_slope([1, 10, 100], [1, 0.1, 0.01]) + 1.0) < 1e-12, "loglog slope")
    check(abs(hf.grid_error([0.0, 1.0], [1.0, 1.0], [0.0, 0.0], "l1") - 1.0) < 1e-15, "grid error")

    try:
        hf.Kde([0.0], 0.0)
    except ValueError:
        check(True, "bad bandwidth raises ValueError")
    else:
        raise AssertionError("bad bandwidth accepted")

    with tempfile.TemporaryDirectory() as tmp:
        cfg = pathlib.Path(tmp) / "gain.toml"
        cfg.write_text('kind = "gain_compare"\n[gain_compare]\norders = [1, 4]\n')
        report = json.loads(hf.run_experiment(str(cfg), str(pathlib.Path(tmp) / "out")))
        check(report["kind"] == "gain_compare", "run_experiment report")
        check((pathlib.Path(tmp) / "out" / "gain_hg_m4.csv").exists(), "gain CSV written")

    print("smoke test passed")


if __name__ == "__main__":
    main()
