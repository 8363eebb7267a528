#!/usr/bin/env python3
"""Smoke test for the maturix_py extension module.

Builds nothing itself: locates the compiled cdylib under target/ (release
preferred), stages it under an importable name, and exercises the main types
and operations end to end. Exit code 0 means every check passed.

Usage:
    cargo build -p maturix-py --release   # or debug
    python3 python/smoke_test.py
"""

import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_module():
    candidates = [
        ROOT / "target" / profile / f"libmaturix_py{suffix}"
        for profile in ("release", "debug")
        for suffix in (".so", ".dylib")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("maturix_py cdylib not found; run `cargo build -p maturix-py` first")
    stage = pathlib.Path(tempfile.mkdtemp(prefix="maturix-py-"))
    target = stage / ("maturix_py" + (".so" if built.suffix == ".so" else ".so"))
    shutil.copyfile(built, target)
    sys.path.insert(0, str(stage))
    import maturix_py

    return maturix_py


checks = 0


def check(label, condition):
    global checks
    checks += 1
    if not condition:
        sys.exit(f"FAIL: {label}")
    print(f"  ok: {label}")


def main():
    mx = load_module()
    print(f"loaded {mx.__name__} from {mx.__file__}")

    # --- drug kinetics ---
    kin = mx.DrugKinetics()
    peak = 1.0 - math.exp(-1.86 * 0.5)
    check("concentration peaks at the infusion end", abs(kin.concentration(0.5) - peak) < 1e-12)
    check("concentration vanishes before dosing", kin.concentration(-1.0) == 0.0)
    left = kin.concentration(0.5 - 1e-9)
    right = kin.concentration(0.5 + 1e-9)
    check("concentration continuous at the infusion end", abs(left - right) < 1e-6)
    check("primitive anchored at zero", kin.concentration_primitive(0.0) == 0.0)
    expected = 0.5 - peak / 1.86
    check(
        "primitive over the first infusion",
        abs(kin.concentration_primitive(0.5) - expected) < 1e-12,
    )

    # --- stationary model: closed forms ---
    plain = mx.ContinuousModel(rho=1.0, lam=1.0, mu=1.0)
    check("maturation lag", plain.maturation_lag() == 1.0)
    check("survival without killing", plain.survival_probability(3.0) == 1.0)
    beta = plain.mature_influx(0.0, 1.0)
    check(
        "influx matches the stationary closed form",
        abs(beta - (1.0 - math.exp(-1.0))) < 1e-9,
    )
    check(
        "alpha matches the exponential decay",
        abs(plain.mature_survival(0.0, 2.0) - math.exp(-2.0)) < 1e-12,
    )

    # --- occupation law ---
    law = plain.occupation_law(0.0, 5.0, 3)
    pmf = law.pmf_vector()
    check("law pmf sums to one", abs(sum(pmf) - 1.0) < 1e-12)
    check(
        "law mean combines both parts",
        abs(law.mean() - (3 * law.p + law.lam)) < 1e-12,
    )
    mixture = mx.BinomialPoissonLaw(2, 0.5, 1.0)
    check("pmf point value", abs(mixture.pmf(0) - 0.25 * math.exp(-1.0)) < 1e-14)

    # --- drugged model: the two influx routes agree ---
    drugged = mx.ContinuousModel(
        rho=0.01, lam=2.0, mu=0.04, gamma=0.6, delta=0.6, kinetics=kin, quad_tol=1e-11
    )
    general = drugged.mature_influx(0.0, 120.0)
    cutoff = drugged.mature_influx_cutoff(0.0, 120.0)
    check(
        "general and cutoff influx routes agree",
        abs(general - cutoff) < 1e-8 * max(1.0, abs(general)),
    )
    check("equilibrium mean starts at lambda/mu", abs(drugged.equilibrium_mean(0.0) - 50.0) < 1e-9)
    curve = drugged.equilibrium_mean_batch([12.0 * i for i in range(1, 41)])
    check("toxicity dip is visible", min(curve) < 25.0)
    check("count recovers by the horizon", abs(curve[-1] - 50.0) < 1.0)

    # --- identifiability transform ---
    scaled = drugged.scale_input(2.0)
    a, b = drugged.effective_input_rate(30.0), scaled.effective_input_rate(30.0)
    check("input scaling preserves the effective rate", abs(a - b) < 1e-9 * max(1.0, a))

    # --- chain predictor approaches the continuous one ---
    times = [24.0 * i for i in range(1, 21)]
    cont = mx.predict_equilibrium(2.0, 0.01, 0.04, 0.6, 0.6, kin, times)
    chain = mx.predict_catenary(2.0, 0.01 * 99, 0.04, 0.6, 59, 100, kin, times)
    gap = max(abs(x - y) for x, y in zip(cont, chain)) / max(cont)
    check(f"chain n=100 tracks the continuous curve (gap {gap:.3%})", gap < 0.05)

    # --- Monte Carlo law validation ---
    report = plain.simulate_law(at=5.0, replicas=5000, seed=7)
    check(f"simulated law TV {report['tv']:.4f} small", report["tv"] < 0.05)
    check("chi-square accepts the exact law", report["chi_square_p"] > 0.001)
    again = plain.simulate_law(at=5.0, replicas=5000, seed=7)
    check("simulation reproducible for a fixed seed", report["pmf"] == again["pmf"])

    # --- fit round trip (quick settings) ---
    data = mx.synthetic_observations(2.0, 0.01, 0.04, 0.6, 0.6, kin, times, 0.0, seed=3)
    fitted = mx.fit_continuous(
        [t for t, _ in data],
        [y for _, y in data],
        kin,
        center=(2.0, 0.01, 0.04, 0.6, 0.6),
        starts=4,
        max_iters=800,
        seed=11,
    )
    check("fit converged", fitted["converged"])
    check(f"fit rss {fitted['rss']:.2e} is tiny on clean data", fitted["rss"] < 1e-2)
    for name, want in [("lam", 2.0), ("rho", 0.01), ("mu", 0.04)]:
        got = fitted[name]
        check(f"fit recovers {name} ({got:.4g})", abs(got - want) / want < 0.10)

    print(f"\nall {checks} smoke checks passed")


if __name__ == "__main__":
    main()
