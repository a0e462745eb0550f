"""Smoke run of the bwb extension module.

Build and install first:
    pip install maturin
    maturin develop --release -m crates/py/Cargo.toml
then run `python python/smoke.py [workdir]`.
"""

import json
import sys
import tempfile

import bwb


def main(workdir):
    p = bwb.PlanformParams.midpoint()
    assert p.in_box()
    fc = bwb.FlightCondition(20.0, 0.3, 5.0, 4.0)
    aero = bwb.oracle(p, fc)
    print(f"oracle at box centre: L/D {aero['ld']:.3f}, {len(aero['surface']['points'])} surface points")

    surf = bwb.surface(p, n_chord=8, n_span=4)
    assert len(surf["points"]) == len(surf["normals"])

    pipe = bwb.Pipeline(workdir, profile="smoke", seed=0)
    pipe.gen_data()
    rep = json.loads(pipe.train_surrogates())
    print(f"L/D surrogate test RMSE {rep['ld_test_rmse']:.4f}")
    pipe.train_diffusion()
    pipe.invert(workers=1)
    metrics = json.loads(pipe.evaluate())
    for r in metrics["reports"]:
        print(f"{r['method']:>6}: RMSE {r['rmse_mean']:.4f}  MPD {r['mpd_mean']:.3f}")
    print(pipe.report(), end="")

    ld = bwb.LdSurrogate.load(str(pipe.ld_checkpoint))
    value, grad = ld.gradient(p, fc)
    assert len(grad) == 9
    cdm = bwb.Cdm.load(str(pipe.cdm_checkpoint))
    cands = cdm.sample(fc, target_ld=value, k=8, seed=1)
    assert all(c.in_box() for c in cands)
    mpd, nn = bwb.diversity([c.to_list() for c in cands])
    print(f"cdm draws at surrogate L/D {value:.3f}: MPD {mpd:.3f} (raw units)")
    print("smoke ok")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        main(sys.argv[1])
    else:
        with tempfile.TemporaryDirectory() as d:
            main(d)
