"""Smoke test for the toral_clt extension module.

Build first (from the repository root):

    cargo build --release -p toral-py --features extension-module
    cp target/release/libtoral_clt.so python/toral_clt.so

then run ``python3 python/smoke_test.py``.
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import toral_clt as tc


def main() -> None:
    a = tc.IntMatrix([[2, 1], [1, 1]])
    b = tc.IntMatrix([[1, 1], [1, 2]])
    assert (a @ b).rows() == [[3, 4], [2, 3]]
    assert (a @ b).det() == 1

    alphabet = tc.Alphabet([a, b])
    word = tc.Word(alphabet, [0] * 40)
    big = word.product(1, 40)
    assert big.det() == 1 and big.sup_norm() > 2**50
    assert word.pushforward(2, [1, 0]) == [5, 3]

    f = tc.TrigPoly.cosine([1, 0])
    assert abs(f([0.0, 0.3]) - 1.0) < 1e-12
    w = alphabet.sample_word(500, 7)
    curve = tc.quenched_variance_curve(w, f, [1, 10, 500])
    assert curve == [0.5, 0.5, 0.5], curve

    sep = tc.check_separation(tc.Word(tc.Alphabet([a]), [0] * 12), 1, 3, 2)
    assert sep["verdict"] == "HOLDS_EXHAUSTIVE", sep

    s = tc.spectral(a)
    assert abs(s["r"] - (3 + math.sqrt(5)) / 2) < 1e-12

    cob = tc.TrigPoly.cosine([2, 1]) - tc.TrigPoly.cosine([1, 0])
    assert tc.coboundary_detect(a, cob)["verdict"]["kind"] == "TELESCOPE_FOUND"

    assert tc.rate_exponent((3, 16), (1, 2)) == (1, 32, False)

    report = tc.run_clt(tc.Alphabet.standard(), f, [200], 4000, seed=3)
    assert report["ks_distance"][0] < 0.05, report

    with tempfile.TemporaryDirectory() as out:
        manifest = tc.run_experiment('task = "komlos"\n[params]\nsamples = 2000\n', out)
        assert "komlos.csv" in manifest["outputs"]
        with open(os.path.join(out, "komlos.json")) as fh:
            assert json.load(fh)["quantities"]["x_delta_ok"]

    try:
        tc.validate_config('task = "nope"')
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config accepted")

    print("toral_clt smoke test passed")


if __name__ == "__main__":
    main()
